use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::MlpParams;
use crate::linalg::Matrix;
use crate::wgan::sample_latent;

use super::{critic_gap, EvalError};

/// Models whose own-pair estimate `|Ŵ_i|` is at or below this are excluded.
pub const BASELINE_EPS: f64 = 1e-9;

/// Cross-evaluation of critics against generators from other models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TournamentResult {
    /// Indices (into the input slice) of models that took part.
    pub models: Vec<usize>,
    /// Indices of models dropped because their baseline was degenerate.
    pub excluded: Vec<usize>,
    /// `w_raw[i][j]`: critic `i` scoring generator `j` on held-out data.
    pub w_raw: Vec<Vec<f64>>,
    /// `Ŵ_i`: critic `i` scoring its own generator on training data.
    pub w_hat: Vec<f64>,
    /// `(w_raw[i][j] − Ŵ_i) / |Ŵ_i|`.
    pub w_rel: Vec<Vec<f64>>,
    /// Row sums of `w_rel`; a larger score means a stronger critic.
    pub s: Vec<f64>,
}

impl TournamentResult {
    /// Included model indices ordered by descending score.
    pub fn ranking(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.models.len()).collect();
        order.sort_by(|&a, &b| self.s[b].total_cmp(&self.s[a]));
        order.into_iter().map(|i| self.models[i]).collect()
    }
}

/// Runs the tournament over `(critic, generator)` pairs.
///
/// One latent batch of `n_gen` rows is drawn per generator, in model order,
/// and shared by every critic, so all critics judge identical samples.
pub fn tournament<R: Rng + ?Sized>(
    models: &[(MlpParams, MlpParams)],
    train: &Matrix,
    test: &Matrix,
    n_gen: usize,
    rng: &mut R,
) -> Result<TournamentResult, EvalError> {
    if models.len() < 2 {
        return Err(EvalError::TooFewModels(models.len()));
    }
    assert!(n_gen >= 1, "need at least one generated sample");
    let dim = train.cols();
    if test.cols() != dim {
        return Err(EvalError::DimMismatch(dim, test.cols()));
    }
    for (critic, generator) in models {
        if critic.in_dim() != dim {
            return Err(EvalError::DimMismatch(dim, critic.in_dim()));
        }
        if generator.out_dim() != dim {
            return Err(EvalError::DimMismatch(dim, generator.out_dim()));
        }
    }

    let mut fakes = Vec::with_capacity(models.len());
    for (_, generator) in models {
        let z = sample_latent(n_gen, generator.in_dim(), rng);
        fakes.push(generator.forward(&z)?);
    }

    let mut included = Vec::new();
    let mut excluded = Vec::new();
    let mut w_hat = Vec::new();
    for (i, (critic, _)) in models.iter().enumerate() {
        let w = critic_gap(critic, train, &fakes[i])?;
        if w.abs() > BASELINE_EPS && w.is_finite() {
            included.push(i);
            w_hat.push(w);
        } else {
            excluded.push(i);
        }
    }

    let mut w_raw = Vec::with_capacity(included.len());
    let mut w_rel = Vec::with_capacity(included.len());
    for (row, &i) in included.iter().enumerate() {
        let critic = &models[i].0;
        let real_mean = critic.forward(test)?.mean();
        let mut raw = Vec::with_capacity(included.len());
        for &j in &included {
            raw.push(real_mean - critic.forward(&fakes[j])?.mean());
        }
        let base = w_hat[row];
        w_rel.push(raw.iter().map(|w| (w - base) / base.abs()).collect::<Vec<_>>());
        w_raw.push(raw);
    }
    let s = w_rel.iter().map(|r| r.iter().sum()).collect();
    Ok(TournamentResult { models: included, excluded, w_raw, w_hat, w_rel, s })
}
