//! Diagnostics for trained models: Lipschitz estimates, critic-based
//! Wasserstein estimates and the cross-model generalization tournament,
//! Voronoi-cell mode statistics, singular-value spectra, and an exact
//! small-sample transport cost for duality checks.

mod ndb;
mod tournament;
mod transport;

pub use ndb::{kmeans, ndb_modes, ndb_with_centers, BinStat, ModeReport, DEFAULT_K_SWEEP, KMEANS_ITERS};
pub use tournament::{tournament, TournamentResult, BASELINE_EPS};
pub use transport::{exact_w1, min_cost_matching, EXACT_W1_MAX_N};

use rand::Rng;
use thiserror::Error;

use crate::autodiff::{self, AutodiffError, MlpParams};
use crate::linalg::{svd, Matrix};
use crate::wgan::{interpolates, sample_latent};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("tournament needs at least two models, got {0}")]
    TooFewModels(usize),
    #[error("models disagree on data dimension: {0} vs {1}")]
    DimMismatch(usize, usize),
    #[error("sample sets differ in size: {0} vs {1}")]
    SizeMismatch(usize, usize),
    #[error("exact transport is limited to {max} samples, got {n}")]
    TooLarge { n: usize, max: usize },
    #[error("invalid cell count {k} for {n} training samples (allowed 1..={max})")]
    InvalidK { k: usize, n: usize, max: usize },
    #[error("alpha must lie in (0, 1), got {0}")]
    InvalidAlpha(f64),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}

/// Lipschitz estimate of a critic: the largest input-gradient norm over
/// `n_points` random interpolates between rows of `x_real` and `x_fake`.
pub fn estimate_lipschitz<R: Rng + ?Sized>(
    critic: &MlpParams,
    x_real: &Matrix,
    x_fake: &Matrix,
    n_points: usize,
    rng: &mut R,
) -> Result<f64, EvalError> {
    Ok(lipschitz_profile(critic, x_real, x_fake, n_points, rng)?.max)
}

/// Input-gradient norm statistics on interpolates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LipschitzProfile {
    pub max: f64,
    pub mean: f64,
    /// Mean two-sided gradient penalty `(‖∇f‖ − 1)²`.
    pub mean_penalty: f64,
}

pub fn lipschitz_profile<R: Rng + ?Sized>(
    critic: &MlpParams,
    x_real: &Matrix,
    x_fake: &Matrix,
    n_points: usize,
    rng: &mut R,
) -> Result<LipschitzProfile, EvalError> {
    assert!(n_points >= 1, "need at least one point");
    let ri: Vec<usize> = (0..n_points).map(|_| rng.gen_range(0..x_real.rows())).collect();
    let fi: Vec<usize> = (0..n_points).map(|_| rng.gen_range(0..x_fake.rows())).collect();
    let hat = interpolates(&x_real.select_rows(&ri), &x_fake.select_rows(&fi), rng)
        .map_err(AutodiffError::from)?;
    let norms = autodiff::input_gradient(critic, &hat)?.row_norms();
    let n = norms.len() as f64;
    Ok(LipschitzProfile {
        max: norms.iter().fold(0.0f64, |m, &v| m.max(v)),
        mean: norms.iter().sum::<f64>() / n,
        mean_penalty: norms.iter().map(|v| (v - 1.0).powi(2)).sum::<f64>() / n,
    })
}

/// `mean f(real) − mean f(fake)`.
pub fn critic_gap(critic: &MlpParams, real: &Matrix, fake: &Matrix) -> Result<f64, EvalError> {
    Ok(critic.forward(real)?.mean() - critic.forward(fake)?.mean())
}

/// Draws `n` samples from a generator with standard normal latents.
pub fn generate<R: Rng + ?Sized>(generator: &MlpParams, n: usize, rng: &mut R) -> Result<Matrix, EvalError> {
    let z = sample_latent(n, generator.in_dim(), rng);
    Ok(generator.forward(&z)?)
}

/// Critic-based Wasserstein estimate `E[f(x)] − E[f(g(z))]` with `n_gen`
/// generated samples.
pub fn wasserstein_estimate<R: Rng + ?Sized>(
    critic: &MlpParams,
    generator: &MlpParams,
    real: &Matrix,
    n_gen: usize,
    rng: &mut R,
) -> Result<f64, EvalError> {
    assert!(n_gen >= 1, "need at least one generated sample");
    let fake = generate(generator, n_gen, rng)?;
    critic_gap(critic, real, &fake)
}

/// Descending singular values of every weight matrix, input layer first.
pub fn singular_spectrum(params: &MlpParams) -> Vec<Vec<f64>> {
    params.layers.iter().map(|l| svd(&l.weight).sigma).collect()
}

/// Fraction of a spectrum lying in `[0.5·σ_max, σ_max]`: 1 for a flat
/// spectrum, small when a few directions dominate.
pub fn spectrum_flatness(sigma: &[f64]) -> f64 {
    let max = sigma.iter().fold(0.0f64, |m, &s| m.max(s));
    if sigma.is_empty() || max == 0.0 {
        return 0.0;
    }
    sigma.iter().filter(|&&s| s >= 0.5 * max).count() as f64 / sigma.len() as f64
}
