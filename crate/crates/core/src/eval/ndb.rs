use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::linalg::Matrix;

use super::EvalError;

/// Lloyd iterations used to fit cell centres.
pub const KMEANS_ITERS: usize = 50;

/// Cell counts swept when reporting detected modes.
pub const DEFAULT_K_SWEEP: [usize; 7] = [1, 2, 5, 10, 20, 50, 100];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinStat {
    pub train_count: usize,
    pub gen_count: usize,
    /// Two-proportion z statistic, generated minus train.
    pub z: f64,
    /// Generated proportion significantly below the training proportion.
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeReport {
    pub k: usize,
    pub alpha: f64,
    /// Cells where the generator is significantly under-represented.
    pub significant_bins: usize,
    /// Cells holding no training samples; they are not tested.
    pub skipped: Vec<usize>,
    pub per_bin: Vec<BinStat>,
}

impl ModeReport {
    /// Cells the generator covers, `k − significant − skipped`.
    pub fn covered(&self) -> usize {
        self.k - self.significant_bins - self.skipped.len()
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(centers: &Matrix, x: &[f64]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for c in 0..centers.rows() {
        let d = sq_dist(centers.row(c), x);
        if d < best_d {
            best_d = d;
            best = c;
        }
    }
    best
}

/// k-means with k-means++ seeding and at most `iters` Lloyd iterations.
/// A cell that empties keeps its previous centre.
pub fn kmeans<R: Rng + ?Sized>(data: &Matrix, k: usize, iters: usize, rng: &mut R) -> Result<Matrix, EvalError> {
    let n = data.rows();
    if k == 0 || k > n {
        return Err(EvalError::InvalidK { k, n, max: n });
    }
    let dim = data.cols();
    let mut centers = Matrix::zeros(k, dim);
    centers.row_mut(0).copy_from_slice(data.row(rng.gen_range(0..n)));
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(data.row(i), centers.row(0))).collect();
    for c in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.gen::<f64>() * total;
            let mut idx = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                if target < d {
                    idx = i;
                    break;
                }
                target -= d;
            }
            idx
        } else {
            rng.gen_range(0..n)
        };
        centers.row_mut(c).copy_from_slice(data.row(pick));
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(data.row(i), centers.row(c)));
        }
    }

    let mut assign = vec![usize::MAX; n];
    for _ in 0..iters {
        let mut changed = false;
        for (i, a) in assign.iter_mut().enumerate() {
            let c = nearest(&centers, data.row(i));
            if c != *a {
                *a = c;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = Matrix::zeros(k, dim);
        let mut counts = vec![0usize; k];
        for (i, &a) in assign.iter().enumerate() {
            counts[a] += 1;
            for (s, x) in sums.row_mut(a).iter_mut().zip(data.row(i)) {
                *s += x;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                let inv = 1.0 / counts[c] as f64;
                for (dst, s) in centers.row_mut(c).iter_mut().zip(sums.row(c)) {
                    *dst = s * inv;
                }
            }
        }
    }
    Ok(centers)
}

fn check_alpha(alpha: f64) -> Result<(), EvalError> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(EvalError::InvalidAlpha(alpha))
    }
}

/// Bin test against fixed cell centres.
pub fn ndb_with_centers(centers: &Matrix, train: &Matrix, generated: &Matrix, alpha: f64) -> Result<ModeReport, EvalError> {
    check_alpha(alpha)?;
    if train.cols() != centers.cols() {
        return Err(EvalError::DimMismatch(centers.cols(), train.cols()));
    }
    if generated.cols() != centers.cols() {
        return Err(EvalError::DimMismatch(centers.cols(), generated.cols()));
    }
    let k = centers.rows();
    let mut tc = vec![0usize; k];
    let mut gc = vec![0usize; k];
    for i in 0..train.rows() {
        tc[nearest(centers, train.row(i))] += 1;
    }
    for i in 0..generated.rows() {
        gc[nearest(centers, generated.row(i))] += 1;
    }
    let nt = train.rows() as f64;
    let ng = generated.rows() as f64;
    let z_crit = Normal::new(0.0, 1.0).expect("standard normal").inverse_cdf(1.0 - alpha);

    let mut skipped = Vec::new();
    let mut per_bin = Vec::with_capacity(k);
    for c in 0..k {
        let p1 = tc[c] as f64 / nt;
        let p2 = gc[c] as f64 / ng;
        let p = (tc[c] + gc[c]) as f64 / (nt + ng);
        let se = (p * (1.0 - p) * (1.0 / nt + 1.0 / ng)).sqrt();
        let z = if se > 0.0 { (p2 - p1) / se } else { 0.0 };
        let tested = tc[c] > 0;
        if !tested {
            skipped.push(c);
        }
        per_bin.push(BinStat {
            train_count: tc[c],
            gen_count: gc[c],
            z,
            significant: tested && z < -z_crit,
        });
    }
    Ok(ModeReport {
        k,
        alpha,
        significant_bins: per_bin.iter().filter(|b| b.significant).count(),
        skipped,
        per_bin,
    })
}

/// Fits `k` cells on `train` and counts cells in which `generated` is
/// significantly under-represented (one-sided pooled two-proportion z-test
/// at level `alpha`).
pub fn ndb_modes<R: Rng + ?Sized>(
    train: &Matrix,
    generated: &Matrix,
    k: usize,
    alpha: f64,
    rng: &mut R,
) -> Result<ModeReport, EvalError> {
    check_alpha(alpha)?;
    let centers = kmeans(train, k, KMEANS_ITERS, rng)?;
    ndb_with_centers(&centers, train, generated, alpha)
}
