//! Dense real linear algebra: the [`Matrix`] carrier type, products and
//! norms, a one-sided Jacobi SVD, power iteration for the spectral norm and
//! LU-based linear solves.

mod matrix;
mod solve;
mod svd;

pub use matrix::Matrix;
pub use solve::solve_linear;
pub use svd::{svd, SvdResult};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix dimensions must be positive")]
    Empty,
    #[error("data length {actual} does not match shape (expected {expected})")]
    DataLength { expected: usize, actual: usize },
    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("rows have unequal lengths")]
    Ragged,
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("singular system")]
    Singular,
}

/// Iteration cap used by [`spectral_norm_default`].
pub const SPECTRAL_NORM_MAX_ITERS: usize = 5000;
/// Relative-change tolerance used by [`spectral_norm_default`].
pub const SPECTRAL_NORM_TOL: f64 = 1e-12;

/// Largest singular value of `w` by power iteration on `wᵀw`.
///
/// The start vector is the normalized all-ones vector, so the result is a
/// deterministic function of `w`. Iteration stops once the estimate changes
/// by less than `tol` relative, or after `max_iters` products. A zero matrix
/// yields 0.
pub fn spectral_norm(w: &Matrix, max_iters: usize, tol: f64) -> f64 {
    assert!(max_iters >= 1, "max_iters must be at least 1");
    assert!(tol > 0.0, "tol must be positive");
    let (rows, cols) = w.shape();
    let data = w.data();
    let mut v = vec![1.0 / (cols as f64).sqrt(); cols];
    let mut u = vec![0.0; rows];
    let mut y = vec![0.0; cols];
    let mut sigma = 0.0;
    for _ in 0..max_iters {
        for (i, ui) in u.iter_mut().enumerate() {
            *ui = data[i * cols..(i + 1) * cols].iter().zip(&v).map(|(a, b)| a * b).sum();
        }
        let estimate = u.iter().map(|x| x * x).sum::<f64>().sqrt();
        y.iter_mut().for_each(|x| *x = 0.0);
        for (i, &ui) in u.iter().enumerate() {
            for (yj, a) in y.iter_mut().zip(&data[i * cols..(i + 1) * cols]) {
                *yj += a * ui;
            }
        }
        let norm_y = y.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm_y == 0.0 || estimate == 0.0 {
            return 0.0;
        }
        let converged = (estimate - sigma).abs() < tol * estimate;
        sigma = estimate;
        if converged {
            break;
        }
        for (vj, yj) in v.iter_mut().zip(&y) {
            *vj = yj / norm_y;
        }
    }
    sigma
}

/// [`spectral_norm`] with the crate-wide default iteration settings.
pub fn spectral_norm_default(w: &Matrix) -> f64 {
    spectral_norm(w, SPECTRAL_NORM_MAX_ITERS, SPECTRAL_NORM_TOL)
}
