//! Orthogonality machinery for weight matrices: the deviation diagnostic,
//! Björck iteration, the soft orthogonality penalty, Cayley retraction, SVD
//! re-initialization and the reshaping of convolution kernels into matrices.
//!
//! A matrix counts as orthogonal in the rectangular sense: tall matrices need
//! orthonormal columns (`WᵀW = I`), wide ones orthonormal rows (`WWᵀ = I`).
//! Every operation here handles wide inputs by working on the transpose.

use thiserror::Error;

use crate::linalg::{self, solve_linear, svd, LinalgError, Matrix};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OrthoError {
    #[error("bjorck iteration did not converge in {iters} iterations (deviation {deviation:e})")]
    NoConvergence { iters: usize, deviation: f64 },
    #[error("degenerate init matrix (smallest singular value {sigma_min:e})")]
    DegenerateInit { sigma_min: f64 },
    #[error("cayley solve singular")]
    CayleySingular,
    #[error("cayley retraction needs a square or tall matrix, got {rows}x{cols}")]
    WideCayley { rows: usize, cols: usize },
    #[error("unsupported bjorck order {0}, expected 1 or 2")]
    BjorckOrder(usize),
    #[error("conv reshape mismatch: matrix is {rows}x{cols}, dims {dims:?}")]
    ConvShape { rows: usize, cols: usize, dims: [usize; 4] },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OrthoOrientation {
    /// More rows than columns: `WᵀW = I`.
    Tall,
    /// More columns than rows: `WWᵀ = I`.
    Wide,
    Square,
}

impl OrthoOrientation {
    pub fn of(w: &Matrix) -> Self {
        match w.rows().cmp(&w.cols()) {
            std::cmp::Ordering::Greater => Self::Tall,
            std::cmp::Ordering::Less => Self::Wide,
            std::cmp::Ordering::Equal => Self::Square,
        }
    }
}

/// Runs `f` on `w` or, for wide matrices, on `wᵀ` and transposes back.
fn column_oriented(w: &Matrix, f: impl FnOnce(&Matrix) -> Matrix) -> Matrix {
    match OrthoOrientation::of(w) {
        OrthoOrientation::Wide => f(&w.transpose()).transpose(),
        _ => f(w),
    }
}

/// Small Gram matrix: `WᵀW` for tall/square, `WWᵀ` for wide.
fn gram(w: &Matrix) -> Matrix {
    let wide = OrthoOrientation::of(w) == OrthoOrientation::Wide;
    Matrix::gemm(w, !wide, w, wide).expect("gram of a single matrix is well-shaped")
}

fn identity_minus(g: &Matrix) -> Matrix {
    let mut q = g.scale(-1.0);
    for i in 0..q.rows() {
        q[(i, i)] += 1.0;
    }
    q
}

/// `‖I − WᵀW‖₂` for tall or square `w`, `‖I − WWᵀ‖₂` for wide `w`.
pub fn gram_deviation(w: &Matrix) -> f64 {
    linalg::spectral_norm_default(&identity_minus(&gram(w)))
}

/// `W · (I + β·(I − WᵀW))`, orientation-aware. With `β = ½` this is one
/// first-order Björck step.
pub fn bjorck_blend(w: &Matrix, beta: f64) -> Matrix {
    column_oriented(w, |w| {
        let mut p = identity_minus(&gram(w)).scale(beta);
        for i in 0..p.rows() {
            p[(i, i)] += 1.0;
        }
        w.matmul(&p).expect("column count matches gram size")
    })
}

/// One Björck–Bowie step of order `p`:
/// `W · (I + Σᵢ₌₁..ₚ (−1)ⁱ·C(−½, i)·Qⁱ)` with `Q = I − WᵀW`.
///
/// Order 1 gives `W(I + Q/2)`, order 2 adds `3Q²/8`. Each singular value is
/// mapped through the truncated series of `σ·(σ²)^(−½)`; for `p = 1` that is
/// `σ ↦ σ(3 − σ²)/2`.
pub fn bjorck_step(w: &Matrix, p: usize) -> Result<Matrix, OrthoError> {
    if !(1..=2).contains(&p) {
        return Err(OrthoError::BjorckOrder(p));
    }
    Ok(column_oriented(w, |w| {
        let q = identity_minus(&gram(w));
        let mut poly = q.scale(0.5);
        if p == 2 {
            let q2 = q.matmul(&q).expect("square");
            poly.axpy(0.375, &q2).expect("same shape");
        }
        for i in 0..poly.rows() {
            poly[(i, i)] += 1.0;
        }
        w.matmul(&poly).expect("column count matches gram size")
    }))
}

/// Spectral norms at or above this are pre-scaled to 1 before iterating; the
/// first-order map diverges for `σ ≥ √3`.
pub const BJORCK_SAFE_NORM: f64 = 1.732_050_807_568_877_2 - 0.05;

/// Iterates [`bjorck_step`] of order 1 until `gram_deviation < tol`.
pub fn bjorck_orthogonalize(w: &Matrix, tol: f64, max_iters: usize) -> Result<Matrix, OrthoError> {
    bjorck_orthogonalize_counted(w, tol, max_iters).map(|(m, _)| m)
}

/// Like [`bjorck_orthogonalize`], also returning the number of steps taken.
pub fn bjorck_orthogonalize_counted(w: &Matrix, tol: f64, max_iters: usize) -> Result<(Matrix, usize), OrthoError> {
    assert!(tol > 0.0, "tol must be positive");
    let mut current = w.clone();
    let mut deviation = gram_deviation(&current);
    if deviation < tol {
        return Ok((current, 0));
    }
    let norm = linalg::spectral_norm_default(&current);
    if norm >= BJORCK_SAFE_NORM {
        current = current.scale(1.0 / norm);
    }
    for iter in 1..=max_iters {
        current = bjorck_step(&current, 1)?;
        deviation = gram_deviation(&current);
        if !deviation.is_finite() {
            break;
        }
        if deviation < tol {
            return Ok((current, iter));
        }
    }
    Err(OrthoError::NoConvergence {
        iters: max_iters,
        deviation,
    })
}

/// Soft orthogonality penalty `λ‖WᵀW − I‖²_F` and its gradient
/// `4λ·W(WᵀW − I)`; for wide `w` the row Gram `WWᵀ` is used instead.
pub fn ortho_penalty(w: &Matrix, lambda: f64) -> (f64, Matrix) {
    assert!(lambda >= 0.0, "lambda must be nonnegative");
    let d = identity_minus(&gram(w)).scale(-1.0);
    let value = lambda * d.data().iter().map(|x| x * x).sum::<f64>();
    let grad = match OrthoOrientation::of(w) {
        OrthoOrientation::Wide => d.matmul(w),
        _ => w.matmul(&d),
    }
    .expect("gram matches matrix shape")
    .scale(4.0 * lambda);
    (value, grad)
}

/// Skew-symmetric generator `A = G·Wᵀ − W·Gᵀ` of the Cayley retraction.
pub fn cayley_generator(w: &Matrix, grad: &Matrix) -> Result<Matrix, OrthoError> {
    if w.shape() != grad.shape() {
        return Err(LinalgError::Shape {
            op: "cayley_generator",
            left: w.shape(),
            right: grad.shape(),
        }
        .into());
    }
    let gw = Matrix::gemm(grad, false, w, true)?;
    // `W·Gᵀ` is exactly the transpose of `G·Wᵀ`, which keeps A + Aᵀ = 0 bit-exact.
    let wg = gw.transpose();
    Ok(gw.sub(&wg)?)
}

/// Cayley retraction step `W ← (I + τ/2·A)⁻¹(I − τ/2·A)·W` with
/// `A = G·Wᵀ − W·Gᵀ`. For `W` with orthonormal columns and `G` the gradient
/// of an objective to be minimized, this moves along a descent curve that
/// stays on the Stiefel manifold.
pub fn cayley_update(w: &Matrix, grad: &Matrix, tau: f64) -> Result<Matrix, OrthoError> {
    if OrthoOrientation::of(w) == OrthoOrientation::Wide {
        return Err(OrthoError::WideCayley {
            rows: w.rows(),
            cols: w.cols(),
        });
    }
    let a = cayley_generator(w, grad)?;
    let half = 0.5 * tau;
    let n = a.rows();
    let mut lhs = a.scale(half);
    let mut rhs_op = a.scale(-half);
    for i in 0..n {
        lhs[(i, i)] += 1.0;
        rhs_op[(i, i)] += 1.0;
    }
    let rhs = rhs_op.matmul(w)?;
    solve_linear(&lhs, &rhs).map_err(|e| match e {
        LinalgError::Singular => OrthoError::CayleySingular,
        other => other.into(),
    })
}

/// Smallest singular value accepted by [`svd_reinit`].
pub const REINIT_MIN_SIGMA: f64 = 1e-12;

/// Replaces every singular value of `m` by `lambda`: returns `λ·U·Vᵀ`.
pub fn svd_reinit(m: &Matrix, lambda: f64) -> Result<Matrix, OrthoError> {
    assert!(lambda > 0.0, "lambda must be positive");
    let res = svd(m);
    let sigma_min = res.sigma.last().copied().unwrap_or(0.0);
    if sigma_min < REINIT_MIN_SIGMA {
        return Err(OrthoError::DegenerateInit { sigma_min });
    }
    Ok(Matrix::gemm(&res.u, false, &res.v, true)?.scale(lambda))
}

/// Convolution kernel bank with dims (height n, width m, in-channels l,
/// out-channels k), stored row-major in that index order.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvTensor {
    dims: [usize; 4],
    data: Vec<f64>,
}

impl ConvTensor {
    pub fn new(n: usize, m: usize, l: usize, k: usize, data: Vec<f64>) -> Result<Self, OrthoError> {
        let dims = [n, m, l, k];
        if dims.contains(&0) || data.len() != n * m * l * k {
            return Err(OrthoError::ConvShape {
                rows: data.len(),
                cols: 1,
                dims,
            });
        }
        Ok(Self { dims, data })
    }

    pub fn dims(&self) -> [usize; 4] {
        self.dims
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, a: usize, b: usize, c: usize, d: usize) -> f64 {
        let [_, m, l, k] = self.dims;
        self.data[((a * m + b) * l + c) * k + d]
    }
}

/// Flattens a kernel bank into an `(n·m·l) × k` matrix whose column `j` is
/// kernel `j` in (n, m, l) row-major order.
pub fn reshape_conv(t: &ConvTensor) -> Result<Matrix, OrthoError> {
    let [n, m, l, k] = t.dims;
    // With k innermost the row-major buffers coincide.
    Ok(Matrix::new(n * m * l, k, t.data.clone())?)
}

/// Exact inverse of [`reshape_conv`].
pub fn unreshape_conv(w: &Matrix, dims: [usize; 4]) -> Result<ConvTensor, OrthoError> {
    let [n, m, l, k] = dims;
    if dims.contains(&0) || w.rows() != n * m * l || w.cols() != k {
        return Err(OrthoError::ConvShape {
            rows: w.rows(),
            cols: w.cols(),
            dims,
        });
    }
    ConvTensor::new(n, m, l, k, w.data().to_vec())
}
