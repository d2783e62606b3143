use super::Matrix;

/// Thin singular value decomposition `m = u · diag(sigma) · vᵀ`.
#[derive(Debug, Clone)]
pub struct SvdResult {
    /// n×r, orthonormal columns.
    pub u: Matrix,
    /// Descending, nonnegative, length r = min(n, m).
    pub sigma: Vec<f64>,
    /// m×r, orthonormal columns.
    pub v: Matrix,
}

impl SvdResult {
    /// `u · diag(sigma) · vᵀ`.
    pub fn reconstruct(&self) -> Matrix {
        let us = Matrix::from_fn(self.u.rows(), self.u.cols(), |i, j| self.u[(i, j)] * self.sigma[j]);
        Matrix::gemm(&us, false, &self.v, true).expect("svd factors have consistent shapes")
    }
}

const MAX_SWEEPS: usize = 60;

/// One-sided (Hestenes) Jacobi SVD.
///
/// Columns of the working copy are rotated pairwise until all pairs are
/// orthogonal to working precision; the column norms are then the singular
/// values. Wide inputs are decomposed through their transpose. Each column of
/// `u` is signed so that its largest-magnitude entry is nonnegative.
pub fn svd(m: &Matrix) -> SvdResult {
    if m.rows() < m.cols() {
        let t = svd(&m.transpose());
        let mut out = SvdResult { u: t.v, sigma: t.sigma, v: t.u };
        apply_sign_convention(&mut out);
        return out;
    }
    let (rows, cols) = m.shape();
    // Column-major working copies so rotations touch contiguous memory.
    let mut a: Vec<Vec<f64>> = (0..cols).map(|j| m.col(j)).collect();
    let mut v: Vec<Vec<f64>> = (0..cols)
        .map(|j| (0..cols).map(|i| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();

    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..cols {
            for q in (p + 1)..cols {
                let (alpha, beta, gamma) = column_products(&a[p], &a[q]);
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut a, p, q, c, s);
                rotate(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }

    let mut order: Vec<(usize, f64)> = a
        .iter()
        .enumerate()
        .map(|(j, col)| (j, col.iter().map(|x| x * x).sum::<f64>().sqrt()))
        .collect();
    // Stable sort keeps the decomposition deterministic under ties.
    order.sort_by(|x, y| y.1.total_cmp(&x.1));

    let sigma: Vec<f64> = order.iter().map(|&(_, s)| s).collect();
    let sigma_max = sigma.first().copied().unwrap_or(0.0);
    let negligible = sigma_max * f64::EPSILON * rows as f64;

    let mut u_cols: Vec<Vec<f64>> = Vec::with_capacity(cols);
    let mut deficient = Vec::new();
    for (k, &(j, s)) in order.iter().enumerate() {
        if s > negligible && s > 0.0 {
            u_cols.push(a[j].iter().map(|x| x / s).collect());
        } else {
            u_cols.push(vec![0.0; rows]);
            deficient.push(k);
        }
    }
    complete_orthonormal(&mut u_cols, &deficient);

    let u = Matrix::from_fn(rows, cols, |i, k| u_cols[k][i]);
    let vm = Matrix::from_fn(cols, cols, |i, k| v[order[k].0][i]);
    let mut out = SvdResult { u, sigma, v: vm };
    apply_sign_convention(&mut out);
    out
}

fn column_products(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let mut alpha = 0.0;
    let mut beta = 0.0;
    let mut gamma = 0.0;
    for (a, b) in x.iter().zip(y) {
        alpha += a * a;
        beta += b * b;
        gamma += a * b;
    }
    (alpha, beta, gamma)
}

fn rotate(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (left, right) = cols.split_at_mut(q);
    for (xp, xq) in left[p].iter_mut().zip(right[0].iter_mut()) {
        let (a, b) = (*xp, *xq);
        *xp = c * a - s * b;
        *xq = s * a + c * b;
    }
}

/// Fills the listed (zero) columns with unit vectors orthogonal to all other
/// columns, via Gram-Schmidt against the standard basis.
fn complete_orthonormal(cols: &mut [Vec<f64>], missing: &[usize]) {
    if missing.is_empty() {
        return;
    }
    let n = cols[0].len();
    let mut candidate = 0;
    for &k in missing {
        loop {
            assert!(candidate < n, "cannot complete orthonormal basis");
            let mut e = vec![0.0; n];
            e[candidate] = 1.0;
            candidate += 1;
            for _ in 0..2 {
                for (j, col) in cols.iter().enumerate() {
                    if j == k || (missing.contains(&j) && col.iter().all(|&x| x == 0.0)) {
                        continue;
                    }
                    let dot: f64 = col.iter().zip(&e).map(|(a, b)| a * b).sum();
                    for (ei, ci) in e.iter_mut().zip(col) {
                        *ei -= dot * ci;
                    }
                }
            }
            let norm = e.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-6 {
                cols[k] = e.iter().map(|x| x / norm).collect();
                break;
            }
        }
    }
}

fn apply_sign_convention(res: &mut SvdResult) {
    for k in 0..res.u.cols() {
        let mut best = 0.0f64;
        let mut sign = 1.0;
        for i in 0..res.u.rows() {
            let x = res.u[(i, k)];
            if x.abs() > best.abs() {
                best = x;
                sign = if x < 0.0 { -1.0 } else { 1.0 };
            }
        }
        if sign < 0.0 {
            for i in 0..res.u.rows() {
                res.u[(i, k)] = -res.u[(i, k)];
            }
            for i in 0..res.v.rows() {
                res.v[(i, k)] = -res.v[(i, k)];
            }
        }
    }
}
