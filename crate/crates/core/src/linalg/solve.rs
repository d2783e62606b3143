use super::{LinalgError, Matrix};

/// Pivots smaller than this in magnitude mark the system as singular.
pub const PIVOT_TOLERANCE: f64 = 1e-12;

/// Solves `a · x = b` by LU factorization with partial pivoting.
///
/// `b` may carry several right-hand sides as columns.
pub fn solve_linear(a: &Matrix, b: &Matrix) -> Result<Matrix, LinalgError> {
    let n = a.rows();
    if a.cols() != n || b.rows() != n {
        return Err(LinalgError::Shape {
            op: "solve_linear",
            left: a.shape(),
            right: b.shape(),
        });
    }
    let nrhs = b.cols();
    let mut lu = a.data().to_vec();
    let mut x = b.data().to_vec();

    for k in 0..n {
        let (pivot_row, pivot_abs) = (k..n)
            .map(|i| (i, lu[i * n + k].abs()))
            .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if pivot_abs < PIVOT_TOLERANCE {
            return Err(LinalgError::Singular);
        }
        if pivot_row != k {
            for j in 0..n {
                lu.swap(k * n + j, pivot_row * n + j);
            }
            for j in 0..nrhs {
                x.swap(k * nrhs + j, pivot_row * nrhs + j);
            }
        }
        let pivot = lu[k * n + k];
        let (upper, lower) = lu.split_at_mut((k + 1) * n);
        let pivot_row_vals = &upper[k * n..];
        let (x_upper, x_lower) = x.split_at_mut((k + 1) * nrhs);
        let x_pivot = &x_upper[k * nrhs..];
        for (row, x_row) in lower.chunks_exact_mut(n).zip(x_lower.chunks_exact_mut(nrhs)) {
            let factor = row[k] / pivot;
            if factor == 0.0 {
                continue;
            }
            row[k] = factor;
            for (r, p) in row[k + 1..].iter_mut().zip(&pivot_row_vals[k + 1..]) {
                *r -= factor * p;
            }
            for (xv, xp) in x_row.iter_mut().zip(x_pivot) {
                *xv -= factor * xp;
            }
        }
    }

    // Back substitution on the upper triangle.
    for k in (0..n).rev() {
        let pivot = lu[k * n + k];
        let (head, tail) = x.split_at_mut((k + 1) * nrhs);
        let xk = &mut head[k * nrhs..];
        for j in (k + 1)..n {
            let u = lu[k * n + j];
            if u == 0.0 {
                continue;
            }
            let xj = &tail[(j - k - 1) * nrhs..(j - k) * nrhs];
            for (a, b) in xk.iter_mut().zip(xj) {
                *a -= u * b;
            }
        }
        for v in xk.iter_mut() {
            *v /= pivot;
        }
    }
    Ok(Matrix::from_raw(n, nrhs, x))
}
