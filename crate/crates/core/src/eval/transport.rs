use crate::linalg::Matrix;

use super::EvalError;

/// Largest sample count accepted by [`exact_w1`].
pub const EXACT_W1_MAX_N: usize = 256;

/// Minimum-cost perfect matching on a square cost matrix (Hungarian method
/// with row/column potentials, O(n³)). Returns `assignment[row] = col`.
pub fn min_cost_matching(cost: &Matrix) -> Vec<usize> {
    let n = cost.rows();
    assert_eq!(n, cost.cols(), "cost matrix must be square");
    // 1-based arrays; index 0 is the virtual source column.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut matched_row = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for row in 1..=n {
        matched_row[0] = row;
        let mut col0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[col0] = true;
            let r0 = matched_row[col0];
            let mut delta = f64::INFINITY;
            let mut col1 = 0;
            for col in 1..=n {
                if used[col] {
                    continue;
                }
                let reduced = cost[(r0 - 1, col - 1)] - u[r0] - v[col];
                if reduced < minv[col] {
                    minv[col] = reduced;
                    way[col] = col0;
                }
                if minv[col] < delta {
                    delta = minv[col];
                    col1 = col;
                }
            }
            for col in 0..=n {
                if used[col] {
                    u[matched_row[col]] += delta;
                    v[col] -= delta;
                } else {
                    minv[col] -= delta;
                }
            }
            col0 = col1;
            if matched_row[col0] == 0 {
                break;
            }
        }
        loop {
            let col1 = way[col0];
            matched_row[col0] = matched_row[col1];
            col0 = col1;
            if col0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for col in 1..=n {
        assignment[matched_row[col] - 1] = col - 1;
    }
    assignment
}

/// Exact 1-Wasserstein distance between two equal-size, equally weighted
/// empirical measures under Euclidean ground cost.
pub fn exact_w1(x: &Matrix, y: &Matrix) -> Result<f64, EvalError> {
    let n = x.rows();
    if y.rows() != n {
        return Err(EvalError::SizeMismatch(n, y.rows()));
    }
    if x.cols() != y.cols() {
        return Err(EvalError::DimMismatch(x.cols(), y.cols()));
    }
    if n > EXACT_W1_MAX_N {
        return Err(EvalError::TooLarge { n, max: EXACT_W1_MAX_N });
    }
    let cost = Matrix::from_fn(n, n, |i, j| {
        x.row(i).iter().zip(y.row(j)).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
    });
    let assignment = min_cost_matching(&cost);
    let total: f64 = assignment.iter().enumerate().map(|(i, &j)| cost[(i, j)]).sum();
    Ok(total / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn permutations(n: usize) -> Vec<Vec<usize>> {
        if n == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for p in permutations(n - 1) {
            for pos in 0..=p.len() {
                let mut q = p.clone();
                q.insert(pos, n - 1);
                out.push(q);
            }
        }
        out
    }

    #[test]
    fn identical_sets_cost_nothing() {
        let x = Matrix::from_fn(5, 2, |i, j| (i * 3 + j) as f64);
        assert_eq!(exact_w1(&x, &x).unwrap(), 0.0);
    }

    #[test]
    fn two_point_example() {
        let x = Matrix::from_rows(&[&[0.0, 0.0], &[1.0, 0.0]]).unwrap();
        let y = Matrix::from_rows(&[&[0.0, 1.0], &[1.0, 1.0]]).unwrap();
        assert!((exact_w1(&x, &y).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn matches_brute_force_on_small_sets() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in 1..=7 {
            let cost = Matrix::from_fn(n, n, |_, _| {
                let v: f64 = StandardNormal.sample(&mut rng);
                v.abs()
            });
            let best = permutations(n)
                .iter()
                .map(|p| p.iter().enumerate().map(|(i, &j)| cost[(i, j)]).sum::<f64>())
                .fold(f64::INFINITY, f64::min);
            let a = min_cost_matching(&cost);
            let got: f64 = a.iter().enumerate().map(|(i, &j)| cost[(i, j)]).sum();
            assert!((got - best).abs() < 1e-12, "n={n}: {got} vs {best}");
            let mut seen = a.clone();
            seen.sort_unstable();
            assert_eq!(seen, (0..n).collect::<Vec<_>>());
        }
    }

    #[test]
    fn size_checks() {
        let a = Matrix::zeros(3, 2);
        assert!(matches!(exact_w1(&a, &Matrix::zeros(4, 2)), Err(EvalError::SizeMismatch(3, 4))));
        let big = Matrix::zeros(257, 2);
        assert!(matches!(exact_w1(&big, &big), Err(EvalError::TooLarge { .. })));
    }
}
