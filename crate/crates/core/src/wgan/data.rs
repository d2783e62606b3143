use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::linalg::{LinalgError, Matrix};

/// Synthetic 2-D target distributions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSpec {
    /// Archimedean spiral with `arms` arms offset by `2π/arms`, radius
    /// growing linearly from 0 to 1 over `turns` revolutions, plus isotropic
    /// Gaussian noise.
    Spiral { arms: usize, turns: f64, noise_sigma: f64 },
    /// `modes` Gaussians with standard deviation `mode_sigma`, centred at
    /// equally spaced points on a circle of the given radius.
    GaussianRing { modes: usize, radius: f64, mode_sigma: f64 },
}

impl DatasetSpec {
    pub fn spiral() -> Self {
        DatasetSpec::Spiral {
            arms: 2,
            turns: 2.0,
            noise_sigma: 0.05,
        }
    }

    pub fn gaussian_ring() -> Self {
        DatasetSpec::GaussianRing {
            modes: 8,
            radius: 2.0,
            mode_sigma: 0.02,
        }
    }

    pub fn dim(&self) -> usize {
        2
    }

    pub fn validate(&self) -> Result<(), String> {
        match *self {
            DatasetSpec::Spiral { arms, turns, noise_sigma } => {
                if arms == 0 {
                    return Err("spiral needs at least one arm".into());
                }
                if !(turns > 0.0 && turns.is_finite()) {
                    return Err("spiral turns must be positive".into());
                }
                if !(noise_sigma > 0.0 && noise_sigma.is_finite()) {
                    return Err("spiral noise_sigma must be positive".into());
                }
            }
            DatasetSpec::GaussianRing { modes, radius, mode_sigma } => {
                if modes == 0 {
                    return Err("ring needs at least one mode".into());
                }
                if !(radius > 0.0 && radius.is_finite()) {
                    return Err("ring radius must be positive".into());
                }
                if !(mode_sigma > 0.0 && mode_sigma.is_finite()) {
                    return Err("ring mode_sigma must be positive".into());
                }
            }
        }
        Ok(())
    }

    /// Mode centres of the ring, in index order. Empty for the spiral.
    pub fn ring_centers(&self) -> Vec<[f64; 2]> {
        match *self {
            DatasetSpec::GaussianRing { modes, radius, .. } => (0..modes)
                .map(|i| {
                    let angle = 2.0 * PI * i as f64 / modes as f64;
                    [radius * angle.cos(), radius * angle.sin()]
                })
                .collect(),
            DatasetSpec::Spiral { .. } => Vec::new(),
        }
    }

    /// Noise-free spiral point for parameter `t` on arm `arm`.
    pub fn spiral_point(&self, t: f64, arm: usize) -> Option<[f64; 2]> {
        match *self {
            DatasetSpec::Spiral { arms, turns, .. } => {
                let r = t / (turns * 2.0 * PI);
                let phase = t + arm as f64 * 2.0 * PI / arms as f64;
                Some([r * phase.cos(), r * phase.sin()])
            }
            DatasetSpec::GaussianRing { .. } => None,
        }
    }
}

/// Draws `m` i.i.d. samples from the target distribution.
pub fn sample_real<R: Rng + ?Sized>(spec: &DatasetSpec, m: usize, rng: &mut R) -> Matrix {
    assert!(m >= 1, "need at least one sample");
    let mut data = Vec::with_capacity(2 * m);
    match *spec {
        DatasetSpec::Spiral { arms, turns, noise_sigma } => {
            for _ in 0..m {
                let t = rng.gen_range(0.0..turns * 2.0 * PI);
                let arm = rng.gen_range(0..arms);
                let [x, y] = spec.spiral_point(t, arm).expect("spiral");
                let nx: f64 = StandardNormal.sample(rng);
                let ny: f64 = StandardNormal.sample(rng);
                data.push(x + noise_sigma * nx);
                data.push(y + noise_sigma * ny);
            }
        }
        DatasetSpec::GaussianRing { modes, mode_sigma, .. } => {
            let centers = spec.ring_centers();
            for _ in 0..m {
                let [cx, cy] = centers[rng.gen_range(0..modes)];
                let nx: f64 = StandardNormal.sample(rng);
                let ny: f64 = StandardNormal.sample(rng);
                data.push(cx + mode_sigma * nx);
                data.push(cy + mode_sigma * ny);
            }
        }
    }
    Matrix::from_raw(m, 2, data)
}

/// Standard normal latent batch.
pub fn sample_latent<R: Rng + ?Sized>(m: usize, dim: usize, rng: &mut R) -> Matrix {
    Matrix::from_fn(m, dim, |_, _| StandardNormal.sample(rng))
}

/// Row-wise random convex combinations `fake + ε·(real − fake)`, one
/// `ε ~ U[0, 1)` per row.
pub fn interpolates<R: Rng + ?Sized>(x_real: &Matrix, x_fake: &Matrix, rng: &mut R) -> Result<Matrix, LinalgError> {
    if x_real.shape() != x_fake.shape() {
        return Err(LinalgError::Shape {
            op: "interpolates",
            left: x_real.shape(),
            right: x_fake.shape(),
        });
    }
    let mut out = x_fake.clone();
    for i in 0..out.rows() {
        let eps: f64 = rng.gen();
        for (o, r) in out.row_mut(i).iter_mut().zip(x_real.row(i)) {
            *o += eps * (r - *o);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn noiseless_spiral_lies_on_curve() {
        let spec = DatasetSpec::Spiral {
            arms: 2,
            turns: 2.0,
            noise_sigma: 1e-14,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = sample_real(&spec, 500, &mut rng);
        for i in 0..x.rows() {
            let (px, py) = (x[(i, 0)], x[(i, 1)]);
            // Invert the curve: r gives t, then one of the arms must match.
            let r = (px * px + py * py).sqrt();
            let t = r * 2.0 * 2.0 * PI;
            let close = (0..2).any(|arm| {
                let [cx, cy] = spec.spiral_point(t, arm).unwrap();
                ((cx - px).powi(2) + (cy - py).powi(2)).sqrt() < 1e-9
            });
            assert!(close, "sample {i} off the curve");
        }
    }

    #[test]
    fn tight_ring_samples_hit_centers() {
        let spec = DatasetSpec::GaussianRing {
            modes: 8,
            radius: 2.0,
            mode_sigma: 1e-14,
        };
        let centers = spec.ring_centers();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = sample_real(&spec, 400, &mut rng);
        for i in 0..x.rows() {
            assert!(centers
                .iter()
                .any(|c| (c[0] - x[(i, 0)]).abs() < 1e-12 && (c[1] - x[(i, 1)]).abs() < 1e-12));
        }
    }

    #[test]
    fn ring_mean_is_near_origin() {
        let spec = DatasetSpec::gaussian_ring();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 100_000;
        let x = sample_real(&spec, n, &mut rng);
        let bound = 3.0 * 2.0 / (n as f64).sqrt();
        for j in 0..2 {
            let mean = x.col(j).iter().sum::<f64>() / n as f64;
            assert!(mean.abs() < bound, "mean {mean} exceeds {bound}");
        }
    }

    #[test]
    fn interpolates_are_between_endpoints() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = sample_real(&DatasetSpec::spiral(), 64, &mut rng);
        let b = sample_real(&DatasetSpec::gaussian_ring(), 64, &mut rng);
        let h = interpolates(&a, &b, &mut rng).unwrap();
        for i in 0..64 {
            for j in 0..2 {
                let (lo, hi) = (a[(i, j)].min(b[(i, j)]), a[(i, j)].max(b[(i, j)]));
                assert!(h[(i, j)] >= lo - 1e-15 && h[(i, j)] <= hi + 1e-15);
            }
        }
        assert_eq!(interpolates(&a, &a, &mut rng).unwrap(), a);
        assert!(interpolates(&a, &Matrix::zeros(3, 2), &mut rng).is_err());
    }

    #[test]
    fn interpolates_are_reproducible() {
        let a = Matrix::from_fn(10, 2, |i, j| (i + j) as f64);
        let b = Matrix::from_fn(10, 2, |i, j| (i * j) as f64 - 3.0);
        let h1 = interpolates(&a, &b, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let h2 = interpolates(&a, &b, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(h1, h2);
    }

    #[test]
    fn validation() {
        assert!(DatasetSpec::spiral().validate().is_ok());
        let bad = DatasetSpec::GaussianRing {
            modes: 8,
            radius: 1.0,
            mode_sigma: 0.0,
        };
        assert!(bad.validate().is_err());
    }
}
