use serde::{Deserialize, Serialize};

use crate::autodiff::{Layer, MlpParams};
use crate::linalg::Matrix;

use super::TrainError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.0,
            beta2: 0.9,
            eps: 1e-8,
        }
    }
}

/// Whether an update climbs or descends the objective it was computed from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepSign {
    Ascend,
    Descend,
}

impl StepSign {
    fn factor(self) -> f64 {
        match self {
            StepSign::Ascend => 1.0,
            StepSign::Descend => -1.0,
        }
    }
}

/// Adam moment estimates for one network.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    m: Vec<Layer>,
    v: Vec<Layer>,
    t: u64,
}

impl Adam {
    pub fn new(config: AdamConfig, params: &MlpParams) -> Self {
        Self {
            config,
            m: params.zeros_like(),
            v: params.zeros_like(),
            t: 0,
        }
    }

    /// Number of steps taken.
    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn first_moments(&self) -> &[Layer] {
        &self.m
    }

    pub fn second_moments(&self) -> &[Layer] {
        &self.v
    }

    /// Advances the moments with `grads` and returns the bias-corrected
    /// preconditioned direction `m̂ / (√v̂ + ε)` (no learning rate applied).
    pub fn direction(&mut self, grads: &[Layer]) -> Result<Vec<Layer>, TrainError> {
        assert_eq!(grads.len(), self.m.len(), "gradient layer count mismatch");
        for (i, g) in grads.iter().enumerate() {
            if !g.weight.is_finite() || g.bias.iter().any(|b| !b.is_finite()) {
                return Err(TrainError::NonFiniteGradient { layer: i });
            }
            assert_eq!(g.weight.shape(), self.m[i].weight.shape(), "gradient shape mismatch");
        }
        self.t += 1;
        let AdamConfig { beta1, beta2, eps } = self.config;
        let c1 = 1.0 - beta1.powi(self.t as i32);
        let c2 = 1.0 - beta2.powi(self.t as i32);
        let update = |m: &mut f64, v: &mut f64, g: f64| {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            (*m / c1) / ((*v / c2).sqrt() + eps)
        };
        let mut out = Vec::with_capacity(grads.len());
        for ((g, m), v) in grads.iter().zip(&mut self.m).zip(&mut self.v) {
            let (rows, cols) = g.weight.shape();
            let weight: Vec<f64> = g
                .weight
                .data()
                .iter()
                .zip(m.weight.data_mut())
                .zip(v.weight.data_mut())
                .map(|((&gi, mi), vi)| update(mi, vi, gi))
                .collect();
            let bias = g
                .bias
                .iter()
                .zip(&mut m.bias)
                .zip(&mut v.bias)
                .map(|((&gi, mi), vi)| update(mi, vi, gi))
                .collect();
            out.push(Layer {
                weight: Matrix::from_raw(rows, cols, weight),
                bias,
            });
        }
        Ok(out)
    }

    /// One Adam update of `params`: adds `lr · direction` when ascending,
    /// subtracts it when descending.
    pub fn step(&mut self, params: &mut MlpParams, grads: &[Layer], lr: f64, sign: StepSign) -> Result<(), TrainError> {
        let dir = self.direction(grads)?;
        params
            .apply_update(&dir, sign.factor() * lr)
            .expect("direction mirrors parameter shapes");
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn net() -> MlpParams {
        MlpParams::init_uniform(&[2, 3, 1], &mut ChaCha8Rng::seed_from_u64(0))
    }

    fn grads_like(p: &MlpParams, f: impl Fn(usize) -> f64) -> Vec<Layer> {
        let mut k = 0;
        p.zeros_like()
            .into_iter()
            .map(|mut l| {
                for w in l.weight.data_mut() {
                    *w = f(k);
                    k += 1;
                }
                for b in &mut l.bias {
                    *b = f(k);
                    k += 1;
                }
                l
            })
            .collect()
    }

    #[test]
    fn first_step_is_sign_of_gradient() {
        let p = net();
        let mut adam = Adam::new(AdamConfig::default(), &p);
        let g = grads_like(&p, |k| (k as f64 - 6.5) * 0.3);
        let dir = adam.direction(&g).unwrap();
        for (d, gl) in dir.iter().zip(&g) {
            for (a, b) in d.weight.data().iter().zip(gl.weight.data()) {
                let expected = b / (b.abs() + 1e-8);
                assert!((a - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_gradients_leave_params_unchanged() {
        let mut p = net();
        let before = p.clone();
        let mut adam = Adam::new(AdamConfig::default(), &p);
        let g = p.zeros_like();
        for _ in 0..10 {
            adam.step(&mut p, &g, 1e-3, StepSign::Ascend).unwrap();
        }
        assert_eq!(p, before);
        assert_eq!(adam.steps(), 10);
    }

    #[test]
    fn ascent_and_descent_have_opposite_signs() {
        let p0 = net();
        let g = grads_like(&p0, |_| 1.0);
        let mut up = p0.clone();
        let mut down = p0.clone();
        Adam::new(AdamConfig::default(), &p0).step(&mut up, &g, 0.1, StepSign::Ascend).unwrap();
        Adam::new(AdamConfig::default(), &p0).step(&mut down, &g, 0.1, StepSign::Descend).unwrap();
        let a = up.layers[0].weight[(0, 0)] - p0.layers[0].weight[(0, 0)];
        let b = down.layers[0].weight[(0, 0)] - p0.layers[0].weight[(0, 0)];
        assert!(a > 0.0 && b < 0.0 && (a + b).abs() < 1e-15);
    }

    #[test]
    fn non_finite_gradient_is_rejected() {
        let p = net();
        let mut adam = Adam::new(AdamConfig::default(), &p);
        let g = grads_like(&p, |k| if k == 3 { f64::NAN } else { 0.0 });
        assert!(matches!(adam.direction(&g), Err(TrainError::NonFiniteGradient { layer: 0 })));
        assert_eq!(adam.steps(), 0);
    }

    #[test]
    fn repeated_runs_are_bit_identical() {
        let run = || {
            let mut p = net();
            let mut adam = Adam::new(AdamConfig::default(), &p);
            for s in 0..100 {
                let g = grads_like(&p, |k| ((k * 7 + s * 3) % 11) as f64 - 5.0);
                adam.step(&mut p, &g, 1e-3, StepSign::Descend).unwrap();
            }
            p
        };
        assert_eq!(run(), run());
    }
}
