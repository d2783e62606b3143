use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::AdamConfig;

/// Lipschitz-enforcement scheme for the critic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Weight clipping to `[-c, c]`, five critic steps per generator step.
    Clip,
    /// Two-sided gradient penalty, five critic steps, equal learning rates.
    Gp,
    /// Two-sided gradient penalty with one critic step and a faster critic.
    Ttur,
    /// Soft orthogonality penalty on every critic weight.
    OrthoReg,
    /// Critic weights moved along the Stiefel manifold by Cayley retraction.
    OrthoCayley,
    /// Adam step followed by one Björck step per critic weight.
    OrthoBjorck,
    /// Björck orthogonalization blended out over a sigmoid schedule while a
    /// one-sided gradient penalty is blended in.
    Proposed,
}

impl Scheme {
    pub const ALL: [Scheme; 7] = [
        Scheme::Clip,
        Scheme::Gp,
        Scheme::Ttur,
        Scheme::OrthoReg,
        Scheme::OrthoCayley,
        Scheme::OrthoBjorck,
        Scheme::Proposed,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Clip => "clip",
            Scheme::Gp => "gp",
            Scheme::Ttur => "ttur",
            Scheme::OrthoReg => "ortho_reg",
            Scheme::OrthoCayley => "ortho_cayley",
            Scheme::OrthoBjorck => "ortho_bjorck",
            Scheme::Proposed => "proposed",
        }
    }

    pub fn default_n_critic(self) -> usize {
        match self {
            Scheme::Clip | Scheme::Gp => 5,
            _ => 1,
        }
    }

    /// Default (critic, generator) learning rates.
    pub fn default_rates(self) -> (f64, f64) {
        match self {
            Scheme::Gp => (1e-4, 1e-4),
            _ => (3e-4, 1e-4),
        }
    }

    /// Schemes whose critic weights are kept (near-)orthogonal at all times.
    pub fn is_strictly_orthogonal(self) -> bool {
        matches!(self, Scheme::OrthoCayley | Scheme::OrthoBjorck)
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnknownScheme(pub String);

impl fmt::Display for UnknownScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<_> = Scheme::ALL.iter().map(|s| s.name()).collect();
        write!(f, "unknown scheme '{}'; valid schemes: {}", self.0, names.join(", "))
    }
}

impl std::error::Error for UnknownScheme {}

impl FromStr for Scheme {
    type Err = UnknownScheme;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Scheme::ALL
            .into_iter()
            .find(|sc| sc.name() == s)
            .ok_or_else(|| UnknownScheme(s.to_string()))
    }
}

/// How long a run lasts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Budget {
    /// Exactly `iters` generator iterations.
    Iterations,
    /// The iteration count is estimated from a short calibration run so the
    /// whole run takes roughly this long.
    WallClock { seconds: f64 },
}

/// Iterations timed to turn a wall-clock budget into an iteration count.
pub const CALIBRATION_ITERS: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub scheme: Scheme,
    pub eta_d: f64,
    pub eta_g: f64,
    pub batch: usize,
    pub n_critic: usize,
    pub lambda_gp: f64,
    pub lambda_ortho: f64,
    pub clip_c: f64,
    /// Total generator iterations `n`.
    pub iters: usize,
    pub init_lambda: f64,
    pub seed: u64,
    pub budget: Budget,
    pub latent_dim: usize,
    pub hidden_width: usize,
    /// Linear layers per network.
    pub depth: usize,
    pub adam: AdamConfig,
    /// Cayley step size is `tau_scale · eta_d`.
    pub tau_scale: f64,
    /// Interpolates used for each logged Lipschitz estimate.
    pub lipschitz_points: usize,
    /// Diagnostics (Lipschitz estimate, gram deviation) every this many iterations.
    pub metric_every: usize,
}

impl TrainConfig {
    /// Defaults for `scheme`, including its critic step count and rates.
    pub fn for_scheme(scheme: Scheme) -> Self {
        let (eta_d, eta_g) = scheme.default_rates();
        Self {
            scheme,
            eta_d,
            eta_g,
            batch: 64,
            n_critic: scheme.default_n_critic(),
            lambda_gp: 10.0,
            lambda_ortho: 10.0,
            clip_c: 0.01,
            iters: 10_000,
            init_lambda: 1.1,
            seed: 0,
            budget: Budget::Iterations,
            latent_dim: 8,
            hidden_width: 512,
            depth: 4,
            adam: AdamConfig::default(),
            tau_scale: 1.0,
            lipschitz_points: 256,
            metric_every: 100,
        }
    }

    /// `k = ⌊n/10⌋`, the centre of the blending schedule.
    pub fn k(&self) -> usize {
        self.iters / 10
    }

    pub fn critic_dims(&self, data_dim: usize) -> Vec<usize> {
        let mut dims = vec![data_dim];
        dims.extend(std::iter::repeat(self.hidden_width).take(self.depth - 1));
        dims.push(1);
        dims
    }

    pub fn generator_dims(&self, data_dim: usize) -> Vec<usize> {
        let mut dims = vec![self.latent_dim];
        dims.extend(std::iter::repeat(self.hidden_width).take(self.depth - 1));
        dims.push(data_dim);
        dims
    }

    pub fn validate(&self) -> Result<(), String> {
        let positive = [
            ("eta_d", self.eta_d),
            ("eta_g", self.eta_g),
            ("lambda_gp", self.lambda_gp),
            ("lambda_ortho", self.lambda_ortho),
            ("clip_c", self.clip_c),
            ("init_lambda", self.init_lambda),
            ("tau_scale", self.tau_scale),
            ("adam_eps", self.adam.eps),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(format!("{name} must be positive and finite, got {v}"));
            }
        }
        for (name, v) in [("adam_beta1", self.adam.beta1), ("adam_beta2", self.adam.beta2)] {
            if !(0.0..1.0).contains(&v) {
                return Err(format!("{name} must lie in [0, 1), got {v}"));
            }
        }
        if self.batch < 2 {
            return Err(format!("batch must be at least 2, got {}", self.batch));
        }
        if self.n_critic == 0 {
            return Err("n_critic must be at least 1".into());
        }
        if self.iters == 0 {
            return Err("iters must be at least 1".into());
        }
        if self.k() >= self.iters {
            return Err("k must be smaller than iters".into());
        }
        if self.latent_dim == 0 || self.hidden_width == 0 {
            return Err("latent_dim and hidden_width must be positive".into());
        }
        if self.depth < 2 {
            return Err(format!("depth must be at least 2, got {}", self.depth));
        }
        if self.lipschitz_points == 0 || self.metric_every == 0 {
            return Err("lipschitz_points and metric_every must be positive".into());
        }
        if let Budget::WallClock { seconds } = self.budget {
            if !(seconds > 0.0 && seconds.is_finite()) {
                return Err(format!("budget seconds must be positive, got {seconds}"));
            }
        }
        Ok(())
    }
}

/// `σ = sigmoid(i − k)` from the blending schedule.
pub fn schedule_sigma(i: usize, k: usize) -> f64 {
    let x = i as f64 - k as f64;
    1.0 / (1.0 + (-x).exp())
}

/// Below this schedule value the one-sided penalty is skipped entirely.
pub const PENALTY_SKIP_SIGMA: f64 = 1e-3;
