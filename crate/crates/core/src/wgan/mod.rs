//! Wasserstein-GAN training on synthetic 2-D data under seven critic
//! regularization schemes.
//!
//! The critic ascends `E[f(real)] − E[f(fake)]` minus its scheme's penalty;
//! the generator descends `−E[f(g(z))]`. Both use Adam with `β₁ = 0`,
//! `β₂ = 0.9` by default.

mod adam;
mod config;
mod data;
mod train;

pub use adam::{Adam, AdamConfig, StepSign};
pub use config::{schedule_sigma, Budget, Scheme, TrainConfig, UnknownScheme, CALIBRATION_ITERS, PENALTY_SKIP_SIGMA};
pub use data::{interpolates, sample_latent, sample_real, DatasetSpec};
pub use train::{
    calibrate_iterations, critic_objective, logged_gram_deviation, mean_gram_deviation, train, CriticObjective, CriticStep,
    GeneratorStep, TrainState, Trainer,
};

use thiserror::Error;

use crate::autodiff::AutodiffError;
use crate::linalg::LinalgError;
use crate::ortho::OrthoError;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("non-finite gradient in layer {layer}")]
    NonFiniteGradient { layer: usize },
    #[error("non-finite {what} loss")]
    NonFiniteLoss { what: &'static str },
    #[error("non-finite {what} parameters")]
    NonFiniteParams { what: &'static str },
    #[error("training diverged at iteration {iter}: {reason}")]
    Diverged {
        iter: usize,
        reason: String,
        /// State and log up to the failing iteration.
        state: Box<TrainState>,
    },
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Ortho(#[from] OrthoError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// One row of the per-iteration training log.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub iter: usize,
    pub wall_clock_s: f64,
    /// Negated critic objective of the last critic step (penalties included).
    pub critic_loss: f64,
    /// `−E[f(g(z))]`.
    pub gen_loss: f64,
    /// Mean `‖∇_{g(z)} f(g(z))‖` over the generator batch.
    pub gen_grad_norm: f64,
    /// Max interpolate gradient norm, on diagnostic iterations only.
    pub lipschitz_est: Option<f64>,
    /// Mean `(‖∇f(x̂)‖ − 1)²` on the same interpolates.
    pub interp_penalty: Option<f64>,
    /// Mean gram deviation over critic weights, on diagnostic iterations only.
    pub mean_gram_dev: Option<f64>,
    pub iters_per_sec: f64,
}

impl MetricRow {
    /// Copy with the wall-clock dependent fields zeroed, for comparing runs.
    pub fn without_timing(&self) -> MetricRow {
        MetricRow {
            wall_clock_s: 0.0,
            iters_per_sec: 0.0,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricLog {
    pub rows: Vec<MetricRow>,
}

impl MetricLog {
    pub fn last(&self) -> Option<&MetricRow> {
        self.rows.last()
    }

    /// Rows with timing stripped; equal for identical configurations.
    pub fn deterministic_rows(&self) -> Vec<MetricRow> {
        self.rows.iter().map(MetricRow::without_timing).collect()
    }

    /// Achieved iterations per second over the whole log.
    pub fn throughput(&self) -> Option<f64> {
        self.last().map(|r| r.iters_per_sec)
    }
}
