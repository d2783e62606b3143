//! Flat `key = value` run configuration.
//!
//! One key per line, `#` starts a comment. `scheme` is required for training
//! and selects the per-scheme defaults (critic steps, learning rates) before
//! the remaining keys are applied on top.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use orthowgan::wgan::{Budget, DatasetSpec, Scheme, TrainConfig};

use crate::error::CliError;

/// Every accepted key.
pub const KEYS: &[&str] = &[
    "scheme",
    "dataset",
    "spiral_arms",
    "spiral_turns",
    "spiral_noise",
    "ring_modes",
    "ring_radius",
    "ring_sigma",
    "iters",
    "budget_seconds",
    "seed",
    "eta_d",
    "eta_g",
    "batch",
    "n_critic",
    "lambda_gp",
    "lambda_ortho",
    "clip_c",
    "init_lambda",
    "latent_dim",
    "hidden_width",
    "depth",
    "adam_beta1",
    "adam_beta2",
    "adam_eps",
    "tau_scale",
    "lipschitz_points",
    "metric_every",
    "log_timing",
];

/// Parsed but uninterpreted entries of a config file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigEntries {
    values: BTreeMap<String, String>,
}

impl ConfigEntries {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut values = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CliError::Config(format!("line {}: expected key = value, got '{line}'", n + 1)));
            };
            let (key, value) = (key.trim(), value.trim());
            if !KEYS.contains(&key) {
                return Err(CliError::Config(format!("line {}: unknown key '{key}'", n + 1)));
            }
            if values.insert(key.to_string(), value.to_string()).is_some() {
                return Err(CliError::Config(format!("line {}: duplicate key '{key}'", n + 1)));
            }
        }
        Ok(Self { values })
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    fn typed<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|e| CliError::Config(format!("invalid value '{v}' for key '{key}': {e}")))
            })
            .transpose()
    }

    fn set<T: FromStr>(&self, key: &str, slot: &mut T) -> Result<(), CliError>
    where
        T::Err: std::fmt::Display,
    {
        if let Some(v) = self.typed(key)? {
            *slot = v;
        }
        Ok(())
    }

    /// Dataset described by the `dataset` key and its parameters; spiral by
    /// default.
    pub fn dataset(&self) -> Result<DatasetSpec, CliError> {
        let kind = self.get("dataset").unwrap_or("spiral");
        let (mut spec, foreign) = match kind {
            "spiral" => (DatasetSpec::spiral(), "ring_"),
            "gaussian_ring" => (DatasetSpec::gaussian_ring(), "spiral_"),
            other => {
                return Err(CliError::Config(format!(
                    "unknown dataset '{other}'; valid datasets: spiral, gaussian_ring"
                )))
            }
        };
        if let Some(k) = self.values.keys().find(|k| k.starts_with(foreign)) {
            return Err(CliError::Config(format!("key '{k}' does not apply to dataset '{kind}'")));
        }
        match &mut spec {
            DatasetSpec::Spiral { arms, turns, noise_sigma } => {
                self.set("spiral_arms", arms)?;
                self.set("spiral_turns", turns)?;
                self.set("spiral_noise", noise_sigma)?;
            }
            DatasetSpec::GaussianRing { modes, radius, mode_sigma } => {
                self.set("ring_modes", modes)?;
                self.set("ring_radius", radius)?;
                self.set("ring_sigma", mode_sigma)?;
            }
        }
        spec.validate().map_err(CliError::Config)?;
        Ok(spec)
    }
}

/// Everything a training run needs.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub data: DatasetSpec,
    /// Fill the wall-clock columns of metrics.csv; off by default so logs are
    /// byte-identical across reruns.
    pub log_timing: bool,
}

impl RunConfig {
    pub fn from_entries(entries: &ConfigEntries) -> Result<Self, CliError> {
        let scheme_name = entries
            .get("scheme")
            .ok_or_else(|| CliError::Config("missing required key 'scheme'".into()))?;
        let scheme: Scheme = scheme_name.parse().map_err(|e: orthowgan::wgan::UnknownScheme| CliError::Config(e.to_string()))?;
        let mut t = TrainConfig::for_scheme(scheme);
        entries.set("iters", &mut t.iters)?;
        entries.set("seed", &mut t.seed)?;
        entries.set("eta_d", &mut t.eta_d)?;
        entries.set("eta_g", &mut t.eta_g)?;
        entries.set("batch", &mut t.batch)?;
        entries.set("n_critic", &mut t.n_critic)?;
        entries.set("lambda_gp", &mut t.lambda_gp)?;
        entries.set("lambda_ortho", &mut t.lambda_ortho)?;
        entries.set("clip_c", &mut t.clip_c)?;
        entries.set("init_lambda", &mut t.init_lambda)?;
        entries.set("latent_dim", &mut t.latent_dim)?;
        entries.set("hidden_width", &mut t.hidden_width)?;
        entries.set("depth", &mut t.depth)?;
        entries.set("adam_beta1", &mut t.adam.beta1)?;
        entries.set("adam_beta2", &mut t.adam.beta2)?;
        entries.set("adam_eps", &mut t.adam.eps)?;
        entries.set("tau_scale", &mut t.tau_scale)?;
        entries.set("lipschitz_points", &mut t.lipschitz_points)?;
        entries.set("metric_every", &mut t.metric_every)?;
        if let Some(seconds) = entries.typed::<f64>("budget_seconds")? {
            t.budget = Budget::WallClock { seconds };
        }
        let mut log_timing = false;
        entries.set("log_timing", &mut log_timing)?;
        t.validate().map_err(CliError::Config)?;
        Ok(Self {
            train: t,
            data: entries.dataset()?,
            log_timing,
        })
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        Self::from_entries(&ConfigEntries::parse(text)?)
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        Self::from_entries(&ConfigEntries::read(path)?)
    }
}
