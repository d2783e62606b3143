use std::fs;
use std::path::{Path, PathBuf};

use orthowgan::autodiff::{self, MlpParams};
use orthowgan::eval::{self, DEFAULT_K_SWEEP};
use orthowgan::linalg::Matrix;
use orthowgan::ortho::{gram_deviation, OrthoOrientation};
use orthowgan::wgan::{self, sample_real, Budget, DatasetSpec, TrainError, TrainState};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::checkpoint::Checkpoint;
use crate::config::{ConfigEntries, RunConfig};
use crate::error::CliError;
use crate::manifest::{Divergence, RunManifest, BUILD_ID};
use crate::tables::{fmt_f64, write_metrics, write_table};
use crate::{plot, tables};

pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const METRICS_FILE: &str = "metrics.csv";
pub const MANIFEST_FILE: &str = "run_manifest.json";
pub const TOURNAMENT_CSV: &str = "tournament.csv";
pub const TOURNAMENT_JSON: &str = "tournament.json";

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

#[derive(Debug, Clone)]
pub struct TrainArgs {
    pub config: PathBuf,
    pub out: PathBuf,
    pub seed_override: Option<u64>,
    pub budget_seconds: Option<f64>,
}

/// Summary of a finished training command.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub planned_iters: usize,
    pub achieved_iters: usize,
}

/// Trains one model and writes checkpoint.json, metrics.csv and
/// run_manifest.json into `out`. A diverged run still writes the log and
/// manifest (and the checkpoint when its parameters are finite) before
/// returning [`CliError::Diverged`].
pub fn cmd_train(args: &TrainArgs) -> Result<TrainOutcome, CliError> {
    let mut run = RunConfig::read(&args.config)?;
    if let Some(seed) = args.seed_override {
        run.train.seed = seed;
    }
    if let Some(seconds) = args.budget_seconds {
        run.train.budget = Budget::WallClock { seconds };
    }
    run.train.validate().map_err(CliError::Config)?;
    create_dir(&args.out)?;

    let (state, divergence) = match wgan::train(&run.train, &run.data) {
        Ok(state) => (state, None),
        Err(TrainError::Diverged { iter, reason, state }) => (*state, Some(Divergence { iter, reason })),
        Err(TrainError::Config(msg)) => return Err(CliError::Config(msg)),
        Err(e) => return Err(e.into()),
    };
    write_metrics(&args.out.join(METRICS_FILE), &state.log, run.log_timing)?;
    let checkpoint_written = save_checkpoint(&run, &state, &args.out.join(CHECKPOINT_FILE))?;
    let manifest = RunManifest {
        build_id: BUILD_ID,
        command: "train",
        scheme: run.train.scheme.name().to_string(),
        seed: run.train.seed,
        budget: run.train.budget,
        planned_iters: state.planned_iters,
        achieved_iters: state.iter,
        status: if divergence.is_some() { "diverged" } else { "completed" },
        divergence: divergence.clone(),
        checkpoint_written,
        log_timing: run.log_timing,
        config: run.train.clone(),
        data: run.data,
    };
    manifest.write(&args.out.join(MANIFEST_FILE))?;
    match divergence {
        Some(d) => Err(CliError::Diverged { iter: d.iter, reason: d.reason }),
        None => Ok(TrainOutcome {
            planned_iters: state.planned_iters,
            achieved_iters: state.iter,
        }),
    }
}

fn save_checkpoint(run: &RunConfig, state: &TrainState, path: &Path) -> Result<bool, CliError> {
    if !(state.critic.is_finite() && state.generator.is_finite()) {
        return Ok(false);
    }
    let mut config = run.train.clone();
    config.iters = state.planned_iters;
    Checkpoint {
        config,
        data: run.data,
        critic: state.critic.clone(),
        generator: state.generator.clone(),
        iter: state.iter,
    }
    .save(path)?;
    Ok(true)
}

/// Dataset from an explicit config file, else the one recorded in `fallback`.
fn resolve_data(config: Option<&Path>, fallback: &Checkpoint) -> Result<DatasetSpec, CliError> {
    match config {
        Some(p) => ConfigEntries::read(p)?.dataset(),
        None => Ok(fallback.data),
    }
}

#[derive(Debug, Clone)]
pub struct TournamentArgs {
    pub checkpoints: Vec<PathBuf>,
    pub out: PathBuf,
    pub config: Option<PathBuf>,
    pub n_gen: usize,
    pub n_data: usize,
    pub seed: u64,
}

#[derive(Serialize)]
struct TournamentJson<'a> {
    checkpoints: Vec<String>,
    schemes: Vec<&'a str>,
    seed: u64,
    n_gen: usize,
    n_data: usize,
    data: DatasetSpec,
    #[serde(flatten)]
    result: &'a eval::TournamentResult,
    ranking: Vec<usize>,
}

/// Cross-evaluates every critic against every generator. Train and test
/// sets are independent draws of `n_data` points from the dataset.
pub fn cmd_tournament(args: &TournamentArgs) -> Result<eval::TournamentResult, CliError> {
    if args.checkpoints.len() < 2 {
        return Err(CliError::Usage(format!("tournament needs at least two checkpoints, got {}", args.checkpoints.len())));
    }
    let cps = args.checkpoints.iter().map(|p| Checkpoint::load(p)).collect::<Result<Vec<_>, _>>()?;
    let dim = cps[0].critic.in_dim();
    for (p, c) in args.checkpoints.iter().zip(&cps) {
        if c.critic.in_dim() != dim || c.generator.out_dim() != dim {
            return Err(CliError::format(
                p,
                format!("incompatible checkpoint dims: data dim {} vs {dim}", c.critic.in_dim()),
            ));
        }
    }
    let data = resolve_data(args.config.as_deref(), &cps[0])?;
    if data.dim() != dim {
        return Err(CliError::Config(format!("dataset is {}-D but checkpoints are {dim}-D", data.dim())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let train = sample_real(&data, args.n_data, &mut rng);
    let test = sample_real(&data, args.n_data, &mut rng);
    let models: Vec<(MlpParams, MlpParams)> = cps.iter().map(|c| (c.critic.clone(), c.generator.clone())).collect();
    let result = eval::tournament(&models, &train, &test, args.n_gen, &mut rng)?;

    create_dir(&args.out)?;
    let scheme = |i: usize| cps[i].config.scheme.name();
    let mut rows = Vec::new();
    for (a, &i) in result.models.iter().enumerate() {
        for (b, &j) in result.models.iter().enumerate() {
            rows.push(vec![
                i.to_string(),
                j.to_string(),
                scheme(i).to_string(),
                scheme(j).to_string(),
                fmt_f64(result.w_raw[a][b]),
                fmt_f64(result.w_hat[a]),
                fmt_f64(result.w_rel[a][b]),
            ]);
        }
    }
    write_table(
        &args.out.join(TOURNAMENT_CSV),
        &["critic", "generator", "critic_scheme", "generator_scheme", "w_raw", "w_hat", "w_rel"],
        &rows,
    )?;
    let doc = TournamentJson {
        checkpoints: args.checkpoints.iter().map(|p| p.display().to_string()).collect(),
        schemes: (0..cps.len()).map(scheme).collect(),
        seed: args.seed,
        n_gen: args.n_gen,
        n_data: args.n_data,
        data,
        result: &result,
        ranking: result.ranking(),
    };
    let path = args.out.join(TOURNAMENT_JSON);
    let mut text = serde_json::to_string_pretty(&doc).map_err(|e| CliError::format(&path, e))?;
    text.push('\n');
    fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
    Ok(result)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalKind {
    Lipschitz,
    Gram,
    Spectrum,
    Ndb,
    Gradnorm,
}

#[derive(Debug, Clone)]
pub struct EvalArgs {
    pub checkpoint: PathBuf,
    pub which: EvalKind,
    pub out: PathBuf,
    pub config: Option<PathBuf>,
    pub seed: u64,
    /// Real and generated sample count.
    pub n: usize,
    pub alpha: f64,
    /// For `ndb`: compare against a held-out half of the real data instead
    /// of the generator.
    pub replay_train_half: bool,
}

/// Writes one diagnostic table for a checkpoint to `args.out`.
pub fn cmd_eval(args: &EvalArgs) -> Result<(), CliError> {
    let cp = Checkpoint::load(&args.checkpoint)?;
    let data = resolve_data(args.config.as_deref(), &cp)?;
    if args.n == 0 {
        return Err(CliError::Usage("--n must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let n = args.n;
    let (header, rows): (Vec<&str>, Vec<Vec<String>>) = match args.which {
        EvalKind::Lipschitz => {
            let real = sample_real(&data, n, &mut rng);
            let fake = eval::generate(&cp.generator, n, &mut rng)?;
            let p = eval::lipschitz_profile(&cp.critic, &real, &fake, n, &mut rng)?;
            (
                vec!["n_points", "lipschitz_max", "grad_norm_mean", "mean_penalty"],
                vec![vec![n.to_string(), fmt_f64(p.max), fmt_f64(p.mean), fmt_f64(p.mean_penalty)]],
            )
        }
        EvalKind::Gram => (
            vec!["layer", "rows", "cols", "orientation", "gram_deviation"],
            cp.critic
                .layers
                .iter()
                .enumerate()
                .map(|(i, l)| {
                    let orientation = match OrthoOrientation::of(&l.weight) {
                        OrthoOrientation::Wide => "wide",
                        _ => "tall",
                    };
                    vec![
                        i.to_string(),
                        l.weight.rows().to_string(),
                        l.weight.cols().to_string(),
                        orientation.to_string(),
                        fmt_f64(gram_deviation(&l.weight)),
                    ]
                })
                .collect(),
        ),
        EvalKind::Spectrum => {
            let mut rows = Vec::new();
            for (i, sigma) in eval::singular_spectrum(&cp.critic).iter().enumerate() {
                let flat = fmt_f64(eval::spectrum_flatness(sigma));
                for (j, s) in sigma.iter().enumerate() {
                    rows.push(vec![i.to_string(), j.to_string(), fmt_f64(*s), flat.clone()]);
                }
            }
            (vec!["layer", "index", "singular_value", "flatness"], rows)
        }
        EvalKind::Ndb => {
            let (train, generated) = if args.replay_train_half {
                let all = sample_real(&data, 2 * n, &mut rng);
                (
                    all.select_rows(&(0..n).collect::<Vec<_>>()),
                    all.select_rows(&(n..2 * n).collect::<Vec<_>>()),
                )
            } else {
                let train = sample_real(&data, n, &mut rng);
                (train, eval::generate(&cp.generator, n, &mut rng)?)
            };
            let mut rows = Vec::new();
            for k in DEFAULT_K_SWEEP.into_iter().filter(|&k| k <= n) {
                let r = eval::ndb_modes(&train, &generated, k, args.alpha, &mut rng)?;
                let tested = r.k - r.skipped.len();
                rows.push(vec![
                    k.to_string(),
                    fmt_f64(args.alpha),
                    r.significant_bins.to_string(),
                    r.skipped.len().to_string(),
                    tested.to_string(),
                    fmt_f64(r.significant_bins as f64 / tested.max(1) as f64),
                ]);
            }
            (
                vec!["k", "alpha", "significant_bins", "skipped_bins", "tested_bins", "significant_fraction"],
                rows,
            )
        }
        EvalKind::Gradnorm => {
            let fake = eval::generate(&cp.generator, n, &mut rng)?;
            let norms = autodiff::input_gradient(&cp.critic, &fake)?.row_norms();
            let mean = norms.iter().sum::<f64>() / n as f64;
            let max = norms.iter().fold(0.0f64, |m, &v| m.max(v));
            let min = norms.iter().fold(f64::INFINITY, |m, &v| m.min(v));
            (
                vec!["n", "grad_norm_mean", "grad_norm_min", "grad_norm_max"],
                vec![vec![n.to_string(), fmt_f64(mean), fmt_f64(min), fmt_f64(max)]],
            )
        }
    };
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    write_table(&args.out, &header, &rows)
}

#[derive(Debug, Clone)]
pub struct PlotArgs {
    pub out: PathBuf,
    pub checkpoint: Option<PathBuf>,
    /// Generated points as a headed two-column CSV.
    pub samples: Option<PathBuf>,
    /// Real points as a headed two-column CSV.
    pub real: Option<PathBuf>,
    pub config: Option<PathBuf>,
    pub n: usize,
    pub seed: u64,
}

/// Scatter plot of real (blue) and generated (orange) samples.
///
/// Real points come from `--real`, else are drawn from the dataset of
/// `--config` or the checkpoint. Generated points come from `--samples`,
/// else from the checkpoint's generator.
pub fn cmd_plot(args: &PlotArgs) -> Result<(), CliError> {
    let cp = args.checkpoint.as_deref().map(Checkpoint::load).transpose()?;
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let data = match (&args.config, &cp) {
        (Some(p), _) => Some(ConfigEntries::read(p)?.dataset()?),
        (None, Some(c)) => Some(c.data),
        (None, None) => None,
    };
    let real: Option<Matrix> = match (&args.real, data) {
        (Some(p), _) => tables::read_points(p)?,
        (None, Some(d)) => Some(sample_real(&d, args.n, &mut rng)),
        (None, None) => None,
    };
    let generated: Option<Matrix> = match (&args.samples, &cp) {
        (Some(p), _) => tables::read_points(p)?,
        (None, Some(c)) => Some(eval::generate(&c.generator, args.n, &mut rng)?),
        (None, None) => None,
    };
    if real.is_none() && generated.is_none() && args.real.is_none() && args.samples.is_none() {
        return Err(CliError::Usage("plot needs --checkpoint, --config, --real or --samples".into()));
    }
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    plot::write_png(&args.out, real.as_ref(), generated.as_ref())
}
