use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{self, Layer, MlpParams, NodeId, ParamNodes, Tape};
use crate::linalg::Matrix;
use crate::ortho::{self, OrthoOrientation};

use super::config::{schedule_sigma, Budget, Scheme, TrainConfig, CALIBRATION_ITERS, PENALTY_SKIP_SIGMA};
use super::data::{interpolates, sample_latent, sample_real, DatasetSpec};
use super::{Adam, MetricLog, MetricRow, StepSign, TrainError};

/// Stream offset separating the diagnostics RNG from the training RNG, so
/// logging never perturbs the training trajectory.
const METRIC_STREAM: u64 = 0x6d65_7472_6963_7321;

/// Power-iteration settings for logged gram deviations; near-orthogonal
/// weights have clustered spectra, so full precision would be slow.
const LOG_DEVIATION_ITERS: usize = 500;
const LOG_DEVIATION_TOL: f64 = 1e-6;

/// Everything a run owns.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub critic: MlpParams,
    pub generator: MlpParams,
    pub critic_adam: Adam,
    pub generator_adam: Adam,
    /// Completed generator iterations.
    pub iter: usize,
    /// Iteration count the run was planned for (`n`).
    pub planned_iters: usize,
    pub log: MetricLog,
    rng: ChaCha8Rng,
    metric_rng: ChaCha8Rng,
}

/// Value of one critic objective evaluation.
#[derive(Debug, Clone, Copy)]
pub struct CriticObjective {
    /// Node of the maximized objective.
    pub node: NodeId,
    /// `E[f(real)] − E[f(fake)]`.
    pub wasserstein: f64,
    /// Total subtracted regularization (already weighted).
    pub penalty: f64,
    /// Rows of `x_hat` with a zero input gradient.
    pub degenerate_rows: usize,
}

/// Records the critic's maximization objective
/// `E[f(x_real)] − E[f(x_fake)] − penalties` for `scheme`.
///
/// `sigma` is the blending schedule value and only matters for
/// [`Scheme::Proposed`]; `x_hat` is only read by penalty schemes.
pub fn critic_objective(
    tape: &mut Tape,
    config: &TrainConfig,
    critic: &ParamNodes,
    x_real: &Matrix,
    x_fake: &Matrix,
    x_hat: Option<&Matrix>,
    sigma: f64,
) -> Result<CriticObjective, autodiff::AutodiffError> {
    let real = tape.leaf(x_real.clone());
    let fake = tape.leaf(x_fake.clone());
    let f_real = critic.apply(tape, real)?;
    let f_fake = critic.apply(tape, fake)?;
    let m_real = tape.mean(f_real);
    let m_fake = tape.mean(f_fake);
    let w = tape.sub(m_real, m_fake)?;
    let wasserstein = tape.scalar(w);

    let gradient_penalty = |tape: &mut Tape, one_sided: bool, weight: f64| {
        let x_hat = x_hat.expect("penalty schemes need interpolates");
        let p = autodiff::record_penalty(tape, critic, x_hat, one_sided)?;
        let weighted = tape.scale(p.value, weight);
        Ok::<_, autodiff::AutodiffError>((weighted, p.degenerate_rows))
    };

    let penalty = match config.scheme {
        Scheme::Gp | Scheme::Ttur => Some(gradient_penalty(tape, false, config.lambda_gp)?),
        Scheme::Proposed if sigma >= PENALTY_SKIP_SIGMA => {
            Some(gradient_penalty(tape, true, config.lambda_gp * sigma)?)
        }
        Scheme::OrthoReg => Some((record_ortho_penalty(tape, critic, config.lambda_ortho)?, 0)),
        _ => None,
    };

    Ok(match penalty {
        Some((p, degenerate_rows)) => CriticObjective {
            node: tape.sub(w, p)?,
            wasserstein,
            penalty: tape.scalar(p),
            degenerate_rows,
        },
        None => CriticObjective {
            node: w,
            wasserstein,
            penalty: 0.0,
            degenerate_rows: 0,
        },
    })
}

/// `λ Σ_layers ‖G(W) − I‖²_F` with `G` the orientation-appropriate Gram matrix.
fn record_ortho_penalty(tape: &mut Tape, critic: &ParamNodes, lambda: f64) -> Result<NodeId, autodiff::AutodiffError> {
    let mut total: Option<NodeId> = None;
    for &(w, _) in &critic.layers {
        let wide = OrthoOrientation::of(tape.value(w)) == OrthoOrientation::Wide;
        let gram = tape.matmul(w, !wide, w, wide)?;
        let n = tape.value(gram).rows();
        let eye = tape.leaf(Matrix::identity(n));
        let diff = tape.sub(gram, eye)?;
        let sq = tape.square(diff);
        let s = tape.sum(sq);
        total = Some(match total {
            Some(t) => tape.add(t, s)?,
            None => s,
        });
    }
    let total = total.expect("critic has layers");
    Ok(tape.scale(total, lambda))
}

/// Diagnostics of one critic update.
#[derive(Debug, Clone, Copy)]
pub struct CriticStep {
    pub objective: f64,
    pub wasserstein: f64,
    pub penalty: f64,
    pub degenerate_rows: usize,
}

/// Diagnostics of one generator update.
#[derive(Debug, Clone, Copy)]
pub struct GeneratorStep {
    /// `−E[f(g(z))]`.
    pub loss: f64,
    /// Mean over the batch of `‖∇_{g(z)} f(g(z))‖`.
    pub grad_norm: f64,
}

/// Step-by-step driver of a training run.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub config: TrainConfig,
    pub data: DatasetSpec,
    pub state: TrainState,
    started: Instant,
}

impl Trainer {
    /// Initializes both networks from `config.seed`.
    pub fn new(config: &TrainConfig, data: &DatasetSpec) -> Result<Self, TrainError> {
        config.validate().map_err(TrainError::Config)?;
        data.validate().map_err(TrainError::Config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let metric_rng = ChaCha8Rng::seed_from_u64(config.seed ^ METRIC_STREAM);
        let dim = data.dim();
        let critic = init_critic(config, dim, &mut rng)?;
        let generator = MlpParams::init_uniform(&config.generator_dims(dim), &mut rng);
        let state = TrainState {
            critic_adam: Adam::new(config.adam, &critic),
            generator_adam: Adam::new(config.adam, &generator),
            critic,
            generator,
            iter: 0,
            planned_iters: config.iters,
            log: MetricLog::default(),
            rng,
            metric_rng,
        };
        Ok(Self {
            config: config.clone(),
            data: *data,
            state,
            started: Instant::now(),
        })
    }

    /// Schedule value `σ = sigmoid(i − k)` for iteration `i` (1-based).
    pub fn sigma(&self, i: usize) -> f64 {
        schedule_sigma(i, self.config.k())
    }

    fn needs_interpolates(&self, sigma: f64) -> bool {
        match self.config.scheme {
            Scheme::Gp | Scheme::Ttur => true,
            Scheme::Proposed => sigma >= PENALTY_SKIP_SIGMA,
            _ => false,
        }
    }

    /// Objective of the current critic on the given batches, without updating.
    pub fn evaluate_critic(&self, x_real: &Matrix, x_fake: &Matrix, x_hat: Option<&Matrix>, sigma: f64) -> Result<f64, TrainError> {
        let mut tape = Tape::new();
        let params = self.state.critic.leaves(&mut tape);
        let obj = critic_objective(&mut tape, &self.config, &params, x_real, x_fake, x_hat, sigma)?;
        Ok(tape.scalar(obj.node))
    }

    /// One critic update at schedule value `sigma`.
    pub fn critic_update(&mut self, sigma: f64) -> Result<CriticStep, TrainError> {
        let needs_hat = self.needs_interpolates(sigma);
        let cfg = &self.config;
        let st = &mut self.state;
        let real = sample_real(&self.data, cfg.batch, &mut st.rng);
        let z = sample_latent(cfg.batch, cfg.latent_dim, &mut st.rng);
        let fake = st.generator.forward(&z)?;
        let x_hat = if needs_hat {
            Some(interpolates(&real, &fake, &mut st.rng)?)
        } else {
            None
        };

        let mut tape = Tape::new();
        let params = st.critic.leaves(&mut tape);
        let obj = critic_objective(&mut tape, cfg, &params, &real, &fake, x_hat.as_ref(), sigma)?;
        let objective = tape.scalar(obj.node);
        if !objective.is_finite() {
            return Err(TrainError::NonFiniteLoss { what: "critic" });
        }
        let grads = autodiff::param_gradients(&mut tape, obj.node, &params)?;
        drop(tape);

        match cfg.scheme {
            Scheme::OrthoCayley => cayley_critic_step(cfg, st, &grads)?,
            _ => st.critic_adam.step(&mut st.critic, &grads, cfg.eta_d, StepSign::Ascend)?,
        }
        match cfg.scheme {
            Scheme::Clip => clamp_params(&mut st.critic, cfg.clip_c),
            Scheme::OrthoBjorck => {
                for layer in &mut st.critic.layers {
                    layer.weight = ortho::bjorck_step(&layer.weight, 1).expect("order 1 is supported");
                }
            }
            Scheme::Proposed => {
                let blend = 0.5 * (1.0 - sigma);
                if blend > 0.0 {
                    for layer in &mut st.critic.layers {
                        layer.weight = ortho::bjorck_blend(&layer.weight, blend);
                    }
                }
            }
            _ => {}
        }
        if !st.critic.is_finite() {
            return Err(TrainError::NonFiniteParams { what: "critic" });
        }
        Ok(CriticStep {
            objective,
            wasserstein: obj.wasserstein,
            penalty: obj.penalty,
            degenerate_rows: obj.degenerate_rows,
        })
    }

    /// One generator update descending `−E[f(g(z))]`.
    pub fn generator_update(&mut self) -> Result<GeneratorStep, TrainError> {
        let cfg = &self.config;
        let st = &mut self.state;
        let z = sample_latent(cfg.batch, cfg.latent_dim, &mut st.rng);
        let mut tape = Tape::new();
        let gen = st.generator.leaves(&mut tape);
        let critic = st.critic.leaves(&mut tape);
        let zn = tape.leaf(z);
        let fake = gen.apply(&mut tape, zn)?;
        let scores = critic.apply(&mut tape, fake)?;
        let mean = tape.mean(scores);
        let loss = tape.scale(mean, -1.0);
        let loss_value = tape.scalar(loss);
        if !loss_value.is_finite() {
            return Err(TrainError::NonFiniteLoss { what: "generator" });
        }
        let mut wrt = gen.flat();
        wrt.push(fake);
        let grads = tape.gradients(loss, &wrt)?;
        let (param_grads, fake_grad) = grads.split_at(wrt.len() - 1);
        let layer_grads = gen.collect(&tape, param_grads);
        // ∂loss/∂fakeᵢ = −∇f(fakeᵢ)/m
        let grad_norm = match fake_grad[0] {
            Some(g) => {
                let norms = tape.value(g).row_norms();
                norms.iter().sum::<f64>() / norms.len() as f64 * cfg.batch as f64
            }
            None => 0.0,
        };
        drop(tape);
        st.generator_adam.step(&mut st.generator, &layer_grads, cfg.eta_g, StepSign::Descend)?;
        if !st.generator.is_finite() {
            return Err(TrainError::NonFiniteParams { what: "generator" });
        }
        Ok(GeneratorStep {
            loss: loss_value,
            grad_norm,
        })
    }

    /// Runs generator iteration `self.state.iter + 1`: `n_critic` critic
    /// updates, one generator update, and a log row.
    pub fn iteration(&mut self) -> Result<(), TrainError> {
        let i = self.state.iter + 1;
        let sigma = self.sigma(i);
        let mut last = None;
        for _ in 0..self.config.n_critic {
            last = Some(self.critic_update(sigma)?);
        }
        let critic = last.expect("n_critic >= 1");
        let gen = self.generator_update()?;
        self.state.iter = i;

        let (lipschitz_est, interp_penalty, mean_gram_dev) = if i % self.config.metric_every == 0 {
            let (l, p) = self.lipschitz_diagnostics()?;
            (Some(l), Some(p), Some(mean_gram_deviation(&self.state.critic)))
        } else {
            (None, None, None)
        };
        let wall = self.started.elapsed().as_secs_f64();
        self.state.log.rows.push(MetricRow {
            iter: i,
            wall_clock_s: wall,
            critic_loss: -critic.objective,
            gen_loss: gen.loss,
            gen_grad_norm: gen.grad_norm,
            lipschitz_est,
            interp_penalty,
            mean_gram_dev,
            iters_per_sec: if wall > 0.0 { i as f64 / wall } else { 0.0 },
        });
        Ok(())
    }

    /// Max and two-sided mean penalty of the critic's input-gradient norm on
    /// fresh interpolates.
    fn lipschitz_diagnostics(&mut self) -> Result<(f64, f64), TrainError> {
        let n = self.config.lipschitz_points;
        let st = &mut self.state;
        let real = sample_real(&self.data, n, &mut st.metric_rng);
        let z = sample_latent(n, self.config.latent_dim, &mut st.metric_rng);
        let fake = st.generator.forward(&z)?;
        let hat = interpolates(&real, &fake, &mut st.metric_rng)?;
        let norms = autodiff::input_gradient(&st.critic, &hat)?.row_norms();
        let max = norms.iter().fold(0.0f64, |m, &v| m.max(v));
        let penalty = norms.iter().map(|v| (v - 1.0).powi(2)).sum::<f64>() / n as f64;
        Ok((max, penalty))
    }

    /// Runs until `planned_iters` iterations are done.
    pub fn run(mut self) -> Result<TrainState, TrainError> {
        while self.state.iter < self.state.planned_iters {
            if let Err(e) = self.iteration() {
                return Err(TrainError::Diverged {
                    iter: self.state.iter + 1,
                    reason: e.to_string(),
                    state: Box::new(self.state),
                });
            }
        }
        Ok(self.state)
    }
}

fn init_critic(config: &TrainConfig, dim: usize, rng: &mut ChaCha8Rng) -> Result<MlpParams, TrainError> {
    let dims = config.critic_dims(dim);
    let reinit_scale = match config.scheme {
        Scheme::Proposed => Some(config.init_lambda),
        s if s.is_strictly_orthogonal() => Some(1.0),
        _ => None,
    };
    let Some(lambda) = reinit_scale else {
        return Ok(MlpParams::init_uniform(&dims, rng));
    };
    let mut critic = MlpParams::init_uniform(&dims, rng);
    let normal = MlpParams::init_normal(&dims, rng);
    for (layer, src) in critic.layers.iter_mut().zip(&normal.layers) {
        layer.weight = ortho::svd_reinit(&src.weight, lambda)?;
    }
    Ok(critic)
}

fn clamp_params(net: &mut MlpParams, c: f64) {
    for layer in &mut net.layers {
        for w in layer.weight.data_mut() {
            *w = w.clamp(-c, c);
        }
        for b in &mut layer.bias {
            *b = b.clamp(-c, c);
        }
    }
}

/// Cayley scheme: weights move by retraction along the Adam-preconditioned
/// ascent direction; biases take a plain Adam step. The wide output row is
/// stepped and then renormalized to unit length.
fn cayley_critic_step(cfg: &TrainConfig, st: &mut TrainState, grads: &[Layer]) -> Result<(), TrainError> {
    let dir = st.critic_adam.direction(grads)?;
    let tau = cfg.tau_scale * cfg.eta_d;
    for (layer, d) in st.critic.layers.iter_mut().zip(&dir) {
        if OrthoOrientation::of(&layer.weight) == OrthoOrientation::Wide {
            layer.weight.axpy(cfg.eta_d, &d.weight)?;
            let norms = layer.weight.row_norms();
            for (i, n) in norms.into_iter().enumerate() {
                if n > 0.0 {
                    layer.weight.row_mut(i).iter_mut().for_each(|v| *v /= n);
                }
            }
        } else {
            // The retraction descends its gradient argument, so pass the
            // negated ascent direction.
            let descent = d.weight.scale(-1.0);
            layer.weight = ortho::cayley_update(&layer.weight, &descent, tau)?;
        }
        for (b, db) in layer.bias.iter_mut().zip(&d.bias) {
            *b += cfg.eta_d * db;
        }
    }
    Ok(())
}

/// Mean logged gram deviation over the critic's weight matrices.
pub fn mean_gram_deviation(net: &MlpParams) -> f64 {
    let devs: Vec<f64> = net.layers.iter().map(|l| logged_gram_deviation(&l.weight)).collect();
    devs.iter().sum::<f64>() / devs.len() as f64
}

/// Gram deviation at logging precision.
pub fn logged_gram_deviation(w: &Matrix) -> f64 {
    let wide = OrthoOrientation::of(w) == OrthoOrientation::Wide;
    let g = Matrix::gemm(w, !wide, w, wide).expect("gram");
    let mut d = g.scale(-1.0);
    for i in 0..d.rows() {
        d[(i, i)] += 1.0;
    }
    crate::linalg::spectral_norm(&d, LOG_DEVIATION_ITERS, LOG_DEVIATION_TOL)
}

/// Iteration count that fits `seconds`, from timing a throwaway run of
/// [`CALIBRATION_ITERS`] iterations with the same configuration.
pub fn calibrate_iterations(config: &TrainConfig, data: &DatasetSpec, seconds: f64) -> Result<usize, TrainError> {
    let mut probe = config.clone();
    probe.budget = Budget::Iterations;
    probe.iters = CALIBRATION_ITERS;
    let mut trainer = Trainer::new(&probe, data)?;
    let start = Instant::now();
    for _ in 0..CALIBRATION_ITERS {
        trainer.iteration()?;
    }
    let per_iter = start.elapsed().as_secs_f64() / CALIBRATION_ITERS as f64;
    Ok(((seconds / per_iter).floor() as usize).max(1))
}

/// Trains a WGAN under `config` on `data`.
///
/// Under a wall-clock budget the iteration count is first estimated by
/// [`calibrate_iterations`] and then fixed, so the schedule centre `k` is
/// known up front. A non-finite loss, gradient or parameter aborts the run
/// with [`TrainError::Diverged`], which carries the partial state.
pub fn train(config: &TrainConfig, data: &DatasetSpec) -> Result<TrainState, TrainError> {
    let mut effective = config.clone();
    if let Budget::WallClock { seconds } = config.budget {
        effective.iters = calibrate_iterations(config, data, seconds)?;
    }
    Trainer::new(&effective, data)?.run()
}
