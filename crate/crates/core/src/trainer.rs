//! Minimax score-matching training.
//!
//! The objective shared by both players is
//!
//! ```text
//! J(phi, psi) = (1/m) sum_i f(x_i)^T (S(x_i) - c_i) - 1/2 ||f(x_i)||^2,   c_i = -eps_i / sigma
//! ```
//!
//! where `x_i = mu(z_i) + sigma * eps_i`. `psi` ascends `J`; `phi` descends it.
//! At the inner optimum `f = S - grad log q` and `J` equals half the Fisher
//! divergence between the variational marginal and the target.

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::diffcore::{decayed, Activation, Activations, GradRequest, MlpSpec, Network, OptimizerKind, OptimizerState, StepDecay};
use crate::family::{FamilySpec, PhiGrad, ReparamBatch, SemiImplicitFamily};
use crate::metrics;
use crate::rng::{self, Rng};
use crate::targets::{minibatch, AnnealSchedule, TargetPosterior, Tempered};
use crate::trace::{MetricTrace, TraceRecord};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientMode {
    #[default]
    Minimax,
    /// Drops the dependence of the conditional score on `phi` (ablation).
    BiasedDsm,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub iterations: usize,
    /// `psi` ascent steps per `phi` step.
    pub inner_steps: usize,
    pub batch_size: usize,
    pub phi_lr: f64,
    pub psi_lr: f64,
    pub phi_optimizer: OptimizerKind,
    pub psi_optimizer: OptimizerKind,
    pub anneal: Option<AnnealSchedule>,
    pub lr_decay: Option<StepDecay>,
    pub gradient_mode: GradientMode,
    /// Evaluate every this many iterations; 0 disables evaluation.
    pub eval_every: usize,
    pub eval_samples: usize,
    pub seed: u64,
    /// Datapoints per minibatch for targets that support subsampling.
    pub data_batch: Option<usize>,
    pub train_log_sigma: bool,
    pub max_consecutive_skips: usize,
    pub f_widths: Option<Vec<usize>>,
    pub f_activation: Activation,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            iterations: 50_000,
            inner_steps: 1,
            batch_size: 100,
            phi_lr: 1e-3,
            psi_lr: 1e-3,
            phi_optimizer: OptimizerKind::Adam,
            psi_optimizer: OptimizerKind::Adam,
            anneal: None,
            lr_decay: None,
            gradient_mode: GradientMode::Minimax,
            eval_every: 500,
            eval_samples: 500,
            seed: 0,
            data_batch: None,
            train_log_sigma: true,
            max_consecutive_skips: 10,
            f_widths: None,
            f_activation: Activation::Relu,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.inner_steps == 0 {
            return Err(Error::config("inner_steps", "must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size", "must be at least 1"));
        }
        if !(self.phi_lr > 0.0) {
            return Err(Error::config("phi_lr", "must be positive"));
        }
        if !(self.psi_lr > 0.0) {
            return Err(Error::config("psi_lr", "must be positive"));
        }
        if self.eval_every > 0 && self.eval_samples == 0 {
            return Err(Error::config("eval_samples", "must be at least 1"));
        }
        if self.max_consecutive_skips == 0 {
            return Err(Error::config("max_consecutive_skips", "must be at least 1"));
        }
        if let Some(a) = &self.anneal {
            a.validate()?;
        }
        if let Some(d) = &self.lr_decay {
            d.validate()?;
        }
        if self.data_batch == Some(0) {
            return Err(Error::config("data_batch", "must be at least 1"));
        }
        Ok(())
    }

    /// `f` widths, defaulting to `[d, 128, 128, d]` for `d <= 2` and
    /// `[d, 256, 256, d]` otherwise.
    pub fn f_spec(&self, x_dim: usize) -> Result<MlpSpec> {
        let widths = match &self.f_widths {
            Some(w) => w.clone(),
            None if x_dim <= 2 => vec![x_dim, 128, 128, x_dim],
            None => vec![x_dim, 256, 256, x_dim],
        };
        let spec = MlpSpec::new(widths, self.f_activation)?;
        if spec.input_width() != x_dim || spec.output_width() != x_dim {
            return Err(Error::config("f_widths", format!("first and last width must equal {x_dim}")));
        }
        Ok(spec)
    }
}

/// Consecutive-failure bookkeeping shared by all training loops.
#[derive(Clone, Debug, Default)]
pub(crate) struct SkipCounter {
    pub consecutive: usize,
    pub total: usize,
    pub max: usize,
    failed_now: bool,
}

impl SkipCounter {
    pub fn new(max: usize) -> Self {
        SkipCounter {
            max,
            ..Default::default()
        }
    }

    /// Numerical failures are logged and skipped until the budget runs out;
    /// anything else propagates.
    pub fn handle(&mut self, res: Result<()>, t: usize, what: &str, trace: &mut MetricTrace) -> Result<()> {
        match res {
            Ok(()) => Ok(()),
            Err(e) if e.is_numerical() => {
                self.failed_now = true;
                self.consecutive += 1;
                self.total += 1;
                trace.error(t, format!("skipped {what}: {e}"));
                if self.consecutive >= self.max {
                    Err(Error::FailureBudget(self.consecutive))
                } else {
                    Ok(())
                }
            }
            Err(e) => Err(e),
        }
    }

    /// The streak only resets after an iteration in which every step succeeded.
    pub fn end_iteration(&mut self) {
        if !self.failed_now {
            self.consecutive = 0;
        }
        self.failed_now = false;
    }
}

/// Target seen at iteration `t`: optionally subsampled, then tempered.
pub(crate) fn step_target<'a>(
    target: &'a dyn TargetPosterior,
    anneal: Option<&AnnealSchedule>,
    data_batch: Option<usize>,
    t: usize,
    rng: &mut Rng,
) -> Box<dyn TargetPosterior + 'a> {
    let beta = anneal.map_or(1.0, |a| a.beta(t));
    match data_batch.and_then(|b| minibatch(target, b, rng)) {
        Some(view) => Box::new(Tempered::new(view, beta)),
        None => Box::new(Tempered::new(target, beta)),
    }
}

pub struct TrainState {
    pub family: SemiImplicitFamily,
    pub f_net: Network,
    pub phi_opt: OptimizerState,
    pub psi_opt: OptimizerState,
    pub iteration: usize,
    pub rng: Rng,
    pub eval_rng: Rng,
    pub trace: MetricTrace,
    pub skipped_steps: usize,
}

impl TrainState {
    pub fn new(family: SemiImplicitFamily, f_net: Network, config: &TrainConfig) -> Result<Self> {
        let d = family.x_dim();
        if f_net.spec.input_width() != d || f_net.spec.output_width() != d {
            return Err(Error::DimensionMismatch {
                context: "f network widths vs x_dim",
                expected: d,
                actual: f_net.spec.output_width(),
            });
        }
        Ok(TrainState {
            phi_opt: OptimizerState::new(config.phi_optimizer, family.num_phi(), config.phi_lr),
            psi_opt: OptimizerState::new(config.psi_optimizer, f_net.params.len(), config.psi_lr),
            family,
            f_net,
            iteration: 0,
            rng: rng::stream(config.seed, rng::STREAM_TRAIN),
            eval_rng: rng::stream(config.seed, rng::STREAM_EVAL),
            trace: MetricTrace::new(),
            skipped_steps: 0,
        })
    }

    /// Fresh parameters drawn from the init stream of `config.seed`.
    pub fn init(family_spec: &FamilySpec, x_dim: usize, config: &TrainConfig) -> Result<Self> {
        config.validate()?;
        let mut r = rng::stream(config.seed, rng::STREAM_INIT);
        let family = family_spec.build(x_dim, &mut r)?;
        let f_net = Network::init(config.f_spec(x_dim)?, &mut r);
        Self::new(family, f_net, config)
    }

    /// Writes `family.json` and `fnet.json` into `dir`.
    pub fn save_checkpoint(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        self.family.save(dir.join("family.json"))?;
        std::fs::write(dir.join("fnet.json"), serde_json::to_string_pretty(&self.f_net)?)?;
        Ok(())
    }
}

/// Everything computed on a batch that the gradients reuse.
pub struct SmTerms {
    pub value: f64,
    pub per_sample: Vec<f64>,
    /// Target score `S(x)`, row-major.
    pub score: Vec<f64>,
    /// Conditional score `-eps / sigma`.
    pub cond_score: Vec<f64>,
    /// `f(x)`.
    pub f: Vec<f64>,
}

fn check_scores(score: &[f64], d: usize) -> Result<()> {
    match score.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::NonFiniteScore { index: i / d }),
        None => Ok(()),
    }
}

/// The objective for given adversary values `f(x_i)`.
pub fn sm_objective_with(
    batch: &ReparamBatch,
    target: &dyn TargetPosterior,
    family: &SemiImplicitFamily,
    f: Vec<f64>,
) -> Result<SmTerms> {
    let d = family.x_dim();
    if batch.is_empty() {
        return Err(Error::Invalid("empty batch".into()));
    }
    if target.dim() != d {
        return Err(Error::DimensionMismatch {
            context: "target dimension vs x_dim",
            expected: d,
            actual: target.dim(),
        });
    }
    let mut score = vec![0.0; batch.m * d];
    target.score_batch(&batch.x, &mut score);
    check_scores(&score, d)?;
    let cond_score = family.conditional_score(batch);
    let per_sample: Vec<f64> = (0..batch.m)
        .map(|i| {
            let r = i * d..(i + 1) * d;
            let (fi, si, ci) = (&f[r.clone()], &score[r.clone()], &cond_score[r]);
            fi.iter()
                .zip(si)
                .zip(ci)
                .map(|((f, s), c)| f * (s - c) - 0.5 * f * f)
                .sum()
        })
        .collect();
    let value = per_sample.iter().sum::<f64>() / batch.m as f64;
    Ok(SmTerms {
        value,
        per_sample,
        score,
        cond_score,
        f,
    })
}

pub fn sm_objective(
    batch: &ReparamBatch,
    target: &dyn TargetPosterior,
    f_net: &Network,
    family: &SemiImplicitFamily,
) -> Result<SmTerms> {
    let acts = f_net.forward_batch(&batch.x, batch.m)?;
    sm_objective_with(batch, target, family, acts.output().to_vec())
}

/// `r = S - c - f`, the derivative of each per-sample term with respect to `f`.
fn residual(terms: &SmTerms) -> Vec<f64> {
    terms
        .score
        .iter()
        .zip(&terms.cond_score)
        .zip(&terms.f)
        .map(|((s, c), f)| s - c - f)
        .collect()
}

/// `dJ/dphi` on a batch with `f` frozen. With `score_path == false` the
/// conditional score is treated as a constant.
pub fn phi_gradient(
    batch: &ReparamBatch,
    target: &dyn TargetPosterior,
    f_net: &Network,
    family: &SemiImplicitFamily,
    score_path: bool,
) -> Result<(f64, PhiGrad)> {
    let m = batch.m as f64;
    let acts: Activations = f_net.forward_batch(&batch.x, batch.m)?;
    let terms = sm_objective_with(batch, target, family, acts.output().to_vec())?;
    let r: Vec<f64> = residual(&terms).iter().map(|v| v / m).collect();
    let mut dx = f_net
        .backward_batch(&acts, &r, GradRequest::INPUT)?
        .input
        .expect("requested");
    let mut hf = vec![0.0; dx.len()];
    target.hessian_vec_batch(&batch.x, &terms.f, &mut hf);
    for (a, h) in dx.iter_mut().zip(&hf) {
        *a += h / m;
    }
    let dscore: Vec<f64> = if score_path {
        terms.f.iter().map(|f| -f / m).collect()
    } else {
        vec![0.0; dx.len()]
    };
    let g = family.grad_path(batch, &dx, &dscore)?;
    if !g.is_finite() {
        return Err(Error::NonFiniteGradient { context: "phi gradient" });
    }
    Ok((terms.value, g))
}

/// `dJ/dpsi` on a batch with `phi` frozen.
pub fn psi_gradient(
    batch: &ReparamBatch,
    target: &dyn TargetPosterior,
    f_net: &Network,
    family: &SemiImplicitFamily,
) -> Result<(f64, Vec<f64>)> {
    let m = batch.m as f64;
    let acts = f_net.forward_batch(&batch.x, batch.m)?;
    let terms = sm_objective_with(batch, target, family, acts.output().to_vec())?;
    let r: Vec<f64> = residual(&terms).iter().map(|v| v / m).collect();
    let g = f_net
        .backward_batch(&acts, &r, GradRequest::PARAMS)?
        .params
        .expect("requested");
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteGradient { context: "psi gradient" });
    }
    Ok((terms.value, g))
}

fn apply_phi(state: &mut TrainState, mut g: PhiGrad, config: &TrainConfig) -> Result<()> {
    if !config.train_log_sigma {
        g.log_sigma.iter_mut().for_each(|v| *v = 0.0);
    }
    let mut phi = state.family.phi();
    state.phi_opt.step(&mut phi, &g.flat())?;
    state.family.set_phi(&phi)
}

fn phi_step_impl(state: &mut TrainState, target: &dyn TargetPosterior, config: &TrainConfig, score_path: bool) -> Result<()> {
    let batch = state.family.sample_batch(config.batch_size, &mut state.rng)?;
    let (_, g) = phi_gradient(&batch, target, &state.f_net, &state.family, score_path)?;
    apply_phi(state, g, config)
}

/// One descent step on `phi` with a fresh batch.
pub fn phi_step(state: &mut TrainState, target: &dyn TargetPosterior, config: &TrainConfig) -> Result<()> {
    phi_step_impl(state, target, config, true)
}

/// The ablation step: like [`phi_step`] but without differentiating through
/// the conditional score.
pub fn biased_dsm_step(state: &mut TrainState, target: &dyn TargetPosterior, config: &TrainConfig) -> Result<()> {
    phi_step_impl(state, target, config, false)
}

/// One ascent step on `psi` with a fresh batch.
pub fn psi_step(state: &mut TrainState, target: &dyn TargetPosterior, config: &TrainConfig) -> Result<()> {
    let batch = state.family.sample_batch(config.batch_size, &mut state.rng)?;
    let (_, g) = psi_gradient(&batch, target, &state.f_net, &state.family)?;
    state.psi_opt.ascend(&mut state.f_net.params, &g)
}

/// Runs `config.iterations` outer iterations starting from `state`. Each
/// iteration takes one `phi` step followed by `inner_steps` `psi` steps.
pub fn train(target: &dyn TargetPosterior, config: &TrainConfig, state: &mut TrainState) -> Result<()> {
    config.validate()?;
    if target.dim() != state.family.x_dim() {
        return Err(Error::DimensionMismatch {
            context: "target dimension vs x_dim",
            expected: state.family.x_dim(),
            actual: target.dim(),
        });
    }
    let start = Instant::now();
    let mut skips = SkipCounter::new(config.max_consecutive_skips);
    let result = train_loop(target, config, state, &mut skips, start);
    state.skipped_steps += skips.total;
    result
}

fn train_loop(
    target: &dyn TargetPosterior,
    config: &TrainConfig,
    state: &mut TrainState,
    skips: &mut SkipCounter,
    start: Instant,
) -> Result<()> {
    let end = state.iteration + config.iterations;
    while state.iteration < end {
        let t = state.iteration;
        state.phi_opt.step_size = decayed(config.phi_lr, config.lr_decay.as_ref(), t);
        state.psi_opt.step_size = decayed(config.psi_lr, config.lr_decay.as_ref(), t);
        let tt = step_target(target, config.anneal.as_ref(), config.data_batch, t, &mut state.rng);
        let res = match config.gradient_mode {
            GradientMode::Minimax => phi_step(state, tt.as_ref(), config),
            GradientMode::BiasedDsm => biased_dsm_step(state, tt.as_ref(), config),
        };
        skips.handle(res, t, "phi step", &mut state.trace)?;
        drop(tt);
        for _ in 0..config.inner_steps {
            let tt = step_target(target, config.anneal.as_ref(), config.data_batch, t, &mut state.rng);
            let res = psi_step(state, tt.as_ref(), config);
            skips.handle(res, t, "psi step", &mut state.trace)?;
        }
        skips.end_iteration();
        state.iteration += 1;
        if config.eval_every > 0 && state.iteration % config.eval_every == 0 {
            evaluate(state, target, config, start)?;
        }
    }
    Ok(())
}

/// SM loss and f-net norm on fresh samples from the evaluation stream,
/// against the (tempered) target of the current iteration.
fn evaluate(state: &mut TrainState, target: &dyn TargetPosterior, config: &TrainConfig, start: Instant) -> Result<()> {
    let beta = config.anneal.as_ref().map_or(1.0, |a| a.beta(state.iteration - 1));
    let tt = Tempered::new(target, beta);
    let rec = match metrics::sm_diagnostics(&state.family, &state.f_net, &tt, config.eval_samples, &mut state.eval_rng) {
        Ok((sm, norm)) => TraceRecord::Eval {
            iteration: state.iteration,
            wall_time: start.elapsed().as_secs_f64(),
            sm_loss: Some(sm),
            fnet_norm: Some(norm),
            elbo: None,
            beta: config.anneal.map(|_| beta),
        },
        Err(e) if e.is_numerical() => TraceRecord::Error {
            iteration: state.iteration,
            message: format!("evaluation failed: {e}"),
        },
        Err(e) => return Err(e),
    };
    state.trace.push(rec);
    Ok(())
}
