//! UIVI: unbiased reparameterisation gradients of the exact ELBO. The
//! intractable `grad_x log q(x)` is replaced by `grad_x log q(x | z')` with
//! `z'` drawn from the reverse conditional by a short HMC chain.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{hmc_reverse_conditional, ElboState, HmcConfig};
use crate::diffcore::{decayed, OptimizerKind, StepDecay};
use crate::family::{PhiGrad, ReparamBatch, SemiImplicitFamily};
use crate::rng::Rng;
use crate::targets::{AnnealSchedule, TargetPosterior};
use crate::trace::TraceRecord;
use crate::trainer::{step_target, SkipCounter};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UiviConfig {
    pub iterations: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub optimizer: OptimizerKind,
    pub hmc: HmcConfig,
    pub anneal: Option<AnnealSchedule>,
    pub lr_decay: Option<StepDecay>,
    pub eval_every: usize,
    pub seed: u64,
    pub data_batch: Option<usize>,
    pub max_consecutive_skips: usize,
}

impl Default for UiviConfig {
    fn default() -> Self {
        UiviConfig {
            iterations: 50_000,
            batch_size: 1,
            lr: 1e-3,
            optimizer: OptimizerKind::Adam,
            hmc: HmcConfig::default(),
            anneal: None,
            lr_decay: None,
            eval_every: 500,
            seed: 0,
            data_batch: None,
            max_consecutive_skips: 10,
        }
    }
}

impl UiviConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::config("batch_size", "must be at least 1"));
        }
        if !(self.lr > 0.0) {
            return Err(Error::config("lr", "must be positive"));
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
        self.hmc.validate()
    }
}

/// ELBO gradient estimate on a batch given reverse-conditional draws
/// `z_rev` (row-major, one per sample):
/// `(S(x) - grad_x log q(x | z'))` pushed through `x = mu(z) + sigma * eps`.
pub fn uivi_gradient(
    family: &SemiImplicitFamily,
    target: &dyn TargetPosterior,
    batch: &ReparamBatch,
    z_rev: &[f64],
) -> Result<PhiGrad> {
    let (d, m) = (family.x_dim(), batch.m);
    let mu_rev = family.mu_net.forward_batch(z_rev, m)?;
    let mut score = vec![0.0; m * d];
    target.score_batch(&batch.x, &mut score);
    if let Some(i) = score.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFiniteScore { index: i / d });
    }
    let inv_var: Vec<f64> = family.log_sigma.iter().map(|s| (-2.0 * s).exp()).collect();
    let mut up = vec![0.0; m * d];
    for i in 0..m {
        for j in 0..d {
            let idx = i * d + j;
            let cond = -(batch.x[idx] - mu_rev.output()[idx]) * inv_var[j];
            up[idx] = (score[idx] - cond) / m as f64;
        }
    }
    let g = family.grad_path(batch, &up, &vec![0.0; m * d])?;
    if !g.is_finite() {
        return Err(Error::NonFiniteGradient { context: "UIVI gradient" });
    }
    Ok(g)
}

/// Draws `z'` for every batch element, each chain warm-started at the `z`
/// that produced the sample.
pub(crate) fn reverse_draws(
    family: &SemiImplicitFamily,
    batch: &ReparamBatch,
    hmc: &HmcConfig,
    step_size: &mut f64,
    rng: &mut Rng,
) -> Result<Vec<f64>> {
    let mut z_rev = Vec::with_capacity(batch.z.len());
    for i in 0..batch.m {
        let s = batch.sample(i);
        let out = hmc_reverse_conditional(family, s.x, s.z, hmc, step_size, rng)?;
        z_rev.extend(out.z);
    }
    Ok(z_rev)
}

pub fn uivi_train(target: &dyn TargetPosterior, config: &UiviConfig, state: &mut ElboState) -> Result<()> {
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
    let mut step_size = state.hmc_step_size.unwrap_or(config.hmc.step_size);
    let end = state.iteration + config.iterations;
    while state.iteration < end {
        let t = state.iteration;
        state.opt.step_size = decayed(config.lr, config.lr_decay.as_ref(), t);
        let tt = step_target(target, config.anneal.as_ref(), config.data_batch, t, &mut state.rng);
        let res = (|| {
            let batch = state.family.sample_batch(config.batch_size, &mut state.rng)?;
            let z_rev = reverse_draws(&state.family, &batch, &config.hmc, &mut step_size, &mut state.rng)?;
            let g = uivi_gradient(&state.family, tt.as_ref(), &batch, &z_rev)?;
            let mut phi = state.family.phi();
            state.opt.ascend(&mut phi, &g.flat())?;
            state.family.set_phi(&phi)
        })();
        if let Err(e) = skips.handle(res, t, "UIVI step", &mut state.trace) {
            state.skipped_steps += skips.total;
            return Err(e);
        }
        skips.end_iteration();
        state.iteration += 1;
        if config.eval_every > 0 && state.iteration % config.eval_every == 0 {
            state.trace.push(TraceRecord::Eval {
                iteration: state.iteration,
                wall_time: start.elapsed().as_secs_f64(),
                sm_loss: None,
                fnet_norm: None,
                elbo: None,
                beta: config.anneal.map(|a| a.beta(t)),
            });
            state.trace.event(state.iteration, format!("hmc step size {step_size:.4e}"));
        }
    }
    state.hmc_step_size = Some(step_size);
    state.skipped_steps += skips.total;
    Ok(())
}
