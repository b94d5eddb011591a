//! SIVI with the surrogate ELBO
//!
//! ```text
//! L_L = E[ log p(x) - log( (q(x | z) + sum_l q(x | z_l)) / (L + 1) ) ]
//! ```
//!
//! where `z` produced `x` and `z_1..z_L` are fresh mixing draws. The `L`
//! auxiliary draws are shared by every sample of a batch.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{log_normal_diag, ElboState};
use crate::diffcore::{decayed, GradRequest, OptimizerKind, StepDecay};
use crate::family::{PhiGrad, ReparamBatch, SemiImplicitFamily};
use crate::rng;
use crate::targets::{AnnealSchedule, TargetPosterior, Tempered};
use crate::trace::TraceRecord;
use crate::trainer::{step_target, SkipCounter};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LSchedule {
    Constant,
    /// Linear ramp from `L/5` to `L` over the first half of training.
    #[default]
    Growing,
}

impl LSchedule {
    pub fn at(&self, l_max: usize, t: usize, total: usize) -> usize {
        match self {
            LSchedule::Constant => l_max,
            LSchedule::Growing => {
                let half = (total / 2).max(1);
                let l0 = (l_max / 5) as f64;
                let frac = (t as f64 / half as f64).min(1.0);
                (l0 + (l_max as f64 - l0) * frac).round() as usize
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SiviConfig {
    pub iterations: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub optimizer: OptimizerKind,
    /// Auxiliary mixing draws `L` (the final value under a growing schedule).
    pub aux_samples: usize,
    pub l_schedule: LSchedule,
    pub anneal: Option<AnnealSchedule>,
    pub lr_decay: Option<StepDecay>,
    pub eval_every: usize,
    pub eval_samples: usize,
    pub seed: u64,
    pub data_batch: Option<usize>,
    pub max_consecutive_skips: usize,
}

impl Default for SiviConfig {
    fn default() -> Self {
        SiviConfig {
            iterations: 50_000,
            batch_size: 100,
            lr: 1e-3,
            optimizer: OptimizerKind::Adam,
            aux_samples: 50,
            l_schedule: LSchedule::Growing,
            anneal: None,
            lr_decay: None,
            eval_every: 500,
            eval_samples: 500,
            seed: 0,
            data_batch: None,
            max_consecutive_skips: 10,
        }
    }
}

impl SiviConfig {
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
        Ok(())
    }
}

/// Per-sample surrogate terms and mixture responsibilities.
pub struct SurrogateElbo {
    pub value: f64,
    pub per_sample: Vec<f64>,
    /// Row `i` holds the weights of components `(own, aux_1, ..., aux_L)` in
    /// the denominator mixture of sample `i`.
    pub weights: Vec<f64>,
    /// Target scores at the batch points.
    pub score: Vec<f64>,
    aux_mu: Vec<f64>,
}

/// Monte-Carlo estimate of the surrogate ELBO on `batch` with auxiliary
/// mixing draws `aux_z` (row-major `(L, z_dim)`).
pub fn sivi_surrogate_elbo(
    family: &SemiImplicitFamily,
    target: &dyn TargetPosterior,
    batch: &ReparamBatch,
    aux_z: &[f64],
) -> Result<SurrogateElbo> {
    let (d, k) = (family.x_dim(), family.z_dim());
    if aux_z.len() % k != 0 {
        return Err(Error::DimensionMismatch {
            context: "auxiliary mixing draws",
            expected: k,
            actual: aux_z.len(),
        });
    }
    let l = aux_z.len() / k;
    let aux_mu = if l > 0 {
        family.mu_net.forward_batch(aux_z, l)?.output().to_vec()
    } else {
        Vec::new()
    };
    let mut score = vec![0.0; batch.m * d];
    target.score_batch(&batch.x, &mut score);
    let ls = &family.log_sigma;
    let mut per_sample = Vec::with_capacity(batch.m);
    let mut weights = Vec::with_capacity(batch.m * (l + 1));
    let mut logs = vec![0.0; l + 1];
    for i in 0..batch.m {
        let x = &batch.x[i * d..(i + 1) * d];
        logs[0] = log_normal_diag(x, &batch.mu()[i * d..(i + 1) * d], ls);
        for j in 0..l {
            logs[j + 1] = log_normal_diag(x, &aux_mu[j * d..(j + 1) * d], ls);
        }
        let mx = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = logs.iter().map(|v| (v - mx).exp()).sum();
        let log_q = mx + sum.ln() - ((l + 1) as f64).ln();
        let lp = target.log_density(x);
        let term = lp - log_q;
        if !term.is_finite() {
            return Err(Error::NonFiniteDensity(format!("surrogate ELBO term of sample {i}")));
        }
        per_sample.push(term);
        weights.extend(logs.iter().map(|v| (v - mx).exp() / sum));
    }
    let value = per_sample.iter().sum::<f64>() / batch.m as f64;
    Ok(SurrogateElbo {
        value,
        per_sample,
        weights,
        score,
        aux_mu,
    })
}

/// Gradient of the surrogate ELBO with respect to `phi`, differentiating
/// through the samples, every mixture component mean and `sigma`.
pub fn sivi_gradient(
    family: &SemiImplicitFamily,
    target: &dyn TargetPosterior,
    batch: &ReparamBatch,
    aux_z: &[f64],
) -> Result<(f64, PhiGrad)> {
    let (d, k) = (family.x_dim(), family.z_dim());
    let l = aux_z.len() / k;
    let m = batch.m;
    let elbo = sivi_surrogate_elbo(family, target, batch, aux_z)?;
    let inv_var: Vec<f64> = family.log_sigma.iter().map(|s| (-2.0 * s).exp()).collect();
    let sigma = family.sigma();
    let scale = 1.0 / m as f64;

    // cotangents for mu at the batch rows and the auxiliary rows
    let mut g_mu_own = vec![0.0; m * d];
    let mut g_mu_aux = vec![0.0; l * d];
    let mut g_x = vec![0.0; m * d];
    let mut g_s = vec![0.0; d];
    for i in 0..m {
        let x = &batch.x[i * d..(i + 1) * d];
        let w = &elbo.weights[i * (l + 1)..(i + 1) * (l + 1)];
        for c in 0..=l {
            let mu = if c == 0 {
                &batch.mu()[i * d..(i + 1) * d]
            } else {
                &elbo.aux_mu[(c - 1) * d..c * d]
            };
            for j in 0..d {
                let u = (x[j] - mu[j]) * inv_var[j];
                // -log q contributes +w u to dx and -w u to dmu
                g_x[i * d + j] += scale * w[c] * u;
                let gm = -scale * w[c] * u;
                if c == 0 {
                    g_mu_own[i * d + j] += gm;
                } else {
                    g_mu_aux[(c - 1) * d + j] += gm;
                }
                g_s[j] += scale * w[c] * (1.0 - u * (x[j] - mu[j]));
            }
        }
        for j in 0..d {
            g_x[i * d + j] += scale * elbo.score[i * d + j];
        }
    }
    // x = mu + sigma * eps
    for i in 0..m {
        for j in 0..d {
            g_mu_own[i * d + j] += g_x[i * d + j];
            g_s[j] += g_x[i * d + j] * sigma[j] * batch.eps[i * d + j];
        }
    }
    let mut g_mu = family
        .mu_net
        .backward_batch(&batch.mu_acts, &g_mu_own, GradRequest::PARAMS)?
        .params
        .expect("requested");
    if l > 0 {
        let aux_acts = family.mu_net.forward_batch(aux_z, l)?;
        let ga = family
            .mu_net
            .backward_batch(&aux_acts, &g_mu_aux, GradRequest::PARAMS)?
            .params
            .expect("requested");
        for (a, b) in g_mu.iter_mut().zip(&ga) {
            *a += b;
        }
    }
    let g = PhiGrad { mu: g_mu, log_sigma: g_s };
    if !g.is_finite() {
        return Err(Error::NonFiniteGradient { context: "surrogate ELBO gradient" });
    }
    Ok((elbo.value, g))
}

/// Ascends the surrogate ELBO for `config.iterations` steps.
pub fn sivi_train(target: &dyn TargetPosterior, config: &SiviConfig, state: &mut ElboState) -> Result<()> {
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
    let k = state.family.z_dim();
    let total = state.iteration + config.iterations;
    let t0 = state.iteration;
    while state.iteration < total {
        let t = state.iteration;
        state.opt.step_size = decayed(config.lr, config.lr_decay.as_ref(), t);
        let l = config.l_schedule.at(config.aux_samples, t - t0, config.iterations);
        let tt = step_target(target, config.anneal.as_ref(), config.data_batch, t, &mut state.rng);
        let res = (|| {
            let batch = state.family.sample_batch(config.batch_size, &mut state.rng)?;
            let aux = rng::normal_vec(&mut state.rng, l * k);
            let (_, g) = sivi_gradient(&state.family, tt.as_ref(), &batch, &aux)?;
            let mut phi = state.family.phi();
            state.opt.ascend(&mut phi, &g.flat())?;
            state.family.set_phi(&phi)
        })();
        if let Err(e) = skips.handle(res, t, "surrogate ELBO step", &mut state.trace) {
            state.skipped_steps += skips.total;
            return Err(e);
        }
        skips.end_iteration();
        state.iteration += 1;
        if config.eval_every > 0 && state.iteration % config.eval_every == 0 {
            let beta = config.anneal.as_ref().map_or(1.0, |a| a.beta(t));
            let tt = Tempered::new(target, beta);
            let batch = state.family.sample_batch(config.eval_samples.max(1), &mut state.eval_rng)?;
            let aux = rng::normal_vec(&mut state.eval_rng, config.aux_samples * k);
            let rec = match sivi_surrogate_elbo(&state.family, &tt, &batch, &aux) {
                Ok(e) => TraceRecord::Eval {
                    iteration: state.iteration,
                    wall_time: start.elapsed().as_secs_f64(),
                    sm_loss: None,
                    fnet_norm: None,
                    elbo: Some(e.value),
                    beta: config.anneal.map(|_| beta),
                },
                Err(e) => TraceRecord::Error {
                    iteration: state.iteration,
                    message: format!("evaluation failed: {e}"),
                },
            };
            state.trace.push(rec);
        }
    }
    state.skipped_steps += skips.total;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::{Activation, MlpSpec, Network};
    use crate::targets::banana_target;

    fn tiny_family(seed: u64) -> SemiImplicitFamily {
        let spec = MlpSpec::new(vec![2, 5, 2], Activation::Tanh).unwrap();
        let mut r = rng::stream(seed, 3);
        let mut f = SemiImplicitFamily::init(spec, -0.5, &mut r);
        f.log_sigma = vec![-0.4, 0.2];
        f
    }

    #[test]
    fn l_zero_reduces_to_conditional() {
        let spec = MlpSpec::new(vec![2, 2], Activation::Relu).unwrap();
        let mut net = Network::zeros(spec);
        net.params[4] = 0.3; // constant mu
        let fam = SemiImplicitFamily::new(net, vec![-0.2, 0.1]).unwrap();
        let target = banana_target();
        let b = fam.sample_batch(8, &mut rng::stream(1, 0)).unwrap();
        let e = sivi_surrogate_elbo(&fam, &target, &b, &[]).unwrap();
        for i in 0..8 {
            let s = b.sample(i);
            let want = target.log_density(s.x) - log_normal_diag(s.x, &b.mu()[2 * i..2 * i + 2], &fam.log_sigma);
            assert!((e.per_sample[i] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let fam = tiny_family(2);
        let target = banana_target();
        let mut r = rng::stream(2, 0);
        let b = fam.sample_batch(6, &mut r).unwrap();
        let aux = rng::normal_vec(&mut r, 4 * 2);
        let (_, g) = sivi_gradient(&fam, &target, &b, &aux).unwrap();
        let g = g.flat();
        let phi = fam.phi();
        let h = 1e-5;
        for i in 0..phi.len() {
            let eval = |delta: f64| {
                let mut f = fam.clone();
                let mut p = phi.clone();
                p[i] += delta;
                f.set_phi(&p).unwrap();
                let bb = f.compose(b.z.clone(), b.eps.clone()).unwrap();
                sivi_surrogate_elbo(&f, &target, &bb, &aux).unwrap().value
            };
            let fd = (eval(h) - eval(-h)) / (2.0 * h);
            let err = (fd - g[i]).abs() / fd.abs().max(g[i].abs()).max(1e-4);
            assert!(err < 1e-5, "coordinate {i}: {fd} vs {}", g[i]);
        }
    }

    #[test]
    fn growing_schedule_endpoints() {
        let s = LSchedule::Growing;
        assert_eq!(s.at(50, 0, 1000), 10);
        assert_eq!(s.at(50, 500, 1000), 50);
        assert_eq!(s.at(50, 999, 1000), 50);
        assert_eq!(s.at(50, 250, 1000), 30);
        assert_eq!(LSchedule::Constant.at(50, 0, 1000), 50);
    }

    #[test]
    fn seeded_training_repeatable() {
        let cfg = SiviConfig {
            iterations: 30,
            batch_size: 10,
            aux_samples: 5,
            eval_every: 10,
            eval_samples: 20,
            ..Default::default()
        };
        let run = || {
            let mut st = ElboState::new(tiny_family(3), OptimizerKind::Adam, 1e-2, 4);
            sivi_train(&banana_target(), &cfg, &mut st).unwrap();
            st
        };
        let (a, b) = (run(), run());
        assert_eq!(a.family.phi(), b.family.phi());
        assert_eq!(a.trace.evals().count(), 3);
    }
}
