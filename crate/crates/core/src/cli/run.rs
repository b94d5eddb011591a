//! `run`: one seeded experiment into an output directory.

use std::fs;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::{Method, RunConfig};
use crate::baselines::{sgld_run, sivi_train, uivi_train, ElboState};
use crate::metrics::{knn_kl_detailed, SampleSet};
use crate::rng;
use crate::targets::TargetPosterior;
use crate::trace::{MetricTrace, TraceRecord};
use crate::trainer::{train, TrainState};
use crate::{Error, Result};

pub const CONFIG_ECHO: &str = "config-echo.json";
pub const TRACE_FILE: &str = "trace.jsonl";
pub const SAMPLES_FILE: &str = "samples.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const CHECKPOINT_DIR: &str = "checkpoint";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub method: Method,
    pub target: String,
    pub seed: u64,
    pub dim: usize,
    pub iterations: usize,
    pub wall_time: f64,
    pub skipped_steps: usize,
    pub samples: usize,
    /// KL(target || samples) against exact target draws, when available.
    pub knn_kl: Option<f64>,
    pub final_sm_loss: Option<f64>,
    pub final_fnet_norm: Option<f64>,
    pub diverged_particles: Option<usize>,
}

/// A validated run: resolved config plus the built target.
pub struct PreparedRun {
    pub config: RunConfig,
    pub target: Box<dyn TargetPosterior>,
}

impl PreparedRun {
    /// Builds the target and resolves every default. Errors here are
    /// configuration errors.
    pub fn new(config: RunConfig) -> Result<Self> {
        let target = config.target.build()?;
        let config = config.resolve(target.dim())?;
        Ok(PreparedRun { config, target })
    }

    pub fn from_path(path: impl AsRef<Path>, seed_override: Option<u64>) -> Result<Self> {
        let mut c = RunConfig::load(path)?;
        if let Some(s) = seed_override {
            c.seed = s;
            // the method sections carry the seed too
            if let Some(t) = c.train.as_mut() {
                t.seed = s;
            }
            if let Some(t) = c.sivi.as_mut() {
                t.seed = s;
            }
            if let Some(t) = c.uivi.as_mut() {
                t.seed = s;
            }
            if let Some(t) = c.sgld.as_mut() {
                t.seed = s;
            }
        }
        Self::new(c)
    }

    /// Runs into `out`. On failure the echo, the partial trace (ending with
    /// an error record) and any checkpoint reached are left behind.
    pub fn execute(&self, out: &Path) -> Result<RunSummary> {
        fs::create_dir_all(out)?;
        fs::write(out.join(CONFIG_ECHO), serde_json::to_string_pretty(&self.config)?)?;
        let mut trace = MetricTrace::new();
        let res = self.execute_inner(out, &mut trace);
        if let Err(e) = &res {
            trace.push(TraceRecord::Error {
                iteration: trace.evals().filter_map(eval_iteration).last().unwrap_or(0),
                message: e.to_string(),
            });
        }
        trace.save(out.join(TRACE_FILE))?;
        let summary = res?;
        fs::write(out.join(SUMMARY_FILE), serde_json::to_string_pretty(&summary)?)?;
        Ok(summary)
    }

    fn execute_inner(&self, out: &Path, trace: &mut MetricTrace) -> Result<RunSummary> {
        let c = &self.config;
        let target = self.target.as_ref();
        let d = target.dim();
        let start = Instant::now();
        let ckpt = out.join(CHECKPOINT_DIR);
        let mut summary = RunSummary {
            method: c.method,
            target: c.target.name().to_string(),
            seed: c.seed,
            dim: d,
            iterations: 0,
            wall_time: 0.0,
            skipped_steps: 0,
            samples: 0,
            knn_kl: None,
            final_sm_loss: None,
            final_fnet_norm: None,
            diverged_particles: None,
        };
        let fam_spec = c.family.as_ref();
        let samples = match c.method {
            Method::SiviSm => {
                let tc = c.train.as_ref().expect("resolved");
                let mut st = TrainState::init(fam_spec.expect("resolved"), d, tc)?;
                let res = train(target, tc, &mut st);
                *trace = std::mem::take(&mut st.trace);
                summary.iterations = st.iteration;
                summary.skipped_steps = st.skipped_steps;
                summary.final_sm_loss = trace.sm_losses().last().copied();
                summary.final_fnet_norm = trace.fnet_norms().last().copied();
                fs::create_dir_all(&ckpt)?;
                st.save_checkpoint(&ckpt)?;
                res?;
                self.draw_output(&st.family)?
            }
            Method::Sivi | Method::Uivi => {
                let (kind, lr) = match c.method {
                    Method::Sivi => {
                        let s = c.sivi.as_ref().expect("resolved");
                        (s.optimizer, s.lr)
                    }
                    _ => {
                        let u = c.uivi.as_ref().expect("resolved");
                        (u.optimizer, u.lr)
                    }
                };
                let mut st = ElboState::init(fam_spec.expect("resolved"), d, kind, lr, c.seed)?;
                let res = match c.method {
                    Method::Sivi => sivi_train(target, c.sivi.as_ref().expect("resolved"), &mut st),
                    _ => uivi_train(target, c.uivi.as_ref().expect("resolved"), &mut st),
                };
                *trace = std::mem::take(&mut st.trace);
                summary.iterations = st.iteration;
                summary.skipped_steps = st.skipped_steps;
                fs::create_dir_all(&ckpt)?;
                st.family.save(ckpt.join("family.json"))?;
                res?;
                self.draw_output(&st.family)?
            }
            Method::Sgld => {
                let sc = c.sgld.as_ref().expect("resolved");
                let o = sgld_run(target, sc)?;
                summary.iterations = sc.iterations;
                let nd = o.num_diverged();
                summary.diverged_particles = Some(nd);
                if nd > 0 {
                    trace.event(sc.iterations, format!("{nd} of {} particles diverged", sc.particles));
                    let idx: Vec<usize> = o.diverged.iter().enumerate().filter(|(_, d)| **d).map(|(i, _)| i).collect();
                    fs::create_dir_all(&ckpt)?;
                    fs::write(ckpt.join("diverged.json"), serde_json::to_string(&idx)?)?;
                }
                let healthy = o.healthy();
                if healthy.is_empty() {
                    return Err(Error::Invalid("every SGLD particle diverged".into()));
                }
                SampleSet::new(healthy, d, "sgld", c.seed)?
            }
        };
        summary.samples = samples.len();
        samples.save(out.join(SAMPLES_FILE))?;
        if c.eval.kl_reference_samples > 0 {
            let mut r = rng::stream(c.seed, rng::STREAM_REFERENCE);
            if let Some(y) = target.sample_exact(c.eval.kl_reference_samples, &mut r) {
                let reference = SampleSet::new(y, d, "exact", c.seed)?;
                let kl = knn_kl_detailed(&reference, &samples, c.eval.kl_neighbours)?;
                if kl.clamped > 0 {
                    trace.event(summary.iterations, format!("knn_kl clamped {} distances", kl.clamped));
                }
                summary.knn_kl = Some(kl.value);
            }
        }
        summary.wall_time = start.elapsed().as_secs_f64();
        Ok(summary)
    }

    fn draw_output(&self, family: &crate::family::SemiImplicitFamily) -> Result<SampleSet> {
        let c = &self.config;
        let mut r = rng::stream(c.seed, rng::STREAM_OUTPUT);
        let x = family.draw(c.output_samples, &mut r)?;
        SampleSet::new(x, family.x_dim(), c.method.as_str(), c.seed)
    }
}

fn eval_iteration(r: &TraceRecord) -> Option<usize> {
    match r {
        TraceRecord::Eval { iteration, .. } => Some(*iteration),
        _ => None,
    }
}
