//! `bench`: median wall time per training iteration.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::Method;
use super::run::PreparedRun;
use crate::baselines::{sgld_run, sivi_train, uivi_train, ElboState, LSchedule, SgldConfig};
use crate::trainer::{train, TrainState};
use crate::Result;

/// Smallest timed window allowed.
pub const MIN_WINDOW: usize = 200;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub config: String,
    pub method: Method,
    pub target: String,
    pub batch_size: usize,
    pub warmup: usize,
    pub iterations: usize,
    pub median_seconds_per_iteration: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchTable {
    pub rows: Vec<BenchRow>,
}

impl BenchTable {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let w = self.rows.iter().map(|r| r.config.len()).max().unwrap_or(6).max(6);
        let _ = writeln!(s, "{:<w$}  {:<8}  {:<12}  {:>6}  {:>14}", "config", "method", "target", "batch", "s/iteration");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:<w$}  {:<8}  {:<12}  {:>6}  {:>14.6e}",
                r.config,
                r.method.as_str(),
                r.target,
                r.batch_size,
                r.median_seconds_per_iteration
            );
        }
        s
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Times `window` single iterations after `warmup` untimed ones. Evaluation
/// passes are disabled and SIVI uses a constant `L` so every timed iteration
/// does the same work.
pub fn bench_one(run: &PreparedRun, warmup: usize, window: usize) -> Result<Vec<f64>> {
    let c = &run.config;
    let target = run.target.as_ref();
    let d = target.dim();
    let mut times = Vec::with_capacity(window);
    let mut timed = |mut step: Box<dyn FnMut() -> Result<()> + '_>| -> Result<()> {
        for _ in 0..warmup {
            step()?;
        }
        for _ in 0..window {
            let t = Instant::now();
            step()?;
            times.push(t.elapsed().as_secs_f64());
        }
        Ok(())
    };
    match c.method {
        Method::SiviSm => {
            let mut tc = c.train.clone().expect("resolved");
            tc.eval_every = 0;
            tc.iterations = 1;
            let mut st = TrainState::init(c.family.as_ref().expect("resolved"), d, &tc)?;
            timed(Box::new(move || train(target, &tc, &mut st)))?;
        }
        Method::Sivi => {
            let mut sc = c.sivi.clone().expect("resolved");
            sc.eval_every = 0;
            sc.iterations = 1;
            sc.l_schedule = LSchedule::Constant;
            let mut st = ElboState::init(c.family.as_ref().expect("resolved"), d, sc.optimizer, sc.lr, c.seed)?;
            timed(Box::new(move || sivi_train(target, &sc, &mut st)))?;
        }
        Method::Uivi => {
            let mut uc = c.uivi.clone().expect("resolved");
            uc.eval_every = 0;
            uc.iterations = 1;
            let mut st = ElboState::init(c.family.as_ref().expect("resolved"), d, uc.optimizer, uc.lr, c.seed)?;
            timed(Box::new(move || uivi_train(target, &uc, &mut st)))?;
        }
        Method::Sgld => {
            let sc = SgldConfig {
                iterations: 1,
                ..c.sgld.clone().expect("resolved")
            };
            timed(Box::new(move || sgld_run(target, &sc).map(|_| ())))?;
        }
    }
    Ok(times)
}

pub fn bench(configs: &[PathBuf], warmup: usize, window: usize, seed: Option<u64>) -> Result<BenchTable> {
    let window = window.max(MIN_WINDOW);
    let mut rows = Vec::with_capacity(configs.len());
    for path in configs {
        let run = PreparedRun::from_path(path, seed)?;
        let times = bench_one(&run, warmup, window)?;
        let c = &run.config;
        let batch_size = match c.method {
            Method::SiviSm => c.train.as_ref().map_or(0, |t| t.batch_size),
            Method::Sivi => c.sivi.as_ref().map_or(0, |t| t.batch_size),
            Method::Uivi => c.uivi.as_ref().map_or(0, |t| t.batch_size),
            Method::Sgld => c.sgld.as_ref().map_or(0, |t| t.particles),
        };
        rows.push(BenchRow {
            config: display_name(path),
            method: c.method,
            target: c.target.name().to_string(),
            batch_size,
            warmup,
            iterations: window,
            median_seconds_per_iteration: median(times),
        });
    }
    Ok(BenchTable { rows })
}

fn display_name(p: &Path) -> String {
    p.display().to_string()
}
