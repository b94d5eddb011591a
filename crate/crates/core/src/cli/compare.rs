//! `compare`: sample-based comparison of run directories against a reference.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::run::{CONFIG_ECHO, SAMPLES_FILE};
use crate::metrics::{cov_rmse, knn_kl, marginal_moments, SampleSet};
use crate::rng;
use crate::targets::TargetPosterior;
use crate::{Error, Result};

pub const REPORT_JSON: &str = "report.json";
pub const REPORT_TEXT: &str = "report.txt";
/// Cells per axis of the 2-D density grids.
pub const GRID_CELLS: usize = 100;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub run: String,
    pub label: String,
    pub samples: usize,
    /// KL(reference || run).
    pub knn_kl: f64,
    pub cov_rmse: f64,
    /// Run minus reference, per coordinate.
    pub mean_delta: Vec<f64>,
    pub sd_delta: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub reference: String,
    pub reference_samples: usize,
    pub dim: usize,
    pub k: usize,
    pub rows: Vec<CompareRow>,
}

impl CompareReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// Aligned plain-text table.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "reference: {} ({} samples, dim {}, k = {})",
            self.reference, self.reference_samples, self.dim, self.k
        );
        let w = self.rows.iter().map(|r| r.run.len()).max().unwrap_or(3).max(3);
        let _ = writeln!(
            s,
            "{:<w$}  {:>12}  {:>12}  {:>12}  {:>12}",
            "run", "knn_kl", "cov_rmse", "max|dmean|", "max|dsd|"
        );
        for r in &self.rows {
            let mx = |v: &[f64]| v.iter().fold(0.0f64, |a, b| a.max(b.abs()));
            let _ = writeln!(
                s,
                "{:<w$}  {:>12.6}  {:>12.6}  {:>12.6}  {:>12.6}",
                r.run,
                r.knn_kl,
                r.cov_rmse,
                mx(&r.mean_delta),
                mx(&r.sd_delta)
            );
        }
        s
    }
}

/// Where the reference samples come from.
pub enum Reference {
    /// A directory holding `samples.csv`, typically an SGLD run.
    Dir(PathBuf),
    /// `n` exact draws from the target named in the first run's echo.
    Exact { n: usize, seed: u64 },
}

fn run_name(p: &Path) -> String {
    p.file_name().map_or_else(|| p.display().to_string(), |s| s.to_string_lossy().into_owned())
}

fn load_target(run: &Path) -> Result<Box<dyn TargetPosterior>> {
    RunConfig::load(run.join(CONFIG_ECHO))?.target.build()
}

/// Compares every run in `runs` against the reference and, for 2-D runs,
/// writes density grids into `grid_dir` when given.
pub fn compare(runs: &[PathBuf], reference: &Reference, k: usize, grid_dir: Option<&Path>) -> Result<CompareReport> {
    if runs.is_empty() {
        return Err(Error::Invalid("compare needs at least one run directory".into()));
    }
    let (ref_name, ref_set, target) = match reference {
        Reference::Dir(dir) => {
            let target = load_target(dir).ok();
            (run_name(dir), SampleSet::load(dir.join(SAMPLES_FILE))?, target)
        }
        Reference::Exact { n, seed } => {
            let target = load_target(&runs[0])?;
            let mut r = rng::stream(*seed, rng::STREAM_REFERENCE);
            let y = target.sample_exact(*n, &mut r).ok_or_else(|| {
                Error::Invalid(format!(
                    "target `{}` has no exact sampler; pass a reference directory",
                    target.name()
                ))
            })?;
            let d = target.dim();
            (format!("exact:{}", target.name()), SampleSet::new(y, d, "exact", *seed)?, Some(target))
        }
    };
    let d = ref_set.dim();
    let (ref_mean, ref_sd) = marginal_moments(&ref_set);
    let mut rows = Vec::with_capacity(runs.len());
    let mut sets = Vec::with_capacity(runs.len());
    for run in runs {
        let s = SampleSet::load(run.join(SAMPLES_FILE))?;
        if s.dim() != d {
            return Err(Error::Invalid(format!(
                "run {} has dimension {} but reference {} has dimension {d}",
                run.display(),
                s.dim(),
                ref_name
            )));
        }
        let (mean, sd) = marginal_moments(&s);
        rows.push(CompareRow {
            run: run_name(run),
            label: s.label.clone(),
            samples: s.len(),
            knn_kl: knn_kl(&ref_set, &s, k)?,
            cov_rmse: cov_rmse(&ref_set, &s)?,
            mean_delta: mean.iter().zip(&ref_mean).map(|(a, b)| a - b).collect(),
            sd_delta: sd.iter().zip(&ref_sd).map(|(a, b)| a - b).collect(),
        });
        sets.push((run_name(run), s));
    }
    if let (Some(dir), 2) = (grid_dir, d) {
        fs::create_dir_all(dir)?;
        let bounds = grid_bounds(&ref_set);
        write_grid(&dir.join("grid-reference.csv"), &histogram_grid(&ref_set, bounds))?;
        for (name, s) in &sets {
            write_grid(&dir.join(format!("grid-{name}.csv")), &histogram_grid(s, bounds))?;
        }
        if let Some(t) = target {
            write_grid(&dir.join("grid-target.csv"), &density_grid(t.as_ref(), bounds))?;
        }
    }
    Ok(CompareReport {
        reference: ref_name,
        reference_samples: ref_set.len(),
        dim: d,
        k,
        rows,
    })
}

type Bounds = [(f64, f64); 2];

/// Bounding box of the reference, padded by 10% on each side.
fn grid_bounds(s: &SampleSet) -> Bounds {
    let mut b = [(f64::INFINITY, f64::NEG_INFINITY); 2];
    for i in 0..s.len() {
        for (j, bj) in b.iter_mut().enumerate() {
            let v = s.row(i)[j];
            bj.0 = bj.0.min(v);
            bj.1 = bj.1.max(v);
        }
    }
    b.map(|(lo, hi)| {
        let pad = 0.1 * (hi - lo).max(1e-9);
        (lo - pad, hi + pad)
    })
}

/// Cell centres and densities, row-major over `(x, y)`.
struct Grid {
    xs: Vec<f64>,
    ys: Vec<f64>,
    density: Vec<f64>,
}

fn centres((lo, hi): (f64, f64)) -> Vec<f64> {
    let h = (hi - lo) / GRID_CELLS as f64;
    (0..GRID_CELLS).map(|i| lo + (i as f64 + 0.5) * h).collect()
}

fn histogram_grid(s: &SampleSet, b: Bounds) -> Grid {
    let n = GRID_CELLS;
    let (hx, hy) = ((b[0].1 - b[0].0) / n as f64, (b[1].1 - b[1].0) / n as f64);
    let mut counts = vec![0.0; n * n];
    for i in 0..s.len() {
        let r = s.row(i);
        let cx = ((r[0] - b[0].0) / hx).floor();
        let cy = ((r[1] - b[1].0) / hy).floor();
        if cx >= 0.0 && cy >= 0.0 && (cx as usize) < n && (cy as usize) < n {
            counts[cx as usize * n + cy as usize] += 1.0;
        }
    }
    let norm = 1.0 / (s.len() as f64 * hx * hy);
    Grid {
        xs: centres(b[0]),
        ys: centres(b[1]),
        density: counts.into_iter().map(|c| c * norm).collect(),
    }
}

/// Target density normalised numerically over the grid.
fn density_grid(t: &dyn TargetPosterior, b: Bounds) -> Grid {
    let (xs, ys) = (centres(b[0]), centres(b[1]));
    let mut logs = Vec::with_capacity(xs.len() * ys.len());
    for x in &xs {
        for y in &ys {
            logs.push(t.log_density(&[*x, *y]));
        }
    }
    let mx = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let cell = (xs[1] - xs[0]) * (ys[1] - ys[0]);
    let mut density: Vec<f64> = logs.iter().map(|l| (l - mx).exp()).collect();
    let z: f64 = density.iter().sum::<f64>() * cell;
    density.iter_mut().for_each(|v| *v /= z);
    Grid { xs, ys, density }
}

fn write_grid(path: &Path, g: &Grid) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Invalid(e.to_string()))?;
    let wr = |e: csv::Error| Error::Invalid(e.to_string());
    w.write_record(["x", "y", "density"]).map_err(wr)?;
    let n = g.ys.len();
    for (i, x) in g.xs.iter().enumerate() {
        for (j, y) in g.ys.iter().enumerate() {
            w.write_record([format!("{x:.17e}"), format!("{y:.17e}"), format!("{:.17e}", g.density[i * n + j])])
                .map_err(wr)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes `report.json` and `report.txt` into `out`.
pub fn write_report(report: &CompareReport, out: &Path) -> Result<()> {
    fs::create_dir_all(out)?;
    fs::write(out.join(REPORT_JSON), report.to_json()?)?;
    fs::write(out.join(REPORT_TEXT), report.to_text())?;
    Ok(())
}
