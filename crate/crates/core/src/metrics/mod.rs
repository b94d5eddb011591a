//! Evaluation metrics over sample sets and trained states.

mod kdtree;
mod samples;

use rand::RngCore;

pub use kdtree::{brute_kth_distance, KdTree};
pub use samples::SampleSet;

use crate::diffcore::{gemm, Network, Transpose};
use crate::family::SemiImplicitFamily;
use crate::targets::{GlmDataset, TargetPosterior};
use crate::trainer::sm_objective;
use crate::{Error, Result};

/// Dimension above which nearest neighbours are found by brute force.
pub const KDTREE_MAX_DIM: usize = 20;

/// Distances below this are treated as ties and clamped.
pub const MIN_DISTANCE: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KnnKl {
    pub value: f64,
    /// Neighbour distances that were zero and got clamped to [`MIN_DISTANCE`].
    pub clamped: usize,
}

/// k-NN estimate of `KL(p || q)` from samples:
///
/// ```text
/// D = (d / n) sum_i ln(nu_k(i) / rho_k(i)) + ln(m / (n - 1))
/// ```
///
/// with `rho_k(i)` the distance from `p_i` to its k-th neighbour among the
/// other `p` samples and `nu_k(i)` the distance to its k-th neighbour in `q`.
pub fn knn_kl(p: &SampleSet, q: &SampleSet, k: usize) -> Result<f64> {
    knn_kl_detailed(p, q, k).map(|r| r.value)
}

pub fn knn_kl_detailed(p: &SampleSet, q: &SampleSet, k: usize) -> Result<KnnKl> {
    let d = p.dim();
    if q.dim() != d {
        return Err(Error::DimensionMismatch {
            context: "knn_kl sample dimensions",
            expected: d,
            actual: q.dim(),
        });
    }
    if k == 0 {
        return Err(Error::Invalid("k must be at least 1".into()));
    }
    let (n, m) = (p.len(), q.len());
    if n < k + 1 || m < k {
        return Err(Error::Invalid(format!(
            "knn_kl needs at least {} samples in p and {k} in q; got {n} and {m}",
            k + 1
        )));
    }
    let kth = |data: &[f64], queries: &[f64], same: bool| -> Vec<f64> {
        if d <= KDTREE_MAX_DIM {
            let tree = KdTree::new(data, d);
            queries
                .chunks_exact(d)
                .enumerate()
                .map(|(i, x)| tree.kth_distance(x, k, same.then_some(i)))
                .collect()
        } else {
            queries
                .chunks_exact(d)
                .enumerate()
                .map(|(i, x)| brute_kth_distance(data, d, x, k, same.then_some(i)))
                .collect()
        }
    };
    // a set compared with itself: each point is excluded from its own q
    // neighbours as well, so the estimate is exactly zero
    let same_set = p.data() == q.data();
    let rho = kth(p.data(), p.data(), true);
    let nu = kth(q.data(), p.data(), same_set);
    let mut clamped = 0;
    let mut sum = 0.0;
    for (r, v) in rho.iter().zip(&nu) {
        let mut fix = |x: f64| {
            if x < MIN_DISTANCE {
                clamped += 1;
                MIN_DISTANCE
            } else {
                x
            }
        };
        let (r, v) = (fix(*r), fix(*v));
        sum += (v / r).ln();
    }
    if clamped > 0 {
        log::warn!("knn_kl: {clamped} zero neighbour distances clamped to {MIN_DISTANCE:e}");
    }
    let m_eff = if same_set { m - 1 } else { m };
    let value = d as f64 / n as f64 * sum + (m_eff as f64 / (n as f64 - 1.0)).ln();
    Ok(KnnKl { value, clamped })
}

/// Sample covariance with the `n - 1` denominator, row-major `(d, d)`.
pub fn sample_covariance(s: &SampleSet) -> Result<Vec<f64>> {
    let (n, d) = (s.len(), s.dim());
    if n < 2 {
        return Err(Error::Invalid(format!("covariance needs at least 2 samples, got {n}")));
    }
    let mean = s.mean();
    let mut centred = s.data().to_vec();
    for row in centred.chunks_exact_mut(d) {
        for (v, m) in row.iter_mut().zip(&mean) {
            *v -= m;
        }
    }
    let mut cov = vec![0.0; d * d];
    gemm(d, n, d, 1.0 / (n as f64 - 1.0), &centred, Transpose::Yes, &centred, Transpose::No, 0.0, &mut cov);
    Ok(cov)
}

/// Root mean square difference over the upper triangle (diagonal included)
/// of the two sample covariances.
pub fn cov_rmse(a: &SampleSet, b: &SampleSet) -> Result<f64> {
    let d = a.dim();
    if b.dim() != d {
        return Err(Error::DimensionMismatch {
            context: "cov_rmse sample dimensions",
            expected: d,
            actual: b.dim(),
        });
    }
    let (ca, cb) = (sample_covariance(a)?, sample_covariance(b)?);
    let mut sq = 0.0;
    for i in 0..d {
        for j in i..d {
            let diff = ca[i * d + j] - cb[i * d + j];
            sq += diff * diff;
        }
    }
    Ok((sq / (d * (d + 1) / 2) as f64).sqrt())
}

/// Which GLM likelihood a parameter sample belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GlmKind {
    /// Labels in `{0, 1}`.
    Logistic,
    /// Labels in `1..=classes`, parameters class-major.
    Multinomial { classes: usize },
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn log_sigmoid(t: f64) -> f64 {
    -((-t).max(0.0) + (-t.abs()).exp().ln_1p())
}

/// Mean over test points of `log (1/S) sum_s p(y | x, beta_s)`.
pub fn test_loglik(posterior: &SampleSet, data: &GlmDataset, kind: GlmKind) -> Result<f64> {
    let p = data.design_dim();
    let (r, want) = match kind {
        GlmKind::Logistic => (1, p),
        GlmKind::Multinomial { classes } => (classes, classes * p),
    };
    if posterior.dim() != want {
        return Err(Error::DimensionMismatch {
            context: "test_loglik parameter dimension",
            expected: want,
            actual: posterior.dim(),
        });
    }
    if data.is_empty() || posterior.is_empty() {
        return Err(Error::Invalid("test_loglik needs data and samples".into()));
    }
    let s = posterior.len();
    let cols = s * r;
    let labels = data.labels();
    let mut total = 0.0;
    const CHUNK: usize = 256;
    let mut logp = vec![0.0; s];
    for start in (0..data.len()).step_by(CHUNK) {
        let idx: Vec<usize> = (start..(start + CHUNK).min(data.len())).collect();
        let sub = data.subset(&idx);
        let rows: Vec<f64> = (0..sub.len()).flat_map(|i| sub.design_row(i).to_vec()).collect();
        let mut eta = vec![0.0; idx.len() * cols];
        gemm(idx.len(), p, cols, 1.0, &rows, Transpose::No, posterior.data(), Transpose::Yes, 0.0, &mut eta);
        for (row, &y) in eta.chunks_exact(cols).zip(&labels[start..start + idx.len()]) {
            match kind {
                GlmKind::Logistic => {
                    if y > 1 {
                        return Err(Error::Dataset(format!("logistic label {y} not in {{0, 1}}")));
                    }
                    for (lp, e) in logp.iter_mut().zip(row) {
                        *lp = if y == 1 { log_sigmoid(*e) } else { log_sigmoid(-*e) };
                    }
                }
                GlmKind::Multinomial { classes } => {
                    if y < 1 || y as usize > classes {
                        return Err(Error::Dataset(format!("label {y} outside 1..={classes}")));
                    }
                    for (lp, block) in logp.iter_mut().zip(row.chunks_exact(classes)) {
                        *lp = block[y as usize - 1] - log_sum_exp(block);
                    }
                }
            }
            total += log_sum_exp(&logp) - (s as f64).ln();
        }
    }
    Ok(total / data.len() as f64)
}

/// Monte-Carlo SM loss and `E ||f(x)||^2` over `n` fresh draws.
pub fn sm_diagnostics(
    family: &SemiImplicitFamily,
    f_net: &Network,
    target: &dyn TargetPosterior,
    n: usize,
    rng: &mut dyn RngCore,
) -> Result<(f64, f64)> {
    if n == 0 {
        return Err(Error::Invalid("need at least one sample".into()));
    }
    let batch = family.sample_batch(n, rng)?;
    let terms = sm_objective(&batch, target, f_net, family)?;
    let norm = terms.f.iter().map(|v| v * v).sum::<f64>() / n as f64;
    Ok((terms.value, norm))
}

pub fn sm_loss_estimate(
    family: &SemiImplicitFamily,
    f_net: &Network,
    target: &dyn TargetPosterior,
    n: usize,
    rng: &mut dyn RngCore,
) -> Result<f64> {
    sm_diagnostics(family, f_net, target, n, rng).map(|v| v.0)
}

/// `E ||f(x)||^2` with `x` drawn from the family.
pub fn fnet_norm(family: &SemiImplicitFamily, f_net: &Network, n: usize, rng: &mut dyn RngCore) -> Result<f64> {
    if n == 0 {
        return Err(Error::Invalid("need at least one sample".into()));
    }
    let batch = family.sample_batch(n, rng)?;
    let out = f_net.forward_batch(&batch.x, n)?;
    Ok(out.output().iter().map(|v| v * v).sum::<f64>() / n as f64)
}

/// Per-coordinate means and standard deviations.
pub fn marginal_moments(s: &SampleSet) -> (Vec<f64>, Vec<f64>) {
    let mean = s.mean();
    let d = s.dim();
    let n = s.len() as f64;
    let mut var = vec![0.0; d];
    for row in s.data().chunks_exact(d) {
        for j in 0..d {
            var[j] += (row[j] - mean[j]).powi(2);
        }
    }
    let sd = var.iter().map(|v| (v / (n - 1.0).max(1.0)).sqrt()).collect();
    (mean, sd)
}
