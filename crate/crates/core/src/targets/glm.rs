//! Generalised-linear-model posteriors: binary logistic and multinomial
//! (softmax) regression over a design matrix with a prepended intercept.

use std::borrow::Cow;
use std::io::Read;
use std::path::Path;
use std::sync::Arc;

use rand::Rng;

use super::TargetPosterior;
use crate::diffcore::{gemm, Transpose};
use crate::rng;
use crate::{Error, Result};

/// Covariates and integer labels. Rows of the stored design matrix are
/// `[1, x_i]`.
#[derive(Clone, Debug, PartialEq)]
pub struct GlmDataset {
    n: usize,
    covariate_dim: usize,
    design: Vec<f64>,
    labels: Vec<u32>,
}

impl GlmDataset {
    /// `covariates` is row-major `(n, covariate_dim)`.
    pub fn new(covariates: &[f64], covariate_dim: usize, labels: Vec<u32>) -> Result<Self> {
        let n = labels.len();
        if covariates.len() != n * covariate_dim {
            return Err(Error::Dataset(format!(
                "covariate matrix has {} entries, expected {n} x {covariate_dim}",
                covariates.len()
            )));
        }
        if let Some(i) = covariates.iter().position(|v| !v.is_finite()) {
            return Err(Error::Dataset(format!(
                "missing or non-finite covariate in row {}",
                i / covariate_dim.max(1)
            )));
        }
        let p = covariate_dim + 1;
        let mut design = Vec::with_capacity(n * p);
        for i in 0..n {
            design.push(1.0);
            design.extend_from_slice(&covariates[i * covariate_dim..(i + 1) * covariate_dim]);
        }
        Ok(GlmDataset {
            n,
            covariate_dim,
            design,
            labels,
        })
    }

    /// Comma-separated values, label in the last column, optional header row.
    pub fn from_csv(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path.as_ref()).map_err(|e| {
            Error::Dataset(format!("cannot open {}: {e}", path.as_ref().display()))
        })?;
        Self::from_csv_reader(file)
    }

    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut covariates = Vec::new();
        let mut labels = Vec::new();
        let mut width: Option<usize> = None;
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::Dataset(e.to_string()))?;
            if rec.iter().all(|f| f.is_empty()) {
                continue;
            }
            let parsed: std::result::Result<Vec<f64>, _> = rec.iter().map(|f| f.parse::<f64>()).collect();
            let values = match parsed {
                Ok(v) => v,
                Err(_) if line == 0 => continue, // header
                Err(e) => return Err(Error::Dataset(format!("line {}: {e}", line + 1))),
            };
            if values.len() < 2 {
                return Err(Error::Dataset(format!("line {}: need covariates and a label", line + 1)));
            }
            match width {
                None => width = Some(values.len()),
                Some(w) if w != values.len() => {
                    return Err(Error::Dataset(format!(
                        "line {}: expected {w} columns, found {}",
                        line + 1,
                        values.len()
                    )))
                }
                _ => {}
            }
            let label = *values.last().unwrap();
            if label < 0.0 || label.fract() != 0.0 {
                return Err(Error::Dataset(format!("line {}: label {label} is not a class index", line + 1)));
            }
            covariates.extend_from_slice(&values[..values.len() - 1]);
            labels.push(label as u32);
        }
        let w = width.ok_or_else(|| Error::Dataset("no data rows".into()))?;
        Self::new(&covariates, w - 1, labels)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn covariate_dim(&self) -> usize {
        self.covariate_dim
    }

    /// Width of a design row, `covariate_dim + 1`.
    pub fn design_dim(&self) -> usize {
        self.covariate_dim + 1
    }

    pub fn design_row(&self, i: usize) -> &[f64] {
        let p = self.design_dim();
        &self.design[i * p..(i + 1) * p]
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        let p = self.design_dim();
        let mut design = Vec::with_capacity(indices.len() * p);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            design.extend_from_slice(self.design_row(i));
            labels.push(self.labels[i]);
        }
        GlmDataset {
            n: indices.len(),
            covariate_dim: self.covariate_dim,
            design,
            labels,
        }
    }

    /// Relabels to `{0, 1}` with `positive` mapped to 1.
    pub fn binarize(&self, positive: u32) -> Self {
        let mut out = self.clone();
        out.labels = self.labels.iter().map(|&l| u32::from(l == positive)).collect();
        out
    }

    /// First `train` rows and the remainder.
    pub fn split_at(&self, train: usize) -> (Self, Self) {
        let train = train.min(self.n);
        let a: Vec<usize> = (0..train).collect();
        let b: Vec<usize> = (train..self.n).collect();
        (self.subset(&a), self.subset(&b))
    }

    fn gather(&self, indices: Option<&[usize]>) -> (Cow<'_, [f64]>, Cow<'_, [u32]>) {
        match indices {
            None => (Cow::Borrowed(&self.design), Cow::Borrowed(&self.labels)),
            Some(idx) => {
                let sub = self.subset(idx);
                (Cow::Owned(sub.design), Cow::Owned(sub.labels))
            }
        }
    }
}

/// Standard-normal covariates, labels drawn from a logistic model with
/// coefficients `N(0, 0.4^2)`. Returns the dataset and the true coefficients
/// (intercept first).
pub fn synthetic_logistic(n: usize, covariate_dim: usize, seed: u64) -> (GlmDataset, Vec<f64>) {
    let mut r = rng::stream(seed, rng::STREAM_DATA);
    let beta: Vec<f64> = rng::normal_vec(&mut r, covariate_dim + 1)
        .into_iter()
        .map(|b| 0.4 * b)
        .collect();
    let x = rng::normal_vec(&mut r, n * covariate_dim);
    let labels = (0..n)
        .map(|i| {
            let row = &x[i * covariate_dim..(i + 1) * covariate_dim];
            let eta = beta[0] + row.iter().zip(&beta[1..]).map(|(a, b)| a * b).sum::<f64>();
            u32::from(r.random::<f64>() < sigmoid(eta))
        })
        .collect();
    (GlmDataset::new(&x, covariate_dim, labels).expect("consistent shapes"), beta)
}

/// Class-conditional Gaussian clusters in `[0, 1]`-ish pixel space, labels
/// `1..=classes`. Stands in for downsampled image datasets.
pub fn synthetic_multinomial(n: usize, covariate_dim: usize, classes: usize, seed: u64) -> GlmDataset {
    let mut r = rng::stream(seed, rng::STREAM_DATA);
    let centres: Vec<f64> = (0..classes * covariate_dim).map(|_| r.random::<f64>()).collect();
    let mut x = Vec::with_capacity(n * covariate_dim);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let c = r.random_range(0..classes);
        for j in 0..covariate_dim {
            let noise: f64 = rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut r);
            x.push(centres[c * covariate_dim + j] + 0.3 * noise);
        }
        labels.push(c as u32 + 1);
    }
    GlmDataset::new(&x, covariate_dim, labels).expect("consistent shapes")
}

#[inline]
fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

/// Bayesian logistic regression with prior `N(0, alpha^{-1} I)`.
#[derive(Clone, Debug)]
pub struct LogisticTarget {
    data: Arc<GlmDataset>,
    alpha: f64,
    indices: Option<Arc<Vec<usize>>>,
    scale: f64,
}

pub fn logistic_target(data: Arc<GlmDataset>, alpha: f64) -> Result<LogisticTarget> {
    if !(alpha > 0.0) {
        return Err(Error::config("target.alpha", "prior precision must be positive"));
    }
    if let Some(i) = data.labels.iter().position(|&l| l > 1) {
        return Err(Error::Dataset(format!(
            "logistic regression needs labels in {{0, 1}}; row {i} has {}",
            data.labels[i]
        )));
    }
    Ok(LogisticTarget {
        data,
        alpha,
        indices: None,
        scale: 1.0,
    })
}

impl LogisticTarget {
    pub fn dataset(&self) -> &GlmDataset {
        &self.data
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }
}

impl TargetPosterior for LogisticTarget {
    fn name(&self) -> &str {
        "logistic"
    }

    fn dim(&self) -> usize {
        self.data.design_dim()
    }

    fn log_density(&self, beta: &[f64]) -> f64 {
        let (design, labels) = self.data.gather(self.indices.as_deref().map(|v| v.as_slice()));
        let p = self.dim();
        let mut ll = 0.0;
        for (row, &y) in design.chunks_exact(p).zip(labels.iter()) {
            let eta: f64 = row.iter().zip(beta).map(|(a, b)| a * b).sum();
            ll += y as f64 * eta - softplus(eta);
        }
        let prior: f64 = beta.iter().map(|b| b * b).sum();
        self.scale * ll - 0.5 * self.alpha * prior
    }

    fn score(&self, beta: &[f64], out: &mut [f64]) {
        self.score_batch(beta, out)
    }

    fn hessian_vec(&self, beta: &[f64], v: &[f64], out: &mut [f64]) {
        self.hessian_vec_batch(beta, v, out)
    }

    fn score_batch(&self, betas: &[f64], out: &mut [f64]) {
        let p = self.dim();
        let m = betas.len() / p;
        let (design, labels) = self.data.gather(self.indices.as_deref().map(|v| v.as_slice()));
        let n = labels.len();
        let mut eta = vec![0.0; n * m];
        gemm(n, p, m, 1.0, &design, Transpose::No, betas, Transpose::Yes, 0.0, &mut eta);
        for (row, &y) in eta.chunks_exact_mut(m).zip(labels.iter()) {
            for e in row.iter_mut() {
                *e = y as f64 - sigmoid(*e);
            }
        }
        out[..m * p].copy_from_slice(betas);
        gemm(m, n, p, self.scale, &eta, Transpose::Yes, &design, Transpose::No, -self.alpha, out);
    }

    fn hessian_vec_batch(&self, betas: &[f64], vs: &[f64], out: &mut [f64]) {
        let p = self.dim();
        let m = betas.len() / p;
        let (design, labels) = self.data.gather(self.indices.as_deref().map(|v| v.as_slice()));
        let n = labels.len();
        let mut eta = vec![0.0; n * m];
        let mut t = vec![0.0; n * m];
        gemm(n, p, m, 1.0, &design, Transpose::No, betas, Transpose::Yes, 0.0, &mut eta);
        gemm(n, p, m, 1.0, &design, Transpose::No, vs, Transpose::Yes, 0.0, &mut t);
        for (ti, ei) in t.iter_mut().zip(&eta) {
            let s = sigmoid(*ei);
            *ti *= -s * (1.0 - s);
        }
        out[..m * p].copy_from_slice(vs);
        gemm(m, n, p, self.scale, &t, Transpose::Yes, &design, Transpose::No, -self.alpha, out);
    }

    fn supports_minibatch(&self) -> bool {
        true
    }

    fn subsample(&self, indices: &[usize]) -> Option<Box<dyn TargetPosterior>> {
        if indices.is_empty() {
            return None;
        }
        Some(Box::new(LogisticTarget {
            data: self.data.clone(),
            alpha: self.alpha,
            indices: Some(Arc::new(indices.to_vec())),
            scale: self.data.len() as f64 / indices.len() as f64,
        }))
    }

    fn num_datapoints(&self) -> usize {
        self.data.len()
    }
}

/// Softmax regression with a standard-normal prior on all coefficients.
/// Parameters are class-major: `(beta_1, ..., beta_R)`, each of length
/// `design_dim`.
#[derive(Clone, Debug)]
pub struct MultinomialTarget {
    data: Arc<GlmDataset>,
    classes: usize,
    indices: Option<Arc<Vec<usize>>>,
    scale: f64,
}

pub fn multinomial_target(data: Arc<GlmDataset>, classes: usize) -> Result<MultinomialTarget> {
    if classes < 2 {
        return Err(Error::config("target.classes", "need at least two classes"));
    }
    if let Some(i) = data
        .labels
        .iter()
        .position(|&l| l < 1 || l as usize > classes)
    {
        return Err(Error::Dataset(format!(
            "label {} in row {i} is outside 1..={classes}",
            data.labels[i]
        )));
    }
    Ok(MultinomialTarget {
        data,
        classes,
        indices: None,
        scale: 1.0,
    })
}

impl MultinomialTarget {
    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn dataset(&self) -> &GlmDataset {
        &self.data
    }

    /// Logits for every (datapoint, sample, class), row-major `(n, m * R)`.
    fn logits(&self, design: &[f64], n: usize, params: &[f64]) -> Vec<f64> {
        let p = self.data.design_dim();
        let cols = params.len() / p;
        let mut eta = vec![0.0; n * cols];
        gemm(n, p, cols, 1.0, design, Transpose::No, params, Transpose::Yes, 0.0, &mut eta);
        eta
    }
}

fn softmax_in_place(v: &mut [f64]) {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for x in v.iter_mut() {
        *x = (*x - m).exp();
        s += *x;
    }
    v.iter_mut().for_each(|x| *x /= s);
}

impl TargetPosterior for MultinomialTarget {
    fn name(&self) -> &str {
        "multinomial"
    }

    fn dim(&self) -> usize {
        self.classes * self.data.design_dim()
    }

    fn log_density(&self, beta: &[f64]) -> f64 {
        let (design, labels) = self.data.gather(self.indices.as_deref().map(|v| v.as_slice()));
        let eta = self.logits(&design, labels.len(), beta);
        let r = self.classes;
        let mut ll = 0.0;
        for (row, &y) in eta.chunks_exact(r).zip(labels.iter()) {
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + row.iter().map(|e| (e - m).exp()).sum::<f64>().ln();
            ll += row[y as usize - 1] - lse;
        }
        let prior: f64 = beta.iter().map(|b| b * b).sum();
        self.scale * ll - 0.5 * prior
    }

    fn score(&self, beta: &[f64], out: &mut [f64]) {
        self.score_batch(beta, out)
    }

    fn hessian_vec(&self, beta: &[f64], v: &[f64], out: &mut [f64]) {
        self.hessian_vec_batch(beta, v, out)
    }

    fn score_batch(&self, betas: &[f64], out: &mut [f64]) {
        let p = self.data.design_dim();
        let r = self.classes;
        let (design, labels) = self.data.gather(self.indices.as_deref().map(|v| v.as_slice()));
        let n = labels.len();
        let cols = betas.len() / p;
        let mut eta = self.logits(&design, n, betas);
        for (row, &y) in eta.chunks_exact_mut(cols).zip(labels.iter()) {
            for block in row.chunks_exact_mut(r) {
                softmax_in_place(block);
                block.iter_mut().for_each(|v| *v = -*v);
                block[y as usize - 1] += 1.0;
            }
        }
        out[..cols * p].copy_from_slice(betas);
        gemm(cols, n, p, self.scale, &eta, Transpose::Yes, &design, Transpose::No, -1.0, out);
    }

    fn hessian_vec_batch(&self, betas: &[f64], vs: &[f64], out: &mut [f64]) {
        let p = self.data.design_dim();
        let r = self.classes;
        let (design, labels) = self.data.gather(self.indices.as_deref().map(|v| v.as_slice()));
        let n = labels.len();
        let cols = betas.len() / p;
        let mut eta = self.logits(&design, n, betas);
        let mut t = self.logits(&design, n, vs);
        for (erow, trow) in eta.chunks_exact_mut(cols).zip(t.chunks_exact_mut(cols)) {
            for (pi, tb) in erow.chunks_exact_mut(r).zip(trow.chunks_exact_mut(r)) {
                softmax_in_place(pi);
                let pt: f64 = pi.iter().zip(tb.iter()).map(|(a, b)| a * b).sum();
                for (tk, pk) in tb.iter_mut().zip(pi.iter()) {
                    *tk = -pk * (*tk - pt);
                }
            }
        }
        out[..cols * p].copy_from_slice(vs);
        gemm(cols, n, p, self.scale, &t, Transpose::Yes, &design, Transpose::No, -1.0, out);
    }

    fn supports_minibatch(&self) -> bool {
        true
    }

    fn subsample(&self, indices: &[usize]) -> Option<Box<dyn TargetPosterior>> {
        if indices.is_empty() {
            return None;
        }
        Some(Box::new(MultinomialTarget {
            data: self.data.clone(),
            classes: self.classes,
            indices: Some(Arc::new(indices.to_vec())),
            scale: self.data.len() as f64 / indices.len() as f64,
        }))
    }

    fn num_datapoints(&self) -> usize {
        self.data.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::targets::testutil::{hvp_fd_error, score_fd_error};

    #[test]
    fn logistic_prior_only_at_origin() {
        let data = Arc::new(GlmDataset::new(&[], 3, vec![]).unwrap());
        let t = logistic_target(data, 0.01).unwrap();
        let mut s = vec![1.0; 4];
        t.score(&[0.0; 4], &mut s);
        assert_eq!(s, vec![0.0; 4]);
    }

    #[test]
    fn logistic_single_point_half() {
        // design row (1) with no covariates, y = 1, beta = 0
        let data = Arc::new(GlmDataset::new(&[], 0, vec![1]).unwrap());
        let t = logistic_target(data, 1e-300).unwrap();
        let mut s = vec![0.0];
        t.score(&[0.0], &mut s);
        assert_eq!(s, vec![0.5]);
    }

    #[test]
    fn logistic_rejects_bad_labels() {
        let data = Arc::new(GlmDataset::new(&[0.5, 1.0], 1, vec![0, 2]).unwrap());
        assert!(logistic_target(data.clone(), 0.01).is_err());
        assert!(logistic_target(Arc::new(data.binarize(2)), 0.01).is_ok());
        let ok = Arc::new(GlmDataset::new(&[0.5], 1, vec![1]).unwrap());
        assert!(logistic_target(ok, 0.0).is_err());
    }

    #[test]
    fn waveform_shaped_logistic_gradients() {
        let (data, _) = synthetic_logistic(400, 21, 11);
        let t = logistic_target(Arc::new(data), 0.01).unwrap();
        assert_eq!(t.dim(), 22);
        let mut r = rng::stream(5, 0);
        for _ in 0..5 {
            let beta: Vec<f64> = rng::normal_vec(&mut r, 22).iter().map(|v| 0.3 * v).collect();
            let v = rng::normal_vec(&mut r, 22);
            assert!(score_fd_error(&t, &beta, 1e-5) < 1e-6);
            assert!(hvp_fd_error(&t, &beta, &v, 1e-5) < 1e-6);
        }
    }

    #[test]
    fn batched_scores_match_single() {
        let (data, _) = synthetic_logistic(50, 4, 2);
        let t = logistic_target(Arc::new(data), 0.5).unwrap();
        let mut r = rng::stream(1, 0);
        let b = rng::normal_vec(&mut r, 3 * 5);
        let mut batch = vec![0.0; 15];
        t.score_batch(&b, &mut batch);
        for i in 0..3 {
            let mut s = vec![0.0; 5];
            t.score(&b[i * 5..i * 5 + 5], &mut s);
            for (a, c) in s.iter().zip(&batch[i * 5..i * 5 + 5]) {
                assert!((a - c).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn disjoint_minibatches_average_to_full_score() {
        let (data, _) = synthetic_logistic(120, 3, 9);
        let data = Arc::new(data);
        let targets: Vec<Box<dyn TargetPosterior>> = vec![
            Box::new(logistic_target(data.clone(), 0.01).unwrap()),
            Box::new(multinomial_target(Arc::new(synthetic_multinomial(120, 3, 3, 4)), 3).unwrap()),
        ];
        for t in &targets {
            let d = t.dim();
            let mut r = rng::stream(8, 0);
            let beta = rng::normal_vec(&mut r, d);
            let mut full = vec![0.0; d];
            t.score(&beta, &mut full);
            let m = 20;
            let batches = t.num_datapoints().div_ceil(m);
            let mut avg = vec![0.0; d];
            for k in 0..batches {
                let idx: Vec<usize> = (k * m..((k + 1) * m).min(t.num_datapoints())).collect();
                let view = t.subsample(&idx).unwrap();
                let mut s = vec![0.0; d];
                view.score(&beta, &mut s);
                for (a, v) in avg.iter_mut().zip(&s) {
                    *a += v / batches as f64;
                }
            }
            for (a, f) in avg.iter().zip(&full) {
                assert!((a - f).abs() <= 1e-10 * f.abs().max(1.0), "{a} vs {f}");
            }
        }
    }

    #[test]
    fn multinomial_uniform_at_zero() {
        let data = Arc::new(GlmDataset::new(&[2.0, -1.0], 2, vec![2]).unwrap());
        let t = multinomial_target(data, 3).unwrap();
        let mut s = vec![0.0; 9];
        t.score(&[0.0; 9], &mut s);
        let x = [1.0, 2.0, -1.0];
        for r in 0..3 {
            let ind = if r == 1 { 1.0 } else { 0.0 };
            for j in 0..3 {
                let want = (ind - 1.0 / 3.0) * x[j];
                assert!((s[r * 3 + j] - want).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn multinomial_two_classes_reduces_to_logistic() {
        let (bin, _) = synthetic_logistic(60, 3, 21);
        // class 1 <-> logistic y = 1, class 2 <-> y = 0
        let multi_labels: Vec<u32> = bin.labels().iter().map(|&y| if y == 1 { 1 } else { 2 }).collect();
        let mut multi = bin.clone();
        multi.labels = multi_labels;
        let lt = logistic_target(Arc::new(bin), 1e-300).unwrap();
        let mt = multinomial_target(Arc::new(multi), 2).unwrap();
        let mut r = rng::stream(2, 0);
        let beta = rng::normal_vec(&mut r, 8);
        let delta: Vec<f64> = (0..4).map(|j| beta[j] - beta[4 + j]).collect();
        let mut ms = vec![0.0; 8];
        mt.score(&beta, &mut ms);
        let mut ls = vec![0.0; 4];
        lt.score(&delta, &mut ls);
        for j in 0..4 {
            // likelihood parts: s1 + b1 = l, s2 + b2 = -l
            assert!((ms[j] + beta[j] - ls[j]).abs() < 1e-10);
            assert!((ms[4 + j] + beta[4 + j] + ls[j]).abs() < 1e-10);
        }
    }

    #[test]
    fn multinomial_desk_scale_gradients() {
        let data = Arc::new(synthetic_multinomial(500, 64, 10, 3));
        let t = multinomial_target(data, 10).unwrap();
        assert_eq!(t.dim(), 650);
        let mut r = rng::stream(4, 0);
        let beta: Vec<f64> = rng::normal_vec(&mut r, 650).iter().map(|v| 0.1 * v).collect();
        let mut s = vec![0.0; 650];
        t.score(&beta, &mut s);
        let h = 1e-5;
        for _ in 0..20 {
            let i = r.random_range(0..650);
            let mut b = beta.clone();
            b[i] += h;
            let up = t.log_density(&b);
            b[i] -= 2.0 * h;
            let dn = t.log_density(&b);
            let fd = (up - dn) / (2.0 * h);
            assert!((fd - s[i]).abs() / fd.abs().max(s[i].abs()).max(1e-3) < 1e-4);
        }
        let v = rng::normal_vec(&mut r, 650);
        assert!(hvp_fd_error(&t, &beta, &v, 1e-5) < 1e-5);
    }

    #[test]
    fn multinomial_label_range_checked() {
        let data = Arc::new(GlmDataset::new(&[1.0, 2.0], 1, vec![0, 1]).unwrap());
        assert!(multinomial_target(data, 2).is_err());
        let data = Arc::new(GlmDataset::new(&[1.0, 2.0], 1, vec![3, 1]).unwrap());
        assert!(multinomial_target(data, 2).is_err());
    }

    #[test]
    fn csv_with_and_without_header() {
        let with = "a,b,label\n1.0,2.0,1\n3.0,4.5,0\n";
        let without = "1.0,2.0,1\n3.0,4.5,0\n";
        let a = GlmDataset::from_csv_reader(with.as_bytes()).unwrap();
        let b = GlmDataset::from_csv_reader(without.as_bytes()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 2);
        assert_eq!(a.design_row(1), &[1.0, 3.0, 4.5]);
        assert_eq!(a.labels(), &[1, 0]);
        assert!(GlmDataset::from_csv_reader("1,2,1\n1,2\n".as_bytes()).is_err());
        assert!(GlmDataset::from_csv_reader("1,,1\n".as_bytes()).is_err());
        assert!(GlmDataset::from_csv_reader("1,2,0.5\n".as_bytes()).is_err());
    }
}
