//! The semi-implicit family: `z ~ N(0, I)`, `x | z ~ N(mu(z), diag(sigma^2))`
//! with `mu` an MLP and `sigma = exp(log_sigma)` a free vector.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::diffcore::{Activation, Activations, GradRequest, MlpParams, MlpSpec, Network};
use crate::rng;
use crate::{Error, Result};

const CHECKPOINT_FORMAT: &str = "sivism-family";
const CHECKPOINT_VERSION: u32 = 1;

/// Distribution of the mixing variable. Only the fixed standard normal is
/// provided; learnable mixing layers are out of scope.
pub trait Mixing {
    fn dim(&self) -> usize;
    fn sample(&self, rng: &mut dyn RngCore, out: &mut [f64]);
}

#[derive(Clone, Copy, Debug)]
pub struct StandardNormalMixing {
    pub dim: usize,
}

impl Mixing for StandardNormalMixing {
    fn dim(&self) -> usize {
        self.dim
    }

    fn sample(&self, rng: &mut dyn RngCore, out: &mut [f64]) {
        rng::fill_normal(rng, out);
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SemiImplicitFamily {
    pub mu_net: Network,
    pub log_sigma: Vec<f64>,
}

/// A batch of reparameterised draws. All arrays are row-major with one row
/// per sample; the forward activations of `mu` are kept for backprop.
#[derive(Clone, Debug)]
pub struct ReparamBatch {
    pub m: usize,
    pub z: Vec<f64>,
    pub eps: Vec<f64>,
    pub x: Vec<f64>,
    pub mu_acts: Activations,
}

/// One draw viewed out of a [`ReparamBatch`].
#[derive(Clone, Copy, Debug)]
pub struct ReparamSample<'a> {
    pub x: &'a [f64],
    pub z: &'a [f64],
    pub eps: &'a [f64],
}

impl ReparamBatch {
    pub fn len(&self) -> usize {
        self.m
    }

    pub fn is_empty(&self) -> bool {
        self.m == 0
    }

    pub fn sample(&self, i: usize) -> ReparamSample<'_> {
        let d = self.x.len() / self.m;
        let k = self.z.len() / self.m;
        ReparamSample {
            x: &self.x[i * d..(i + 1) * d],
            z: &self.z[i * k..(i + 1) * k],
            eps: &self.eps[i * d..(i + 1) * d],
        }
    }

    pub fn mu(&self) -> &[f64] {
        self.mu_acts.output()
    }
}

/// Gradient with respect to the variational parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct PhiGrad {
    pub mu: Vec<f64>,
    pub log_sigma: Vec<f64>,
}

impl PhiGrad {
    pub fn flat(&self) -> Vec<f64> {
        let mut v = self.mu.clone();
        v.extend_from_slice(&self.log_sigma);
        v
    }

    pub fn is_finite(&self) -> bool {
        self.mu.iter().chain(&self.log_sigma).all(|v| v.is_finite())
    }
}

/// Architecture of the variational family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilySpec {
    /// Widths of `mu`, mixing dimension first, `x_dim` last.
    pub mu_widths: Vec<usize>,
    #[serde(default)]
    pub activation: Activation,
    #[serde(default = "default_log_sigma_init")]
    pub log_sigma_init: f64,
}

fn default_log_sigma_init() -> f64 {
    -1.0
}

impl FamilySpec {
    pub fn new(mu_widths: Vec<usize>) -> Self {
        FamilySpec {
            mu_widths,
            activation: Activation::Relu,
            log_sigma_init: default_log_sigma_init(),
        }
    }

    /// `z_dim = 3`, `mu` widths `[3, 50, 50, x_dim]`.
    pub fn toy(x_dim: usize) -> Self {
        Self::new(vec![3, 50, 50, x_dim])
    }

    /// `z_dim = 10`, `mu` widths `[10, 100, 100, x_dim]`.
    pub fn regression(x_dim: usize) -> Self {
        Self::new(vec![10, 100, 100, x_dim])
    }

    pub fn build<R: rand::Rng + ?Sized>(&self, x_dim: usize, rng: &mut R) -> Result<SemiImplicitFamily> {
        let spec = MlpSpec::new(self.mu_widths.clone(), self.activation)?;
        if spec.output_width() != x_dim {
            return Err(Error::config(
                "family.mu_widths",
                format!("last width {} must equal the target dimension {x_dim}", spec.output_width()),
            ));
        }
        Ok(SemiImplicitFamily::init(spec, self.log_sigma_init, rng))
    }
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    family: SemiImplicitFamily,
}

impl SemiImplicitFamily {
    pub fn new(mu_net: Network, log_sigma: Vec<f64>) -> Result<Self> {
        if mu_net.spec.output_width() != log_sigma.len() {
            return Err(Error::DimensionMismatch {
                context: "log_sigma length vs mu output width",
                expected: mu_net.spec.output_width(),
                actual: log_sigma.len(),
            });
        }
        Ok(SemiImplicitFamily { mu_net, log_sigma })
    }

    pub fn init<R: rand::Rng + ?Sized>(mu_spec: MlpSpec, log_sigma_init: f64, rng: &mut R) -> Self {
        let x_dim = mu_spec.output_width();
        SemiImplicitFamily {
            mu_net: Network::init(mu_spec, rng),
            log_sigma: vec![log_sigma_init; x_dim],
        }
    }

    /// `mu(z) = A z + b` as a single linear layer; `a` is `(x_dim, z_dim)`.
    pub fn linear(a: &DMatrix<f64>, b: &[f64], log_sigma: Vec<f64>) -> Result<Self> {
        let (x_dim, z_dim) = a.shape();
        let spec = MlpSpec::new(vec![z_dim, x_dim], Activation::Relu)?;
        let mut params = Vec::with_capacity(spec.num_params());
        for i in 0..z_dim {
            for j in 0..x_dim {
                params.push(a[(j, i)]);
            }
        }
        params.extend_from_slice(b);
        Self::new(Network::new(spec, MlpParams(params))?, log_sigma)
    }

    pub fn z_dim(&self) -> usize {
        self.mu_net.spec.input_width()
    }

    pub fn x_dim(&self) -> usize {
        self.mu_net.spec.output_width()
    }

    pub fn sigma(&self) -> Vec<f64> {
        self.log_sigma.iter().map(|s| s.exp()).collect()
    }

    pub fn mixing(&self) -> StandardNormalMixing {
        StandardNormalMixing { dim: self.z_dim() }
    }

    /// Draws `m` mixing variables, then `m` noise vectors, and composes
    /// `x = mu(z) + sigma * eps`.
    pub fn sample_batch<R: RngCore + ?Sized>(&self, m: usize, rng: &mut R) -> Result<ReparamBatch> {
        let (k, d) = (self.z_dim(), self.x_dim());
        let z = rng::normal_vec(rng, m * k);
        let eps = rng::normal_vec(rng, m * d);
        self.compose(z, eps)
    }

    /// Builds a batch from given mixing and noise draws.
    pub fn compose(&self, z: Vec<f64>, eps: Vec<f64>) -> Result<ReparamBatch> {
        let (k, d) = (self.z_dim(), self.x_dim());
        let m = z.len() / k;
        if z.len() != m * k || eps.len() != m * d {
            return Err(Error::DimensionMismatch {
                context: "reparameterisation noise",
                expected: m * d,
                actual: eps.len(),
            });
        }
        let mu_acts = self.mu_net.forward_batch(&z, m)?;
        let sigma = self.sigma();
        let mut x = mu_acts.output().to_vec();
        for (row, e) in x.chunks_exact_mut(d).zip(eps.chunks_exact(d)) {
            for ((xi, ei), si) in row.iter_mut().zip(e).zip(&sigma) {
                *xi += si * ei;
            }
        }
        Ok(ReparamBatch { m, z, eps, x, mu_acts })
    }

    /// `n` draws of `x` only, generated in chunks to bound memory.
    pub fn draw<R: RngCore + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<f64>> {
        const CHUNK: usize = 4096;
        let mut out = Vec::with_capacity(n * self.x_dim());
        let mut left = n;
        while left > 0 {
            let m = left.min(CHUNK);
            out.extend(self.sample_batch(m, rng)?.x);
            left -= m;
        }
        Ok(out)
    }

    /// `grad_x log q(x | z) = -eps / sigma`, row-major over the batch.
    pub fn conditional_score(&self, batch: &ReparamBatch) -> Vec<f64> {
        let inv: Vec<f64> = self.log_sigma.iter().map(|s| (-s).exp()).collect();
        let d = self.x_dim();
        let mut out = batch.eps.clone();
        for row in out.chunks_exact_mut(d) {
            for (v, i) in row.iter_mut().zip(&inv) {
                *v *= -i;
            }
        }
        out
    }

    /// Chain rule from `dL/dx` and `dL/d(conditional score)` to the
    /// parameters. The sample path runs through `x = mu(z) + sigma * eps`,
    /// the score path through `-exp(-log_sigma) * eps`.
    pub fn grad_path(&self, batch: &ReparamBatch, upstream_x: &[f64], upstream_score: &[f64]) -> Result<PhiGrad> {
        let d = self.x_dim();
        for (len, ctx) in [(upstream_x.len(), "upstream_x"), (upstream_score.len(), "upstream_score")] {
            if len != batch.m * d {
                return Err(Error::DimensionMismatch {
                    context: ctx,
                    expected: batch.m * d,
                    actual: len,
                });
            }
        }
        let mu = self
            .mu_net
            .backward_batch(&batch.mu_acts, upstream_x, GradRequest::PARAMS)?
            .params
            .expect("requested");
        let sigma = self.sigma();
        let mut log_sigma = vec![0.0; d];
        for ((ux, us), e) in upstream_x
            .chunks_exact(d)
            .zip(upstream_score.chunks_exact(d))
            .zip(batch.eps.chunks_exact(d))
        {
            for j in 0..d {
                log_sigma[j] += ux[j] * sigma[j] * e[j] + us[j] * e[j] / sigma[j];
            }
        }
        Ok(PhiGrad { mu, log_sigma })
    }

    pub fn num_phi(&self) -> usize {
        self.mu_net.params.len() + self.log_sigma.len()
    }

    /// `(mu params, log_sigma)` concatenated.
    pub fn phi(&self) -> Vec<f64> {
        let mut v = self.mu_net.params.0.clone();
        v.extend_from_slice(&self.log_sigma);
        v
    }

    pub fn set_phi(&mut self, phi: &[f64]) -> Result<()> {
        if phi.len() != self.num_phi() {
            return Err(Error::DimensionMismatch {
                context: "phi vector",
                expected: self.num_phi(),
                actual: phi.len(),
            });
        }
        let p = self.mu_net.params.len();
        self.mu_net.params.copy_from_slice(&phi[..p]);
        self.log_sigma.copy_from_slice(&phi[p..]);
        Ok(())
    }

    /// `(A, b)` when `mu` is a single affine layer.
    pub fn linear_map(&self) -> Option<(DMatrix<f64>, Vec<f64>)> {
        if self.mu_net.spec.depth() != 1 {
            return None;
        }
        let (k, d) = (self.z_dim(), self.x_dim());
        let w = &self.mu_net.params;
        let a = DMatrix::from_fn(d, k, |j, i| w[i * d + j]);
        Some((a, w[k * d..].to_vec()))
    }

    /// Closed-form marginal for a linear `mu`.
    pub fn linear_marginal(&self) -> Result<LinearMarginal> {
        let (a, b) = self
            .linear_map()
            .ok_or_else(|| Error::Invalid("mu network is not a single affine layer".into()))?;
        LinearMarginal::new(&a, &b, &self.sigma())
    }

    pub fn to_json(&self) -> Result<String> {
        let ck = Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            family: self.clone(),
        };
        Ok(serde_json::to_string_pretty(&ck)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_str(s)?;
        if ck.format != CHECKPOINT_FORMAT || ck.version != CHECKPOINT_VERSION {
            return Err(Error::Invalid(format!(
                "unsupported checkpoint {} v{}",
                ck.format, ck.version
            )));
        }
        Self::new(ck.family.mu_net, ck.family.log_sigma)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// `N(b, A A^T + diag(sigma^2))`, the marginal of a linear-mu family.
#[derive(Clone, Debug)]
pub struct LinearMarginal {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
}

impl LinearMarginal {
    pub fn new(a: &DMatrix<f64>, b: &[f64], sigma: &[f64]) -> Result<Self> {
        let d = a.nrows();
        if sigma.len() != d || b.len() != d {
            return Err(Error::DimensionMismatch {
                context: "linear marginal",
                expected: d,
                actual: sigma.len(),
            });
        }
        let mut cov = a * a.transpose();
        for j in 0..d {
            cov[(j, j)] += sigma[j] * sigma[j];
        }
        let chol = cov
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Singular("marginal covariance A A^T + diag(sigma^2)".into()))?;
        let l = chol.l();
        let ratio = (0..d).map(|i| l[(i, i)]).fold(f64::INFINITY, f64::min)
            / (0..d).map(|i| l[(i, i)]).fold(0.0, f64::max);
        if !(ratio > 1e-8) {
            return Err(Error::Singular("marginal covariance is ill-conditioned".into()));
        }
        Ok(LinearMarginal {
            mean: DVector::from_column_slice(b),
            cov,
            chol,
        })
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn precision(&self) -> DMatrix<f64> {
        self.chol.inverse()
    }

    pub fn score(&self, x: &[f64], out: &mut [f64]) {
        let r = DVector::from_column_slice(x) - &self.mean;
        let s = self.chol.solve(&r);
        for (o, v) in out.iter_mut().zip(s.iter()) {
            *o = -v;
        }
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        let d = self.mean.len() as f64;
        let r = DVector::from_column_slice(x) - &self.mean;
        let q = r.dot(&self.chol.solve(&r));
        let logdet: f64 = 2.0 * self.chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        -0.5 * (q + logdet + d * (2.0 * std::f64::consts::PI).ln())
    }
}

/// `grad log q(x)` for `q = N(0, A A^T + diag(sigma^2))`.
pub fn oracle_marginal_score(a: &DMatrix<f64>, sigma: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    let lm = LinearMarginal::new(a, &vec![0.0; a.nrows()], sigma)?;
    let mut out = vec![0.0; x.len()];
    lm.score(x, &mut out);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gaussian_logpdf(x: &[f64], mu: &[f64], sigma: &[f64]) -> f64 {
        x.iter()
            .zip(mu)
            .zip(sigma)
            .map(|((x, m), s)| {
                let u = (x - m) / s;
                -0.5 * u * u - s.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
            })
            .sum()
    }

    fn zero_family(d: usize, log_sigma: f64) -> SemiImplicitFamily {
        let spec = MlpSpec::new(vec![d, d], Activation::Relu).unwrap();
        SemiImplicitFamily::new(Network::zeros(spec), vec![log_sigma; d]).unwrap()
    }

    #[test]
    fn reparam_identity_exact() {
        let spec = MlpSpec::new(vec![3, 8, 2], Activation::Tanh).unwrap();
        let mut r = rng::stream(1, 0);
        let fam = SemiImplicitFamily::init(spec, -1.0, &mut r);
        let b = fam.sample_batch(7, &mut r).unwrap();
        let sig = fam.sigma();
        for i in 0..7 {
            let s = b.sample(i);
            let mu = fam.mu_net.forward(s.z).unwrap();
            for j in 0..2 {
                assert_eq!(s.x[j], mu[j] + sig[j] * s.eps[j]);
            }
        }
    }

    #[test]
    fn standard_normal_mean() {
        let fam = zero_family(2, 0.0);
        let mut r = rng::stream(2, 0);
        let x = fam.draw(1_000_000, &mut r).unwrap();
        for j in 0..2 {
            let m: f64 = x.iter().skip(j).step_by(2).sum::<f64>() / 1e6;
            assert!(m.abs() < 4e-3, "{m}");
        }
    }

    #[test]
    fn total_variance_on_linear_mu() {
        let a = DMatrix::from_row_slice(2, 2, &[1.5, 0.0, 0.3, -0.7]);
        let fam = SemiImplicitFamily::linear(&a, &[0.0, 0.0], vec![0.0, 0.0]).unwrap();
        let mut r = rng::stream(3, 0);
        let n = 200_000;
        let x = fam.draw(n, &mut r).unwrap();
        for j in 0..2 {
            let v: f64 = x.iter().skip(j).step_by(2).map(|v| v * v).sum::<f64>() / n as f64;
            let want = a.row(j).iter().map(|v| v * v).sum::<f64>() + 1.0;
            // se of a variance estimate is about want * sqrt(2/n)
            assert!((v - want).abs() < 4.0 * want * (2.0 / n as f64).sqrt(), "{v} vs {want}");
        }
    }

    #[test]
    fn seeded_batches_identical() {
        let spec = MlpSpec::new(vec![3, 5, 2], Activation::Relu).unwrap();
        let fam = SemiImplicitFamily::init(spec, -1.0, &mut rng::stream(9, 3));
        let a = fam.sample_batch(10, &mut rng::stream(4, 0)).unwrap();
        let b = fam.sample_batch(10, &mut rng::stream(4, 0)).unwrap();
        assert_eq!(a.x, b.x);
        assert_eq!(a.z, b.z);
    }

    #[test]
    fn conditional_score_cases() {
        let fam = zero_family(2, 0.0);
        let b = fam.compose(vec![0.0, 0.0, 0.0, 0.0], vec![0.0, 0.0, 1.0, -2.0]).unwrap();
        assert_eq!(fam.conditional_score(&b), vec![-0.0, -0.0, -1.0, 2.0]);
    }

    #[test]
    fn conditional_score_matches_fd() {
        let mut r = rng::stream(5, 0);
        let mut fam = zero_family(3, 0.0);
        fam.log_sigma = rng::normal_vec(&mut r, 3);
        let b = fam.sample_batch(4, &mut r).unwrap();
        let cs = fam.conditional_score(&b);
        let sig = fam.sigma();
        let h = 1e-6;
        for i in 0..4 {
            let s = b.sample(i);
            let mu = &b.mu()[i * 3..i * 3 + 3];
            for j in 0..3 {
                let mut xp = s.x.to_vec();
                xp[j] += h;
                let up = gaussian_logpdf(&xp, mu, &sig);
                xp[j] -= 2.0 * h;
                let dn = gaussian_logpdf(&xp, mu, &sig);
                let fd = (up - dn) / (2.0 * h);
                let an = cs[i * 3 + j];
                assert!((fd - an).abs() / an.abs().max(1e-2) < 1e-6, "{fd} vs {an}");
            }
        }
    }

    #[test]
    fn oracle_score_cases() {
        let x = [0.7, -1.2];
        let s = oracle_marginal_score(&DMatrix::zeros(2, 3), &[1.0, 1.0], &x).unwrap();
        assert_eq!(s, vec![-0.7, 1.2]);
        let s = oracle_marginal_score(&DMatrix::identity(2, 2), &[1.0, 1.0], &x).unwrap();
        assert!((s[0] + 0.35).abs() < 1e-15 && (s[1] - 0.6).abs() < 1e-15);
        assert!(matches!(
            oracle_marginal_score(&DMatrix::zeros(2, 2), &[0.0, 1.0], &x),
            Err(Error::Singular(_))
        ));
    }

    #[test]
    fn oracle_score_matches_fd() {
        let mut r = rng::stream(6, 0);
        let a = DMatrix::from_vec(3, 2, rng::normal_vec(&mut r, 6));
        let sigma = [0.5, 1.1, 0.8];
        let lm = LinearMarginal::new(&a, &[0.0; 3], &sigma).unwrap();
        let x = rng::normal_vec(&mut r, 3);
        let s = oracle_marginal_score(&a, &sigma, &x).unwrap();
        let h = 1e-5;
        for j in 0..3 {
            let mut xp = x.clone();
            xp[j] += h;
            let up = lm.log_density(&xp);
            xp[j] -= 2.0 * h;
            let fd = (up - lm.log_density(&xp)) / (2.0 * h);
            assert!((fd - s[j]).abs() < 1e-8);
        }
    }

    #[test]
    fn grad_path_zero_and_score_path() {
        let mut r = rng::stream(7, 0);
        let spec = MlpSpec::new(vec![2, 4, 2], Activation::Tanh).unwrap();
        let mut fam = SemiImplicitFamily::init(spec, -0.3, &mut r);
        fam.log_sigma = vec![-0.3, 0.4];
        let b = fam.sample_batch(1, &mut r).unwrap();
        let g = fam.grad_path(&b, &[0.0; 2], &[0.0; 2]).unwrap();
        assert!(g.flat().iter().all(|v| *v == 0.0));
        let g = fam.grad_path(&b, &[0.0; 2], &[1.0, 1.0]).unwrap();
        assert!(g.mu.iter().all(|v| *v == 0.0));
        for j in 0..2 {
            let want = (-fam.log_sigma[j]).exp() * b.eps[j];
            assert!((g.log_sigma[j] - want).abs() < 1e-15);
        }
        assert!(fam.grad_path(&b, &[0.0; 3], &[0.0; 2]).is_err());
    }

    #[test]
    fn linear_map_round_trip() {
        let mut r = rng::stream(8, 0);
        let a = DMatrix::from_vec(2, 3, rng::normal_vec(&mut r, 6));
        let fam = SemiImplicitFamily::linear(&a, &[0.5, -0.5], vec![0.0, 0.0]).unwrap();
        let (a2, b2) = fam.linear_map().unwrap();
        assert_eq!(a, a2);
        assert_eq!(b2, vec![0.5, -0.5]);
        let z = [0.3, -1.0, 2.0];
        let mu = fam.mu_net.forward(&z).unwrap();
        let want = &a * DVector::from_column_slice(&z);
        assert!((mu[0] - want[0] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn expected_marginal_score_norm() {
        // E ||grad log q||^2 = tr(Sigma^-1) for a Gaussian marginal
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, -0.3, 0.8]);
        let fam = SemiImplicitFamily::linear(&a, &[0.0, 0.0], vec![-0.5, 0.2]).unwrap();
        let lm = fam.linear_marginal().unwrap();
        let n = 100_000;
        let x = fam.draw(n, &mut rng::stream(10, 0)).unwrap();
        let mut s = [0.0; 2];
        let vals: Vec<f64> = x
            .chunks_exact(2)
            .map(|xi| {
                lm.score(xi, &mut s);
                s[0] * s[0] + s[1] * s[1]
            })
            .collect();
        let (mean, se) = mean_se(&vals);
        let want = lm.precision().trace();
        assert!((mean - want).abs() < 3.0 * se, "{mean} vs {want} (se {se})");
    }

    #[test]
    fn conditional_and_marginal_scores_agree_in_expectation() {
        let a = DMatrix::from_row_slice(2, 2, &[0.8, -0.4, 0.2, 1.1]);
        let fam = SemiImplicitFamily::linear(&a, &[0.0, 0.0], vec![-0.7, -0.2]).unwrap();
        let lm = fam.linear_marginal().unwrap();
        let fspec = MlpSpec::new(vec![2, 16, 2], Activation::Tanh).unwrap();
        let f = Network::init(fspec, &mut rng::stream(11, 3));
        let n = 100_000;
        let b = fam.sample_batch(n, &mut rng::stream(11, 0)).unwrap();
        let fx = f.forward_batch(&b.x, n).unwrap();
        let cs = fam.conditional_score(&b);
        let mut ms = [0.0; 2];
        let diffs: Vec<f64> = (0..n)
            .map(|i| {
                lm.score(&b.x[2 * i..2 * i + 2], &mut ms);
                let fo = &fx.output()[2 * i..2 * i + 2];
                fo[0] * (cs[2 * i] - ms[0]) + fo[1] * (cs[2 * i + 1] - ms[1])
            })
            .collect();
        let (mean, se) = mean_se(&diffs);
        assert!(mean.abs() < 3.0 * se, "{mean} (se {se})");
    }

    #[test]
    fn checkpoint_round_trip_bit_exact() {
        let spec = MlpSpec::new(vec![3, 7, 2], Activation::Tanh).unwrap();
        let mut fam = SemiImplicitFamily::init(spec, -1.0, &mut rng::stream(12, 0));
        fam.log_sigma = vec![0.1 + 1e-17, -std::f64::consts::PI];
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("family.json");
        fam.save(&p).unwrap();
        let back = SemiImplicitFamily::load(&p).unwrap();
        assert_eq!(back, fam);
        let bits = |f: &SemiImplicitFamily| f.phi().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&back), bits(&fam));
        let bad = fam.to_json().unwrap().replace("\"version\": 1", "\"version\": 9");
        assert!(SemiImplicitFamily::from_json(&bad).is_err());
    }

    fn mean_se(v: &[f64]) -> (f64, f64) {
        let n = v.len() as f64;
        let m = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
        (m, (var / n).sqrt())
    }
}
