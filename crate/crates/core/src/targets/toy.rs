//! Two-dimensional synthetic targets and general Gaussian mixtures.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::RngCore;

use super::TargetPosterior;
use crate::rng::fill_normal;

#[derive(Clone, Debug)]
struct Component {
    log_weight: f64,
    mean: Vec<f64>,
    /// Row-major precision matrix.
    precision: Vec<f64>,
    /// Lower Cholesky factor of the covariance, row-major.
    chol: Vec<f64>,
    log_norm: f64,
}

impl Component {
    fn new(weight: f64, mean: Vec<f64>, cov: &DMatrix<f64>) -> Self {
        let d = mean.len();
        let chol = cov.clone().cholesky().expect("covariance must be positive definite");
        let l = chol.l();
        let log_det: f64 = 2.0 * (0..d).map(|i| l[(i, i)].ln()).sum::<f64>();
        let prec = chol.inverse();
        Component {
            log_weight: weight.ln(),
            mean,
            precision: row_major(&prec),
            chol: row_major(&l),
            log_norm: -0.5 * (d as f64 * (2.0 * PI).ln() + log_det),
        }
    }

    /// `(log w + log N(x), -P (x - mean))`
    fn eval(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let d = x.len();
        let mut quad = 0.0;
        for i in 0..d {
            let mut g = 0.0;
            for j in 0..d {
                g -= self.precision[i * d + j] * (x[j] - self.mean[j]);
            }
            grad[i] = g;
            quad -= (x[i] - self.mean[i]) * g;
        }
        self.log_weight + self.log_norm - 0.5 * quad
    }
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let mut v = Vec::with_capacity(m.nrows() * m.ncols());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            v.push(m[(i, j)]);
        }
    }
    v
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Finite mixture of full-covariance Gaussians (normalised).
#[derive(Clone, Debug)]
pub struct GaussianMixture {
    name: String,
    dim: usize,
    components: Vec<Component>,
}

impl GaussianMixture {
    /// `covs` are row-major `dim x dim` matrices.
    pub fn new(name: &str, weights: &[f64], means: &[Vec<f64>], covs: &[Vec<f64>]) -> Self {
        assert!(!weights.is_empty() && weights.len() == means.len() && means.len() == covs.len());
        let dim = means[0].len();
        let total: f64 = weights.iter().sum();
        let components = weights
            .iter()
            .zip(means)
            .zip(covs)
            .map(|((&w, m), c)| {
                assert_eq!(m.len(), dim);
                let cov = DMatrix::from_row_slice(dim, dim, c);
                Component::new(w / total, m.clone(), &cov)
            })
            .collect();
        GaussianMixture {
            name: name.to_string(),
            dim,
            components,
        }
    }

    pub fn num_components(&self) -> usize {
        self.components.len()
    }

    /// Log-density, score and component responsibilities in one pass.
    fn eval(&self, x: &[f64], score: &mut [f64], grads: &mut [f64], resp: &mut [f64]) -> f64 {
        let d = self.dim;
        for (k, c) in self.components.iter().enumerate() {
            resp[k] = c.eval(x, &mut grads[k * d..(k + 1) * d]);
        }
        let lse = log_sum_exp(resp);
        score.iter_mut().for_each(|s| *s = 0.0);
        for k in 0..self.components.len() {
            resp[k] = (resp[k] - lse).exp();
            for i in 0..d {
                score[i] += resp[k] * grads[k * d + i];
            }
        }
        lse
    }
}

impl TargetPosterior for GaussianMixture {
    fn name(&self) -> &str {
        &self.name
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn log_density(&self, x: &[f64]) -> f64 {
        let mut grads = vec![0.0; self.dim * self.components.len()];
        let mut resp = vec![0.0; self.components.len()];
        let mut score = vec![0.0; self.dim];
        self.eval(x, &mut score, &mut grads, &mut resp)
    }

    fn score(&self, x: &[f64], out: &mut [f64]) {
        let mut grads = vec![0.0; self.dim * self.components.len()];
        let mut resp = vec![0.0; self.components.len()];
        self.eval(x, out, &mut grads, &mut resp);
    }

    /// `H v = sum_k r_k (-P_k v) + sum_k r_k s_k (s_k . v) - s (s . v)`
    fn hessian_vec(&self, x: &[f64], v: &[f64], out: &mut [f64]) {
        let d = self.dim;
        let nk = self.components.len();
        let mut grads = vec![0.0; d * nk];
        let mut resp = vec![0.0; nk];
        let mut score = vec![0.0; d];
        self.eval(x, &mut score, &mut grads, &mut resp);
        out.iter_mut().for_each(|o| *o = 0.0);
        for (k, c) in self.components.iter().enumerate() {
            let sk = &grads[k * d..(k + 1) * d];
            let skv: f64 = sk.iter().zip(v).map(|(a, b)| a * b).sum();
            for i in 0..d {
                let pv: f64 = (0..d).map(|j| c.precision[i * d + j] * v[j]).sum();
                out[i] += resp[k] * (sk[i] * skv - pv);
            }
        }
        let sv: f64 = score.iter().zip(v).map(|(a, b)| a * b).sum();
        for i in 0..d {
            out[i] -= score[i] * sv;
        }
    }

    fn sample_exact(&self, n: usize, rng: &mut dyn RngCore) -> Option<Vec<f64>> {
        use rand::Rng;
        let d = self.dim;
        let weights: Vec<f64> = self.components.iter().map(|c| c.log_weight.exp()).collect();
        let mut out = vec![0.0; n * d];
        let mut e = vec![0.0; d];
        for row in out.chunks_exact_mut(d) {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut k = weights.len() - 1;
            for (i, w) in weights.iter().enumerate() {
                acc += w;
                if u < acc {
                    k = i;
                    break;
                }
            }
            let c = &self.components[k];
            fill_normal(rng, &mut e);
            for i in 0..d {
                row[i] = c.mean[i] + (0..=i).map(|j| c.chol[i * d + j] * e[j]).sum::<f64>();
            }
        }
        Some(out)
    }
}

/// `1/2 N(-mu, I) + 1/2 N(mu, I)`, `mu = (2, 0)`.
pub fn multimodal_target() -> GaussianMixture {
    let eye = vec![1.0, 0.0, 0.0, 1.0];
    GaussianMixture::new(
        "multimodal",
        &[0.5, 0.5],
        &[vec![-2.0, 0.0], vec![2.0, 0.0]],
        &[eye.clone(), eye],
    )
}

/// Two centred Gaussians with correlations +0.9 and -0.9 (variance 2).
pub fn xshaped_target() -> GaussianMixture {
    GaussianMixture::new(
        "xshaped",
        &[0.5, 0.5],
        &[vec![0.0, 0.0], vec![0.0, 0.0]],
        &[vec![2.0, 1.8, 1.8, 2.0], vec![2.0, -1.8, -1.8, 2.0]],
    )
}

/// Single Gaussian; `cov` row-major.
pub fn gaussian_target(mean: Vec<f64>, cov: Vec<f64>) -> GaussianMixture {
    GaussianMixture::new("gaussian", &[1.0], &[mean], &[cov])
}

/// `x = (v1, v1^2 + v2 + 1)` with `v ~ N(0, [[1, 0.9], [0.9, 1]])`.
///
/// The map has unit Jacobian, so `log p(x) = log N(v(x); 0, Sigma)`.
#[derive(Clone, Debug)]
pub struct BananaTarget {
    precision: [f64; 4],
    chol: [f64; 4],
    log_norm: f64,
}

pub fn banana_target() -> BananaTarget {
    let rho: f64 = 0.9;
    let det = 1.0 - rho * rho;
    BananaTarget {
        precision: [1.0 / det, -rho / det, -rho / det, 1.0 / det],
        chol: [1.0, 0.0, rho, det.sqrt()],
        log_norm: -(2.0 * PI).ln() - 0.5 * det.ln(),
    }
}

impl BananaTarget {
    fn pullback(x: &[f64]) -> [f64; 2] {
        [x[0], x[1] - x[0] * x[0] - 1.0]
    }

    /// `-P v`
    fn v_grad(&self, v: &[f64; 2]) -> [f64; 2] {
        let p = &self.precision;
        [-(p[0] * v[0] + p[1] * v[1]), -(p[2] * v[0] + p[3] * v[1])]
    }
}

impl TargetPosterior for BananaTarget {
    fn name(&self) -> &str {
        "banana"
    }

    fn dim(&self) -> usize {
        2
    }

    fn log_density(&self, x: &[f64]) -> f64 {
        let v = Self::pullback(x);
        let g = self.v_grad(&v);
        self.log_norm + 0.5 * (v[0] * g[0] + v[1] * g[1])
    }

    fn score(&self, x: &[f64], out: &mut [f64]) {
        let v = Self::pullback(x);
        let g = self.v_grad(&v);
        out[0] = g[0] - 2.0 * x[0] * g[1];
        out[1] = g[1];
    }

    fn hessian_vec(&self, x: &[f64], v: &[f64], out: &mut [f64]) {
        let p = &self.precision;
        let w = Self::pullback(x);
        let g = self.v_grad(&w);
        let x1 = x[0];
        // dg_i/dx1 = -(P_i1 - 2 x1 P_i2), dg_i/dx2 = -P_i2
        let dg0 = [-(p[0] - 2.0 * x1 * p[1]), -p[1]];
        let dg1 = [-(p[2] - 2.0 * x1 * p[3]), -p[3]];
        let h00 = dg0[0] - 2.0 * g[1] - 2.0 * x1 * dg1[0];
        let h01 = dg0[1] - 2.0 * x1 * dg1[1];
        let h11 = dg1[1];
        out[0] = h00 * v[0] + h01 * v[1];
        out[1] = h01 * v[0] + h11 * v[1];
    }

    fn sample_exact(&self, n: usize, rng: &mut dyn RngCore) -> Option<Vec<f64>> {
        let c = &self.chol;
        let mut out = vec![0.0; 2 * n];
        let mut e = [0.0; 2];
        for row in out.chunks_exact_mut(2) {
            fill_normal(rng, &mut e);
            let v1 = c[0] * e[0];
            let v2 = c[2] * e[0] + c[3] * e[1];
            row[0] = v1;
            row[1] = v1 * v1 + v2 + 1.0;
        }
        Some(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use crate::targets::testutil::{hvp_fd_error, score_fd_error};
    use rand::Rng;

    #[test]
    fn banana_mode_and_density_difference() {
        let b = banana_target();
        let mut s = [0.0; 2];
        b.score(&[0.0, 1.0], &mut s);
        assert_eq!(s, [0.0, 0.0]);
        // (1, 2) pulls back to v = (1, 0); (0, 1) to v = 0
        let want = -0.5 * 1.0 / (1.0 - 0.81);
        let got = b.log_density(&[1.0, 2.0]) - b.log_density(&[0.0, 1.0]);
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        assert!(score_fd_error(&b, &[1.0, 2.0], 1e-5) < 1e-6);
    }

    #[test]
    fn mixtures_symmetric_points() {
        let mut s = [1.0; 2];
        multimodal_target().score(&[0.0, 0.0], &mut s);
        assert!(s.iter().all(|v| v.abs() < 1e-15));
        xshaped_target().score(&[0.0, 0.0], &mut s);
        assert!(s.iter().all(|v| v.abs() < 1e-15));
        assert!(score_fd_error(&multimodal_target(), &[2.0, 0.0], 1e-5) < 1e-6);
    }

    #[test]
    fn scores_and_hessians_match_finite_differences() {
        let targets: Vec<Box<dyn TargetPosterior>> = vec![
            Box::new(banana_target()),
            Box::new(multimodal_target()),
            Box::new(xshaped_target()),
            Box::new(gaussian_target(vec![1.0, -1.0, 0.5], vec![2.0, 0.3, 0.0, 0.3, 1.0, 0.2, 0.0, 0.2, 0.5])),
        ];
        let mut r = rng::stream(42, 0);
        for t in &targets {
            for _ in 0..100 {
                let x: Vec<f64> = (0..t.dim()).map(|_| r.random_range(-3.0..3.0)).collect();
                let v = rng::normal_vec(&mut r, t.dim());
                assert!(score_fd_error(t.as_ref(), &x, 1e-5) < 1e-4, "{} at {x:?}", t.name());
                assert!(hvp_fd_error(t.as_ref(), &x, &v, 1e-5) < 1e-5, "{} at {x:?}", t.name());
            }
        }
    }

    #[test]
    fn far_points_do_not_overflow() {
        for t in [multimodal_target(), xshaped_target()] {
            for x in [[1e3, -1e3], [0.0, 1e3], [-7e2, 7e2]] {
                let mut s = [0.0; 2];
                t.score(&x, &mut s);
                assert!(t.log_density(&x).is_finite());
                assert!(s.iter().all(|v| v.is_finite()));
            }
        }
    }

    #[test]
    fn gaussian_density_is_normalised() {
        let g = gaussian_target(vec![0.0, 0.0], vec![1.0, 0.0, 0.0, 1.0]);
        assert!((g.log_density(&[0.0, 0.0]) + (2.0 * PI).ln()).abs() < 1e-14);
    }

    #[test]
    fn exact_samples_have_target_moments() {
        let mut r = rng::stream(3, 0);
        let n = 200_000;
        let xs = xshaped_target().sample_exact(n, &mut r).unwrap();
        let var0 = xs.chunks(2).map(|p| p[0] * p[0]).sum::<f64>() / n as f64;
        let cov = xs.chunks(2).map(|p| p[0] * p[1]).sum::<f64>() / n as f64;
        assert!((var0 - 2.0).abs() < 0.03);
        assert!(cov.abs() < 0.03);
        let bs = banana_target().sample_exact(n, &mut r).unwrap();
        // E[x2] = E[v1^2] + 1 = 2
        let m2 = bs.chunks(2).map(|p| p[1]).sum::<f64>() / n as f64;
        assert!((m2 - 2.0).abs() < 0.02);
    }
}
