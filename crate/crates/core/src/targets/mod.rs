//! Unnormalised target posteriors.
//!
//! Every target exposes its log-density, its score `S(x) = grad log p(D, x)` and
//! Hessian-vector products `H(x) v`; the latter are needed because the
//! variational objective differentiates `f(x)^T S(x)` with respect to `x`.

mod anneal;
mod glm;
mod toy;

use rand::RngCore;

pub use anneal::{annealed, AnnealSchedule, Tempered};
pub use glm::{
    logistic_target, multinomial_target, synthetic_logistic, synthetic_multinomial, GlmDataset,
    LogisticTarget, MultinomialTarget,
};
pub use toy::{banana_target, gaussian_target, multimodal_target, xshaped_target, BananaTarget, GaussianMixture};

pub trait TargetPosterior: Send + Sync {
    fn name(&self) -> &str;

    fn dim(&self) -> usize;

    fn log_density(&self, x: &[f64]) -> f64;

    fn score(&self, x: &[f64], out: &mut [f64]);

    /// `out = H(x) v` with `H` the Hessian of the log-density.
    fn hessian_vec(&self, x: &[f64], v: &[f64], out: &mut [f64]);

    /// Row-major `(batch, dim)` version of [`TargetPosterior::score`].
    fn score_batch(&self, xs: &[f64], out: &mut [f64]) {
        let d = self.dim();
        for (x, o) in xs.chunks_exact(d).zip(out.chunks_exact_mut(d)) {
            self.score(x, o);
        }
    }

    fn hessian_vec_batch(&self, xs: &[f64], vs: &[f64], out: &mut [f64]) {
        let d = self.dim();
        for ((x, v), o) in xs.chunks_exact(d).zip(vs.chunks_exact(d)).zip(out.chunks_exact_mut(d)) {
            self.hessian_vec(x, v, o);
        }
    }

    /// Exact i.i.d. draws, when the target admits them.
    fn sample_exact(&self, _n: usize, _rng: &mut dyn RngCore) -> Option<Vec<f64>> {
        None
    }

    fn supports_minibatch(&self) -> bool {
        false
    }

    /// View restricted to the given datapoints with the likelihood rescaled by
    /// `N / indices.len()`. The prior enters once.
    fn subsample(&self, _indices: &[usize]) -> Option<Box<dyn TargetPosterior>> {
        None
    }

    fn num_datapoints(&self) -> usize {
        0
    }
}

/// Draws a minibatch without replacement and returns the rescaled view, or
/// `None` if the target has no data to subsample.
pub fn minibatch(
    target: &dyn TargetPosterior,
    size: usize,
    rng: &mut dyn RngCore,
) -> Option<Box<dyn TargetPosterior>> {
    if !target.supports_minibatch() || size == 0 || size >= target.num_datapoints() {
        return None;
    }
    let idx = rand::seq::index::sample(rng, target.num_datapoints(), size).into_vec();
    target.subsample(&idx)
}

impl<T: TargetPosterior + ?Sized> TargetPosterior for &T {
    fn name(&self) -> &str {
        (**self).name()
    }
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn log_density(&self, x: &[f64]) -> f64 {
        (**self).log_density(x)
    }
    fn score(&self, x: &[f64], out: &mut [f64]) {
        (**self).score(x, out)
    }
    fn hessian_vec(&self, x: &[f64], v: &[f64], out: &mut [f64]) {
        (**self).hessian_vec(x, v, out)
    }
    fn score_batch(&self, xs: &[f64], out: &mut [f64]) {
        (**self).score_batch(xs, out)
    }
    fn hessian_vec_batch(&self, xs: &[f64], vs: &[f64], out: &mut [f64]) {
        (**self).hessian_vec_batch(xs, vs, out)
    }
    fn sample_exact(&self, n: usize, rng: &mut dyn RngCore) -> Option<Vec<f64>> {
        (**self).sample_exact(n, rng)
    }
    fn supports_minibatch(&self) -> bool {
        (**self).supports_minibatch()
    }
    fn subsample(&self, indices: &[usize]) -> Option<Box<dyn TargetPosterior>> {
        (**self).subsample(indices)
    }
    fn num_datapoints(&self) -> usize {
        (**self).num_datapoints()
    }
}

impl<T: TargetPosterior + ?Sized> TargetPosterior for Box<T> {
    fn name(&self) -> &str {
        (**self).name()
    }
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn log_density(&self, x: &[f64]) -> f64 {
        (**self).log_density(x)
    }
    fn score(&self, x: &[f64], out: &mut [f64]) {
        (**self).score(x, out)
    }
    fn hessian_vec(&self, x: &[f64], v: &[f64], out: &mut [f64]) {
        (**self).hessian_vec(x, v, out)
    }
    fn score_batch(&self, xs: &[f64], out: &mut [f64]) {
        (**self).score_batch(xs, out)
    }
    fn hessian_vec_batch(&self, xs: &[f64], vs: &[f64], out: &mut [f64]) {
        (**self).hessian_vec_batch(xs, vs, out)
    }
    fn sample_exact(&self, n: usize, rng: &mut dyn RngCore) -> Option<Vec<f64>> {
        (**self).sample_exact(n, rng)
    }
    fn supports_minibatch(&self) -> bool {
        (**self).supports_minibatch()
    }
    fn subsample(&self, indices: &[usize]) -> Option<Box<dyn TargetPosterior>> {
        (**self).subsample(indices)
    }
    fn num_datapoints(&self) -> usize {
        (**self).num_datapoints()
    }
}

#[cfg(test)]
pub(crate) mod testutil {
    use super::TargetPosterior;

    /// Worst relative error between the analytic score and central differences
    /// of the log-density.
    pub fn score_fd_error(t: &dyn TargetPosterior, x: &[f64], h: f64) -> f64 {
        let d = t.dim();
        let mut s = vec![0.0; d];
        t.score(x, &mut s);
        let mut worst: f64 = 0.0;
        for i in 0..d {
            let mut xp = x.to_vec();
            xp[i] += h;
            let up = t.log_density(&xp);
            xp[i] -= 2.0 * h;
            let dn = t.log_density(&xp);
            let fd = (up - dn) / (2.0 * h);
            let err = (fd - s[i]).abs() / fd.abs().max(s[i].abs()).max(1e-3);
            worst = worst.max(err);
        }
        worst
    }

    /// Worst relative error between `H v` and central differences of the score.
    pub fn hvp_fd_error(t: &dyn TargetPosterior, x: &[f64], v: &[f64], h: f64) -> f64 {
        let d = t.dim();
        let mut hv = vec![0.0; d];
        t.hessian_vec(x, v, &mut hv);
        let xp: Vec<f64> = x.iter().zip(v).map(|(a, b)| a + h * b).collect();
        let xm: Vec<f64> = x.iter().zip(v).map(|(a, b)| a - h * b).collect();
        let (mut sp, mut sm) = (vec![0.0; d], vec![0.0; d]);
        t.score(&xp, &mut sp);
        t.score(&xm, &mut sm);
        let scale = hv.iter().fold(1e-3f64, |m, v| m.max(v.abs()));
        (0..d)
            .map(|i| ((sp[i] - sm[i]) / (2.0 * h) - hv[i]).abs() / scale)
            .fold(0.0, f64::max)
    }
}
