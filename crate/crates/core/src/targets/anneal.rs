use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::TargetPosterior;
use crate::{Error, Result};

/// Inverse temperature rising linearly from `beta0` to 1 over `ramp_iterations`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnealSchedule {
    pub beta0: f64,
    pub ramp_iterations: usize,
}

impl AnnealSchedule {
    pub fn new(beta0: f64, ramp_iterations: usize) -> Result<Self> {
        let s = AnnealSchedule {
            beta0,
            ramp_iterations,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta0 > 0.0 && self.beta0 <= 1.0) {
            return Err(Error::config("anneal.beta0", "must lie in (0, 1]"));
        }
        Ok(())
    }

    pub fn beta(&self, t: usize) -> f64 {
        if t >= self.ramp_iterations {
            return 1.0;
        }
        self.beta0 + (1.0 - self.beta0) * t as f64 / self.ramp_iterations as f64
    }
}

/// The whole unnormalised posterior raised to the power `beta`.
pub struct Tempered<T> {
    inner: T,
    beta: f64,
}

impl<T: TargetPosterior> Tempered<T> {
    pub fn new(inner: T, beta: f64) -> Self {
        Tempered { inner, beta }
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }
}

pub fn annealed<T: TargetPosterior>(target: T, schedule: &AnnealSchedule, t: usize) -> Tempered<T> {
    Tempered::new(target, schedule.beta(t))
}

impl<T: TargetPosterior> TargetPosterior for Tempered<T> {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn log_density(&self, x: &[f64]) -> f64 {
        self.beta * self.inner.log_density(x)
    }

    fn score(&self, x: &[f64], out: &mut [f64]) {
        self.inner.score(x, out);
        if self.beta != 1.0 {
            out.iter_mut().for_each(|v| *v *= self.beta);
        }
    }

    fn hessian_vec(&self, x: &[f64], v: &[f64], out: &mut [f64]) {
        self.inner.hessian_vec(x, v, out);
        if self.beta != 1.0 {
            out.iter_mut().for_each(|o| *o *= self.beta);
        }
    }

    fn score_batch(&self, xs: &[f64], out: &mut [f64]) {
        self.inner.score_batch(xs, out);
        if self.beta != 1.0 {
            out.iter_mut().for_each(|v| *v *= self.beta);
        }
    }

    fn hessian_vec_batch(&self, xs: &[f64], vs: &[f64], out: &mut [f64]) {
        self.inner.hessian_vec_batch(xs, vs, out);
        if self.beta != 1.0 {
            out.iter_mut().for_each(|o| *o *= self.beta);
        }
    }

    fn sample_exact(&self, n: usize, rng: &mut dyn RngCore) -> Option<Vec<f64>> {
        if self.beta == 1.0 {
            self.inner.sample_exact(n, rng)
        } else {
            None
        }
    }
}
