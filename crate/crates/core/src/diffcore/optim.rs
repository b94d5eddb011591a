//! Adam (with bias correction) and RMSProp over flat parameter vectors.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    #[default]
    Adam,
    Rmsprop,
}

/// Step learning-rate decay: the rate is multiplied by `gamma` every
/// `every` iterations.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepDecay {
    pub every: usize,
    pub gamma: f64,
}

impl StepDecay {
    pub fn validate(&self) -> Result<()> {
        if self.every == 0 {
            return Err(Error::config("lr_decay.every", "must be at least 1"));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::config("lr_decay.gamma", "must lie in (0, 1]"));
        }
        Ok(())
    }

    pub fn factor(&self, t: usize) -> f64 {
        self.gamma.powi((t / self.every) as i32)
    }
}

/// Learning rate at iteration `t` under an optional decay.
pub fn decayed(base: f64, decay: Option<&StepDecay>, t: usize) -> f64 {
    decay.map_or(base, |d| base * d.factor(t))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub kind: OptimizerKind,
    pub step_size: f64,
    pub beta1: f64,
    /// Second-moment decay; RMSProp's smoothing constant.
    pub beta2: f64,
    pub eps: f64,
    first: Vec<f64>,
    second: Vec<f64>,
    step: u64,
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind, len: usize, step_size: f64) -> Self {
        let beta2 = match kind {
            OptimizerKind::Adam => 0.999,
            OptimizerKind::Rmsprop => 0.99,
        };
        OptimizerState {
            kind,
            step_size,
            beta1: 0.9,
            beta2,
            eps: 1e-8,
            first: vec![0.0; len],
            second: vec![0.0; len],
            step: 0,
        }
    }

    pub fn adam(len: usize, step_size: f64) -> Self {
        Self::new(OptimizerKind::Adam, len, step_size)
    }

    pub fn rmsprop(len: usize, step_size: f64) -> Self {
        Self::new(OptimizerKind::Rmsprop, len, step_size)
    }

    pub fn len(&self) -> usize {
        self.second.len()
    }

    pub fn is_empty(&self) -> bool {
        self.second.is_empty()
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self) -> &[f64] {
        &self.first
    }

    pub fn second_moment(&self) -> &[f64] {
        &self.second
    }

    /// One descent step `params -= step_size * direction(grad)`. A non-finite
    /// gradient leaves both the parameters and the state untouched.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) -> Result<()> {
        if params.len() != self.len() || grad.len() != self.len() {
            return Err(Error::DimensionMismatch {
                context: "optimizer step",
                expected: self.len(),
                actual: if params.len() != self.len() {
                    params.len()
                } else {
                    grad.len()
                },
            });
        }
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteGradient {
                context: "optimizer step",
            });
        }
        self.step += 1;
        match self.kind {
            OptimizerKind::Adam => {
                let (b1, b2) = (self.beta1, self.beta2);
                let t = self.step as i32;
                let c1 = 1.0 - b1.powi(t);
                let c2 = 1.0 - b2.powi(t);
                for i in 0..params.len() {
                    let g = grad[i];
                    self.first[i] = b1 * self.first[i] + (1.0 - b1) * g;
                    self.second[i] = b2 * self.second[i] + (1.0 - b2) * g * g;
                    let m_hat = self.first[i] / c1;
                    let v_hat = self.second[i] / c2;
                    params[i] -= self.step_size * m_hat / (v_hat.sqrt() + self.eps);
                }
            }
            OptimizerKind::Rmsprop => {
                let rho = self.beta2;
                for i in 0..params.len() {
                    let g = grad[i];
                    self.second[i] = rho * self.second[i] + (1.0 - rho) * g * g;
                    params[i] -= self.step_size * g / (self.second[i].sqrt() + self.eps);
                }
            }
        }
        Ok(())
    }

    /// Ascent helper: steps along `+grad`.
    pub fn ascend(&mut self, params: &mut [f64], grad: &[f64]) -> Result<()> {
        let neg: Vec<f64> = grad.iter().map(|g| -g).collect();
        self.step(params, &neg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_gradient_keeps_params_and_decays_moments() {
        for kind in [OptimizerKind::Adam, OptimizerKind::Rmsprop] {
            let mut o = OptimizerState::new(kind, 1, 0.3);
            let mut x = vec![2.0];
            o.step(&mut x, &[0.0]).unwrap();
            assert_eq!(x, vec![2.0]);
            assert_eq!(o.steps(), 1);
        }
        let mut opt = OptimizerState::adam(2, 0.1);
        let mut p = vec![1.0, -2.0];
        opt.step(&mut p, &[0.5, -0.5]).unwrap();
        let (m0, v0) = (opt.first_moment().to_vec(), opt.second_moment().to_vec());
        opt.step(&mut p, &[0.0, 0.0]).unwrap();
        for i in 0..2 {
            assert_eq!(opt.first_moment()[i], 0.9 * m0[i]);
            assert_eq!(opt.second_moment()[i], 0.999 * v0[i]);
        }
    }

    #[test]
    fn adam_first_step_is_normalised() {
        for g in [3.0, -0.02, 1e-3] {
            let mut opt = OptimizerState::adam(1, 0.1);
            let mut p = vec![0.0];
            opt.step(&mut p, &[g]).unwrap();
            let want = -0.1 * g / (g.abs() + 1e-8);
            assert!((p[0] - want).abs() < 1e-15, "{} vs {}", p[0], want);
        }
    }

    #[test]
    fn adam_trajectory_matches_scalar_oracle() {
        // f(x) = x^2 from x = 1
        let (lr, b1, b2, eps) = (0.1f64, 0.9f64, 0.999f64, 1e-8f64);
        let (mut x, mut m, mut v) = (1.0f64, 0.0f64, 0.0f64);
        let mut oracle = Vec::new();
        for t in 1..=10 {
            let g = 2.0 * x;
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let mh = m / (1.0 - b1.powi(t));
            let vh = v / (1.0 - b2.powi(t));
            x -= lr * mh / (vh.sqrt() + eps);
            oracle.push(x);
        }
        let mut opt = OptimizerState::adam(1, lr);
        let mut p = vec![1.0];
        for want in oracle {
            let g = [2.0 * p[0]];
            opt.step(&mut p, &g).unwrap();
            assert!((p[0] - want).abs() <= 1e-12);
        }
    }

    #[test]
    fn rmsprop_step() {
        let mut opt = OptimizerState::rmsprop(1, 0.01);
        let mut p = vec![0.0];
        opt.step(&mut p, &[2.0]).unwrap();
        let v = 0.01 * 4.0;
        assert!((p[0] + 0.01 * 2.0 / (f64::sqrt(v) + 1e-8)).abs() < 1e-15);
    }

    #[test]
    fn non_finite_gradient_leaves_params() {
        let mut opt = OptimizerState::adam(2, 0.1);
        let mut p = vec![1.0, 2.0];
        assert!(opt.step(&mut p, &[f64::NAN, 0.0]).is_err());
        assert_eq!(p, vec![1.0, 2.0]);
        assert_eq!(opt.steps(), 0);
        assert!(opt.step(&mut p, &[1.0]).is_err());
    }

    proptest! {
        #[test]
        fn updates_commute_with_permutation(
            vals in proptest::collection::vec((-5.0f64..5.0, -3.0f64..3.0), 2..12),
            seed in 0u64..1000,
            rms in any::<bool>(),
        ) {
            let n = vals.len();
            let kind = if rms { OptimizerKind::Rmsprop } else { OptimizerKind::Adam };
            let params: Vec<f64> = vals.iter().map(|v| v.0).collect();
            let grad: Vec<f64> = vals.iter().map(|v| v.1).collect();
            let mut perm: Vec<usize> = (0..n).collect();
            // deterministic shuffle
            let mut s = seed;
            for i in (1..n).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                perm.swap(i, (s >> 33) as usize % (i + 1));
            }
            let mut a = OptimizerState::new(kind, n, 0.05);
            let mut b = OptimizerState::new(kind, n, 0.05);
            let mut pa = params.clone();
            let mut pb: Vec<f64> = perm.iter().map(|&i| params[i]).collect();
            for k in 0..3 {
                let ga: Vec<f64> = grad.iter().map(|g| g * (k as f64 + 1.0)).collect();
                let gb: Vec<f64> = perm.iter().map(|&i| ga[i]).collect();
                a.step(&mut pa, &ga).unwrap();
                b.step(&mut pb, &gb).unwrap();
            }
            for (j, &i) in perm.iter().enumerate() {
                prop_assert_eq!(pa[i].to_bits(), pb[j].to_bits());
                prop_assert_eq!(a.second_moment()[i].to_bits(), b.second_moment()[j].to_bits());
            }
        }
    }
}
