//! Hamiltonian Monte Carlo on the reverse conditional
//! `q(z | x) ∝ N(z; 0, I) N(x; mu(z), diag(sigma^2))`.

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::diffcore::GradRequest;
use crate::family::SemiImplicitFamily;
use crate::rng;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HmcConfig {
    pub iterations: usize,
    pub burn_in: usize,
    pub leapfrog_steps: usize,
    /// Initial leapfrog step size; zero freezes the chain.
    pub step_size: f64,
    pub target_accept: f64,
    /// Gain of the burn-in update `log eps += rate * (accept - target)`.
    pub adapt_rate: f64,
}

impl Default for HmcConfig {
    fn default() -> Self {
        HmcConfig {
            iterations: 10,
            burn_in: 5,
            leapfrog_steps: 5,
            step_size: 0.1,
            target_accept: 0.67,
            adapt_rate: 0.5,
        }
    }
}

impl HmcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.burn_in >= self.iterations {
            return Err(Error::config("hmc.burn_in", "must be smaller than hmc.iterations"));
        }
        if self.leapfrog_steps == 0 {
            return Err(Error::config("hmc.leapfrog_steps", "must be at least 1"));
        }
        if !(self.step_size >= 0.0 && self.step_size.is_finite()) {
            return Err(Error::config("hmc.step_size", "must be finite and non-negative"));
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(Error::config("hmc.target_accept", "must lie in (0, 1)"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HmcOutput {
    /// Last state of the chain.
    pub z: Vec<f64>,
    pub accepted: usize,
    pub proposals: usize,
    /// Step size after burn-in adaptation.
    pub step_size: f64,
}

struct Potential<'a> {
    family: &'a SemiImplicitFamily,
    x: &'a [f64],
    inv_var: Vec<f64>,
}

impl Potential<'_> {
    /// `U(z) = |z|^2 / 2 + sum_j (x_j - mu_j(z))^2 / (2 sigma_j^2)` and its gradient.
    fn eval(&self, z: &[f64]) -> Result<(f64, Vec<f64>)> {
        let acts = self.family.mu_net.forward_batch(z, 1)?;
        let mu = acts.output();
        let mut u = 0.5 * z.iter().map(|v| v * v).sum::<f64>();
        let mut cot = vec![0.0; mu.len()];
        for j in 0..mu.len() {
            let r = self.x[j] - mu[j];
            u += 0.5 * r * r * self.inv_var[j];
            cot[j] = -r * self.inv_var[j];
        }
        let mut g = self
            .family
            .mu_net
            .backward_batch(&acts, &cot, GradRequest::INPUT)?
            .input
            .expect("requested");
        for (gi, zi) in g.iter_mut().zip(z) {
            *gi += zi;
        }
        Ok((u, g))
    }
}

/// Runs `config.iterations` HMC transitions from `z0` and returns the final
/// state. During the first `config.burn_in` transitions the step size is
/// adapted towards `config.target_accept`; `step_size` carries it in and out
/// so callers can keep it across chains.
pub fn hmc_reverse_conditional<R: RngCore + ?Sized>(
    family: &SemiImplicitFamily,
    x: &[f64],
    z0: &[f64],
    config: &HmcConfig,
    step_size: &mut f64,
    rng: &mut R,
) -> Result<HmcOutput> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Hmc("non-finite observation".into()));
    }
    let pot = Potential {
        family,
        x,
        inv_var: family.log_sigma.iter().map(|s| (-2.0 * s).exp()).collect(),
    };
    let k = z0.len();
    let mut z = z0.to_vec();
    let (mut u, mut g) = pot.eval(&z)?;
    if !u.is_finite() {
        return Err(Error::Hmc("non-finite energy at the initial state".into()));
    }
    let mut accepted = 0;
    let mut p = vec![0.0; k];
    for it in 0..config.iterations {
        let eps = *step_size;
        rng::fill_normal(rng, &mut p);
        let h0 = u + 0.5 * p.iter().map(|v| v * v).sum::<f64>();
        let mut zn = z.clone();
        let mut gn = g.clone();
        let mut un = u;
        let mut ok = true;
        if eps > 0.0 {
            for (pi, gi) in p.iter_mut().zip(&gn) {
                *pi -= 0.5 * eps * gi;
            }
            for step in 0..config.leapfrog_steps {
                for (zi, pi) in zn.iter_mut().zip(&p) {
                    *zi += eps * pi;
                }
                match pot.eval(&zn) {
                    Ok((uu, gg)) => {
                        un = uu;
                        gn = gg;
                    }
                    Err(e) if e.is_numerical() => {
                        ok = false;
                        break;
                    }
                    Err(e) => return Err(e),
                }
                let w = if step + 1 == config.leapfrog_steps { 0.5 } else { 1.0 };
                for (pi, gi) in p.iter_mut().zip(&gn) {
                    *pi -= w * eps * gi;
                }
            }
        }
        let h1 = un + 0.5 * p.iter().map(|v| v * v).sum::<f64>();
        let accept_prob = if ok && h1.is_finite() { (h0 - h1).exp().min(1.0) } else { 0.0 };
        if rng.random::<f64>() < accept_prob {
            z = zn;
            u = un;
            g = gn;
            accepted += 1;
        }
        if it < config.burn_in && eps > 0.0 {
            *step_size = eps * (config.adapt_rate * (accept_prob - config.target_accept)).exp();
        }
    }
    if accepted == 0 && !u.is_finite() {
        return Err(Error::Hmc("every proposal rejected and the energy is non-finite".into()));
    }
    Ok(HmcOutput {
        z,
        accepted,
        proposals: config.iterations,
        step_size: *step_size,
    })
}
