//! ELBO-based baselines sharing the semi-implicit family, and the samplers
//! they rely on.

mod hmc;
mod sgld;
mod sivi;
mod uivi;

pub use hmc::{hmc_reverse_conditional, HmcConfig, HmcOutput};
pub use sgld::{sgld_run, sgld_run_streams, SgldConfig, SgldOutput};
pub use sivi::{sivi_gradient, sivi_surrogate_elbo, sivi_train, LSchedule, SiviConfig, SurrogateElbo};
pub use uivi::{uivi_gradient, uivi_train, UiviConfig};

use crate::diffcore::OptimizerState;
use crate::family::{FamilySpec, SemiImplicitFamily};
use crate::diffcore::OptimizerKind;
use crate::rng::{self, Rng};
use crate::trace::MetricTrace;
use crate::Result;

/// Training state of an ELBO-maximising baseline.
pub struct ElboState {
    pub family: SemiImplicitFamily,
    pub opt: OptimizerState,
    pub iteration: usize,
    pub rng: Rng,
    pub eval_rng: Rng,
    pub trace: MetricTrace,
    pub skipped_steps: usize,
    /// Adapted HMC step size carried between inner chains (UIVI only).
    pub hmc_step_size: Option<f64>,
}

impl ElboState {
    pub fn new(family: SemiImplicitFamily, kind: OptimizerKind, lr: f64, seed: u64) -> Self {
        ElboState {
            opt: OptimizerState::new(kind, family.num_phi(), lr),
            family,
            iteration: 0,
            rng: rng::stream(seed, rng::STREAM_TRAIN),
            eval_rng: rng::stream(seed, rng::STREAM_EVAL),
            trace: MetricTrace::new(),
            skipped_steps: 0,
            hmc_step_size: None,
        }
    }

    pub fn init(spec: &FamilySpec, x_dim: usize, kind: OptimizerKind, lr: f64, seed: u64) -> Result<Self> {
        let mut r = rng::stream(seed, rng::STREAM_INIT);
        let family = spec.build(x_dim, &mut r)?;
        Ok(Self::new(family, kind, lr, seed))
    }
}

/// `sum_j log N(x_j; mu_j, sigma_j^2)` up to nothing (fully normalised).
pub(crate) fn log_normal_diag(x: &[f64], mu: &[f64], log_sigma: &[f64]) -> f64 {
    const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;
    x.iter()
        .zip(mu)
        .zip(log_sigma)
        .map(|((x, m), s)| {
            let u = (x - m) * (-s).exp();
            -0.5 * u * u - s - HALF_LN_2PI
        })
        .sum()
}
