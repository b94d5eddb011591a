//! Semi-implicit variational inference trained by a minimax score-matching
//! objective, with ELBO-based baselines, Langevin ground truth and an
//! evaluation suite.
//!
//! The crate is organised bottom-up:
//!
//! - [`diffcore`]: fixed-topology MLPs with hand-written reverse mode, plus Adam / RMSProp.
//! - [`targets`]: unnormalised posteriors exposing log-density, score and Hessian-vector products.
//! - [`family`]: the semi-implicit family with Gaussian conditional and standard-normal mixing.
//! - [`trainer`]: the alternating minimax score-matching loop.
//! - [`baselines`]: surrogate-ELBO SIVI, UIVI with an inner HMC chain, and parallel SGLD.
//! - [`metrics`]: k-NN KL divergence, covariance RMSE, predictive log-likelihood, SM diagnostics.
//! - [`cli`]: config-driven experiment runner used by the `sivism` binary.

pub mod baselines;
pub mod cli;
pub mod diffcore;
pub mod error;
pub mod family;
pub mod metrics;
pub mod rng;
pub mod targets;
pub mod trace;
pub mod trainer;

pub use error::{Error, Result};
