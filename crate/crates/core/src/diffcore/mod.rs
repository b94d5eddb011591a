//! Minimal differentiable core: dense MLPs with an explicit backward pass and
//! first-order optimisers. Everything is `f64`.

mod linalg;
mod mlp;
mod optim;

pub use linalg::{dot, gemm, Transpose};
pub use mlp::{Activation, Activations, BatchGrads, GradRequest, MlpParams, MlpSpec, Network, Vjp};
pub use optim::{decayed, OptimizerKind, OptimizerState, StepDecay};
