//! Dense feed-forward networks over a flat parameter vector.
//!
//! Parameter layout, layer by layer: the weight matrix of shape
//! `(fan_in, fan_out)` in row-major order, followed by the `fan_out` biases.
//! Batched inputs are row-major `(batch, width)` matrices, so one layer is a
//! single GEMM `X * W + b`.
//!
//! The ReLU derivative at an exactly-zero pre-activation is taken to be 0.

use std::ops::{Deref, DerefMut};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::linalg::{gemm, Transpose};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, v: &mut [f64]) {
        match self {
            Activation::Relu => v.iter_mut().for_each(|x| *x = x.max(0.0)),
            Activation::Tanh => v.iter_mut().for_each(|x| *x = x.tanh()),
        }
    }

    /// Derivative written in terms of the activation output.
    #[inline]
    fn grad_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawSpec", into = "RawSpec")]
pub struct MlpSpec {
    layer_widths: Vec<usize>,
    hidden_activation: Activation,
}

#[derive(Serialize, Deserialize)]
struct RawSpec {
    layer_widths: Vec<usize>,
    #[serde(default)]
    hidden_activation: Activation,
}

impl TryFrom<RawSpec> for MlpSpec {
    type Error = Error;

    fn try_from(raw: RawSpec) -> Result<Self> {
        MlpSpec::new(raw.layer_widths, raw.hidden_activation)
    }
}

impl From<MlpSpec> for RawSpec {
    fn from(spec: MlpSpec) -> Self {
        RawSpec {
            layer_widths: spec.layer_widths,
            hidden_activation: spec.hidden_activation,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MlpParams(pub Vec<f64>);

impl Deref for MlpParams {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for MlpParams {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

/// Per-layer outputs of a batched forward pass; `layers[0]` is the input.
#[derive(Clone, Debug)]
pub struct Activations {
    batch: usize,
    layers: Vec<Vec<f64>>,
}

impl Activations {
    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn input(&self) -> &[f64] {
        &self.layers[0]
    }

    pub fn output(&self) -> &[f64] {
        self.layers.last().expect("at least one layer")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GradRequest {
    pub params: bool,
    pub input: bool,
}

impl GradRequest {
    pub const PARAMS: GradRequest = GradRequest {
        params: true,
        input: false,
    };
    pub const INPUT: GradRequest = GradRequest {
        params: false,
        input: true,
    };
    pub const BOTH: GradRequest = GradRequest {
        params: true,
        input: true,
    };
}

#[derive(Clone, Debug, Default)]
pub struct BatchGrads {
    /// Summed over the batch.
    pub params: Option<Vec<f64>>,
    /// Row-major `(batch, input_width)`.
    pub input: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Vjp {
    pub grad_params: Vec<f64>,
    pub grad_input: Vec<f64>,
}

impl MlpSpec {
    pub fn new(layer_widths: Vec<usize>, hidden_activation: Activation) -> Result<Self> {
        if layer_widths.len() < 2 {
            return Err(Error::InvalidSpec(format!(
                "need at least 2 layer widths, got {}",
                layer_widths.len()
            )));
        }
        if let Some(pos) = layer_widths.iter().position(|&w| w == 0) {
            return Err(Error::InvalidSpec(format!("layer {pos} has zero width")));
        }
        Ok(MlpSpec {
            layer_widths,
            hidden_activation,
        })
    }

    pub fn layer_widths(&self) -> &[usize] {
        &self.layer_widths
    }

    pub fn hidden_activation(&self) -> Activation {
        self.hidden_activation
    }

    pub fn input_width(&self) -> usize {
        self.layer_widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.layer_widths.last().unwrap()
    }

    /// Number of affine layers.
    pub fn depth(&self) -> usize {
        self.layer_widths.len() - 1
    }

    pub fn num_params(&self) -> usize {
        self.layer_widths
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum()
    }

    /// Offset of layer `l`'s weights in the flat parameter vector.
    pub fn layer_offset(&self, l: usize) -> usize {
        self.layer_widths[..=l]
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum()
    }

    fn layer<'p>(&self, params: &'p [f64], l: usize) -> (&'p [f64], &'p [f64]) {
        let (fan_in, fan_out) = (self.layer_widths[l], self.layer_widths[l + 1]);
        let off = self.layer_offset(l);
        let w = &params[off..off + fan_in * fan_out];
        let b = &params[off + fan_in * fan_out..off + fan_in * fan_out + fan_out];
        (w, b)
    }

    pub fn zero_params(&self) -> MlpParams {
        MlpParams(vec![0.0; self.num_params()])
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init_params<R: Rng + ?Sized>(&self, rng: &mut R) -> MlpParams {
        let mut p = Vec::with_capacity(self.num_params());
        for w in self.layer_widths.windows(2) {
            let limit = (6.0 / (w[0] + w[1]) as f64).sqrt();
            p.extend((0..w[0] * w[1]).map(|_| rng.random_range(-limit..limit)));
            p.extend(std::iter::repeat_n(0.0, w[1]));
        }
        MlpParams(p)
    }

    fn check_params(&self, params: &[f64]) -> Result<()> {
        if params.len() != self.num_params() {
            return Err(Error::DimensionMismatch {
                context: "mlp parameters",
                expected: self.num_params(),
                actual: params.len(),
            });
        }
        Ok(())
    }

    pub fn forward_batch(&self, params: &[f64], input: &[f64], batch: usize) -> Result<Activations> {
        self.check_params(params)?;
        if input.len() != batch * self.input_width() {
            return Err(Error::DimensionMismatch {
                context: "mlp input width",
                expected: batch * self.input_width(),
                actual: input.len(),
            });
        }
        let depth = self.depth();
        let mut layers = Vec::with_capacity(depth + 1);
        layers.push(input.to_vec());
        for l in 0..depth {
            let (fan_in, fan_out) = (self.layer_widths[l], self.layer_widths[l + 1]);
            let (w, b) = self.layer(params, l);
            let mut out = Vec::with_capacity(batch * fan_out);
            for _ in 0..batch {
                out.extend_from_slice(b);
            }
            gemm(
                batch,
                fan_in,
                fan_out,
                1.0,
                &layers[l],
                Transpose::No,
                w,
                Transpose::No,
                1.0,
                &mut out,
            );
            if l + 1 < depth {
                self.hidden_activation.apply(&mut out);
            }
            if out.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteLayer { layer: l });
            }
            layers.push(out);
        }
        Ok(Activations { batch, layers })
    }

    /// Reverse pass for a batch. `cotangent` is row-major `(batch, output_width)`;
    /// parameter gradients are summed over rows.
    pub fn backward_batch(
        &self,
        params: &[f64],
        acts: &Activations,
        cotangent: &[f64],
        request: GradRequest,
    ) -> Result<BatchGrads> {
        self.check_params(params)?;
        let batch = acts.batch;
        if cotangent.len() != batch * self.output_width() {
            return Err(Error::DimensionMismatch {
                context: "mlp cotangent width",
                expected: batch * self.output_width(),
                actual: cotangent.len(),
            });
        }
        let depth = self.depth();
        let mut grad_params = request.params.then(|| vec![0.0; self.num_params()]);
        let mut delta = cotangent.to_vec();
        for l in (0..depth).rev() {
            let (fan_in, fan_out) = (self.layer_widths[l], self.layer_widths[l + 1]);
            if l + 1 < depth {
                let act = self.hidden_activation;
                for (d, &y) in delta.iter_mut().zip(&acts.layers[l + 1]) {
                    *d *= act.grad_from_output(y);
                }
            }
            if let Some(gp) = grad_params.as_mut() {
                let off = self.layer_offset(l);
                let (gw, gb) = gp[off..off + fan_in * fan_out + fan_out].split_at_mut(fan_in * fan_out);
                gemm(
                    fan_in,
                    batch,
                    fan_out,
                    1.0,
                    &acts.layers[l],
                    Transpose::Yes,
                    &delta,
                    Transpose::No,
                    0.0,
                    gw,
                );
                for row in delta.chunks_exact(fan_out) {
                    for (g, d) in gb.iter_mut().zip(row) {
                        *g += d;
                    }
                }
                if gw.iter().chain(gb.iter()).any(|v| !v.is_finite()) {
                    return Err(Error::NonFiniteLayer { layer: l });
                }
            }
            if l > 0 || request.input {
                let (w, _) = self.layer(params, l);
                let mut next = vec![0.0; batch * fan_in];
                gemm(
                    batch,
                    fan_out,
                    fan_in,
                    1.0,
                    &delta,
                    Transpose::No,
                    w,
                    Transpose::Yes,
                    0.0,
                    &mut next,
                );
                if next.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFiniteLayer { layer: l });
                }
                delta = next;
            }
        }
        Ok(BatchGrads {
            params: grad_params,
            input: request.input.then_some(delta),
        })
    }

    pub fn forward(&self, params: &[f64], input: &[f64]) -> Result<Vec<f64>> {
        if input.len() != self.input_width() {
            return Err(Error::DimensionMismatch {
                context: "mlp input width",
                expected: self.input_width(),
                actual: input.len(),
            });
        }
        let acts = self.forward_batch(params, input, 1)?;
        Ok(acts.output().to_vec())
    }

    /// Vector-Jacobian products of `cotangent . f(input)` with respect to the
    /// parameters and the input.
    pub fn vjp(&self, params: &[f64], input: &[f64], cotangent: &[f64]) -> Result<Vjp> {
        if input.len() != self.input_width() {
            return Err(Error::DimensionMismatch {
                context: "mlp input width",
                expected: self.input_width(),
                actual: input.len(),
            });
        }
        if cotangent.len() != self.output_width() {
            return Err(Error::DimensionMismatch {
                context: "mlp cotangent width",
                expected: self.output_width(),
                actual: cotangent.len(),
            });
        }
        let acts = self.forward_batch(params, input, 1)?;
        let g = self.backward_batch(params, &acts, cotangent, GradRequest::BOTH)?;
        Ok(Vjp {
            grad_params: g.params.unwrap(),
            grad_input: g.input.unwrap(),
        })
    }
}

/// A spec together with its parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub spec: MlpSpec,
    pub params: MlpParams,
}

impl Network {
    pub fn new(spec: MlpSpec, params: MlpParams) -> Result<Self> {
        spec.check_params(&params)?;
        Ok(Network { spec, params })
    }

    pub fn init<R: Rng + ?Sized>(spec: MlpSpec, rng: &mut R) -> Self {
        let params = spec.init_params(rng);
        Network { spec, params }
    }

    pub fn zeros(spec: MlpSpec) -> Self {
        let params = spec.zero_params();
        Network { spec, params }
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.spec.forward(&self.params, input)
    }

    pub fn forward_batch(&self, input: &[f64], batch: usize) -> Result<Activations> {
        self.spec.forward_batch(&self.params, input, batch)
    }

    pub fn backward_batch(
        &self,
        acts: &Activations,
        cotangent: &[f64],
        request: GradRequest,
    ) -> Result<BatchGrads> {
        self.spec.backward_batch(&self.params, acts, cotangent, request)
    }
}
