use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::matrix::{axpy, Matrix};
use crate::error::{MinfoError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
    Elu,
}

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Elu => {
                if x > 0.0 {
                    x
                } else {
                    x.exp_m1()
                }
            }
        }
    }

    /// Derivative with respect to the pre-activation.
    #[inline]
    fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Elu => {
                if x > 0.0 {
                    1.0
                } else {
                    x.exp()
                }
            }
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = MinfoError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "relu" => Ok(Activation::Relu),
            "elu" => Ok(Activation::Elu),
            other => Err(MinfoError::argument(
                "activation",
                format!("expected relu or elu, got {other:?}"),
            )),
        }
    }
}

/// One affine layer: `weight` is `out×in`, `bias` has length `out`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(input: usize, output: usize) -> Self {
        Dense {
            weight: Matrix::zeros(output, input),
            bias: vec![0.0; output],
        }
    }

    #[inline]
    pub fn input_dim(&self) -> usize {
        self.weight.cols()
    }

    #[inline]
    pub fn output_dim(&self) -> usize {
        self.weight.rows()
    }
}

/// Parameters of the scalar-valued statistics network `T(x, z)`.
///
/// Hidden layers apply `activation`; the last layer is affine with a single
/// output unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    layers: Vec<Dense>,
    activation: Activation,
}

/// Partial derivatives with the same layout as [`MlpParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradBuffer {
    pub layers: Vec<Dense>,
}

impl MlpParams {
    /// Wraps explicit layers after checking that dimensions chain and the
    /// network ends in one output.
    pub fn from_layers(layers: Vec<Dense>, activation: Activation) -> Result<Self> {
        if layers.is_empty() {
            return Err(MinfoError::config("hidden", "network needs at least one layer"));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.len() != l.output_dim() || l.input_dim() == 0 || l.output_dim() == 0 {
                return Err(MinfoError::shape(
                    "MlpParams::from_layers",
                    "non-empty layer with matching bias",
                    format!("layer {i}"),
                ));
            }
        }
        for pair in layers.windows(2) {
            if pair[0].output_dim() != pair[1].input_dim() {
                return Err(MinfoError::shape(
                    "MlpParams::from_layers",
                    pair[0].output_dim(),
                    pair[1].input_dim(),
                ));
            }
        }
        if layers.last().map(Dense::output_dim) != Some(1) {
            return Err(MinfoError::shape("MlpParams::from_layers", "output dim 1", "other"));
        }
        Ok(MlpParams { layers, activation })
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        1
    }

    /// Total number of scalar parameters, `Σ (out·in + out)`.
    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.output_dim() * l.input_dim() + l.output_dim())
            .sum()
    }

    /// Flattened parameters: per layer, weights row-major then bias.
    pub fn to_flat(&self) -> Vec<f64> {
        flatten(&self.layers)
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(MinfoError::shape("MlpParams::set_flat", self.param_count(), flat.len()));
        }
        unflatten(&mut self.layers, flat);
        Ok(())
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    /// Evaluates the network on every row of `inputs`.
    pub fn forward(&self, inputs: &Matrix) -> Result<Vec<f64>> {
        Ok(self.forward_tape(inputs)?.output)
    }

    /// Forward pass that keeps the intermediate values needed by
    /// [`MlpParams::backward`].
    pub fn forward_tape(&self, inputs: &Matrix) -> Result<Tape> {
        if inputs.cols() != self.input_dim() {
            return Err(MinfoError::shape("mlp_forward", self.input_dim(), inputs.cols()));
        }
        let n_layers = self.layers.len();
        let mut layer_inputs = Vec::with_capacity(n_layers);
        let mut pre_activations = Vec::with_capacity(n_layers - 1);
        let mut current = inputs.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let pre = current.affine(&layer.weight, &layer.bias)?;
            layer_inputs.push(current);
            if i + 1 == n_layers {
                current = pre;
            } else {
                let mut act = pre.clone();
                act.map_inplace(|v| self.activation.apply(v));
                pre_activations.push(pre);
                current = act;
            }
        }
        let output = current.into_vec();
        if output.iter().any(|v| !v.is_finite()) {
            return Err(MinfoError::numeric("mlp_forward output"));
        }
        Ok(Tape {
            layer_inputs,
            pre_activations,
            output,
        })
    }

    /// Gradient of `Σ_i cotangent_i · T(row_i)` with respect to every
    /// parameter, by reverse accumulation over a recorded tape.
    pub fn backward(&self, tape: &Tape, cotangent: &[f64]) -> Result<GradBuffer> {
        let rows = tape.output.len();
        if cotangent.len() != rows {
            return Err(MinfoError::shape("mlp_backward", rows, cotangent.len()));
        }
        let mut grads: Vec<Dense> = Vec::with_capacity(self.layers.len());
        // delta holds ∂/∂(pre-activation) of the current layer, one row per sample
        let mut delta = Matrix::from_vec(rows, 1, cotangent.to_vec())?;
        for li in (0..self.layers.len()).rev() {
            let layer = &self.layers[li];
            let input = &tape.layer_inputs[li];
            let weight = delta.t_matmul(input)?;
            let mut bias = vec![0.0; layer.output_dim()];
            for r in 0..rows {
                axpy(&mut bias, 1.0, delta.row(r));
            }
            grads.push(Dense { weight, bias });
            if li > 0 {
                let mut upstream = delta.matmul(&layer.weight)?;
                let pre = &tape.pre_activations[li - 1];
                for (g, &p) in upstream.as_mut_slice().iter_mut().zip(pre.as_slice()) {
                    *g *= self.activation.derivative(p);
                }
                delta = upstream;
            }
        }
        grads.reverse();
        Ok(GradBuffer { layers: grads })
    }
}

/// Intermediate values from a forward pass.
#[derive(Debug, Clone)]
pub struct Tape {
    layer_inputs: Vec<Matrix>,
    pre_activations: Vec<Matrix>,
    output: Vec<f64>,
}

impl Tape {
    pub fn output(&self) -> &[f64] {
        &self.output
    }

    /// Which hidden pre-activations are strictly positive.
    pub(crate) fn active_units(&self) -> Vec<bool> {
        self.pre_activations
            .iter()
            .flat_map(|m| m.as_slice().iter().map(|&v| v > 0.0))
            .collect()
    }
}

/// Xavier-uniform weights, zero biases. Deterministic in `seed`.
pub fn mlp_init(
    input_dim: usize,
    hidden: &[usize],
    activation: Activation,
    seed: u64,
) -> Result<MlpParams> {
    if input_dim == 0 {
        return Err(MinfoError::config("input_dim", "must be at least 1"));
    }
    if hidden.is_empty() {
        return Err(MinfoError::config("hidden", "at least one hidden layer is required"));
    }
    if hidden.contains(&0) {
        return Err(MinfoError::config("hidden", "zero-width layer"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut widths = Vec::with_capacity(hidden.len() + 2);
    widths.push(input_dim);
    widths.extend_from_slice(hidden);
    widths.push(1);
    let layers = widths
        .windows(2)
        .map(|w| {
            let (fan_in, fan_out) = (w[0], w[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let data = (0..fan_in * fan_out)
                .map(|_| rng.random_range(-limit..limit))
                .collect();
            Dense {
                weight: Matrix::from_vec(fan_out, fan_in, data).expect("sized by construction"),
                bias: vec![0.0; fan_out],
            }
        })
        .collect();
    MlpParams::from_layers(layers, activation)
}

pub fn mlp_forward(params: &MlpParams, inputs: &Matrix) -> Result<Vec<f64>> {
    params.forward(inputs)
}

pub fn mlp_backward(params: &MlpParams, inputs: &Matrix, cotangent: &[f64]) -> Result<GradBuffer> {
    let tape = params.forward_tape(inputs)?;
    params.backward(&tape, cotangent)
}

impl GradBuffer {
    pub fn zeros_like(params: &MlpParams) -> Self {
        GradBuffer {
            layers: params
                .layers
                .iter()
                .map(|l| Dense::zeros(l.input_dim(), l.output_dim()))
                .collect(),
        }
    }

    /// Builds a buffer shaped like `params` from a flat vector in
    /// [`MlpParams::to_flat`] order.
    pub fn from_flat(params: &MlpParams, flat: &[f64]) -> Result<Self> {
        if flat.len() != params.param_count() {
            return Err(MinfoError::shape("GradBuffer::from_flat", params.param_count(), flat.len()));
        }
        let mut g = GradBuffer::zeros_like(params);
        unflatten(&mut g.layers, flat);
        Ok(g)
    }

    pub fn to_flat(&self) -> Vec<f64> {
        flatten(&self.layers)
    }

    pub fn is_congruent(&self, params: &MlpParams) -> bool {
        self.layers.len() == params.layers.len()
            && self
                .layers
                .iter()
                .zip(&params.layers)
                .all(|(g, p)| g.weight.shape() == p.weight.shape() && g.bias.len() == p.bias.len())
    }

    pub(crate) fn values(&self) -> impl Iterator<Item = &f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weight.as_slice().iter().chain(l.bias.iter()))
    }

    pub(crate) fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weight.as_mut_slice().iter_mut().chain(l.bias.iter_mut()))
    }

    /// Frobenius norm over all entries.
    pub fn norm(&self) -> f64 {
        self.values().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &GradBuffer) -> f64 {
        self.values().zip(other.values()).map(|(a, b)| a * b).sum()
    }

    pub fn scale(&mut self, factor: f64) {
        self.values_mut().for_each(|v| *v *= factor);
    }

    pub fn add_assign(&mut self, other: &GradBuffer) {
        for (a, b) in self.values_mut().zip(other.values()) {
            *a += b;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values().all(|v| v.is_finite())
    }
}

fn flatten(layers: &[Dense]) -> Vec<f64> {
    layers
        .iter()
        .flat_map(|l| l.weight.as_slice().iter().chain(l.bias.iter()).copied())
        .collect()
}

fn unflatten(layers: &mut [Dense], flat: &[f64]) {
    let mut it = flat.iter().copied();
    for l in layers {
        for v in l.weight.as_mut_slice().iter_mut().chain(l.bias.iter_mut()) {
            *v = it.next().expect("length checked by caller");
        }
    }
}
