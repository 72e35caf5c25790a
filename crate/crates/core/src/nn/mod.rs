//! Small dense networks with explicit forward caches and analytic gradients.

mod optim;

pub use optim::{OptimizerKind, OptimizerState};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{IdcError, Result};
use crate::math::{sigmoid, DenseMatrix};

/// Discriminator outputs are clamped to this interval before taking logs.
pub const DISC_PROB_MIN: f64 = 1e-7;
pub const DISC_PROB_MAX: f64 = 1.0 - 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Identity => z,
        }
    }

    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

/// One affine layer followed by an activation. Weights are `out × in`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weights: DenseMatrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl Dense {
    /// He-normal weights for ReLU layers, Glorot-normal otherwise; zero bias.
    pub fn random<R: Rng + ?Sized>(input: usize, output: usize, activation: Activation, rng: &mut R) -> Self {
        let std = match activation {
            Activation::Relu => (2.0 / input as f64).sqrt(),
            Activation::Identity => (2.0 / (input + output) as f64).sqrt(),
        };
        let normal = Normal::new(0.0, std).expect("positive std");
        let mut weights = DenseMatrix::zeros(output, input);
        for w in weights.entries_mut() {
            *w = normal.sample(rng);
        }
        Dense {
            weights,
            bias: vec![0.0; output],
            activation,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.rows()
    }
}

/// Values retained by [`Mlp::forward`] for the matching backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Input to each layer.
    inputs: Vec<Vec<f64>>,
    /// Pre-activation of each layer.
    pre_activations: Vec<Vec<f64>>,
}

/// Parameter gradients, shaped like the network's layers.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads {
    pub layers: Vec<LayerGrads>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrads {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl MlpGrads {
    pub fn zeros_like(net: &Mlp) -> Self {
        MlpGrads {
            layers: net
                .layers
                .iter()
                .map(|l| LayerGrads {
                    weights: vec![0.0; l.weights.entries().len()],
                    bias: vec![0.0; l.bias.len()],
                })
                .collect(),
        }
    }

    /// `self += scale * other`
    pub fn add_scaled(&mut self, other: &MlpGrads, scale: f64) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, y) in a.weights.iter_mut().zip(&b.weights) {
                *x += scale * y;
            }
            for (x, y) in a.bias.iter_mut().zip(&b.bias) {
                *x += scale * y;
            }
        }
    }

    pub fn tensors(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weights.as_slice(), l.bias.as_slice()])
            .collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.tensors()
            .into_iter()
            .flatten()
            .fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// A chain of dense layers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    layers: Vec<Dense>,
}

impl Mlp {
    pub fn new(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(IdcError::ConfigInvalid("network needs at least one layer".into()));
        }
        for pair in layers.windows(2) {
            if pair[0].output_dim() != pair[1].input_dim() {
                return Err(IdcError::DimensionMismatch {
                    expected: pair[0].output_dim(),
                    actual: pair[1].input_dim(),
                });
            }
        }
        for l in &layers {
            if l.bias.len() != l.output_dim() {
                return Err(IdcError::DimensionMismatch {
                    expected: l.output_dim(),
                    actual: l.bias.len(),
                });
            }
        }
        Ok(Mlp { layers })
    }

    /// Random network over the given layer widths: ReLU between layers,
    /// identity on the last one.
    pub fn random<R: Rng + ?Sized>(widths: &[usize], rng: &mut R) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(IdcError::ConfigInvalid(format!("bad layer widths {widths:?}")));
        }
        let n = widths.len() - 1;
        let layers = (0..n)
            .map(|i| {
                let act = if i + 1 == n {
                    Activation::Identity
                } else {
                    Activation::Relu
                };
                Dense::random(widths[i], widths[i + 1], act, rng)
            })
            .collect();
        Mlp::new(layers)
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].output_dim()
    }

    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, ForwardCache)> {
        if x.len() != self.input_dim() {
            return Err(IdcError::DimensionMismatch {
                expected: self.input_dim(),
                actual: x.len(),
            });
        }
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre_activations = Vec::with_capacity(self.layers.len());
        let mut h = x.to_vec();
        for layer in &self.layers {
            let mut z = layer.weights.matvec(&h);
            for (zi, b) in z.iter_mut().zip(&layer.bias) {
                *zi += b;
            }
            let out = z.iter().map(|&v| layer.activation.apply(v)).collect();
            inputs.push(std::mem::replace(&mut h, out));
            pre_activations.push(z);
        }
        Ok((h, ForwardCache { inputs, pre_activations }))
    }

    /// Output only, without retaining a cache.
    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.forward(x).map(|(y, _)| y)
    }

    /// Gradients of a scalar loss given `upstream = dLoss/dOutput`.
    pub fn backward(&self, cache: &ForwardCache, upstream: &[f64]) -> Result<(MlpGrads, Vec<f64>)> {
        if cache.inputs.len() != self.layers.len() {
            return Err(IdcError::StaleCache(format!(
                "cache has {} layers, network has {}",
                cache.inputs.len(),
                self.layers.len()
            )));
        }
        for (layer, (input, pre)) in self.layers.iter().zip(cache.inputs.iter().zip(&cache.pre_activations)) {
            if input.len() != layer.input_dim() || pre.len() != layer.output_dim() {
                return Err(IdcError::StaleCache("layer shape disagrees with cache".into()));
            }
        }
        if upstream.len() != self.output_dim() {
            return Err(IdcError::DimensionMismatch {
                expected: self.output_dim(),
                actual: upstream.len(),
            });
        }

        let mut grads = Vec::with_capacity(self.layers.len());
        let mut delta_out = upstream.to_vec();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let input = &cache.inputs[i];
            let delta: Vec<f64> = delta_out
                .iter()
                .zip(&cache.pre_activations[i])
                .map(|(g, &z)| g * layer.activation.derivative(z))
                .collect();
            let mut dw = vec![0.0; layer.weights.entries().len()];
            for (row, &d) in dw.chunks_exact_mut(input.len()).zip(&delta) {
                if d == 0.0 {
                    continue;
                }
                for (w, &x) in row.iter_mut().zip(input) {
                    *w = d * x;
                }
            }
            delta_out = layer.weights.matvec_transposed(&delta);
            grads.push(LayerGrads { weights: dw, bias: delta });
        }
        grads.reverse();
        Ok((MlpGrads { layers: grads }, delta_out))
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weights.entries_mut(), l.bias.as_mut_slice()])
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.entries().len() + l.bias.len())
            .sum()
    }
}

/// Gradient reversal: identity forward, `-lambda * upstream` backward.
pub fn grl_backward(upstream: &[f64], lambda: f64) -> Vec<f64> {
    debug_assert!(lambda >= 0.0);
    upstream.iter().map(|g| -lambda * g).collect()
}

/// Reversal coefficient ramp `2 / (1 + exp(-gamma * p)) - 1` for progress `p ∈ [0, 1]`.
pub fn grl_lambda(progress: f64, gamma: f64, max_lambda: f64) -> f64 {
    let p = progress.clamp(0.0, 1.0);
    max_lambda * (2.0 / (1.0 + (-gamma * p).exp()) - 1.0)
}

/// Feature encoder: `input → hidden (ReLU) → D (identity)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EncoderNet(pub Mlp);

impl EncoderNet {
    pub fn random<R: Rng + ?Sized>(input: usize, hidden: usize, output: usize, rng: &mut R) -> Result<Self> {
        Mlp::random(&[input, hidden, output], rng).map(EncoderNet)
    }
}

/// Linear classification head producing logits over `C` classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FcHead(pub Mlp);

impl FcHead {
    pub fn random<R: Rng + ?Sized>(feature_dim: usize, num_classes: usize, rng: &mut R) -> Result<Self> {
        Mlp::random(&[feature_dim, num_classes], rng).map(FcHead)
    }

    pub fn num_classes(&self) -> usize {
        self.0.output_dim()
    }

    pub fn probabilities(&self, feature: &[f64]) -> Result<Vec<f64>> {
        Ok(crate::math::softmax(&self.0.eval(feature)?))
    }
}

/// Domain discriminator: `D → hidden (ReLU) → 1` followed by a sigmoid.
/// Output is the probability that a feature came from the target domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DiscriminatorNet(pub Mlp);

impl DiscriminatorNet {
    pub fn random<R: Rng + ?Sized>(feature_dim: usize, hidden: usize, rng: &mut R) -> Result<Self> {
        Mlp::random(&[feature_dim, hidden, 1], rng).map(DiscriminatorNet)
    }

    pub fn probability(&self, feature: &[f64]) -> Result<f64> {
        Ok(sigmoid(self.0.eval(feature)?[0]))
    }
}

/// `-ln(clamp(p))` where `p = sigmoid(logit)` if `is_target`, else `p = 1 - sigmoid(logit)`.
/// Returns the loss and its derivative with respect to the logit.
pub fn domain_log_loss(logit: f64, is_target: bool) -> (f64, f64) {
    let d = sigmoid(logit);
    let clamped = d.clamp(DISC_PROB_MIN, DISC_PROB_MAX);
    let inside = d == clamped;
    if is_target {
        let grad = if inside { d - 1.0 } else { 0.0 };
        (-clamped.ln(), grad)
    } else {
        let grad = if inside { d } else { 0.0 };
        (-(1.0 - clamped).ln(), grad)
    }
}
