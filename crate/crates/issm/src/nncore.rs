//! Minimal dense feed-forward networks with exact reverse-mode gradients.
//!
//! Everything downstream (the action recognizer and the selection network)
//! is built from these pieces: fully connected layers over `Vec<f64>`, relu
//! or identity hidden activations, an optional softmax output, Adam, and a
//! versioned JSON checkpoint format (`nncore_v1`).
//!
//! There is deliberately no batching abstraction here — callers loop over
//! samples and accumulate [`Gradients`] themselves — and no SIMD/BLAS: the
//! models are small enough that portable scalar f64 keeps results
//! bit-reproducible across machines.

use crate::error::{Error, Result};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Checkpoint format tag; bump when the layout changes.
pub const CHECKPOINT_FORMAT: &str = "nncore_v1";

/// Layer activation. Softmax is permitted only on the final layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Relu,
    Softmax,
}

impl Activation {
    fn apply(self, z: &[f64]) -> Vec<f64> {
        match self {
            Activation::Identity => z.to_vec(),
            Activation::Relu => z.iter().map(|x| x.max(0.0)).collect(),
            Activation::Softmax => softmax(z),
        }
    }

    /// dL/dz from dL/da. For softmax this applies the full Jacobian; relu
    /// uses the derivative 0 at exactly z = 0.
    fn backprop(self, z: &[f64], a: &[f64], grad_a: &[f64]) -> Vec<f64> {
        match self {
            Activation::Identity => grad_a.to_vec(),
            Activation::Relu => z
                .iter()
                .zip(grad_a)
                .map(|(&z, &g)| if z > 0.0 { g } else { 0.0 })
                .collect(),
            Activation::Softmax => {
                let inner: f64 = a.iter().zip(grad_a).map(|(y, g)| y * g).sum();
                a.iter().zip(grad_a).map(|(&y, &g)| y * (g - inner)).collect()
            }
        }
    }
}

/// Numerically stable softmax (max subtraction before exponentiation).
pub fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|x| (x - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|e| e / sum).collect()
}

/// One fully connected layer: `a = act(W·x + b)`, W stored row-major out×in.
#[derive(Clone, Debug)]
pub struct Layer {
    weights: Vec<f64>,
    bias: Vec<f64>,
    activation: Activation,
    in_dim: usize,
    out_dim: usize,
}

impl Layer {
    pub fn new(
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
        weights: Vec<f64>,
        bias: Vec<f64>,
    ) -> Result<Self> {
        if in_dim == 0 || out_dim == 0 {
            return Err(Error::InvalidInput("layer dims must be nonzero".into()));
        }
        if weights.len() != in_dim * out_dim || bias.len() != out_dim {
            return Err(Error::Shape(format!(
                "layer {out_dim}x{in_dim} expects {} weights and {out_dim} biases, \
                 got {} and {}",
                in_dim * out_dim,
                weights.len(),
                bias.len()
            )));
        }
        if weights.iter().chain(&bias).any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("non-finite layer parameter".into()));
        }
        Ok(Layer { weights, bias, activation, in_dim, out_dim })
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    fn affine(&self, x: &[f64]) -> Vec<f64> {
        let mut z = self.bias.clone();
        for (o, zo) in z.iter_mut().enumerate() {
            let row = &self.weights[o * self.in_dim..(o + 1) * self.in_dim];
            *zo += row.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>();
        }
        z
    }
}

/// A stack of layers with compatible dimensions.
#[derive(Clone, Debug)]
pub struct DenseNet {
    layers: Vec<Layer>,
}

/// Cached intermediate values from [`DenseNet::forward_trace`].
#[derive(Clone, Debug)]
pub struct ForwardTrace {
    input: Vec<f64>,
    pre_activations: Vec<Vec<f64>>,
    activations: Vec<Vec<f64>>,
}

impl ForwardTrace {
    /// Network output (final activation).
    pub fn output(&self) -> &[f64] {
        self.activations.last().expect("nonempty net")
    }

    /// Activation of the layer just before the output layer; for a single
    /// layer net this is the input itself.
    pub fn penultimate(&self) -> &[f64] {
        let n = self.activations.len();
        if n >= 2 {
            &self.activations[n - 2]
        } else {
            &self.input
        }
    }
}

/// Per-layer parameter gradients, same shapes as the network.
#[derive(Clone, Debug)]
pub struct Gradients {
    d_weights: Vec<Vec<f64>>,
    d_bias: Vec<Vec<f64>>,
}

impl Gradients {
    /// All-zero gradients shaped like `net`.
    pub fn zeros_like(net: &DenseNet) -> Self {
        Gradients {
            d_weights: net.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            d_bias: net.layers.iter().map(|l| vec![0.0; l.bias.len()]).collect(),
        }
    }

    /// Accumulate `other`, scaled: `self += scale * other`.
    pub fn add_scaled(&mut self, other: &Gradients, scale: f64) {
        for (dst, src) in self.d_weights.iter_mut().zip(&other.d_weights) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += scale * s;
            }
        }
        for (dst, src) in self.d_bias.iter_mut().zip(&other.d_bias) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += scale * s;
            }
        }
    }

    /// Whether these gradients are shaped exactly like `net`'s parameters.
    pub fn matches(&self, net: &DenseNet) -> bool {
        self.d_weights.len() == net.layers.len()
            && net
                .layers
                .iter()
                .zip(&self.d_weights)
                .zip(&self.d_bias)
                .all(|((l, w), b)| l.weights.len() == w.len() && l.bias.len() == b.len())
    }

    /// Scale all entries in place.
    pub fn scale(&mut self, factor: f64) {
        for v in self.d_weights.iter_mut().chain(self.d_bias.iter_mut()) {
            for x in v.iter_mut() {
                *x *= factor;
            }
        }
    }

    /// Every entry in a fixed order: per layer, weights then bias. Matches
    /// the order of [`NetSpec`] fields, so finite-difference checks can
    /// walk both in lockstep.
    pub fn flat(&self) -> impl Iterator<Item = &f64> {
        self.d_weights
            .iter()
            .zip(&self.d_bias)
            .flat_map(|(w, b)| w.iter().chain(b.iter()))
    }
}

impl DenseNet {
    /// Glorot-uniform initialized network: `dims` are layer widths from
    /// input to output, `activations` one per layer transition. Weights are
    /// drawn from U(−a, a) with a = √(6/(fan_in+fan_out)); biases start at 0.
    pub fn new(dims: &[usize], activations: &[Activation], seed: u64) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::InvalidInput(
                "a network needs at least an input and an output width".into(),
            ));
        }
        if activations.len() != dims.len() - 1 {
            return Err(Error::Shape(format!(
                "{} layer transitions but {} activations",
                dims.len() - 1,
                activations.len()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::with_capacity(activations.len());
        for (l, &act) in activations.iter().enumerate() {
            let (fan_in, fan_out) = (dims[l], dims[l + 1]);
            let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let weights: Vec<f64> =
                (0..fan_in * fan_out).map(|_| rng.random_range(-a..a)).collect();
            layers.push(Layer::new(fan_in, fan_out, act, weights, vec![0.0; fan_out])?);
        }
        DenseNet::from_layers(layers)
    }

    /// Assemble from explicit layers, checking the dimension chain and the
    /// softmax-only-last rule.
    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidInput("network has no layers".into()));
        }
        for pair in layers.windows(2) {
            if pair[0].out_dim != pair[1].in_dim {
                return Err(Error::Shape(format!(
                    "layer output {} feeds layer input {}",
                    pair[0].out_dim, pair[1].in_dim
                )));
            }
        }
        let last = layers.len() - 1;
        if layers[..last].iter().any(|l| l.activation == Activation::Softmax) {
            return Err(Error::InvalidInput(
                "softmax is only permitted on the final layer".into(),
            ));
        }
        Ok(DenseNet { layers })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("nonempty net").out_dim
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Plain forward pass.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_trace(input)?.activations.pop().expect("nonempty net"))
    }

    /// Forward pass keeping every intermediate needed by [`Self::backward`].
    pub fn forward_trace(&self, input: &[f64]) -> Result<ForwardTrace> {
        if input.len() != self.input_dim() {
            return Err(Error::Shape(format!(
                "input has {} features, network expects {}",
                input.len(),
                self.input_dim()
            )));
        }
        if input.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("non-finite network input".into()));
        }
        let mut pre_activations = Vec::with_capacity(self.layers.len());
        let mut activations = Vec::with_capacity(self.layers.len());
        let mut current = input.to_vec();
        for layer in &self.layers {
            let z = layer.affine(&current);
            let a = layer.activation.apply(&z);
            if a.iter().any(|x| !x.is_finite()) {
                return Err(Error::NumericOverflow(
                    "activation left the finite f64 range".into(),
                ));
            }
            pre_activations.push(z);
            current = a.clone();
            activations.push(a);
        }
        Ok(ForwardTrace { input: input.to_vec(), pre_activations, activations })
    }

    /// Exact gradients of a scalar loss, given dL/d(output) at the trace.
    pub fn backward(&self, trace: &ForwardTrace, loss_grad: &[f64]) -> Result<Gradients> {
        if loss_grad.len() != self.output_dim() {
            return Err(Error::Shape(format!(
                "loss gradient has {} entries, output has {}",
                loss_grad.len(),
                self.output_dim()
            )));
        }
        let last = self.layers.len() - 1;
        let delta = self.layers[last].activation.backprop(
            &trace.pre_activations[last],
            &trace.activations[last],
            loss_grad,
        );
        self.backward_from_delta(trace, delta)
    }

    /// Like [`Self::backward`] but starting from dL/dz of the final layer.
    ///
    /// Lets callers with a fused loss (e.g. cross-entropy through softmax,
    /// where dL/dz = probs − onehot) skip the output Jacobian.
    pub fn backward_from_delta(
        &self,
        trace: &ForwardTrace,
        mut delta: Vec<f64>,
    ) -> Result<Gradients> {
        if delta.len() != self.output_dim() {
            return Err(Error::Shape(format!(
                "delta has {} entries, output has {}",
                delta.len(),
                self.output_dim()
            )));
        }
        let mut grads = Gradients::zeros_like(self);
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let below: &[f64] =
                if l == 0 { &trace.input } else { &trace.activations[l - 1] };
            for (o, &d) in delta.iter().enumerate() {
                grads.d_bias[l][o] = d;
                let row = &mut grads.d_weights[l][o * layer.in_dim..(o + 1) * layer.in_dim];
                for (w, x) in row.iter_mut().zip(below) {
                    *w = d * x;
                }
            }
            if l > 0 {
                // dL/da for the layer below, then through its activation.
                let mut grad_below = vec![0.0; layer.in_dim];
                for (o, &d) in delta.iter().enumerate() {
                    let row = &layer.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
                    for (g, w) in grad_below.iter_mut().zip(row) {
                        *g += d * w;
                    }
                }
                delta = self.layers[l - 1].activation.backprop(
                    &trace.pre_activations[l - 1],
                    &trace.activations[l - 1],
                    &grad_below,
                );
            }
        }
        Ok(grads)
    }

    /// Apply `θ += scale · g` without an optimizer (plain gradient step).
    pub fn apply_gradients(&mut self, grads: &Gradients, scale: f64) {
        for (l, layer) in self.layers.iter_mut().enumerate() {
            for (w, g) in layer.weights.iter_mut().zip(&grads.d_weights[l]) {
                *w += scale * g;
            }
            for (b, g) in layer.bias.iter_mut().zip(&grads.d_bias[l]) {
                *b += scale * g;
            }
        }
    }

    fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
    }

    /// Portable description of the network for checkpoints.
    pub fn to_spec(&self) -> NetSpec {
        NetSpec {
            format: CHECKPOINT_FORMAT.to_string(),
            layers: self
                .layers
                .iter()
                .map(|l| LayerSpec {
                    in_dim: l.in_dim,
                    out_dim: l.out_dim,
                    activation: l.activation,
                    weights: l.weights.clone(),
                    bias: l.bias.clone(),
                })
                .collect(),
        }
    }

    /// Rebuild from a checkpoint spec, validating version and shapes.
    pub fn from_spec(spec: &NetSpec) -> Result<Self> {
        if spec.format != CHECKPOINT_FORMAT {
            return Err(Error::Protocol(format!(
                "checkpoint format {:?} is not {CHECKPOINT_FORMAT:?}",
                spec.format
            )));
        }
        let layers = spec
            .layers
            .iter()
            .map(|l| {
                Layer::new(l.in_dim, l.out_dim, l.activation, l.weights.clone(), l.bias.clone())
            })
            .collect::<Result<Vec<_>>>()?;
        DenseNet::from_layers(layers)
    }

    /// Write a `nncore_v1` JSON checkpoint.
    pub fn save_checkpoint(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string(&self.to_spec()).expect("serializable spec");
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    /// Read a `nncore_v1` JSON checkpoint.
    pub fn load_checkpoint(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let spec: NetSpec = serde_json::from_str(&text).map_err(|e| Error::Parse {
            line: e.line(),
            message: e.to_string(),
        })?;
        DenseNet::from_spec(&spec)
    }
}

/// Serialized form of one layer inside a [`NetSpec`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
    /// Row-major out×in weight matrix.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Serialized form of a whole network (`nncore_v1`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetSpec {
    pub format: String,
    pub layers: Vec<LayerSpec>,
}

/// Adam hyperparameters.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamConfig {
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        AdamConfig { learning_rate, ..AdamConfig::default() }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { learning_rate: 1e-4, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

/// First/second moment estimates for one network.
#[derive(Clone, Debug)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl AdamState {
    pub fn new(net: &DenseNet) -> Self {
        let n = net.param_count();
        AdamState { m: vec![0.0; n], v: vec![0.0; n], step: 0 }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One bias-corrected Adam update of `net` along `grads`.
pub fn adam_step(
    net: &mut DenseNet,
    grads: &Gradients,
    state: &mut AdamState,
    cfg: &AdamConfig,
) -> Result<()> {
    if state.m.len() != net.param_count() {
        return Err(Error::Shape(format!(
            "optimizer state sized for {} parameters, network has {}",
            state.m.len(),
            net.param_count()
        )));
    }
    state.step += 1;
    let b1t = 1.0 - cfg.beta1.powi(state.step as i32);
    let b2t = 1.0 - cfg.beta2.powi(state.step as i32);
    for ((param, g), (m, v)) in net
        .params_mut()
        .zip(grads.flat())
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
        *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
        let m_hat = *m / b1t;
        let v_hat = *v / b2t;
        *param -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
    }
    Ok(())
}
