//! The action recognizer: a small softmax classifier over pooled skeleton
//! features.
//!
//! A skeleton sequence is T frames of p joints in d spatial dims. Pooling
//! maps it to a fixed vector: the temporal mean and temporal population
//! standard deviation of every joint coordinate, concatenated (length
//! 2·p·d). The classifier is a relu MLP with a softmax head trained with
//! cross-entropy and Adam on standardized features.
//!
//! Retraining is always from scratch with a caller-fixed seed: two calls on
//! the same data produce bit-identical parameters, and a returned
//! [`RecognizerSnapshot`] is never mutated afterwards. Sample embeddings —
//! used by the selection features — are the penultimate-layer activations.

use crate::error::{Error, Result};
use crate::nncore::{
    adam_step, AdamConfig, AdamState, Activation, DenseNet, NetSpec,
};
use crate::seeding;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Checkpoint format tag for [`RecognizerSnapshot`] files.
pub const RECOGNIZER_FORMAT: &str = "recognizer_v1";

/// Identifier of the sequence→feature pooling scheme in checkpoints.
pub const POOLING_MEAN_STD: &str = "mean_std_v1";

/// A fixed-rate capture of joint positions: T frames × p joints × d dims,
/// stored flat frame-major.
#[derive(Clone, Debug, PartialEq)]
pub struct SkeletonSequence {
    values: Vec<f64>,
    frames: usize,
    joints: usize,
    dims: usize,
}

impl SkeletonSequence {
    /// Wrap flat frame-major values; length must be frames·joints·dims ≥ 1.
    pub fn new(values: Vec<f64>, frames: usize, joints: usize, dims: usize) -> Result<Self> {
        if frames == 0 || joints == 0 || dims == 0 {
            return Err(Error::InvalidInput(
                "sequence needs at least one frame, joint, and dim".into(),
            ));
        }
        if values.len() != frames * joints * dims {
            return Err(Error::Shape(format!(
                "{} values for a {frames}x{joints}x{dims} sequence",
                values.len()
            )));
        }
        if values.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("non-finite joint coordinate".into()));
        }
        Ok(SkeletonSequence { values, frames, joints, dims })
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn joints(&self) -> usize {
        self.joints
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    /// One frame as a flat joints×dims slice.
    pub fn frame(&self, t: usize) -> &[f64] {
        let w = self.joints * self.dims;
        &self.values[t * w..(t + 1) * w]
    }
}

/// Temporal mean and population std of every joint coordinate, concatenated:
/// `[mean₀ … mean_{pd−1}, std₀ … std_{pd−1}]`. A single-frame sequence has
/// all stds equal to 0. Invariant to duplicating the whole sequence in time.
pub fn pool_features(seq: &SkeletonSequence) -> Vec<f64> {
    let width = seq.joints * seq.dims;
    let t = seq.frames as f64;
    let mut means = vec![0.0; width];
    for f in 0..seq.frames {
        for (m, x) in means.iter_mut().zip(seq.frame(f)) {
            *m += x;
        }
    }
    for m in means.iter_mut() {
        *m /= t;
    }
    let mut vars = vec![0.0; width];
    for f in 0..seq.frames {
        for ((v, m), x) in vars.iter_mut().zip(&means).zip(seq.frame(f)) {
            let d = x - m;
            *v += d * d;
        }
    }
    let mut out = means;
    out.extend(vars.iter().map(|v| (v / t).sqrt()));
    out
}

/// Training hyperparameters for the recognizer.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct RecognizerConfig {
    /// Hidden relu widths; the last one is the embedding dimension.
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
}

impl Default for RecognizerConfig {
    fn default() -> Self {
        RecognizerConfig {
            hidden: vec![64, 32],
            epochs: 30,
            learning_rate: 1e-3,
            batch_size: 32,
        }
    }
}

impl RecognizerConfig {
    /// All violations, or empty when the config is usable.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.hidden.iter().any(|w| *w == 0) {
            v.push("recognizer.hidden widths must be nonzero".into());
        }
        if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            v.push(format!(
                "recognizer.learning_rate must be finite and > 0, got {}",
                self.learning_rate
            ));
        }
        if self.batch_size == 0 {
            v.push("recognizer.batch_size must be at least 1".into());
        }
        v
    }
}

/// An immutable trained classifier: network plus the feature standardization
/// fitted on its training set.
#[derive(Clone, Debug)]
pub struct RecognizerSnapshot {
    net: DenseNet,
    class_count: usize,
    feature_mean: Vec<f64>,
    feature_std: Vec<f64>,
}

impl RecognizerSnapshot {
    /// Assemble from parts (used by checkpoint loading and tests). The net
    /// output width must equal `class_count`.
    pub fn from_parts(
        net: DenseNet,
        class_count: usize,
        feature_mean: Vec<f64>,
        feature_std: Vec<f64>,
    ) -> Result<Self> {
        if net.output_dim() != class_count {
            return Err(Error::Shape(format!(
                "network outputs {} classes, header says {class_count}",
                net.output_dim()
            )));
        }
        if feature_mean.len() != net.input_dim() || feature_std.len() != net.input_dim() {
            return Err(Error::Shape(format!(
                "standardization is {}-dim, network input is {}-dim",
                feature_mean.len(),
                net.input_dim()
            )));
        }
        Ok(RecognizerSnapshot { net, class_count, feature_mean, feature_std })
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    /// Dimension of the raw input features.
    pub fn feature_dim(&self) -> usize {
        self.net.input_dim()
    }

    /// Dimension of [`Self::embed`] outputs (penultimate width).
    pub fn embed_dim(&self) -> usize {
        let layers = self.net.layers();
        if layers.len() >= 2 {
            layers[layers.len() - 2].out_dim()
        } else {
            self.net.input_dim()
        }
    }

    /// Class posterior for one feature vector.
    pub fn predict_proba(&self, features: &[f64]) -> Result<Vec<f64>> {
        self.net.forward(&self.standardize(features)?)
    }

    /// Penultimate-layer embedding of one feature vector.
    pub fn embed(&self, features: &[f64]) -> Result<Vec<f64>> {
        let trace = self.net.forward_trace(&self.standardize(features)?)?;
        Ok(trace.penultimate().to_vec())
    }

    /// Posterior and embedding from a single forward pass.
    pub fn predict_and_embed(&self, features: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let trace = self.net.forward_trace(&self.standardize(features)?)?;
        Ok((trace.output().to_vec(), trace.penultimate().to_vec()))
    }

    /// Fraction of samples whose argmax class matches the label; argmax ties
    /// resolve to the lowest class index.
    pub fn evaluate_accuracy(&self, features: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
        if features.is_empty() {
            return Err(Error::InsufficientData(
                "accuracy over an empty sample set is undefined".into(),
            ));
        }
        if features.len() != labels.len() {
            return Err(Error::Shape(format!(
                "{} samples but {} labels",
                features.len(),
                labels.len()
            )));
        }
        let mut hits = 0usize;
        for (x, &y) in features.iter().zip(labels) {
            let probs = self.predict_proba(x)?;
            if argmax_lowest(&probs) == y {
                hits += 1;
            }
        }
        Ok(hits as f64 / features.len() as f64)
    }

    /// Write a `recognizer_v1` checkpoint (network plus header).
    pub fn save_checkpoint(&self, path: &Path) -> Result<()> {
        let file = RecognizerCheckpoint {
            format: RECOGNIZER_FORMAT.to_string(),
            class_count: self.class_count,
            embed_dim: self.embed_dim(),
            pooling: POOLING_MEAN_STD.to_string(),
            feature_mean: self.feature_mean.clone(),
            feature_std: self.feature_std.clone(),
            net: self.net.to_spec(),
        };
        let json = serde_json::to_string(&file).expect("serializable checkpoint");
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    /// Read a `recognizer_v1` checkpoint.
    pub fn load_checkpoint(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: RecognizerCheckpoint =
            serde_json::from_str(&text).map_err(|e| Error::Parse {
                line: e.line(),
                message: e.to_string(),
            })?;
        if file.format != RECOGNIZER_FORMAT {
            return Err(Error::Protocol(format!(
                "checkpoint format {:?} is not {RECOGNIZER_FORMAT:?}",
                file.format
            )));
        }
        if file.pooling != POOLING_MEAN_STD {
            return Err(Error::Protocol(format!(
                "unknown pooling scheme {:?}",
                file.pooling
            )));
        }
        let snapshot = RecognizerSnapshot::from_parts(
            DenseNet::from_spec(&file.net)?,
            file.class_count,
            file.feature_mean,
            file.feature_std,
        )?;
        if snapshot.embed_dim() != file.embed_dim {
            return Err(Error::Shape(format!(
                "header embed_dim {} does not match network ({})",
                file.embed_dim,
                snapshot.embed_dim()
            )));
        }
        Ok(snapshot)
    }

    fn standardize(&self, features: &[f64]) -> Result<Vec<f64>> {
        if features.len() != self.feature_dim() {
            return Err(Error::Shape(format!(
                "sample has {} features, recognizer expects {}",
                features.len(),
                self.feature_dim()
            )));
        }
        Ok(features
            .iter()
            .zip(self.feature_mean.iter().zip(&self.feature_std))
            .map(|(x, (m, s))| (x - m) / s)
            .collect())
    }
}

#[derive(Serialize, Deserialize)]
struct RecognizerCheckpoint {
    format: String,
    class_count: usize,
    embed_dim: usize,
    pooling: String,
    feature_mean: Vec<f64>,
    feature_std: Vec<f64>,
    net: NetSpec,
}

/// Train a fresh recognizer on already-pooled feature vectors.
///
/// Deterministic in (data order, config, seed). Labels must lie in
/// `0..class_count` with `class_count ≥ 2`.
pub fn train_recognizer(
    features: &[Vec<f64>],
    labels: &[usize],
    class_count: usize,
    cfg: &RecognizerConfig,
    seed: u64,
) -> Result<RecognizerSnapshot> {
    let violations = cfg.violations();
    if !violations.is_empty() {
        return Err(Error::Config(violations));
    }
    if features.is_empty() {
        return Err(Error::InsufficientData("training set is empty".into()));
    }
    if features.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} samples but {} labels",
            features.len(),
            labels.len()
        )));
    }
    if class_count < 2 {
        return Err(Error::InvalidInput(format!(
            "need at least 2 classes, got {class_count}"
        )));
    }
    let dim = features[0].len();
    if dim == 0 {
        return Err(Error::InvalidInput("samples have no features".into()));
    }
    for (i, x) in features.iter().enumerate() {
        if x.len() != dim {
            return Err(Error::Shape(format!(
                "sample {i} has {} features, expected {dim}",
                x.len()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite feature in sample {i}")));
        }
    }
    if let Some((i, &y)) = labels.iter().enumerate().find(|(_, &y)| y >= class_count) {
        return Err(Error::Integrity(format!(
            "label {y} of sample {i} is outside 0..{class_count}"
        )));
    }

    let (mean, std) = fit_standardization(features, dim);

    let mut dims = vec![dim];
    dims.extend(&cfg.hidden);
    dims.push(class_count);
    let mut activations = vec![Activation::Relu; cfg.hidden.len()];
    activations.push(Activation::Softmax);
    let mut net = DenseNet::new(&dims, &activations, seeding::derive_seed(seed, "recognizer-init"))?;

    let standardized: Vec<Vec<f64>> = features
        .iter()
        .map(|x| {
            x.iter()
                .zip(mean.iter().zip(&std))
                .map(|(v, (m, s))| (v - m) / s)
                .collect()
        })
        .collect();

    let mut opt = AdamState::new(&net);
    let adam_cfg = AdamConfig::with_learning_rate(cfg.learning_rate);
    let mut order: Vec<usize> = (0..features.len()).collect();
    let mut rng = seeding::stream_rng(seed, "recognizer-shuffle");
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let mut grads = crate::nncore::Gradients::zeros_like(&net);
            let inv = 1.0 / batch.len() as f64;
            for &i in batch {
                let trace = net.forward_trace(&standardized[i])?;
                // Cross-entropy through softmax: dL/dz = probs − onehot.
                let mut delta = trace.output().to_vec();
                delta[labels[i]] -= 1.0;
                let g = net.backward_from_delta(&trace, delta)?;
                grads.add_scaled(&g, inv);
            }
            adam_step(&mut net, &grads, &mut opt, &adam_cfg)?;
        }
    }
    RecognizerSnapshot::from_parts(net, class_count, mean, std)
}

fn fit_standardization(features: &[Vec<f64>], dim: usize) -> (Vec<f64>, Vec<f64>) {
    let n = features.len() as f64;
    let mut mean = vec![0.0; dim];
    for x in features {
        for (m, v) in mean.iter_mut().zip(x) {
            *m += v;
        }
    }
    for m in mean.iter_mut() {
        *m /= n;
    }
    let mut std = vec![0.0; dim];
    for x in features {
        for ((s, m), v) in std.iter_mut().zip(&mean).zip(x) {
            let d = v - m;
            *s += d * d;
        }
    }
    for s in std.iter_mut() {
        *s = (*s / n).sqrt();
        // Constant features pass through unscaled.
        if *s < 1e-12 {
            *s = 1.0;
        }
    }
    (mean, std)
}

fn argmax_lowest(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}
