//! Selection features: what the Q-network sees.
//!
//! The pre-selection context is summarized per round as a state, and each
//! unlabeled candidate as an action:
//!
//! - state: the labeled↔unlabeled distribution gap ([`crate::discrepancy`])
//!   and the fraction of budget already spent
//! - action: the candidate's marginal index (1 − posterior margin between
//!   the top two classes) and a histogram of its cosine similarity to every
//!   unlabeled embedding
//!
//! Scalar features and the histogram are pushed through the origin
//! exponential map ([`crate::hypgeo`]) before they reach the network, so
//! magnitudes compress hyperbolically instead of growing linearly.

use crate::discrepancy::{mmd, FeatureMatrix, KernelConfig};
use crate::error::{Error, Result};
use crate::hypgeo::{exp_map_origin, Curvature};
use crate::recognizer::RecognizerSnapshot;

/// Pre-selection context of one labeling round.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AgentState {
    /// Distribution gap, mapped into the ball (1-d exp map of the raw MMD).
    pub mmd_hyp: f64,
    /// Fraction of the labeling budget already spent, in [0, 1].
    pub budget_ratio: f64,
}

impl AgentState {
    pub fn to_vector(&self) -> Vec<f64> {
        vec![self.mmd_hyp, self.budget_ratio]
    }
}

/// One candidate's features for the Q-network.
#[derive(Clone, Debug, PartialEq)]
pub struct ActionFeatures {
    /// Dense dataset index of the candidate.
    pub candidate_id: usize,
    /// Marginal index, mapped into the ball (1-d exp map).
    pub mi_hyp: f64,
    /// Representativeness histogram, mapped into the ball (n_bins-d exp map).
    pub hist_hyp: Vec<f64>,
}

impl ActionFeatures {
    pub fn to_vector(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(1 + self.hist_hyp.len());
        v.push(self.mi_hyp);
        v.extend_from_slice(&self.hist_hyp);
        v
    }
}

/// Network input layout: `[mmd_hyp, budget_ratio, mi_hyp, hist…]`,
/// dimension 3 + n_bins.
pub fn to_input_vector(state: &AgentState, action: &ActionFeatures) -> Vec<f64> {
    let mut v = state.to_vector();
    v.extend(action.to_vector());
    v
}

/// How uncertain the classifier is about a sample: 1 − (top posterior −
/// second posterior). 0 for a certain one-hot posterior, 1 when the top two
/// classes tie.
pub fn marginal_index(probs: &[f64]) -> Result<f64> {
    if probs.len() < 2 {
        // A one-class problem is a configuration mistake, not bad data.
        return Err(Error::Config(vec![format!(
            "marginal index needs ≥ 2 class probabilities, got {}",
            probs.len()
        )]));
    }
    let mut sum = 0.0;
    for p in probs {
        if !p.is_finite() || *p < -1e-9 || *p > 1.0 + 1e-9 {
            return Err(Error::InvalidInput(format!(
                "probability {p} outside [0, 1]"
            )));
        }
        sum += p;
    }
    if (sum - 1.0).abs() > 1e-6 {
        return Err(Error::InvalidInput(format!(
            "probabilities sum to {sum}, expected 1"
        )));
    }
    let (mut top, mut second) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for &p in probs {
        if p > top {
            second = top;
            top = p;
        } else if p > second {
            second = p;
        }
    }
    Ok(1.0 - (top - second))
}

/// Distribution of one embedding's cosine similarity against every unlabeled
/// embedding: `n_bins` equal-width bins over [−1, 1], counts normalized to
/// sum 1. Interior right edges belong to the next bin; only the last bin is
/// right-inclusive. A zero-norm vector on either side contributes
/// similarity 0 by convention.
pub fn representativeness_histogram(
    emb: &[f64],
    unlabeled_embs: &FeatureMatrix,
    n_bins: usize,
) -> Result<Vec<f64>> {
    if n_bins < 2 {
        return Err(Error::InvalidInput(format!(
            "histogram needs at least 2 bins, got {n_bins}"
        )));
    }
    if unlabeled_embs.n_rows() == 0 {
        return Err(Error::InsufficientData(
            "histogram over an empty unlabeled set is undefined".into(),
        ));
    }
    if emb.len() != unlabeled_embs.n_cols() {
        return Err(Error::Shape(format!(
            "embedding is {}-d, unlabeled embeddings are {}-d",
            emb.len(),
            unlabeled_embs.n_cols()
        )));
    }
    let mut counts = vec![0usize; n_bins];
    let width = 2.0 / n_bins as f64;
    let norm_e = norm(emb);
    for i in 0..unlabeled_embs.n_rows() {
        let u = unlabeled_embs.row(i);
        let norm_u = norm(u);
        let sim = if norm_e == 0.0 || norm_u == 0.0 {
            0.0
        } else {
            (dot(emb, u) / (norm_e * norm_u)).clamp(-1.0, 1.0)
        };
        let bin = (((sim + 1.0) / width).floor() as usize).min(n_bins - 1);
        counts[bin] += 1;
    }
    let total = unlabeled_embs.n_rows() as f64;
    Ok(counts.into_iter().map(|c| c as f64 / total).collect())
}

/// Build the round state from labeled/unlabeled embeddings and the budget
/// position, returning the raw MMD alongside (for logging).
pub fn build_state_detailed(
    sl_embs: &FeatureMatrix,
    su_embs: &FeatureMatrix,
    spent: usize,
    budget: usize,
    kcfg: &KernelConfig,
    c: Curvature,
) -> Result<(AgentState, f64)> {
    if budget == 0 {
        return Err(Error::InvalidInput("budget must be ≥ 1".into()));
    }
    if spent > budget {
        return Err(Error::InvalidInput(format!(
            "spent {spent} exceeds budget {budget}"
        )));
    }
    let raw = mmd(sl_embs, su_embs, kcfg)?;
    let mmd_hyp = exp_map_origin(&[raw], c)?.coords()[0];
    let state = AgentState { mmd_hyp, budget_ratio: spent as f64 / budget as f64 };
    Ok((state, raw))
}

/// Build the round state (see [`build_state_detailed`]).
pub fn build_state(
    sl_embs: &FeatureMatrix,
    su_embs: &FeatureMatrix,
    spent: usize,
    budget: usize,
    kcfg: &KernelConfig,
    c: Curvature,
) -> Result<AgentState> {
    Ok(build_state_detailed(sl_embs, su_embs, spent, budget, kcfg, c)?.0)
}

/// Build one candidate's action features under the current recognizer.
pub fn build_action(
    model: &RecognizerSnapshot,
    features: &[f64],
    unlabeled_embs: &FeatureMatrix,
    n_bins: usize,
    c: Curvature,
    candidate_id: usize,
) -> Result<ActionFeatures> {
    let (probs, emb) = model.predict_and_embed(features)?;
    let mi = marginal_index(&probs)?;
    let hist = representativeness_histogram(&emb, unlabeled_embs, n_bins)?;
    let mi_hyp = exp_map_origin(&[mi], c)?.coords()[0];
    let hist_hyp = exp_map_origin(&hist, c)?.coords().to_vec();
    Ok(ActionFeatures { candidate_id, mi_hyp, hist_hyp })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}
