//! Meta tuning: learn a Q-network initialization that adapts quickly.
//!
//! Each meta-iteration splits a sample set into a virtual-train and a
//! virtual-test part, adapts a copy of the meta parameters on a
//! virtual-train rollout (the inner TD updates), rolls the adapted agent
//! greedily through a fixed-horizon virtual-test episode, and descends the
//! resulting trajectory TD loss.
//!
//! Two deliberate simplifications, both first-order: the meta gradient is
//! taken at the adapted parameters and applied to the initialization (no
//! second-order terms), and the trajectory loss bootstraps through the
//! adapted network itself with the bootstrap term held constant during
//! differentiation (semi-gradient). The meta update is plain gradient
//! descent, not Adam.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::agent::{AgentHyper, QAgent, Transition};
use crate::alsim::{EnvConfig, PoolEnvironment};
use crate::datagen::{split_id_subset, Dataset};
use crate::error::{Error, Result};
use crate::featurize::{to_input_vector, ActionFeatures};
use crate::nncore::{DenseNet, Gradients, NetSpec};
use crate::seeding::{derive_seed, stream_rng};

/// On-disk format tag for meta checkpoints.
pub const META_FORMAT: &str = "issm_meta_v1";

/// Meta-tuning hyperparameters.
#[derive(Clone, Debug, Deserialize, PartialEq, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetaConfig {
    /// Virtual-test episode length (and the number of loss terms).
    pub horizon_h: usize,
    /// Step size of the meta update.
    pub meta_lr_beta: f64,
    /// TD updates taken during inner adaptation.
    pub inner_steps: usize,
    /// Share of each task's samples going to the virtual-train side.
    pub split_fraction: f64,
}

impl Default for MetaConfig {
    fn default() -> Self {
        MetaConfig {
            horizon_h: 10,
            meta_lr_beta: 1e-3,
            inner_steps: 5,
            split_fraction: 0.3,
        }
    }
}

impl MetaConfig {
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.horizon_h == 0 {
            v.push("horizon_h must be ≥ 1".into());
        }
        // 0 is deliberately legal: a zero meta step leaves the
        // initialization untouched, which is a documented degenerate case.
        if !(self.meta_lr_beta.is_finite() && self.meta_lr_beta >= 0.0) {
            v.push(format!(
                "meta_lr_beta must be non-negative, got {}",
                self.meta_lr_beta
            ));
        }
        if self.inner_steps == 0 {
            v.push("inner_steps must be ≥ 1".into());
        }
        if !(self.split_fraction > 0.0 && self.split_fraction < 1.0) {
            v.push(format!(
                "split_fraction must be inside (0, 1), got {}",
                self.split_fraction
            ));
        }
        v
    }
}

/// The learned initialization, plus the most recent adapted copy.
#[derive(Clone, Debug)]
pub struct MetaParams {
    theta_mt: DenseNet,
    theta_mt_star: Option<DenseNet>,
}

impl MetaParams {
    pub fn new(theta_mt: DenseNet) -> Self {
        MetaParams { theta_mt, theta_mt_star: None }
    }

    /// The meta initialization.
    pub fn theta(&self) -> &DenseNet {
        &self.theta_mt
    }

    /// The adapted parameters of the most recent inner update, if any.
    pub fn adapted(&self) -> Option<&DenseNet> {
        self.theta_mt_star.as_ref()
    }

    pub fn set_adapted(&mut self, theta_star: DenseNet) {
        self.theta_mt_star = Some(theta_star);
    }
}

/// Partition `ids` into (virtual-train, virtual-test), both sorted.
///
/// Class-stratified whenever every class present has ≥ 2 members and
/// every id is annotated: each class contributes
/// `clamp(round(fraction · size), 1, size − 1)` to the virtual-train side,
/// so both sides see every class. Otherwise a plain seeded draw of
/// `clamp(round(fraction · n), 1, n − 1)`.
pub fn split_virtual(
    dataset: &Dataset,
    ids: &[usize],
    cfg: &MetaConfig,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    let violations = cfg.violations();
    if !violations.is_empty() {
        return Err(Error::Config(violations));
    }
    if ids.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "cannot split {} sample(s) into two nonempty virtual sets",
            ids.len()
        )));
    }
    for &i in ids {
        if i >= dataset.len() {
            return Err(Error::InvalidInput(format!(
                "id {i} outside dataset of {} samples",
                dataset.len()
            )));
        }
    }
    let mut rng = stream_rng(seed, "virtual-split");
    let f = cfg.split_fraction;

    let mut per_class: Vec<Vec<usize>> = vec![Vec::new(); dataset.class_count()];
    let mut all_labeled = true;
    for &i in ids {
        match dataset.label(i) {
            Some(y) => per_class[y].push(i),
            None => all_labeled = false,
        }
    }
    let stratifiable =
        all_labeled && per_class.iter().all(|c| c.is_empty() || c.len() >= 2);

    let mut vtr = Vec::new();
    if stratifiable {
        for class_ids in &per_class {
            if class_ids.is_empty() {
                continue;
            }
            let quota = ((f * class_ids.len() as f64).round() as usize)
                .clamp(1, class_ids.len() - 1);
            let picks = rand::seq::index::sample(&mut rng, class_ids.len(), quota);
            vtr.extend(picks.into_iter().map(|k| class_ids[k]));
        }
    } else {
        let quota = ((f * ids.len() as f64).round() as usize).clamp(1, ids.len() - 1);
        let picks = rand::seq::index::sample(&mut rng, ids.len(), quota);
        vtr.extend(picks.into_iter().map(|k| ids[k]));
    }
    vtr.sort_unstable();
    let mut vte: Vec<usize> = ids
        .iter()
        .copied()
        .filter(|i| vtr.binary_search(i).is_err())
        .collect();
    vte.sort_unstable();
    Ok((vtr, vte))
}

/// One step of a greedy rollout: the environment transition plus the
/// greedy action at the next state (`None` only when the episode ended).
#[derive(Clone, Debug)]
pub struct RolloutStep {
    pub transition: Transition,
    pub next_action: Option<ActionFeatures>,
}

/// Run the agent greedily for up to `max_steps` rounds, recording each
/// round. No parameters change. The final step's `next_action` is a greedy
/// lookahead selection (chosen but not executed) unless the episode ended.
pub fn rollout_greedy(
    env: &mut PoolEnvironment,
    agent: &mut QAgent,
    batch_n: usize,
    max_steps: usize,
) -> Result<Vec<RolloutStep>> {
    if batch_n == 0 || max_steps == 0 {
        return Err(Error::InvalidInput(
            "batch_n and max_steps must be ≥ 1".into(),
        ));
    }
    let mut steps: Vec<RolloutStep> = Vec::new();
    while !env.terminal() && steps.len() < max_steps {
        let state = env.current_state();
        let candidates = env.current_actions().to_vec();
        let n = env.next_batch_size(batch_n);
        let ids = agent.select_batch(&state, &candidates, n, false)?;
        let first = candidates
            .iter()
            .find(|a| a.candidate_id == ids[0])
            .expect("selection came from these candidates")
            .clone();
        if let Some(prev) = steps.last_mut() {
            prev.next_action = Some(first.clone());
        }
        let outcome = env.step(&ids, batch_n)?;
        steps.push(RolloutStep {
            transition: Transition {
                state,
                action: first,
                reward: outcome.reward,
                next_state: outcome.next_state,
                next_candidates: if outcome.terminal {
                    Vec::new()
                } else {
                    env.current_actions().to_vec()
                },
                terminal: outcome.terminal,
            },
            next_action: None,
        });
    }
    // Lookahead for the final recorded step, when the episode is still live.
    if let Some(last) = steps.last_mut() {
        if !env.terminal() {
            let state = env.current_state();
            let candidates = env.current_actions().to_vec();
            let n = env.next_batch_size(batch_n);
            let ids = agent.select_batch(&state, &candidates, n, false)?;
            last.next_action = Some(
                candidates
                    .iter()
                    .find(|a| a.candidate_id == ids[0])
                    .expect("selection came from these candidates")
                    .clone(),
            );
        }
    }
    Ok(steps)
}

/// Adapt a copy of the initialization with `cfg.inner_steps` TD updates
/// over the episode's transitions. The initialization itself is untouched.
pub fn inner_update(
    meta: &MetaParams,
    episode: &[Transition],
    hyper: &AgentHyper,
    cfg: &MetaConfig,
) -> Result<DenseNet> {
    if episode.is_empty() {
        return Err(Error::InsufficientData(
            "inner adaptation needs at least one transition".into(),
        ));
    }
    let mut agent = QAgent::from_networks(
        meta.theta_mt.clone(),
        meta.theta_mt.clone(),
        hyper.clone(),
        0,
    )?;
    for _ in 0..cfg.inner_steps {
        agent.td_update(episode)?;
    }
    Ok(agent.online().clone())
}

/// Trajectory TD loss of Eq-style meta tuning: the sum over the recorded
/// horizon of `(Q(s,a;θ*) − r − γ·Q(s′,a′;θ*))²`, where a terminal step
/// contributes `(Q(s,a;θ*) − r)²`. Requires exactly `horizon_h` steps.
pub fn meta_loss(
    theta_star: &DenseNet,
    rollout: &[RolloutStep],
    gamma: f64,
    horizon_h: usize,
) -> Result<f64> {
    Ok(meta_gradient(theta_star, rollout, gamma, horizon_h)?.0)
}

/// [`meta_loss`] together with its semi-gradient at `theta_star`: only the
/// `Q(s,a)` term is differentiated; the bootstrap is held constant.
pub fn meta_gradient(
    theta_star: &DenseNet,
    rollout: &[RolloutStep],
    gamma: f64,
    horizon_h: usize,
) -> Result<(f64, Gradients)> {
    if rollout.len() != horizon_h {
        return Err(Error::InvalidInput(format!(
            "meta loss expects a horizon of {horizon_h} steps, rollout has {}",
            rollout.len()
        )));
    }
    let mut loss = 0.0;
    let mut grads = Gradients::zeros_like(theta_star);
    for step in rollout {
        let tr = &step.transition;
        let trace = theta_star.forward_trace(&to_input_vector(&tr.state, &tr.action))?;
        let q = trace.output()[0];
        let bootstrap = match &step.next_action {
            Some(a) => theta_star.forward(&to_input_vector(&tr.next_state, a))?[0],
            None => 0.0,
        };
        let err = q - tr.reward - gamma * bootstrap;
        loss += err * err;
        let g = theta_star.backward(&trace, &[2.0 * err])?;
        grads.add_scaled(&g, 1.0);
    }
    Ok((loss, grads))
}

/// Plain gradient-descent step on the initialization:
/// θ_mt ← θ_mt − β·grad.
pub fn meta_update(meta: &mut MetaParams, grad: &Gradients, beta: f64) -> Result<()> {
    if !(beta.is_finite() && beta >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "meta step size must be non-negative, got {beta}"
        )));
    }
    if !grad.matches(&meta.theta_mt) {
        return Err(Error::Shape(
            "meta gradient shaped unlike the meta parameters".into(),
        ));
    }
    meta.theta_mt.apply_gradients(grad, -beta);
    Ok(())
}

/// Everything a full meta-tuning run needs beyond the agent shape.
#[derive(Clone, Debug)]
pub struct MetaRunConfig {
    pub meta: MetaConfig,
    /// Number of meta-iterations (tasks).
    pub iterations: usize,
    /// Selection width during virtual rollouts.
    pub batch_n: usize,
    /// Environment template; its budget is overridden per virtual episode.
    pub env: EnvConfig,
    /// Share of each virtual set seeding that environment's labeled pool.
    pub labeled_fraction: f64,
    /// Share of each virtual set reserved as that environment's reward set.
    pub reward_fraction: f64,
}

impl MetaRunConfig {
    pub fn violations(&self) -> Vec<String> {
        let mut v = self.meta.violations();
        v.extend(self.env.violations());
        if self.iterations == 0 {
            v.push("iterations must be ≥ 1".into());
        }
        if self.batch_n == 0 {
            v.push("batch_n must be ≥ 1".into());
        }
        for (name, f) in [
            ("labeled_fraction", self.labeled_fraction),
            ("reward_fraction", self.reward_fraction),
        ] {
            if !(f > 0.0 && f < 1.0) {
                v.push(format!("{name} must be inside (0, 1), got {f}"));
            }
        }
        if self.labeled_fraction + self.reward_fraction >= 1.0 {
            v.push(format!(
                "labeled_fraction + reward_fraction must leave room for a pool, got {}",
                self.labeled_fraction + self.reward_fraction
            ));
        }
        v
    }
}

/// Outcome of [`meta_train`]: the tuned initialization and the per-iteration
/// meta-loss trajectory.
pub struct MetaTrainResult {
    pub params: MetaParams,
    pub losses: Vec<f64>,
}

/// Carve a virtual environment out of `ids`: a stratified labeled seed and
/// reward set sized by the configured fractions, the rest as the selection
/// pool. The budget asks for `horizon_h` full batches; with `exact_horizon`
/// a pool too small for that is an error, otherwise the budget shrinks to
/// the pool.
fn build_virtual_env<'a>(
    dataset: &'a Dataset,
    ids: &[usize],
    run: &MetaRunConfig,
    exact_horizon: bool,
    seed: u64,
) -> Result<PoolEnvironment<'a>> {
    let n = ids.len();
    let labeled_n = ((run.labeled_fraction * n as f64).round() as usize).max(2);
    let reward_n = ((run.reward_fraction * n as f64).round() as usize).max(1);
    if labeled_n + reward_n >= n {
        return Err(Error::InsufficientData(format!(
            "virtual set of {n} cannot fit {labeled_n} labeled + {reward_n} reward \
             samples and still leave a pool"
        )));
    }
    let split = split_id_subset(dataset, ids, labeled_n, reward_n, derive_seed(seed, "carve"))?;
    let pool = split.unlabeled.len();
    let desired = run.meta.horizon_h * run.batch_n;
    let budget = if exact_horizon {
        if desired > pool {
            return Err(Error::InsufficientData(format!(
                "virtual pool of {pool} cannot supply {} rounds of {} selections",
                run.meta.horizon_h, run.batch_n
            )));
        }
        desired
    } else {
        desired.min(pool)
    };
    let config = EnvConfig { budget, ..run.env.clone() };
    PoolEnvironment::new(dataset, &split, config, derive_seed(seed, "env"))
}

/// Run the full meta-tuning loop over tasks carved from `ids`.
///
/// Iteration `i` splits `ids` into virtual-train/virtual-test with a seed
/// derived from `i`, adapts on a greedy virtual-train rollout, scores the
/// adapted parameters on an exactly-H-step virtual-test rollout, and takes
/// one meta step. Deterministic given (dataset, ids, hyper, run, seed).
pub fn meta_train(
    dataset: &Dataset,
    ids: &[usize],
    hyper: &AgentHyper,
    run: &MetaRunConfig,
    seed: u64,
) -> Result<MetaTrainResult> {
    let mut violations = run.violations();
    violations.extend(hyper.violations());
    if !violations.is_empty() {
        return Err(Error::Config(violations));
    }

    // Reuse the agent's own seeded initialization for θ_mt.
    let init = QAgent::new(hyper.clone(), derive_seed(seed, "meta-init"))?;
    let mut params = MetaParams::new(init.online().clone());
    let mut losses = Vec::with_capacity(run.iterations);
    let h = run.meta.horizon_h;

    for i in 0..run.iterations {
        let iter_seed = derive_seed(seed, &format!("meta-iter-{i}"));
        let (vtr, vte) = split_virtual(dataset, ids, &run.meta, iter_seed)?;

        // Inner adaptation on a greedy virtual-train rollout under θ_mt.
        // That episode may run shorter than H on a small set; it only
        // feeds the inner TD updates.
        let mut vtr_env =
            build_virtual_env(dataset, &vtr, run, false, derive_seed(iter_seed, "vtr"))?;
        let mut meta_agent = QAgent::from_networks(
            params.theta().clone(),
            params.theta().clone(),
            hyper.clone(),
            0,
        )?;
        let vtr_rollout = rollout_greedy(&mut vtr_env, &mut meta_agent, run.batch_n, h)?;
        let transitions: Vec<Transition> =
            vtr_rollout.iter().map(|s| s.transition.clone()).collect();
        let theta_star = inner_update(&params, &transitions, hyper, &run.meta)?;

        // Exactly-H greedy virtual-test rollout under the adapted net.
        let mut vte_env =
            build_virtual_env(dataset, &vte, run, true, derive_seed(iter_seed, "vte"))?;
        let mut adapted_agent = QAgent::from_networks(
            theta_star.clone(),
            theta_star.clone(),
            hyper.clone(),
            0,
        )?;
        let vte_rollout =
            rollout_greedy(&mut vte_env, &mut adapted_agent, run.batch_n, h)?;

        let (loss, grad) = meta_gradient(&theta_star, &vte_rollout, hyper.gamma, h)?;
        meta_update(&mut params, &grad, run.meta.meta_lr_beta)?;
        params.set_adapted(theta_star);
        losses.push(loss);
    }
    Ok(MetaTrainResult { params, losses })
}

#[derive(Serialize, Deserialize)]
struct MetaCheckpoint {
    format: String,
    config: MetaConfig,
    theta_mt: NetSpec,
}

/// Persist the tuned initialization with its meta configuration.
pub fn save_meta_checkpoint(
    params: &MetaParams,
    cfg: &MetaConfig,
    path: &Path,
) -> Result<()> {
    let ckpt = MetaCheckpoint {
        format: META_FORMAT.into(),
        config: cfg.clone(),
        theta_mt: params.theta().to_spec(),
    };
    let text = serde_json::to_string_pretty(&ckpt)
        .map_err(|e| Error::InvalidInput(format!("checkpoint serialization: {e}")))?;
    std::fs::write(path, text).map_err(|e| Error::io(path.to_path_buf(), e))
}

/// Load a tuned initialization and the configuration it was tuned with.
pub fn load_meta_checkpoint(path: &Path) -> Result<(MetaParams, MetaConfig)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.to_path_buf(), e))?;
    let ckpt: MetaCheckpoint = serde_json::from_str(&text).map_err(|e| Error::Parse {
        line: e.line(),
        message: format!("meta checkpoint: {e}"),
    })?;
    if ckpt.format != META_FORMAT {
        return Err(Error::Protocol(format!(
            "expected checkpoint format {META_FORMAT}, found {}",
            ckpt.format
        )));
    }
    Ok((MetaParams::new(DenseNet::from_spec(&ckpt.theta_mt)?), ckpt.config))
}

/// Write the per-iteration meta-loss trajectory (`iteration,meta_loss`).
pub fn write_loss_csv(losses: &[f64], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)
        .map_err(|e| Error::InvalidInput(format!("cannot open {}: {e}", path.display())))?;
    let io_err = |e: csv::Error| Error::InvalidInput(format!("writing {}: {e}", path.display()));
    w.write_record(["iteration", "meta_loss"]).map_err(io_err)?;
    for (i, loss) in losses.iter().enumerate() {
        w.write_record([i.to_string(), loss.to_string()]).map_err(io_err)?;
    }
    w.flush().map_err(|e| Error::io(path.to_path_buf(), e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{generate, SyntheticSpec};
    use crate::featurize::AgentState;
    use crate::nncore::{Activation, Layer};

    fn spec(classes: usize, per_class: usize) -> SyntheticSpec {
        SyntheticSpec {
            classes,
            samples_per_class: per_class,
            frames: 6,
            joints: 2,
            dims: 2,
            class_separation: 1.0,
            noise_sigma: 0.3,
        }
    }

    fn all_ids(ds: &Dataset) -> Vec<usize> {
        (0..ds.len()).collect()
    }

    #[test]
    fn config_violations_are_collected() {
        let cfg = MetaConfig {
            horizon_h: 0,
            meta_lr_beta: f64::NAN,
            inner_steps: 0,
            split_fraction: 1.0,
        };
        assert_eq!(cfg.violations().len(), 4);
        assert!(MetaConfig::default().violations().is_empty());
        // A zero meta step is legal: it freezes the initialization.
        let frozen = MetaConfig { meta_lr_beta: 0.0, ..MetaConfig::default() };
        assert!(frozen.violations().is_empty());
    }

    #[test]
    fn split_sizes_follow_the_fraction() {
        let ds = generate(&spec(10, 10), 1).unwrap();
        let (vtr, vte) =
            split_virtual(&ds, &all_ids(&ds), &MetaConfig::default(), 7).unwrap();
        assert_eq!(vtr.len(), 30);
        assert_eq!(vte.len(), 70);
        // Disjoint and exhaustive.
        let mut joined = vtr.clone();
        joined.extend(&vte);
        joined.sort_unstable();
        assert_eq!(joined, all_ids(&ds));
    }

    #[test]
    fn split_is_deterministic() {
        let ds = generate(&spec(4, 8), 2).unwrap();
        let a = split_virtual(&ds, &all_ids(&ds), &MetaConfig::default(), 9).unwrap();
        let b = split_virtual(&ds, &all_ids(&ds), &MetaConfig::default(), 9).unwrap();
        assert_eq!(a, b);
        let c = split_virtual(&ds, &all_ids(&ds), &MetaConfig::default(), 10).unwrap();
        assert_ne!(a.0, c.0);
    }

    #[test]
    fn tiny_classes_split_one_and_one() {
        // Five classes of two samples each: every class must land on both
        // sides, regardless of the 0.3 fraction.
        let ds = generate(&spec(5, 2), 3).unwrap();
        let (vtr, vte) =
            split_virtual(&ds, &all_ids(&ds), &MetaConfig::default(), 11).unwrap();
        assert_eq!(vtr.len(), 5);
        assert_eq!(vte.len(), 5);
        let mut vtr_classes: Vec<usize> =
            vtr.iter().map(|&i| ds.label(i).unwrap()).collect();
        vtr_classes.sort_unstable();
        assert_eq!(vtr_classes, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn split_keeps_both_sides_nonempty_at_extreme_fractions() {
        let ds = generate(&spec(2, 1), 4).unwrap();
        let cfg = MetaConfig { split_fraction: 0.9, ..MetaConfig::default() };
        // Two samples, fraction 0.9: round(1.8) = 2 must clamp down to 1.
        let (vtr, vte) = split_virtual(&ds, &all_ids(&ds), &cfg, 1).unwrap();
        assert_eq!(vtr.len(), 1);
        assert_eq!(vte.len(), 1);
    }

    #[test]
    fn split_rejects_degenerate_inputs() {
        let ds = generate(&spec(2, 2), 5).unwrap();
        assert!(matches!(
            split_virtual(&ds, &[0], &MetaConfig::default(), 1),
            Err(Error::InsufficientData(_))
        ));
        let bad = MetaConfig { split_fraction: 0.0, ..MetaConfig::default() };
        assert!(matches!(
            split_virtual(&ds, &all_ids(&ds), &bad, 1),
            Err(Error::Config(_))
        ));
    }

    // ===== hand-built nets for the loss arithmetic =====

    fn hyper() -> AgentHyper {
        AgentHyper { n_bins: 2, hidden: vec![], ..AgentHyper::default() }
    }

    /// Single identity layer reading the marginal-index coordinate scaled
    /// by `w` (input layout: [mmd, budget, mi, hist…]).
    fn mi_reader(w: f64) -> DenseNet {
        let mut weights = vec![0.0; 5];
        weights[2] = w;
        DenseNet::from_layers(vec![Layer::new(
            5,
            1,
            Activation::Identity,
            weights,
            vec![0.0],
        )
        .unwrap()])
        .unwrap()
    }

    fn action(id: usize, mi: f64) -> ActionFeatures {
        ActionFeatures { candidate_id: id, mi_hyp: mi, hist_hyp: vec![0.0, 0.0] }
    }

    fn zero_state() -> AgentState {
        AgentState { mmd_hyp: 0.0, budget_ratio: 0.0 }
    }

    fn step(q_mi: f64, reward: f64, next_mi: Option<f64>) -> RolloutStep {
        RolloutStep {
            transition: Transition {
                state: zero_state(),
                action: action(0, q_mi),
                reward,
                next_state: zero_state(),
                next_candidates: vec![],
                terminal: next_mi.is_none(),
            },
            next_action: next_mi.map(|mi| action(1, mi)),
        }
    }

    #[test]
    fn meta_loss_hand_value() {
        // Q = 0.8, r = 0.1, γ = 0.9, Q' = 0.5 → (0.8 − 0.1 − 0.45)² = 0.0625.
        let net = mi_reader(1.0);
        let rollout = vec![step(0.8, 0.1, Some(0.5))];
        let loss = meta_loss(&net, &rollout, 0.9, 1).unwrap();
        assert!((loss - 0.0625).abs() < 1e-12);
    }

    #[test]
    fn meta_loss_is_additive_over_the_horizon() {
        let net = mi_reader(1.0);
        let s1 = step(0.8, 0.1, Some(0.5));
        let s2 = step(0.3, 0.2, Some(0.1));
        let l1 = meta_loss(&net, &[s1.clone()], 0.9, 1).unwrap();
        let l2 = meta_loss(&net, &[s2.clone()], 0.9, 1).unwrap();
        let both = meta_loss(&net, &[s1, s2], 0.9, 2).unwrap();
        assert!((both - (l1 + l2)).abs() < 1e-12);
    }

    #[test]
    fn meta_loss_terminal_step_skips_the_bootstrap() {
        let net = mi_reader(1.0);
        let rollout = vec![step(0.8, 0.1, None)];
        let loss = meta_loss(&net, &rollout, 0.9, 1).unwrap();
        assert!((loss - 0.49).abs() < 1e-12);
    }

    #[test]
    fn meta_loss_zero_for_zero_network_and_rewards() {
        let net = mi_reader(0.0);
        let rollout = vec![step(0.8, 0.0, Some(0.5)), step(0.1, 0.0, None)];
        assert_eq!(meta_loss(&net, &rollout, 0.9, 2).unwrap(), 0.0);
    }

    #[test]
    fn meta_loss_enforces_the_horizon() {
        let net = mi_reader(1.0);
        let rollout = vec![step(0.8, 0.1, Some(0.5))];
        assert!(matches!(
            meta_loss(&net, &rollout, 0.9, 2),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn meta_update_arithmetic_and_degenerate_cases() {
        // 1-in/1-out identity net: W = [2], b = [0]; input [3], upstream
        // gradient 2 → dW = 6, db = 2.
        let net = DenseNet::from_layers(vec![Layer::new(
            1,
            1,
            Activation::Identity,
            vec![2.0],
            vec![0.0],
        )
        .unwrap()])
        .unwrap();
        let trace = net.forward_trace(&[3.0]).unwrap();
        let grad = net.backward(&trace, &[2.0]).unwrap();

        let mut params = MetaParams::new(net.clone());
        meta_update(&mut params, &grad, 0.0).unwrap();
        assert_eq!(params.theta().to_spec(), net.to_spec());

        meta_update(&mut params, &grad, 0.1).unwrap();
        let spec = params.theta().to_spec();
        assert!((spec.layers[0].weights[0] - (2.0 - 0.6)).abs() < 1e-15);
        // Grad 2.0 on the bias with β = 0.1 → Δb = −0.2.
        assert!((spec.layers[0].bias[0] - (-0.2)).abs() < 1e-15);

        let zero = Gradients::zeros_like(&net);
        let before = params.theta().to_spec();
        meta_update(&mut params, &zero, 0.5).unwrap();
        assert_eq!(params.theta().to_spec(), before);

        let wrong = Gradients::zeros_like(&mi_reader(1.0));
        assert!(matches!(
            meta_update(&mut params, &wrong, 0.1),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn inner_update_with_inert_optimizer_returns_theta_exactly() {
        let h = AgentHyper { learning_rate: 0.0, ..hyper() };
        let params = MetaParams::new(mi_reader(0.7));
        let episode = vec![step(0.4, 0.1, None).transition];
        let adapted = inner_update(&params, &episode, &h, &MetaConfig::default()).unwrap();
        assert_eq!(adapted.to_spec(), params.theta().to_spec());
    }

    #[test]
    fn inner_update_matches_a_manual_td_replay() {
        let h = AgentHyper { learning_rate: 0.01, ..hyper() };
        let cfg = MetaConfig { inner_steps: 3, ..MetaConfig::default() };
        let params = MetaParams::new(mi_reader(0.7));
        let episode: Vec<Transition> = vec![
            step(0.4, 0.1, None).transition,
            step(0.9, -0.05, None).transition,
        ];
        let adapted = inner_update(&params, &episode, &h, &cfg).unwrap();

        let mut manual = QAgent::from_networks(
            params.theta().clone(),
            params.theta().clone(),
            h,
            0,
        )
        .unwrap();
        for _ in 0..3 {
            manual.td_update(&episode).unwrap();
        }
        assert_eq!(adapted.to_spec(), manual.online().to_spec());
        // And the initialization itself never moved.
        assert_eq!(params.theta().to_spec(), mi_reader(0.7).to_spec());
    }

    #[test]
    fn inner_update_rejects_empty_episodes() {
        let params = MetaParams::new(mi_reader(0.7));
        assert!(matches!(
            inner_update(&params, &[], &hyper(), &MetaConfig::default()),
            Err(Error::InsufficientData(_))
        ));
    }

    // ===== end-to-end meta training on a small task distribution =====

    fn small_run() -> MetaRunConfig {
        MetaRunConfig {
            meta: MetaConfig { horizon_h: 3, inner_steps: 2, ..MetaConfig::default() },
            iterations: 2,
            batch_n: 2,
            env: EnvConfig {
                budget: 1, // overridden per virtual episode
                n_bins: 4,
                curvature: crate::hypgeo::Curvature::unit(),
                recognizer: crate::recognizer::RecognizerConfig {
                    hidden: vec![16, 8],
                    epochs: 4,
                    ..Default::default()
                },
            },
            labeled_fraction: 0.2,
            reward_fraction: 0.15,
        }
    }

    fn small_hyper() -> AgentHyper {
        AgentHyper {
            n_bins: 4,
            hidden: vec![8],
            learning_rate: 1e-3,
            ..AgentHyper::default()
        }
    }

    #[test]
    fn meta_train_produces_losses_and_moves_theta() {
        let ds = generate(&spec(3, 20), 6).unwrap();
        let result =
            meta_train(&ds, &all_ids(&ds), &small_hyper(), &small_run(), 42).unwrap();
        assert_eq!(result.losses.len(), 2);
        assert!(result.losses.iter().all(|l| l.is_finite() && *l >= 0.0));
        assert!(result.params.adapted().is_some());
        // θ_mt moved away from its seeded initialization.
        let init = QAgent::new(small_hyper(), derive_seed(42, "meta-init")).unwrap();
        assert_ne!(result.params.theta().to_spec(), init.online().to_spec());
    }

    #[test]
    fn meta_train_is_deterministic() {
        let ds = generate(&spec(3, 20), 7).unwrap();
        let a = meta_train(&ds, &all_ids(&ds), &small_hyper(), &small_run(), 9).unwrap();
        let b = meta_train(&ds, &all_ids(&ds), &small_hyper(), &small_run(), 9).unwrap();
        assert_eq!(a.losses, b.losses);
        assert_eq!(a.params.theta().to_spec(), b.params.theta().to_spec());
    }

    #[test]
    fn meta_train_collects_config_violations_up_front() {
        let ds = generate(&spec(3, 20), 8).unwrap();
        let mut run = small_run();
        run.iterations = 0;
        run.labeled_fraction = 0.0;
        match meta_train(&ds, &all_ids(&ds), &small_hyper(), &run, 1) {
            Err(Error::Config(v)) => assert_eq!(v.len(), 2),
            Err(other) => panic!("expected config error, got {other}"),
            Ok(_) => panic!("expected config error"),
        }
    }

    #[test]
    fn rollout_records_the_action_chain() {
        let ds = generate(&spec(3, 20), 10).unwrap();
        let run = small_run();
        let mut env = build_virtual_env(&ds, &all_ids(&ds), &run, true, 3).unwrap();
        let mut agent = QAgent::new(small_hyper(), 1).unwrap();
        let steps = rollout_greedy(&mut env, &mut agent, 2, 3).unwrap();
        assert_eq!(steps.len(), 3);
        for pair in steps.windows(2) {
            assert_eq!(
                pair[0].next_action.as_ref().unwrap(),
                &pair[1].transition.action
            );
        }
        // The exact-horizon budget (3·2) runs out on the last round, so the
        // episode ends there: no lookahead, bootstrap of zero.
        assert!(steps.last().unwrap().transition.terminal);
        assert!(steps.last().unwrap().next_action.is_none());
        for s in &steps[..2] {
            assert!(!s.transition.terminal);
            assert!(!s.transition.next_candidates.is_empty());
        }
    }

    #[test]
    fn rollout_truncated_before_the_budget_takes_a_lookahead() {
        let ds = generate(&spec(3, 20), 10).unwrap();
        let run = small_run();
        let mut env = build_virtual_env(&ds, &all_ids(&ds), &run, true, 3).unwrap();
        let mut agent = QAgent::new(small_hyper(), 1).unwrap();
        // Stop after 2 of the 3 affordable rounds: the episode is still
        // live, so the final step carries the greedy next action.
        let steps = rollout_greedy(&mut env, &mut agent, 2, 2).unwrap();
        assert_eq!(steps.len(), 2);
        let last = steps.last().unwrap();
        assert!(!last.transition.terminal);
        assert!(last.next_action.is_some());
        assert!(!env.terminal());
    }

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("meta.json");
        let params = MetaParams::new(mi_reader(0.7));
        let cfg = MetaConfig { horizon_h: 4, ..MetaConfig::default() };
        save_meta_checkpoint(&params, &cfg, &path).unwrap();
        let (restored, rcfg) = load_meta_checkpoint(&path).unwrap();
        assert_eq!(restored.theta().to_spec(), params.theta().to_spec());
        assert_eq!(rcfg, cfg);

        let mangled = std::fs::read_to_string(&path)
            .unwrap()
            .replace(META_FORMAT, "not_a_meta_file");
        std::fs::write(&path, mangled).unwrap();
        assert!(matches!(load_meta_checkpoint(&path), Err(Error::Protocol(_))));
    }

    #[test]
    fn loss_csv_has_one_row_per_iteration() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("losses.csv");
        write_loss_csv(&[0.5, 0.25, 0.125], &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[0], "iteration,meta_loss");
        assert_eq!(lines[1], "0,0.5");
        assert_eq!(lines[3], "2,0.125");
    }
}
