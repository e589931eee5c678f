//! The Q-learning selector: a scalar-output network over state–action
//! vectors, trained by temporal-difference minimization with the Double-DQN
//! bootstrap (the next action is chosen by the online network, valued by the
//! target network), a FIFO replay buffer, and periodic target sync.
//!
//! Checkpoints capture the policy (both networks plus hyperparameters), not
//! the optimizer — a loaded agent is meant for frozen deployment, not for
//! resuming training.

use std::collections::VecDeque;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::featurize::{to_input_vector, ActionFeatures, AgentState};
use crate::nncore::{
    adam_step, Activation, AdamConfig, AdamState, DenseNet, Gradients, NetSpec,
};
use crate::seeding::{derive_seed, stream_rng};

/// On-disk format tag for agent checkpoints.
pub const AGENT_FORMAT: &str = "issm_agent_v1";

/// Selector hyperparameters. `epsilon_decay_steps` is the number of
/// selection steps over which ε anneals linearly from `epsilon_start` to
/// `epsilon_end`; callers planning a training run should set it from the
/// planned step count (the default only suits throwaway agents).
#[derive(Clone, Debug, Deserialize, PartialEq, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct AgentHyper {
    pub gamma: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub epsilon_decay_steps: u64,
    pub sync_period: u64,
    pub learning_rate: f64,
    pub n_bins: usize,
    pub hidden: Vec<usize>,
}

impl Default for AgentHyper {
    fn default() -> Self {
        AgentHyper {
            gamma: 0.9,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay_steps: 1000,
            sync_period: 50,
            learning_rate: 1e-4,
            n_bins: 10,
            hidden: vec![64, 32],
        }
    }
}

impl AgentHyper {
    /// Network input width: `[mmd_hyp, budget_ratio, mi_hyp, hist…]`.
    pub fn input_dim(&self) -> usize {
        3 + self.n_bins
    }

    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if !(0.0..1.0).contains(&self.gamma) {
            v.push(format!("gamma must be in [0, 1), got {}", self.gamma));
        }
        for (name, eps) in [
            ("epsilon_start", self.epsilon_start),
            ("epsilon_end", self.epsilon_end),
        ] {
            if !(0.0..=1.0).contains(&eps) {
                v.push(format!("{name} must be in [0, 1], got {eps}"));
            }
        }
        if self.epsilon_end > self.epsilon_start {
            v.push(format!(
                "epsilon_end {} exceeds epsilon_start {}",
                self.epsilon_end, self.epsilon_start
            ));
        }
        if self.epsilon_decay_steps == 0 {
            v.push("epsilon_decay_steps must be ≥ 1".into());
        }
        if self.sync_period == 0 {
            v.push("sync_period must be ≥ 1".into());
        }
        // 0 is deliberately legal: an inert optimizer is how meta tuning
        // realizes its "no inner adaptation" degenerate case.
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            v.push(format!(
                "learning_rate must be non-negative, got {}",
                self.learning_rate
            ));
        }
        if self.n_bins < 2 {
            v.push(format!("n_bins must be ≥ 2, got {}", self.n_bins));
        }
        v
    }
}

/// Which of the agent's two networks to evaluate.
#[derive(Clone, Copy, Debug, Eq, PartialEq)]
pub enum NetKind {
    Online,
    Target,
}

/// One labeling round as the agent sees it. Non-terminal transitions carry
/// the next round's full candidate set so the bootstrap can re-run the
/// argmax later, against whatever parameters the networks have by then.
#[derive(Clone, Debug)]
pub struct Transition {
    pub state: AgentState,
    pub action: ActionFeatures,
    pub reward: f64,
    pub next_state: AgentState,
    pub next_candidates: Vec<ActionFeatures>,
    pub terminal: bool,
}

/// Uniform-sampling FIFO experience store.
pub struct ReplayBuffer {
    entries: VecDeque<Transition>,
    capacity: usize,
    rng: ChaCha8Rng,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, seed: u64) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::InvalidInput("replay capacity must be ≥ 1".into()));
        }
        Ok(ReplayBuffer {
            entries: VecDeque::with_capacity(capacity),
            capacity,
            rng: stream_rng(seed, "replay-sample"),
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Append, evicting the oldest entry at capacity.
    pub fn push(&mut self, transition: Transition) {
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back(transition);
    }

    /// Draw `k` distinct transitions uniformly.
    pub fn sample(&mut self, k: usize) -> Result<Vec<Transition>> {
        if k == 0 || k > self.entries.len() {
            return Err(Error::InsufficientData(format!(
                "cannot sample {k} of {} stored transitions",
                self.entries.len()
            )));
        }
        let picks = rand::seq::index::sample(&mut self.rng, self.entries.len(), k);
        Ok(picks.into_iter().map(|i| self.entries[i].clone()).collect())
    }

    #[cfg(test)]
    fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.entries.iter()
    }
}

/// Double-DQN selector over state–action features.
pub struct QAgent {
    online: DenseNet,
    target: DenseNet,
    hyper: AgentHyper,
    adam: AdamState,
    updates: u64,
    explore_steps: u64,
    explore_rng: ChaCha8Rng,
    // Evaluation counters: audits (and tests) use them to confirm the
    // argmax/bootstrap split between the two networks.
    online_evals: AtomicU64,
    target_evals: AtomicU64,
}

#[derive(Deserialize, Serialize)]
struct AgentCounters {
    updates: u64,
    explore_steps: u64,
}

#[derive(Deserialize, Serialize)]
struct AgentCheckpoint {
    format: String,
    hyper: AgentHyper,
    counters: AgentCounters,
    online: NetSpec,
    target: NetSpec,
}

impl QAgent {
    /// Fresh agent with seeded initialization; the target network starts as
    /// an exact copy of the online one.
    pub fn new(hyper: AgentHyper, seed: u64) -> Result<Self> {
        let violations = hyper.violations();
        if !violations.is_empty() {
            return Err(Error::Config(violations));
        }
        let mut dims = vec![hyper.input_dim()];
        dims.extend_from_slice(&hyper.hidden);
        dims.push(1);
        let mut acts = vec![Activation::Relu; hyper.hidden.len()];
        acts.push(Activation::Identity);
        let online = DenseNet::new(&dims, &acts, derive_seed(seed, "agent-init"))?;
        Self::from_networks(online.clone(), online, hyper, seed)
    }

    /// Assemble an agent from explicit networks (checkpoint restore, tests).
    pub fn from_networks(
        online: DenseNet,
        target: DenseNet,
        hyper: AgentHyper,
        seed: u64,
    ) -> Result<Self> {
        let violations = hyper.violations();
        if !violations.is_empty() {
            return Err(Error::Config(violations));
        }
        if online.input_dim() != hyper.input_dim() {
            return Err(Error::Shape(format!(
                "network expects {}-d input, features are {}-d",
                online.input_dim(),
                hyper.input_dim()
            )));
        }
        if online.output_dim() != 1 {
            return Err(Error::Shape(format!(
                "Q-network must output a scalar, got width {}",
                online.output_dim()
            )));
        }
        let shapes_match = online.layers().len() == target.layers().len()
            && online
                .layers()
                .iter()
                .zip(target.layers())
                .all(|(a, b)| a.in_dim() == b.in_dim() && a.out_dim() == b.out_dim());
        if !shapes_match {
            return Err(Error::Shape(
                "online and target networks have different shapes".into(),
            ));
        }
        let adam = AdamState::new(&online);
        Ok(QAgent {
            online,
            target,
            hyper,
            adam,
            updates: 0,
            explore_steps: 0,
            explore_rng: stream_rng(seed, "agent-explore"),
            online_evals: AtomicU64::new(0),
            target_evals: AtomicU64::new(0),
        })
    }

    pub fn hyper(&self) -> &AgentHyper {
        &self.hyper
    }

    pub fn online(&self) -> &DenseNet {
        &self.online
    }

    pub fn target(&self) -> &DenseNet {
        &self.target
    }

    /// Number of optimizer steps taken so far.
    pub fn updates(&self) -> u64 {
        self.updates
    }

    /// Number of explore-mode selection calls so far (drives the ε anneal).
    pub fn explore_steps(&self) -> u64 {
        self.explore_steps
    }

    /// Current exploration rate under the linear anneal.
    pub fn epsilon(&self) -> f64 {
        let h = &self.hyper;
        let frac = (self.explore_steps as f64 / h.epsilon_decay_steps as f64).min(1.0);
        h.epsilon_start + (h.epsilon_end - h.epsilon_start) * frac
    }

    /// (online, target) forward-pass counts since construction or the last
    /// [`QAgent::reset_eval_counts`].
    pub fn eval_counts(&self) -> (u64, u64) {
        (
            self.online_evals.load(Ordering::Relaxed),
            self.target_evals.load(Ordering::Relaxed),
        )
    }

    pub fn reset_eval_counts(&self) {
        self.online_evals.store(0, Ordering::Relaxed);
        self.target_evals.store(0, Ordering::Relaxed);
    }

    /// Score one state–action pair with the chosen network.
    pub fn q_value(&self, state: &AgentState, action: &ActionFeatures, which: NetKind) -> Result<f64> {
        let input = to_input_vector(state, action);
        let (net, counter) = match which {
            NetKind::Online => (&self.online, &self.online_evals),
            NetKind::Target => (&self.target, &self.target_evals),
        };
        let out = net.forward(&input)?;
        counter.fetch_add(1, Ordering::Relaxed);
        Ok(out[0])
    }

    /// Pick `n` distinct candidates. Exploit mode is pure greedy (highest
    /// online Q, ties to the lowest candidate id) and consumes no
    /// randomness, so frozen deployment leaves the agent bit-identical.
    /// Explore mode decides per slot: with probability ε a uniform draw
    /// from the remaining candidates, otherwise the greedy pick; each call
    /// advances the ε anneal by one step.
    pub fn select_batch(
        &mut self,
        state: &AgentState,
        candidates: &[ActionFeatures],
        n: usize,
        explore: bool,
    ) -> Result<Vec<usize>> {
        if candidates.is_empty() {
            return Err(Error::InsufficientData(
                "cannot select from an empty candidate list".into(),
            ));
        }
        if n == 0 || n > candidates.len() {
            return Err(Error::InvalidInput(format!(
                "batch size {n} outside 1..={}",
                candidates.len()
            )));
        }
        let mut seen: Vec<usize> = candidates.iter().map(|a| a.candidate_id).collect();
        seen.sort_unstable();
        if seen.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidInput(
                "candidate list contains duplicate ids".into(),
            ));
        }

        let mut scored: Vec<(f64, usize, usize)> = Vec::with_capacity(candidates.len());
        for (idx, action) in candidates.iter().enumerate() {
            let q = self.q_value(state, action, NetKind::Online)?;
            scored.push((q, action.candidate_id, idx));
        }
        // Greedy preference order: highest Q first, then lowest id.
        let mut order: Vec<usize> = (0..candidates.len()).collect();
        order.sort_by(|&a, &b| {
            scored[b].0.partial_cmp(&scored[a].0).unwrap().then(scored[a].1.cmp(&scored[b].1))
        });

        if !explore {
            return Ok(order[..n].iter().map(|&i| scored[i].1).collect());
        }

        let epsilon = self.epsilon();
        let mut taken = vec![false; candidates.len()];
        let mut picked = Vec::with_capacity(n);
        let mut remaining: Vec<usize> = (0..candidates.len()).collect();
        for _ in 0..n {
            let choice = if self.explore_rng.random::<f64>() < epsilon {
                let slot = self.explore_rng.random_range(0..remaining.len());
                remaining.swap_remove(slot)
            } else {
                let idx = *order.iter().find(|&&i| !taken[i]).expect("n ≤ candidates");
                remaining.swap_remove(remaining.iter().position(|&r| r == idx).unwrap())
            };
            taken[choice] = true;
            picked.push(scored[choice].1);
        }
        self.explore_steps += 1;
        Ok(picked)
    }

    /// Bootstrap value of one transition: `r` if terminal, else
    /// `r + γ·Q_target(s′, a*)` with `a*` the online-network argmax over the
    /// stored next candidates (ties to the lowest candidate id).
    pub fn td_target(&self, tr: &Transition) -> Result<f64> {
        if tr.terminal {
            return Ok(tr.reward);
        }
        if tr.next_candidates.is_empty() {
            return Err(Error::InvalidInput(
                "non-terminal transition has no next candidates".into(),
            ));
        }
        let mut best: Option<(f64, usize, &ActionFeatures)> = None;
        for action in &tr.next_candidates {
            let q = self.q_value(&tr.next_state, action, NetKind::Online)?;
            let better = match &best {
                None => true,
                Some((bq, bid, _)) => q > *bq || (q == *bq && action.candidate_id < *bid),
            };
            if better {
                best = Some((q, action.candidate_id, action));
            }
        }
        let (_, _, a_star) = best.expect("nonempty candidates");
        let bootstrap = self.q_value(&tr.next_state, a_star, NetKind::Target)?;
        Ok(tr.reward + self.hyper.gamma * bootstrap)
    }

    /// One optimizer step on the mean squared TD error of `batch`. Targets
    /// are computed up front against the current parameters; gradients flow
    /// only through the online network's `Q(s, a)`. Returns the pre-update
    /// loss. Every `sync_period` updates the target network is refreshed
    /// with a copy of the online one (after the step).
    pub fn td_update(&mut self, batch: &[Transition]) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::InvalidInput("td_update on an empty batch".into()));
        }
        let targets: Vec<f64> = batch
            .iter()
            .map(|tr| self.td_target(tr))
            .collect::<Result<_>>()?;

        let scale = 1.0 / batch.len() as f64;
        let mut grads = Gradients::zeros_like(&self.online);
        let mut loss = 0.0;
        for (tr, y) in batch.iter().zip(&targets) {
            let input = to_input_vector(&tr.state, &tr.action);
            let trace = self.online.forward_trace(&input)?;
            self.online_evals.fetch_add(1, Ordering::Relaxed);
            let q = trace.output()[0];
            let err = q - y;
            loss += err * err * scale;
            let g = self.online.backward(&trace, &[2.0 * err * scale])?;
            grads.add_scaled(&g, 1.0);
        }
        adam_step(
            &mut self.online,
            &grads,
            &mut self.adam,
            &AdamConfig::with_learning_rate(self.hyper.learning_rate),
        )?;
        self.updates += 1;
        if self.updates % self.hyper.sync_period == 0 {
            self.target = self.online.clone();
        }
        Ok(loss)
    }

    pub fn save_checkpoint(&self, path: &Path) -> Result<()> {
        let ckpt = AgentCheckpoint {
            format: AGENT_FORMAT.into(),
            hyper: self.hyper.clone(),
            counters: AgentCounters {
                updates: self.updates,
                explore_steps: self.explore_steps,
            },
            online: self.online.to_spec(),
            target: self.target.to_spec(),
        };
        let text = serde_json::to_string_pretty(&ckpt)
            .map_err(|e| Error::InvalidInput(format!("checkpoint serialization: {e}")))?;
        std::fs::write(path, text).map_err(|e| Error::io(path.to_path_buf(), e))
    }

    /// Restore a checkpointed agent. Counters come back but optimizer state
    /// does not; `seed` re-seeds exploration.
    pub fn load_checkpoint(path: &Path, seed: u64) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::io(path.to_path_buf(), e))?;
        let ckpt: AgentCheckpoint = serde_json::from_str(&text).map_err(|e| Error::Parse {
            line: e.line(),
            message: format!("agent checkpoint: {e}"),
        })?;
        if ckpt.format != AGENT_FORMAT {
            return Err(Error::Protocol(format!(
                "expected checkpoint format {AGENT_FORMAT}, found {}",
                ckpt.format
            )));
        }
        let online = DenseNet::from_spec(&ckpt.online)?;
        let target = DenseNet::from_spec(&ckpt.target)?;
        let mut agent = Self::from_networks(online, target, ckpt.hyper, seed)?;
        agent.updates = ckpt.counters.updates;
        agent.explore_steps = ckpt.counters.explore_steps;
        Ok(agent)
    }
}
