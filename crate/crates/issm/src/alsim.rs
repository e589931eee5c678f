//! Pool-based active-learning episodes.
//!
//! [`PoolEnvironment`] holds the three id pools (labeled, unlabeled,
//! reward), retrains the recognizer from scratch after every labeling batch,
//! and pays out the change in reward-set accuracy. [`run_episode`] drives a
//! Q-agent through an episode — optionally training it online from a replay
//! buffer — while [`run_baseline_episode`] drives the non-learned selectors
//! (uniform, margin, core-set) through the same accounting so the logs are
//! directly comparable.
//!
//! Retraining is deliberately from scratch with a seed fixed per
//! environment: the recognizer after a step is a pure function of the
//! labeled set, never of episode history, which is what makes replays and
//! the telescoping-reward check exact.

use std::path::Path;
use std::time::Instant;

use rand::Rng;
use serde::Serialize;

use crate::agent::{QAgent, ReplayBuffer, Transition};
use crate::datagen::{Dataset, PoolSplit};
use crate::discrepancy::{FeatureMatrix, KernelConfig, SetOrigin};
use crate::error::{Error, Result};
use crate::featurize::{build_action, build_state_detailed, ActionFeatures, AgentState};
use crate::hypgeo::Curvature;
use crate::recognizer::{train_recognizer, RecognizerConfig, RecognizerSnapshot};
use crate::seeding::{derive_seed, stream_rng};

/// Environment shape: budget, featurization, and recognizer settings.
#[derive(Clone, Debug)]
pub struct EnvConfig {
    /// Total number of annotations the episode may buy.
    pub budget: usize,
    /// Bins in the representativeness histogram (must match the agent).
    pub n_bins: usize,
    pub curvature: Curvature,
    pub recognizer: RecognizerConfig,
}

impl EnvConfig {
    pub fn violations(&self) -> Vec<String> {
        let mut v = self.recognizer.violations();
        if self.budget == 0 {
            v.push("budget must be ≥ 1".into());
        }
        if self.n_bins < 2 {
            v.push(format!("n_bins must be ≥ 2, got {}", self.n_bins));
        }
        v
    }
}

/// What one environment step hands back to the driver.
#[derive(Clone, Debug)]
pub struct StepOutcome {
    /// Reward-set accuracy delta caused by the batch.
    pub reward: f64,
    pub next_state: AgentState,
    pub terminal: bool,
}

/// The labeling simulator: three disjoint id pools, a recognizer retrained
/// on every step, and the featurized view of the current round.
pub struct PoolEnvironment<'a> {
    dataset: &'a Dataset,
    config: EnvConfig,
    seed: u64,
    labeled: Vec<usize>,
    unlabeled: Vec<usize>,
    reward_ids: Vec<usize>,
    reward_features: Vec<Vec<f64>>,
    reward_labels: Vec<usize>,
    spent: usize,
    recognizer: RecognizerSnapshot,
    last_accuracy: f64,
    current_state: AgentState,
    current_raw_mmd: f64,
    current_actions: Vec<ActionFeatures>,
    kernel: KernelConfig,
    // Sorted labeled ids at every retrain, in order; lets audits prove the
    // reward set never leaks into training.
    training_audit: Vec<Vec<usize>>,
}

impl<'a> PoolEnvironment<'a> {
    /// Build the environment and train the initial recognizer on the seed
    /// labeled set. Every id in the split must carry a ground-truth label —
    /// the simulator reveals labels as the agent buys them.
    pub fn new(
        dataset: &'a Dataset,
        split: &PoolSplit,
        config: EnvConfig,
        seed: u64,
    ) -> Result<Self> {
        let violations = config.violations();
        if !violations.is_empty() {
            return Err(Error::Config(violations));
        }
        if split.labeled.is_empty() {
            return Err(Error::InsufficientData(
                "initial labeled set is empty; the recognizer needs a starting set".into(),
            ));
        }
        if split.reward.is_empty() {
            return Err(Error::InsufficientData(
                "reward set is empty; rewards would be undefined".into(),
            ));
        }
        let mut all: Vec<usize> = Vec::new();
        for (name, ids) in [
            ("labeled", &split.labeled),
            ("unlabeled", &split.unlabeled),
            ("reward", &split.reward),
        ] {
            for &i in ids {
                if i >= dataset.len() {
                    return Err(Error::InvalidInput(format!(
                        "{name} id {i} outside dataset of {} samples",
                        dataset.len()
                    )));
                }
                if dataset.label(i).is_none() {
                    return Err(Error::InvalidInput(format!(
                        "{name} sample {i} has no ground-truth label to reveal",
                        name = name,
                        i = i
                    )));
                }
                all.push(i);
            }
        }
        all.sort_unstable();
        if all.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidInput(
                "labeled/unlabeled/reward pools overlap".into(),
            ));
        }
        if dataset.class_count() < 2 {
            return Err(Error::InvalidInput(format!(
                "need ≥ 2 classes, dataset has {}",
                dataset.class_count()
            )));
        }

        let reward_features: Vec<Vec<f64>> = split
            .reward
            .iter()
            .map(|&i| dataset.features(i).to_vec())
            .collect();
        let reward_labels: Vec<usize> = split
            .reward
            .iter()
            .map(|&i| dataset.label(i).expect("validated above"))
            .collect();

        let kernel = KernelConfig {
            subsample_seed: derive_seed(seed, "mmd-subsample"),
            ..KernelConfig::median()
        };
        let labeled = sorted(&split.labeled);
        let recognizer = retrain_on(
            dataset,
            &labeled,
            &config.recognizer,
            derive_seed(seed, "retrain"),
        )?;
        let last_accuracy = recognizer.evaluate_accuracy(&reward_features, &reward_labels)?;
        let mut env = PoolEnvironment {
            dataset,
            config,
            seed,
            training_audit: vec![labeled.clone()],
            labeled,
            unlabeled: sorted(&split.unlabeled),
            reward_ids: sorted(&split.reward),
            reward_features,
            reward_labels,
            spent: 0,
            recognizer,
            last_accuracy,
            current_state: AgentState { mmd_hyp: 0.0, budget_ratio: 0.0 },
            current_raw_mmd: 0.0,
            current_actions: Vec::new(),
            kernel,
        };
        env.refresh_round()?;
        Ok(env)
    }

    pub fn dataset(&self) -> &Dataset {
        self.dataset
    }

    pub fn labeled(&self) -> &[usize] {
        &self.labeled
    }

    pub fn unlabeled(&self) -> &[usize] {
        &self.unlabeled
    }

    pub fn reward_ids(&self) -> &[usize] {
        &self.reward_ids
    }

    pub fn spent(&self) -> usize {
        self.spent
    }

    pub fn budget(&self) -> usize {
        self.config.budget
    }

    pub fn n_bins(&self) -> usize {
        self.config.n_bins
    }

    /// Reward-set accuracy of the current recognizer.
    pub fn last_accuracy(&self) -> f64 {
        self.last_accuracy
    }

    pub fn recognizer(&self) -> &RecognizerSnapshot {
        &self.recognizer
    }

    /// Featurized state of the current round.
    pub fn current_state(&self) -> AgentState {
        self.current_state
    }

    /// Unprojected distribution gap behind [`Self::current_state`].
    pub fn current_raw_mmd(&self) -> f64 {
        self.current_raw_mmd
    }

    /// Action features of every current candidate, in ascending id order.
    pub fn current_actions(&self) -> &[ActionFeatures] {
        &self.current_actions
    }

    pub fn terminal(&self) -> bool {
        self.spent == self.config.budget || self.unlabeled.is_empty()
    }

    /// Number of samples the next batch should select.
    pub fn next_batch_size(&self, batch_n: usize) -> usize {
        batch_n
            .min(self.config.budget - self.spent)
            .min(self.unlabeled.len())
    }

    /// Sorted labeled ids of every recognizer (re)train so far.
    pub fn training_set_audit(&self) -> &[Vec<usize>] {
        &self.training_audit
    }

    /// Embeddings of the given samples under the current recognizer.
    pub fn embeddings_of(&self, ids: &[usize], origin: SetOrigin) -> Result<FeatureMatrix> {
        let rows = ids
            .iter()
            .map(|&i| self.recognizer.embed(self.dataset.features(i)))
            .collect::<Result<Vec<_>>>()?;
        FeatureMatrix::from_rows(rows, origin)
    }

    /// Annotate `selected_ids`, retrain, and pay the accuracy delta.
    ///
    /// The selection must be exactly the size [`Self::next_batch_size`]
    /// dictates and drawn entirely from the unlabeled pool; anything else is
    /// a protocol error, as is stepping a finished episode.
    pub fn step(&mut self, selected_ids: &[usize], batch_n: usize) -> Result<StepOutcome> {
        if self.terminal() {
            return Err(Error::Protocol(
                "episode is over (budget spent or pool empty)".into(),
            ));
        }
        let expected = self.next_batch_size(batch_n);
        if selected_ids.len() != expected {
            return Err(Error::Protocol(format!(
                "expected a batch of {expected}, got {}",
                selected_ids.len()
            )));
        }
        let mut uniq = selected_ids.to_vec();
        uniq.sort_unstable();
        if uniq.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Protocol("selection contains duplicate ids".into()));
        }
        for &id in &uniq {
            if self.unlabeled.binary_search(&id).is_err() {
                return Err(Error::Protocol(format!(
                    "selected id {id} is not in the unlabeled pool"
                )));
            }
        }

        for &id in &uniq {
            let pos = self.unlabeled.binary_search(&id).expect("checked above");
            self.unlabeled.remove(pos);
            let pos = self.labeled.binary_search(&id).unwrap_err();
            self.labeled.insert(pos, id);
        }
        self.spent += uniq.len();

        self.retrain()?;
        let accuracy = self
            .recognizer
            .evaluate_accuracy(&self.reward_features, &self.reward_labels)?;
        let reward = accuracy - self.last_accuracy;
        self.last_accuracy = accuracy;
        self.refresh_round()?;

        Ok(StepOutcome {
            reward,
            next_state: self.current_state,
            terminal: self.terminal(),
        })
    }

    /// From-scratch retrain on the current labeled set (fixed env seed, so
    /// the result depends only on which ids are labeled).
    fn retrain(&mut self) -> Result<()> {
        self.training_audit.push(self.labeled.clone());
        self.recognizer = retrain_on(
            self.dataset,
            &self.labeled,
            &self.config.recognizer,
            derive_seed(self.seed, "retrain"),
        )?;
        Ok(())
    }

    /// Recompute the featurized view (state + candidate actions) after the
    /// pools or the recognizer changed. With an empty pool the distribution
    /// gap is undefined; the state reports it as 0 by convention and no
    /// actions are produced.
    fn refresh_round(&mut self) -> Result<()> {
        if self.unlabeled.is_empty() {
            self.current_state = AgentState {
                mmd_hyp: 0.0,
                budget_ratio: self.spent as f64 / self.config.budget as f64,
            };
            self.current_raw_mmd = 0.0;
            self.current_actions = Vec::new();
            return Ok(());
        }
        let sl = self.embeddings_of(&self.labeled, SetOrigin::Labeled)?;
        let su = self.embeddings_of(&self.unlabeled, SetOrigin::Unlabeled)?;
        let (state, raw) = build_state_detailed(
            &sl,
            &su,
            self.spent,
            self.config.budget,
            &self.kernel,
            self.config.curvature,
        )?;
        self.current_state = state;
        self.current_raw_mmd = raw;
        self.current_actions = self
            .unlabeled
            .iter()
            .map(|&id| {
                build_action(
                    &self.recognizer,
                    self.dataset.features(id),
                    &su,
                    self.config.n_bins,
                    self.config.curvature,
                    id,
                )
            })
            .collect::<Result<_>>()?;
        Ok(())
    }
}

fn sorted(ids: &[usize]) -> Vec<usize> {
    let mut v = ids.to_vec();
    v.sort_unstable();
    v
}

/// From-scratch recognizer train on the given labeled ids.
fn retrain_on(
    dataset: &Dataset,
    labeled: &[usize],
    cfg: &RecognizerConfig,
    seed: u64,
) -> Result<RecognizerSnapshot> {
    let features: Vec<Vec<f64>> = labeled
        .iter()
        .map(|&i| dataset.features(i).to_vec())
        .collect();
    let labels: Vec<usize> = labeled
        .iter()
        .map(|&i| dataset.label(i).expect("validated at construction"))
        .collect();
    train_recognizer(&features, &labels, dataset.class_count(), cfg, seed)
}

/// One logged labeling round.
#[derive(Clone, Debug)]
pub struct IterationRecord {
    /// 1-based round counter.
    pub iter: usize,
    /// Cumulative annotations after this round.
    pub spent: usize,
    /// Raw (unprojected) distribution gap of the pre-selection state.
    pub mmd: f64,
    pub reward: f64,
    /// Reward-set accuracy after this round's retrain.
    pub accuracy: f64,
    /// External dataset ids, in selection order.
    pub selected_ids: Vec<u64>,
    /// Wall time of the round (featurize + select + retrain).
    pub millis: u64,
}

/// Full record of one episode.
#[derive(Clone, Debug)]
pub struct EpisodeLog {
    /// Label for the selector that produced this episode; callers set it.
    pub method: String,
    /// Seed label for the run; callers set it.
    pub seed: u64,
    /// Reward-set accuracy before any selection.
    pub initial_accuracy: f64,
    pub records: Vec<IterationRecord>,
}

#[derive(Serialize)]
struct EpisodeSummary<'s> {
    method: &'s str,
    seed: u64,
    final_accuracy: f64,
    auc_of_accuracy_curve: f64,
}

impl EpisodeLog {
    pub fn final_accuracy(&self) -> f64 {
        self.records
            .last()
            .map_or(self.initial_accuracy, |r| r.accuracy)
    }

    pub fn cumulative_reward(&self) -> f64 {
        self.records.iter().map(|r| r.reward).sum()
    }

    /// Trapezoidal area under the accuracy curve over normalized spend,
    /// including the pre-selection point at spend 0. An episode with no
    /// rounds degenerates to its initial accuracy.
    pub fn accuracy_auc(&self) -> f64 {
        let last_spent = match self.records.last() {
            Some(r) if r.spent > 0 => r.spent as f64,
            _ => return self.initial_accuracy,
        };
        let mut auc = 0.0;
        let mut prev_x = 0.0;
        let mut prev_y = self.initial_accuracy;
        for r in &self.records {
            let x = r.spent as f64 / last_spent;
            auc += (x - prev_x) * (prev_y + r.accuracy) / 2.0;
            prev_x = x;
            prev_y = r.accuracy;
        }
        auc
    }

    /// Write one CSV row per round. `deterministic` zeroes the wall-time
    /// column so identical runs produce identical bytes.
    pub fn write_csv(&self, path: &Path, deterministic: bool) -> Result<()> {
        let mut w = csv::Writer::from_path(path)
            .map_err(|e| Error::InvalidInput(format!("cannot open {}: {e}", path.display())))?;
        let io_err = |e: csv::Error| Error::InvalidInput(format!("writing {}: {e}", path.display()));
        w.write_record(["iter", "spent", "mmd", "reward", "accuracy", "selected_ids", "millis"])
            .map_err(io_err)?;
        for r in &self.records {
            let ids = r
                .selected_ids
                .iter()
                .map(|id| id.to_string())
                .collect::<Vec<_>>()
                .join(";");
            let millis = if deterministic { 0 } else { r.millis };
            w.write_record([
                r.iter.to_string(),
                r.spent.to_string(),
                r.mmd.to_string(),
                r.reward.to_string(),
                r.accuracy.to_string(),
                ids,
                millis.to_string(),
            ])
            .map_err(io_err)?;
        }
        w.flush().map_err(|e| Error::io(path.to_path_buf(), e))
    }

    /// Terminal summary as a JSON object string.
    pub fn summary_json(&self) -> String {
        let summary = EpisodeSummary {
            method: &self.method,
            seed: self.seed,
            final_accuracy: self.final_accuracy(),
            auc_of_accuracy_curve: self.accuracy_auc(),
        };
        serde_json::to_string_pretty(&summary).expect("plain fields always serialize")
    }
}

/// How [`run_episode`] should treat the agent.
pub enum EpisodeMode<'r> {
    /// ε-greedy selection; push a transition per round and take
    /// `updates_per_step` optimizer steps on replay samples of up to
    /// `td_batch_size` after each one.
    Train {
        replay: &'r mut ReplayBuffer,
        td_batch_size: usize,
        updates_per_step: usize,
    },
    /// Greedy selection only; the agent is left bit-identical.
    Frozen,
}

/// Drive the agent through one full episode.
///
/// The stored transition uses the round's first-selected action and the
/// post-batch state; non-terminal transitions carry the next round's full
/// candidate set for the bootstrap argmax.
pub fn run_episode(
    env: &mut PoolEnvironment,
    agent: &mut QAgent,
    mut mode: EpisodeMode,
    batch_n: usize,
) -> Result<EpisodeLog> {
    if agent.hyper().n_bins != env.n_bins() {
        return Err(Error::Shape(format!(
            "agent expects {} histogram bins, environment produces {}",
            agent.hyper().n_bins,
            env.n_bins()
        )));
    }
    if batch_n == 0 {
        return Err(Error::InvalidInput("batch_n must be ≥ 1".into()));
    }
    if let EpisodeMode::Train { td_batch_size, updates_per_step, .. } = &mode {
        if *td_batch_size == 0 || *updates_per_step == 0 {
            return Err(Error::InvalidInput(
                "td_batch_size and updates_per_step must be ≥ 1".into(),
            ));
        }
    }

    let initial_accuracy = env.last_accuracy();
    let mut records = Vec::new();
    let mut iter = 0;
    while !env.terminal() {
        iter += 1;
        let started = Instant::now();
        let state = env.current_state();
        let raw_mmd = env.current_raw_mmd();
        let candidates = env.current_actions().to_vec();
        let n = env.next_batch_size(batch_n);
        let explore = matches!(mode, EpisodeMode::Train { .. });
        let ids = agent.select_batch(&state, &candidates, n, explore)?;
        let outcome = env.step(&ids, batch_n)?;

        if let EpisodeMode::Train { replay, td_batch_size, updates_per_step } = &mut mode {
            let first = candidates
                .iter()
                .find(|a| a.candidate_id == ids[0])
                .expect("selection came from these candidates")
                .clone();
            replay.push(Transition {
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
            });
            for _ in 0..*updates_per_step {
                let k = (*td_batch_size).min(replay.len());
                let batch = replay.sample(k)?;
                agent.td_update(&batch)?;
            }
        }

        records.push(IterationRecord {
            iter,
            spent: env.spent(),
            mmd: raw_mmd,
            reward: outcome.reward,
            accuracy: env.last_accuracy(),
            selected_ids: ids.iter().map(|&i| env.dataset().id(i)).collect(),
            millis: started.elapsed().as_millis() as u64,
        });
    }
    Ok(EpisodeLog {
        method: match mode {
            EpisodeMode::Train { .. } => "issm-train".into(),
            EpisodeMode::Frozen => "issm".into(),
        },
        seed: 0,
        initial_accuracy,
        records,
    })
}

/// Non-learned selectors compared against the agent.
#[derive(Clone, Copy, Debug, Eq, PartialEq)]
pub enum Baseline {
    Uniform,
    Margin,
    Coreset,
}

impl Baseline {
    pub fn label(&self) -> &'static str {
        match self {
            Baseline::Uniform => "uniform",
            Baseline::Margin => "margin",
            Baseline::Coreset => "coreset",
        }
    }
}

/// Drive a baseline selector through one full episode with the same
/// accounting as [`run_episode`].
pub fn run_baseline_episode(
    env: &mut PoolEnvironment,
    baseline: Baseline,
    seed: u64,
    batch_n: usize,
) -> Result<EpisodeLog> {
    if batch_n == 0 {
        return Err(Error::InvalidInput("batch_n must be ≥ 1".into()));
    }
    let initial_accuracy = env.last_accuracy();
    let mut records = Vec::new();
    let mut iter = 0;
    while !env.terminal() {
        iter += 1;
        let started = Instant::now();
        let raw_mmd = env.current_raw_mmd();
        let n = env.next_batch_size(batch_n);
        let round_seed = derive_seed(seed, &format!("round-{iter}"));
        let ids = match baseline {
            Baseline::Uniform => uniform_select(env, n, round_seed)?,
            Baseline::Margin => margin_select(env, n)?,
            Baseline::Coreset => coreset_select(env, n, round_seed)?,
        };
        let outcome = env.step(&ids, batch_n)?;
        records.push(IterationRecord {
            iter,
            spent: env.spent(),
            mmd: raw_mmd,
            reward: outcome.reward,
            accuracy: env.last_accuracy(),
            selected_ids: ids.iter().map(|&i| env.dataset().id(i)).collect(),
            millis: started.elapsed().as_millis() as u64,
        });
    }
    Ok(EpisodeLog {
        method: baseline.label().into(),
        seed,
        initial_accuracy,
        records,
    })
}

/// Seeded uniform draw of `n` distinct unlabeled ids.
pub fn uniform_select(env: &PoolEnvironment, n: usize, seed: u64) -> Result<Vec<usize>> {
    let pool = env.unlabeled();
    if n == 0 || n > pool.len() {
        return Err(Error::InvalidInput(format!(
            "cannot draw {n} of {} unlabeled samples",
            pool.len()
        )));
    }
    let mut rng = stream_rng(seed, "uniform-select");
    let picks = rand::seq::index::sample(&mut rng, pool.len(), n);
    Ok(picks.into_iter().map(|i| pool[i]).collect())
}

/// The `n` unlabeled samples the recognizer is least decided about
/// (highest marginal index); ties go to the lowest id.
pub fn margin_select(env: &PoolEnvironment, n: usize) -> Result<Vec<usize>> {
    let pool = env.unlabeled();
    if n == 0 || n > pool.len() {
        return Err(Error::InvalidInput(format!(
            "cannot pick {n} of {} unlabeled samples",
            pool.len()
        )));
    }
    let mut scored: Vec<(f64, usize)> = Vec::with_capacity(pool.len());
    for &id in pool {
        let probs = env.recognizer().predict_proba(env.dataset().features(id))?;
        scored.push((crate::featurize::marginal_index(&probs)?, id));
    }
    scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    Ok(scored[..n].iter().map(|&(_, id)| id).collect())
}

/// k-center greedy in embedding space: repeatedly take the unlabeled sample
/// farthest from everything already labeled or selected. Ties go to the
/// lowest id; when there are no labeled anchors at all the first pick is a
/// seeded uniform draw.
pub fn coreset_select(env: &PoolEnvironment, n: usize, seed: u64) -> Result<Vec<usize>> {
    let pool = env.unlabeled();
    if n == 0 || n > pool.len() {
        return Err(Error::InvalidInput(format!(
            "cannot pick {n} of {} unlabeled samples",
            pool.len()
        )));
    }
    let candidates: Vec<(usize, Vec<f64>)> = pool
        .iter()
        .map(|&id| Ok((id, env.recognizer().embed(env.dataset().features(id))?)))
        .collect::<Result<_>>()?;
    let anchors: Vec<Vec<f64>> = env
        .labeled()
        .iter()
        .map(|&id| env.recognizer().embed(env.dataset().features(id)))
        .collect::<Result<_>>()?;
    Ok(k_center_greedy(&candidates, &anchors, n, seed))
}

/// Greedy farthest-point selection. `candidates` are (id, embedding) pairs;
/// `anchors` are embeddings already covered. Pure given its arguments.
fn k_center_greedy(
    candidates: &[(usize, Vec<f64>)],
    anchors: &[Vec<f64>],
    n: usize,
    seed: u64,
) -> Vec<usize> {
    assert!(n <= candidates.len());
    let distance = |a: &[f64], b: &[f64]| -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
    };
    // Nearest-anchor distance per candidate; +∞ when there are no anchors.
    let mut nearest: Vec<f64> = candidates
        .iter()
        .map(|(_, emb)| {
            anchors
                .iter()
                .map(|a| distance(emb, a))
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    let mut picked = Vec::with_capacity(n);
    let mut taken = vec![false; candidates.len()];
    for round in 0..n {
        let choice = if round == 0 && anchors.is_empty() {
            stream_rng(seed, "coreset-first").random_range(0..candidates.len())
        } else {
            let mut best = usize::MAX;
            for (i, &t) in taken.iter().enumerate() {
                if t {
                    continue;
                }
                if best == usize::MAX
                    || nearest[i] > nearest[best]
                    || (nearest[i] == nearest[best] && candidates[i].0 < candidates[best].0)
                {
                    best = i;
                }
            }
            best
        };
        taken[choice] = true;
        picked.push(candidates[choice].0);
        for (i, (_, emb)) in candidates.iter().enumerate() {
            if !taken[i] {
                nearest[i] = nearest[i].min(distance(emb, &candidates[choice].1));
            }
        }
    }
    picked
}
