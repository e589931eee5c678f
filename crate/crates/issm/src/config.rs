//! Experiment configuration: a TOML file describing the dataset, the pool
//! sizes, every hyperparameter block, the seed list, and the methods to
//! run. Unknown keys are hard errors (silent typos corrupt experiments),
//! and validation is total: every violation is reported in one pass, and
//! nothing touches the filesystem until the whole config checks out.
//!
//! A finished run leaves behind a manifest recording the exact config
//! text, its SHA-256, the seeds used, and the produced files. Feeding the
//! manifest back through `--config` reruns the command byte-for-byte.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::agent::AgentHyper;
use crate::datagen::SyntheticSpec;
use crate::error::{Error, Result};
use crate::metatune::MetaConfig;
use crate::recognizer::RecognizerConfig;

/// Format tag of run manifests.
pub const MANIFEST_FORMAT: &str = "issm_run_v1";

/// Where the samples come from: generated on the fly, or precomputed
/// feature vectors loaded from disk.
#[derive(Clone, Debug, Deserialize, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetConfig {
    /// `[dataset.synthetic]` — seeded skeleton-sequence generation.
    Synthetic(SyntheticSpec),
    /// `[dataset.features]` — a CSV or JSONL feature file.
    Features(FeatureFileConfig),
}

#[derive(Clone, Debug, Deserialize, PartialEq, Serialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureFileConfig {
    pub path: PathBuf,
    /// `csv` or `jsonl`.
    #[serde(default = "default_feature_format")]
    pub format: String,
}

fn default_feature_format() -> String {
    "csv".into()
}

/// Pool sizes and the labeling budget.
#[derive(Clone, Debug, Deserialize, PartialEq, Serialize)]
#[serde(deny_unknown_fields)]
pub struct PoolsConfig {
    /// Initially annotated samples.
    pub init_labeled_n: usize,
    /// Held-out reward-set size; defaults to `max(10, 15% of init_labeled_n)`.
    #[serde(default)]
    pub reward_n: Option<usize>,
    /// Total annotations an episode may buy.
    pub budget: usize,
    /// Selections per labeling round.
    pub batch_n: usize,
}

impl PoolsConfig {
    pub fn effective_reward_n(&self) -> usize {
        self.reward_n
            .unwrap_or_else(|| 10.max((0.15 * self.init_labeled_n as f64).round() as usize))
    }

    fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.init_labeled_n == 0 {
            v.push("pools.init_labeled_n must be ≥ 1".into());
        }
        if self.reward_n == Some(0) {
            v.push("pools.reward_n must be ≥ 1 when given".into());
        }
        if self.budget == 0 {
            v.push("pools.budget must be ≥ 1".into());
        }
        if self.batch_n == 0 {
            v.push("pools.batch_n must be ≥ 1".into());
        }
        v
    }
}

/// Q-agent block: the network and schedule hyperparameters, the replay
/// buffer shape, and (for comparisons) where a trained checkpoint lives.
#[derive(Clone, Debug, Deserialize, PartialEq, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct AgentConfig {
    pub gamma: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Share of the planned selection steps over which ε anneals.
    pub epsilon_decay_fraction: f64,
    pub sync_period: u64,
    pub learning_rate: f64,
    pub n_bins: usize,
    pub hidden: Vec<usize>,
    /// Curvature magnitude of the projection ball.
    pub curvature: f64,
    pub replay_capacity: usize,
    /// Transitions per optimizer step.
    pub replay_batch_size: usize,
    /// Optimizer steps after each labeling round.
    pub updates_per_step: usize,
    /// Trained checkpoint consumed by `compare` when `issm` is requested.
    pub checkpoint: Option<PathBuf>,
}

impl Default for AgentConfig {
    fn default() -> Self {
        let h = AgentHyper::default();
        AgentConfig {
            gamma: h.gamma,
            epsilon_start: h.epsilon_start,
            epsilon_end: h.epsilon_end,
            epsilon_decay_fraction: 0.6,
            sync_period: h.sync_period,
            learning_rate: h.learning_rate,
            n_bins: h.n_bins,
            hidden: h.hidden,
            curvature: 1.0,
            replay_capacity: 10_000,
            replay_batch_size: 32,
            updates_per_step: 1,
            checkpoint: None,
        }
    }
}

impl AgentConfig {
    /// Concrete hyperparameters for a run expected to take
    /// `planned_steps` exploration calls in total.
    pub fn hyper(&self, planned_steps: u64) -> AgentHyper {
        AgentHyper {
            gamma: self.gamma,
            epsilon_start: self.epsilon_start,
            epsilon_end: self.epsilon_end,
            epsilon_decay_steps: ((self.epsilon_decay_fraction * planned_steps as f64)
                .round() as u64)
                .max(1),
            sync_period: self.sync_period,
            learning_rate: self.learning_rate,
            n_bins: self.n_bins,
            hidden: self.hidden.clone(),
        }
    }

    fn violations(&self) -> Vec<String> {
        let mut v: Vec<String> = self
            .hyper(1)
            .violations()
            .into_iter()
            .map(|m| format!("agent.{m}"))
            .collect();
        if !(self.epsilon_decay_fraction > 0.0 && self.epsilon_decay_fraction <= 1.0) {
            v.push(format!(
                "agent.epsilon_decay_fraction must be inside (0, 1], got {}",
                self.epsilon_decay_fraction
            ));
        }
        if !(self.curvature.is_finite() && self.curvature > 0.0) {
            v.push(format!(
                "agent.curvature must be finite and > 0, got {}",
                self.curvature
            ));
        }
        if self.replay_capacity == 0 {
            v.push("agent.replay_capacity must be ≥ 1".into());
        }
        if self.replay_batch_size == 0 {
            v.push("agent.replay_batch_size must be ≥ 1".into());
        }
        if self.updates_per_step == 0 {
            v.push("agent.updates_per_step must be ≥ 1".into());
        }
        v
    }
}

/// Meta-tuning block. Disabled by default; `metatune` refuses to run
/// until it is switched on.
#[derive(Clone, Debug, Deserialize, PartialEq, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetaBlock {
    pub enabled: bool,
    pub horizon_h: usize,
    pub meta_lr_beta: f64,
    pub inner_steps: usize,
    pub split_fraction: f64,
    /// Meta-iterations (tasks) to run.
    pub iterations: usize,
    /// Share of each virtual split seeding its environment's labeled pool.
    pub labeled_fraction: f64,
    /// Share of each virtual split held out as its reward set.
    pub reward_fraction: f64,
}

impl Default for MetaBlock {
    fn default() -> Self {
        let m = MetaConfig::default();
        MetaBlock {
            enabled: false,
            horizon_h: m.horizon_h,
            meta_lr_beta: m.meta_lr_beta,
            inner_steps: m.inner_steps,
            split_fraction: m.split_fraction,
            iterations: 50,
            labeled_fraction: 0.2,
            reward_fraction: 0.15,
        }
    }
}

impl MetaBlock {
    pub fn meta_config(&self) -> MetaConfig {
        MetaConfig {
            horizon_h: self.horizon_h,
            meta_lr_beta: self.meta_lr_beta,
            inner_steps: self.inner_steps,
            split_fraction: self.split_fraction,
        }
    }

    fn violations(&self) -> Vec<String> {
        if !self.enabled {
            return Vec::new(); // an unused block is not checked
        }
        let mut v: Vec<String> = self
            .meta_config()
            .violations()
            .into_iter()
            .map(|m| format!("meta.{m}"))
            .collect();
        if self.iterations == 0 {
            v.push("meta.iterations must be ≥ 1".into());
        }
        for (name, f) in [
            ("labeled_fraction", self.labeled_fraction),
            ("reward_fraction", self.reward_fraction),
        ] {
            if !(f > 0.0 && f < 1.0) {
                v.push(format!("meta.{name} must be inside (0, 1), got {f}"));
            }
        }
        if self.labeled_fraction + self.reward_fraction >= 1.0 {
            v.push(format!(
                "meta.labeled_fraction + meta.reward_fraction must stay below 1, got {}",
                self.labeled_fraction + self.reward_fraction
            ));
        }
        v
    }
}

/// Selection strategies `compare` knows how to run.
#[derive(Clone, Copy, Debug, Deserialize, Eq, PartialEq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Issm,
    Uniform,
    Margin,
    Coreset,
}

impl Method {
    pub fn label(self) -> &'static str {
        match self {
            Method::Issm => "issm",
            Method::Uniform => "uniform",
            Method::Margin => "margin",
            Method::Coreset => "coreset",
        }
    }

    pub fn all() -> Vec<Method> {
        vec![Method::Issm, Method::Uniform, Method::Margin, Method::Coreset]
    }
}

/// The whole experiment file.
#[derive(Clone, Debug, Deserialize, PartialEq, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seeds: Vec<u64>,
    #[serde(default = "Method::all")]
    pub methods: Vec<Method>,
    pub dataset: DatasetConfig,
    pub pools: PoolsConfig,
    #[serde(default)]
    pub agent: AgentConfig,
    #[serde(default)]
    pub recognizer: RecognizerConfig,
    #[serde(default)]
    pub meta: MetaBlock,
}

impl ExperimentConfig {
    /// Every violation in the file, prefixed with the block it came from.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        match &self.dataset {
            DatasetConfig::Synthetic(spec) => {
                v.extend(spec.violations().into_iter().map(|m| format!("dataset.{m}")));
                // Pool sizes are statically checkable against a generated
                // dataset; feature files are sized at load time instead.
                if spec.violations().is_empty() && self.pools.violations().is_empty() {
                    let n = spec.classes * spec.samples_per_class;
                    let need = self.pools.init_labeled_n + self.pools.effective_reward_n();
                    if need > n {
                        v.push(format!(
                            "pools: init_labeled_n + reward_n = {need} exceeds the \
                             {n} generated samples"
                        ));
                    }
                }
            }
            DatasetConfig::Features(f) => {
                if f.path.as_os_str().is_empty() {
                    v.push("dataset.path must not be empty".into());
                }
                if f.format != "csv" && f.format != "jsonl" {
                    v.push(format!(
                        "dataset.format must be csv or jsonl, got {}",
                        f.format
                    ));
                }
            }
        }
        v.extend(self.pools.violations());
        v.extend(self.agent.violations());
        v.extend(
            self.recognizer
                .violations()
                .into_iter()
                .map(|m| format!("recognizer.{m}")),
        );
        v.extend(self.meta.violations());
        if self.seeds.is_empty() {
            v.push("seeds must list at least one seed".into());
        }
        let mut sorted_seeds = self.seeds.clone();
        sorted_seeds.sort_unstable();
        if sorted_seeds.windows(2).any(|w| w[0] == w[1]) {
            v.push("seeds must not repeat (duplicates would overwrite outputs)".into());
        }
        if self.methods.is_empty() {
            v.push("methods must list at least one method".into());
        }
        for (i, m) in self.methods.iter().enumerate() {
            if self.methods[..i].contains(m) {
                v.push(format!("methods lists {} more than once", m.label()));
            }
        }
        v
    }

    /// Total validation: `Ok` or a report of every violation at once.
    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(v))
        }
    }
}

/// Parse a config from TOML text.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    toml::from_str(text).map_err(|e| Error::Config(vec![e.message().to_string()]))
}

/// Lowercase-hex SHA-256 of the config text.
pub fn config_sha256(text: &str) -> String {
    let digest = Sha256::digest(text.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Receipt of a finished run: enough to reproduce it exactly.
#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format: String,
    pub command: String,
    pub crate_version: String,
    pub config_sha256: String,
    /// Seed override in force, if any.
    pub seed_override: Option<u64>,
    /// Seeds the run actually executed.
    pub seeds_used: Vec<u64>,
    /// File names written next to this manifest.
    pub outputs: Vec<String>,
    /// The complete config file, verbatim.
    pub config_toml: String,
}

impl Manifest {
    pub fn new(
        command: &str,
        config_text: &str,
        seed_override: Option<u64>,
        seeds_used: Vec<u64>,
        outputs: Vec<String>,
    ) -> Self {
        Manifest {
            format: MANIFEST_FORMAT.into(),
            command: command.into(),
            crate_version: env!("CARGO_PKG_VERSION").into(),
            config_sha256: config_sha256(config_text),
            seed_override,
            seeds_used,
            outputs,
            config_toml: config_text.into(),
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)
            .expect("plain fields always serialize");
        std::fs::write(path, text).map_err(|e| Error::io(path.to_path_buf(), e))
    }

    pub fn read(path: &Path) -> Result<Manifest> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::io(path.to_path_buf(), e))?;
        let manifest: Manifest = serde_json::from_str(&text).map_err(|e| {
            Error::Config(vec![format!("{}: not a manifest: {e}", path.display())])
        })?;
        if manifest.format != MANIFEST_FORMAT {
            return Err(Error::Config(vec![format!(
                "{}: expected manifest format {MANIFEST_FORMAT}, found {}",
                path.display(),
                manifest.format
            )]));
        }
        Ok(manifest)
    }
}

/// A parsed `--config` argument: either a fresh TOML config or a manifest
/// from an earlier run (recognized by its leading `{`), which replays the
/// recorded config text and seed override.
pub struct RunInput {
    pub config_text: String,
    pub config: ExperimentConfig,
    /// Seed override recorded in a manifest; a CLI flag takes precedence.
    pub recorded_seed_override: Option<u64>,
}

pub fn load_run_input(path: &Path) -> Result<RunInput> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.to_path_buf(), e))?;
    if text.trim_start().starts_with('{') {
        let manifest = Manifest::read(path)?;
        let config = parse_config(&manifest.config_toml)?;
        Ok(RunInput {
            config_text: manifest.config_toml,
            config,
            recorded_seed_override: manifest.seed_override,
        })
    } else {
        let config = parse_config(&text)?;
        Ok(RunInput { config_text: text, config, recorded_seed_override: None })
    }
}
