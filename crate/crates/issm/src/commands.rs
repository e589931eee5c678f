//! The four commands behind the CLI: `train`, `metatune`, `compare`, and
//! `generate-data`. Each validates the whole config before touching the
//! filesystem, fans work over the seed list, writes its artifacts into one
//! output directory, and finishes with a manifest; feeding that manifest
//! back as `--config` reproduces every output byte-for-byte, so episode
//! CSVs are always written with wall-clock columns zeroed.
//!
//! Randomness discipline: every random choice draws from a stream derived
//! from a run seed and a purpose name (`dataset`, `split`, `env`, `agent`,
//! `replay`, `meta`), so the same seed always builds the same world no
//! matter which command or method is looking at it.

use std::path::Path;

use crate::agent::{QAgent, ReplayBuffer};
use crate::alsim::{
    run_baseline_episode, run_episode, Baseline, EnvConfig, EpisodeLog, EpisodeMode,
    PoolEnvironment,
};
use crate::config::{DatasetConfig, ExperimentConfig, Manifest, Method, RunInput};
use crate::datagen::{
    generate, load_feature_file, split_pools, write_features_csv, write_features_jsonl,
    write_sequences_jsonl, Dataset,
};
use crate::error::{Error, Result};
use crate::hypgeo::Curvature;
use crate::metatune::{
    meta_train, save_meta_checkpoint, write_loss_csv, MetaRunConfig,
};
use crate::seeding::derive_seed;

/// The seeds a run executes: the override wins, otherwise the config list.
pub fn effective_seeds(config: &ExperimentConfig, seed_override: Option<u64>) -> Vec<u64> {
    match seed_override {
        Some(s) => vec![s],
        None => config.seeds.clone(),
    }
}

/// Build the dataset a run seed sees: generated synthetically from a
/// derived stream, or loaded from the configured feature file (identical
/// across seeds by construction).
pub fn materialize_dataset(config: &ExperimentConfig, seed: u64) -> Result<Dataset> {
    match &config.dataset {
        DatasetConfig::Synthetic(spec) => generate(spec, derive_seed(seed, "dataset")),
        DatasetConfig::Features(f) => load_feature_file(&f.path, &f.format),
    }
}

fn env_config(config: &ExperimentConfig, budget: usize) -> Result<EnvConfig> {
    Ok(EnvConfig {
        budget,
        n_bins: config.agent.n_bins,
        curvature: Curvature::new(config.agent.curvature)?,
        recognizer: config.recognizer.clone(),
    })
}

/// Split the dataset for one run seed and stand up its environment. When
/// the configured budget exceeds the unlabeled pool it is clamped and the
/// original/effective pair is returned for the caller to log.
fn build_env<'a>(
    dataset: &'a Dataset,
    config: &ExperimentConfig,
    seed: u64,
) -> Result<(PoolEnvironment<'a>, Option<(usize, usize)>)> {
    let split = split_pools(
        dataset,
        config.pools.init_labeled_n,
        config.pools.effective_reward_n(),
        derive_seed(seed, "split"),
    )?;
    let pool = split.unlabeled.len();
    let clamp = (config.pools.budget > pool).then_some((config.pools.budget, pool));
    let env = PoolEnvironment::new(
        dataset,
        &split,
        env_config(config, config.pools.budget.min(pool))?,
        derive_seed(seed, "env"),
    )?;
    Ok((env, clamp))
}

/// Exploration calls the training run is expected to make, for sizing the
/// ε-annealing schedule. Uses the statically known pool size for synthetic
/// data; feature files fall back to the configured budget.
fn planned_steps(config: &ExperimentConfig, seeds: &[u64]) -> u64 {
    let mut budget = config.pools.budget;
    if let DatasetConfig::Synthetic(spec) = &config.dataset {
        let n = spec.classes * spec.samples_per_class;
        let pool =
            n.saturating_sub(config.pools.init_labeled_n + config.pools.effective_reward_n());
        budget = budget.min(pool);
    }
    let rounds = budget.div_ceil(config.pools.batch_n).max(1);
    (seeds.len() * rounds) as u64
}

fn write_manifest(
    command: &str,
    input: &RunInput,
    seed_override: Option<u64>,
    seeds: Vec<u64>,
    mut outputs: Vec<String>,
    out_dir: &Path,
) -> Result<Vec<String>> {
    let manifest =
        Manifest::new(command, &input.config_text, seed_override, seeds, outputs.clone());
    manifest.write(&out_dir.join("manifest.json"))?;
    outputs.push("manifest.json".into());
    Ok(outputs)
}

/// Train the agent across one episode per seed (shared network, shared
/// replay), then write the checkpoint, the per-episode logs, and the
/// manifest. Returns the file names written to `out_dir`.
pub fn cmd_train(
    input: &RunInput,
    out_dir: &Path,
    cli_seed_override: Option<u64>,
) -> Result<Vec<String>> {
    let config = &input.config;
    config.validate()?;
    let seed_override = cli_seed_override.or(input.recorded_seed_override);
    let seeds = effective_seeds(config, seed_override);
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir.to_path_buf(), e))?;

    let hyper = config.agent.hyper(planned_steps(config, &seeds));
    let mut agent = QAgent::new(hyper, derive_seed(seeds[0], "agent"))?;
    let mut replay =
        ReplayBuffer::new(config.agent.replay_capacity, derive_seed(seeds[0], "replay"))?;

    let mut outputs = Vec::new();
    for &seed in &seeds {
        let dataset = materialize_dataset(config, seed)?;
        let (mut env, clamp) = build_env(&dataset, config, seed)?;
        if let Some((asked, got)) = clamp {
            eprintln!(
                "warning: budget {asked} exceeds the {got}-sample unlabeled pool; \
                 episode will stop at pool exhaustion"
            );
        }
        let mode = EpisodeMode::Train {
            replay: &mut replay,
            td_batch_size: config.agent.replay_batch_size,
            updates_per_step: config.agent.updates_per_step,
        };
        let mut log = run_episode(&mut env, &mut agent, mode, config.pools.batch_n)?;
        log.seed = seed;
        let name = format!("train_seed{seed}.csv");
        log.write_csv(&out_dir.join(&name), true)?;
        outputs.push(name);
    }

    let checkpoint = "agent_checkpoint.json";
    agent.save_checkpoint(&out_dir.join(checkpoint))?;
    outputs.push(checkpoint.into());
    write_manifest("train", input, seed_override, seeds, outputs, out_dir)
}

/// Meta-tune an initialization on the configured dataset and write the
/// meta checkpoint, the loss trajectory, and the manifest.
pub fn cmd_metatune(
    input: &RunInput,
    out_dir: &Path,
    cli_seed_override: Option<u64>,
) -> Result<Vec<String>> {
    let config = &input.config;
    config.validate()?;
    if !config.meta.enabled {
        return Err(Error::Usage(
            "meta tuning is disabled in this config (set meta.enabled = true)".into(),
        ));
    }
    let seed_override = cli_seed_override.or(input.recorded_seed_override);
    let seeds = effective_seeds(config, seed_override);
    let base = seeds[0];
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir.to_path_buf(), e))?;

    let dataset = materialize_dataset(config, base)?;
    let ids: Vec<usize> = (0..dataset.len()).collect();
    let run = MetaRunConfig {
        meta: config.meta.meta_config(),
        iterations: config.meta.iterations,
        batch_n: config.pools.batch_n,
        env: env_config(config, 1)?, // budget is set per virtual episode
        labeled_fraction: config.meta.labeled_fraction,
        reward_fraction: config.meta.reward_fraction,
    };
    // Inner adaptation is all greedy rollouts; the ε schedule is unused.
    let hyper = config.agent.hyper(1);
    let result = meta_train(&dataset, &ids, &hyper, &run, derive_seed(base, "meta"))?;

    let checkpoint = "meta_checkpoint.json";
    save_meta_checkpoint(&result.params, &config.meta.meta_config(), &out_dir.join(checkpoint))?;
    let losses = "meta_losses.csv";
    write_loss_csv(&result.losses, &out_dir.join(losses))?;
    write_manifest(
        "metatune",
        input,
        seed_override,
        seeds,
        vec![checkpoint.into(), losses.into()],
        out_dir,
    )
}

/// One comparison row: a frozen episode's headline numbers.
#[derive(Clone, Debug)]
pub struct EpisodeRow {
    pub method: &'static str,
    pub seed: u64,
    pub final_accuracy: f64,
    pub accuracy_auc: f64,
}

/// Aggregate of one method's episode rows.
#[derive(Clone, Debug)]
pub struct SummaryRow {
    pub method: &'static str,
    pub episodes: usize,
    pub final_accuracy_mean: f64,
    pub final_accuracy_sd: f64,
    pub accuracy_auc_mean: f64,
    pub accuracy_auc_sd: f64,
}

/// Everything `compare` tabulates, before formatting.
pub struct Comparison {
    pub episodes: Vec<EpisodeRow>,
    pub summaries: Vec<SummaryRow>,
}

impl Comparison {
    /// The summary for `method`, if it was part of the run.
    pub fn summary(&self, method: Method) -> Option<&SummaryRow> {
        self.summaries.iter().find(|s| s.method == method.label())
    }
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Run every configured method over every seed as a frozen-deployment
/// episode. Seeds share worlds across methods (same derived dataset,
/// split, and environment streams), so differences are down to selection.
pub fn run_comparison(
    config: &ExperimentConfig,
    seeds: &[u64],
    agent: Option<&mut QAgent>,
) -> Result<Comparison> {
    let mut agent = agent;
    let mut episodes = Vec::new();
    let mut summaries = Vec::new();
    for &method in &config.methods {
        let mut rows = Vec::new();
        for &seed in seeds {
            let dataset = materialize_dataset(config, seed)?;
            let (mut env, _) = build_env(&dataset, config, seed)?;
            let mut log: EpisodeLog = match method {
                Method::Issm => {
                    let agent = agent
                        .as_deref_mut()
                        .expect("caller provides an agent when issm is requested");
                    run_episode(&mut env, agent, EpisodeMode::Frozen, config.pools.batch_n)?
                }
                Method::Uniform => {
                    run_baseline_episode(&mut env, Baseline::Uniform, seed, config.pools.batch_n)?
                }
                Method::Margin => {
                    run_baseline_episode(&mut env, Baseline::Margin, seed, config.pools.batch_n)?
                }
                Method::Coreset => {
                    run_baseline_episode(&mut env, Baseline::Coreset, seed, config.pools.batch_n)?
                }
            };
            log.seed = seed;
            rows.push(EpisodeRow {
                method: method.label(),
                seed,
                final_accuracy: log.final_accuracy(),
                accuracy_auc: log.accuracy_auc(),
            });
        }
        let (fa_mean, fa_sd) =
            mean_sd(&rows.iter().map(|r| r.final_accuracy).collect::<Vec<_>>());
        let (auc_mean, auc_sd) =
            mean_sd(&rows.iter().map(|r| r.accuracy_auc).collect::<Vec<_>>());
        summaries.push(SummaryRow {
            method: method.label(),
            episodes: rows.len(),
            final_accuracy_mean: fa_mean,
            final_accuracy_sd: fa_sd,
            accuracy_auc_mean: auc_mean,
            accuracy_auc_sd: auc_sd,
        });
        episodes.extend(rows);
    }
    Ok(Comparison { episodes, summaries })
}

fn write_comparison_csv(cmp: &Comparison, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)
        .map_err(|e| Error::InvalidInput(format!("cannot open {}: {e}", path.display())))?;
    let io_err = |e: csv::Error| Error::InvalidInput(format!("writing {}: {e}", path.display()));
    w.write_record([
        "kind",
        "method",
        "seed",
        "final_accuracy",
        "accuracy_auc",
        "final_accuracy_sd",
        "accuracy_auc_sd",
    ])
    .map_err(io_err)?;
    for r in &cmp.episodes {
        w.write_record([
            "episode",
            r.method,
            &r.seed.to_string(),
            &r.final_accuracy.to_string(),
            &r.accuracy_auc.to_string(),
            "",
            "",
        ])
        .map_err(io_err)?;
    }
    for s in &cmp.summaries {
        w.write_record([
            "summary",
            s.method,
            "",
            &s.final_accuracy_mean.to_string(),
            &s.accuracy_auc_mean.to_string(),
            &s.final_accuracy_sd.to_string(),
            &s.accuracy_auc_sd.to_string(),
        ])
        .map_err(io_err)?;
    }
    w.flush().map_err(|e| Error::io(path.to_path_buf(), e))
}

fn write_comparison_table(cmp: &Comparison, path: &Path) -> Result<()> {
    let mut text = format!(
        "{:<10} {:>22} {:>22} {:>10}\n",
        "method", "final_accuracy", "accuracy_auc", "episodes"
    );
    for s in &cmp.summaries {
        text.push_str(&format!(
            "{:<10} {:>13.4} ± {:.4} {:>13.4} ± {:.4} {:>10}\n",
            s.method,
            s.final_accuracy_mean,
            s.final_accuracy_sd,
            s.accuracy_auc_mean,
            s.accuracy_auc_sd,
            s.episodes
        ));
    }
    std::fs::write(path, text).map_err(|e| Error::io(path.to_path_buf(), e))
}

/// Compare the configured methods over the seed list with frozen episodes
/// and write the comparison CSV, a human-readable table, and the manifest.
/// Requesting `issm` without a readable `agent.checkpoint` is a usage
/// error.
pub fn cmd_compare(
    input: &RunInput,
    out_dir: &Path,
    cli_seed_override: Option<u64>,
) -> Result<Vec<String>> {
    let config = &input.config;
    config.validate()?;
    let seed_override = cli_seed_override.or(input.recorded_seed_override);
    let seeds = effective_seeds(config, seed_override);

    let mut agent = if config.methods.contains(&Method::Issm) {
        let path = config.agent.checkpoint.as_ref().ok_or_else(|| {
            Error::Usage(
                "comparing method 'issm' needs agent.checkpoint pointing at a \
                 trained checkpoint (run `train` first)"
                    .into(),
            )
        })?;
        if !path.is_file() {
            return Err(Error::Usage(format!(
                "agent.checkpoint {} does not exist (run `train` first)",
                path.display()
            )));
        }
        Some(QAgent::load_checkpoint(path, derive_seed(seeds[0], "agent"))?)
    } else {
        None
    };

    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir.to_path_buf(), e))?;
    let cmp = run_comparison(config, &seeds, agent.as_mut())?;

    let table_csv = "comparison.csv";
    write_comparison_csv(&cmp, &out_dir.join(table_csv))?;
    let table_txt = "comparison.txt";
    write_comparison_table(&cmp, &out_dir.join(table_txt))?;
    write_manifest(
        "compare",
        input,
        seed_override,
        seeds,
        vec![table_csv.into(), table_txt.into()],
        out_dir,
    )
}

/// Generate the configured synthetic dataset once and write it out as a
/// feature CSV, a feature JSONL, and a raw-sequence JSONL, plus the
/// manifest. Needs a `[dataset.synthetic]` block.
pub fn cmd_generate_data(
    input: &RunInput,
    out_dir: &Path,
    cli_seed_override: Option<u64>,
) -> Result<Vec<String>> {
    let config = &input.config;
    config.validate()?;
    if !matches!(config.dataset, DatasetConfig::Synthetic(_)) {
        return Err(Error::Usage(
            "generate-data needs a [dataset.synthetic] block; the configured \
             dataset already is a feature file"
                .into(),
        ));
    }
    let seed_override = cli_seed_override.or(input.recorded_seed_override);
    let seeds = effective_seeds(config, seed_override);
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir.to_path_buf(), e))?;

    let dataset = materialize_dataset(config, seeds[0])?;
    let outputs = ["features.csv", "features.jsonl", "sequences.jsonl"];
    write_features_csv(&dataset, &out_dir.join(outputs[0]))?;
    write_features_jsonl(&dataset, &out_dir.join(outputs[1]))?;
    write_sequences_jsonl(&dataset, &out_dir.join(outputs[2]))?;
    write_manifest(
        "generate-data",
        input,
        seed_override,
        seeds,
        outputs.iter().map(|s| s.to_string()).collect(),
        out_dir,
    )
}

/// Resolve a command name to its implementation; the single entry point
/// the binary calls.
pub fn run_command(
    command: &str,
    config_path: &Path,
    out_dir: &Path,
    cli_seed_override: Option<u64>,
) -> Result<Vec<String>> {
    let input = crate::config::load_run_input(config_path)?;
    match command {
        "train" => cmd_train(&input, out_dir, cli_seed_override),
        "metatune" => cmd_metatune(&input, out_dir, cli_seed_override),
        "compare" => cmd_compare(&input, out_dir, cli_seed_override),
        "generate-data" => cmd_generate_data(&input, out_dir, cli_seed_override),
        other => Err(Error::Usage(format!("unknown command {other}"))),
    }
}

/// Map an error to the process exit code contract: validation and usage
/// problems exit 2, everything else 1.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::Usage(_) => 2,
        _ => 1,
    }
}
