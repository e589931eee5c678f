//! Scratch pilot for the meta-adaptation criterion at benchmark scale; not
//! part of the examples set.

use issm::agent::{AgentHyper, QAgent, ReplayBuffer, Transition};
use issm::alsim::{run_episode, EnvConfig, EpisodeMode, PoolEnvironment};
use issm::commands::{cmd_train, run_comparison};
use issm::config::{load_run_input, Method};
use issm::datagen::{generate, split_pools, SyntheticSpec};
use issm::error::Result;
use issm::hypgeo::Curvature;
use issm::metatune::{meta_train, rollout_greedy, MetaConfig, MetaRunConfig};
use issm::nncore::DenseNet;
use issm::recognizer::RecognizerConfig;
use issm::seeding::derive_seed;
use std::time::Instant;

const CAP: usize = 500;

fn bench_spec(separation: f64, noise: f64) -> SyntheticSpec {
    SyntheticSpec {
        classes: 8,
        samples_per_class: 250,
        frames: 24,
        joints: 8,
        dims: 3,
        class_separation: separation,
        noise_sigma: noise,
    }
}

fn bench_hyper() -> AgentHyper {
    AgentHyper {
        n_bins: 10,
        hidden: vec![64, 32],
        learning_rate: 2e-3,
        ..AgentHyper::default()
    }
}

fn virtual_env_template() -> EnvConfig {
    EnvConfig {
        budget: 100,
        n_bins: 10,
        curvature: Curvature::unit(),
        recognizer: RecognizerConfig { hidden: vec![24, 12], epochs: 10, ..Default::default() },
    }
}

fn race_rollout(spec: &SyntheticSpec, net: &DenseNet, seed: u64) -> Result<Vec<Transition>> {
    let dataset = generate(spec, derive_seed(seed, "dataset"))?;
    let split = split_pools(&dataset, 20, 150, derive_seed(seed, "split"))?;
    let config = EnvConfig {
        budget: 175,
        n_bins: 10,
        curvature: Curvature::unit(),
        recognizer: RecognizerConfig { hidden: vec![64, 32], epochs: 30, ..Default::default() },
    };
    let mut env = PoolEnvironment::new(&dataset, &split, config, derive_seed(seed, "env"))?;
    let mut agent = QAgent::from_networks(net.clone(), net.clone(), bench_hyper(), 0)?;
    let steps = rollout_greedy(&mut env, &mut agent, 20, 4)?;
    Ok(steps.into_iter().map(|s| s.transition).collect())
}

/// TD-loss trajectory over repeated updates on the fixed batch.
fn loss_curve(net: &DenseNet, batch: &[Transition]) -> Result<Vec<f64>> {
    let mut agent = QAgent::from_networks(net.clone(), net.clone(), bench_hyper(), 0)?;
    (0..CAP).map(|_| agent.td_update(batch)).collect()
}

fn steps_to(curve: &[f64], bar: f64) -> usize {
    curve.iter().position(|&l| l < bar).map(|i| i + 1).unwrap_or(CAP)
}

fn guard_train_toml(separation: f64, noise: f64) -> String {
    format!(
        r#"
seeds = [100, 101, 102, 103, 104]
methods = ["issm"]

[dataset.synthetic]
classes = 8
samples_per_class = 250
frames = 24
joints = 8
dims = 3
class_separation = {separation}
noise_sigma = {noise}

[pools]
init_labeled_n = 100
reward_n = 300
budget = 175
batch_n = 20

[agent]
learning_rate = 2e-3
hidden = [64, 32]
n_bins = 10
updates_per_step = 8
replay_batch_size = 64

[recognizer]
hidden = [64, 32]
epochs = 30
"#
    )
}

fn guard_eval_toml(separation: f64, noise: f64) -> String {
    guard_train_toml(separation, noise)
        .replace("reward_n = 300", "reward_n = 150")
        .replace("seeds = [100, 101, 102, 103, 104]", "seeds = [11, 12, 13, 14, 15]")
}

fn train_like(config: &issm::config::ExperimentConfig, agent: &mut QAgent) -> Result<()> {
    let mut replay =
        ReplayBuffer::new(config.agent.replay_capacity, derive_seed(config.seeds[0], "replay"))?;
    for &seed in &config.seeds {
        let dataset = issm::commands::materialize_dataset(config, seed)?;
        let split = split_pools(
            &dataset,
            config.pools.init_labeled_n,
            config.pools.effective_reward_n(),
            derive_seed(seed, "split"),
        )?;
        let env_cfg = EnvConfig {
            budget: config.pools.budget,
            n_bins: config.agent.n_bins,
            curvature: Curvature::new(config.agent.curvature)?,
            recognizer: config.recognizer.clone(),
        };
        let mut env = PoolEnvironment::new(&dataset, &split, env_cfg, derive_seed(seed, "env"))?;
        let mode = EpisodeMode::Train {
            replay: &mut replay,
            td_batch_size: config.agent.replay_batch_size,
            updates_per_step: config.agent.updates_per_step,
        };
        run_episode(&mut env, agent, mode, config.pools.batch_n)?;
    }
    Ok(())
}

fn main() -> Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let separation: f64 = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(0.8);
    let noise: f64 = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(1.2);
    println!("benchmark-scale meta pilot: separation {separation}, noise {noise}");

    let spec = bench_spec(separation, noise);
    let dataset = generate(&spec, 2024)?;
    let ids: Vec<usize> = (0..dataset.len()).collect();

    let run = MetaRunConfig {
        meta: MetaConfig { horizon_h: 4, inner_steps: 3, meta_lr_beta: 0.05, ..Default::default() },
        iterations: 60,
        batch_n: 20,
        env: virtual_env_template(),
        labeled_fraction: 0.01,
        reward_fraction: 0.075,
    };
    let t0 = Instant::now();
    let result = meta_train(&dataset, &ids, &bench_hyper(), &run, 42)?;
    let lead: f64 = result.losses.iter().take(10).sum::<f64>() / 10.0;
    let trail: f64 = result.losses.iter().rev().take(10).sum::<f64>() / 10.0;
    println!(
        "meta_train: {:.1} s, loss lead {lead:.5} -> trail {trail:.5}",
        t0.elapsed().as_secs_f64()
    );

    let bars = [3e-2, 1e-2, 3e-3, 1e-3, 3e-4, 1e-4, 3e-5];
    let eval_seeds = [101u64, 102, 103, 104, 105];
    let mut tuned_steps = vec![0.0; bars.len()];
    let mut random_steps = vec![0.0; bars.len()];
    for &seed in &eval_seeds {
        let t1 = Instant::now();
        let tuned = result.params.theta();
        let tuned_curve = loss_curve(tuned, &race_rollout(&spec, tuned, seed)?)?;
        let random = QAgent::new(bench_hyper(), derive_seed(seed, "rand"))?.online().clone();
        let random_curve = loss_curve(&random, &race_rollout(&spec, &random, seed)?)?;
        print!(
            "seed {seed}: first loss tuned {:.5} random {:.5}, {:.0} s |",
            tuned_curve[0],
            random_curve[0],
            t1.elapsed().as_secs_f64()
        );
        for (i, &bar) in bars.iter().enumerate() {
            let t = steps_to(&tuned_curve, bar);
            let r = steps_to(&random_curve, bar);
            tuned_steps[i] += t as f64;
            random_steps[i] += r as f64;
            print!("  {bar:.0e}: {t}/{r}");
        }
        println!();
    }
    println!("mean steps tuned/random per bar:");
    for (i, &bar) in bars.iter().enumerate() {
        let t = tuned_steps[i] / eval_seeds.len() as f64;
        let r = random_steps[i] / eval_seeds.len() as f64;
        println!("  bar {bar:.0e}: {t:.1} / {r:.1}  ratio {:.3}", t / r.max(1e-12));
    }

    // Accuracy guard at benchmark scale: light-equal training (5 seeds),
    // frozen comparison on the pinned evaluation seeds.
    let dir = tempfile::tempdir().expect("tempdir");
    let train_cfg = dir.path().join("train.toml");
    std::fs::write(&train_cfg, guard_train_toml(separation, noise)).expect("write config");
    let train_input = load_run_input(&train_cfg)?;
    let eval_cfg = dir.path().join("eval.toml");
    std::fs::write(&eval_cfg, guard_eval_toml(separation, noise)).expect("write config");
    let eval_input = load_run_input(&eval_cfg)?;

    let t2 = Instant::now();
    let out = dir.path().join("plain");
    cmd_train(&train_input, &out, None)?;
    let mut plain =
        QAgent::load_checkpoint(&out.join("agent_checkpoint.json"), derive_seed(100, "agent"))?;
    let plain_cmp = run_comparison(&eval_input.config, &eval_input.config.seeds, Some(&mut plain))?;
    println!("plain guard leg: {:.0} s", t2.elapsed().as_secs_f64());

    let planned = (train_input.config.seeds.len()
        * train_input.config.pools.budget.div_ceil(train_input.config.pools.batch_n))
        as u64;
    let theta = result.params.theta();
    let mut meta_agent = QAgent::from_networks(
        theta.clone(),
        theta.clone(),
        train_input.config.agent.hyper(planned),
        derive_seed(100, "agent"),
    )?;
    let t3 = Instant::now();
    train_like(&train_input.config, &mut meta_agent)?;
    let meta_cmp = run_comparison(&eval_input.config, &eval_input.config.seeds, Some(&mut meta_agent))?;
    println!("meta guard leg: {:.0} s", t3.elapsed().as_secs_f64());

    let plain_acc = plain_cmp.summary(Method::Issm).unwrap().final_accuracy_mean;
    let meta_acc = meta_cmp.summary(Method::Issm).unwrap().final_accuracy_mean;
    println!("guard: meta {meta_acc:.4} vs plain {plain_acc:.4} (floor -0.01, diff {:+.4})", meta_acc - plain_acc);
    Ok(())
}
