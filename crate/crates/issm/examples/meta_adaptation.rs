//! Meta tuning end to end: learn an initialization over virtual tasks,
//! then show it adapting faster than a random start — fewer inner TD
//! updates to reach the same loss on a held-out task.
//!
//! Each contender is scored the way the inner loop actually trains: roll
//! out its own greedy episode on a fresh split, then count TD updates on
//! that episode until the loss crosses the bar.
//!
//!     cargo run --example meta_adaptation

use issm::agent::{AgentHyper, QAgent, Transition};
use issm::alsim::{EnvConfig, PoolEnvironment};
use issm::datagen::{generate, split_pools, Dataset, SyntheticSpec};
use issm::error::Result;
use issm::hypgeo::Curvature;
use issm::metatune::{meta_train, rollout_greedy, MetaConfig, MetaRunConfig};
use issm::nncore::DenseNet;
use issm::recognizer::RecognizerConfig;
use issm::seeding::derive_seed;

const LOSS_BAR: f64 = 0.003;
const UPDATE_CAP: usize = 500;

fn env_template() -> EnvConfig {
    EnvConfig {
        budget: 1, // overridden where it matters
        n_bins: 6,
        curvature: Curvature::unit(),
        recognizer: RecognizerConfig { hidden: vec![24, 12], epochs: 10, ..Default::default() },
    }
}

fn hyper() -> AgentHyper {
    AgentHyper { n_bins: 6, hidden: vec![32, 16], learning_rate: 1e-3, ..AgentHyper::default() }
}

/// Roll a greedy probe episode under `net` on a fresh split of `dataset`
/// and return its transitions. The batch reflects the contender's own
/// selections, exactly like the transitions the inner loop trains on.
fn own_rollout(dataset: &Dataset, net: &DenseNet, seed: u64) -> Result<Vec<Transition>> {
    let split = split_pools(dataset, 20, 30, derive_seed(seed, "split"))?;
    let config = EnvConfig { budget: 24, ..env_template() };
    let mut env = PoolEnvironment::new(dataset, &split, config, derive_seed(seed, "env"))?;
    let mut agent = QAgent::from_networks(net.clone(), net.clone(), hyper(), 0)?;
    let steps = rollout_greedy(&mut env, &mut agent, 6, 4)?;
    Ok(steps.into_iter().map(|s| s.transition).collect())
}

/// TD updates on `batch` until the pre-update loss drops under the bar.
/// Returns the update count and the very first loss (the starting point).
fn updates_to_bar(net: &DenseNet, batch: &[Transition]) -> Result<(usize, f64)> {
    let mut agent = QAgent::from_networks(net.clone(), net.clone(), hyper(), 0)?;
    let mut first = f64::NAN;
    for step in 1..=UPDATE_CAP {
        let loss = agent.td_update(batch)?;
        if step == 1 {
            first = loss;
        }
        if loss < LOSS_BAR {
            return Ok((step, first));
        }
    }
    Ok((UPDATE_CAP, first))
}

fn main() -> Result<()> {
    let spec = SyntheticSpec {
        classes: 4,
        samples_per_class: 60,
        frames: 12,
        joints: 4,
        dims: 2,
        class_separation: 2.0,
        noise_sigma: 0.6,
    };
    let dataset = generate(&spec, 2024)?;
    let ids: Vec<usize> = (0..dataset.len()).collect();

    let run = MetaRunConfig {
        meta: MetaConfig { horizon_h: 4, inner_steps: 3, meta_lr_beta: 0.05, ..Default::default() },
        iterations: 60,
        batch_n: 6,
        env: env_template(),
        labeled_fraction: 0.25,
        reward_fraction: 0.2,
    };
    println!("meta-tuning over {} virtual tasks…", run.iterations);
    let result = meta_train(&dataset, &ids, &hyper(), &run, 42)?;
    let lead: f64 = result.losses[..10].iter().sum::<f64>() / 10.0;
    let trail: f64 = result.losses[run.iterations - 10..].iter().sum::<f64>() / 10.0;
    println!("  meta loss, first 10 iterations : {lead:.5}");
    println!("  meta loss, last 10 iterations  : {trail:.5}");

    println!("\nadapting to held-out tasks (TD updates to reach {LOSS_BAR}):");
    println!("  {:>6} {:>18} {:>18}", "seed", "meta-tuned", "random");
    let mut tuned_mean = 0.0;
    let mut random_mean = 0.0;
    let eval_seeds = [101u64, 102, 103, 104, 105];
    for &seed in &eval_seeds {
        let tuned_net = result.params.theta();
        let tuned_batch = own_rollout(&dataset, tuned_net, seed)?;
        let (tuned_steps, tuned_start) = updates_to_bar(tuned_net, &tuned_batch)?;

        let random_net = QAgent::new(hyper(), derive_seed(seed, "rand"))?.online().clone();
        let random_batch = own_rollout(&dataset, &random_net, seed)?;
        let (random_steps, random_start) = updates_to_bar(&random_net, &random_batch)?;

        println!(
            "  {seed:>6} {tuned_steps:>7} (from {tuned_start:.4}) {random_steps:>7} (from {random_start:.4})"
        );
        tuned_mean += tuned_steps as f64 / eval_seeds.len() as f64;
        random_mean += random_steps as f64 / eval_seeds.len() as f64;
    }
    println!("\n  mean updates  meta-tuned {tuned_mean:.1}  vs  random {random_mean:.1}");
    println!("  speedup ratio {:.3} (lower is better)", tuned_mean / random_mean);
    assert!(
        tuned_mean <= 0.5 * random_mean,
        "meta-tuned start should need at most half the updates"
    );
    Ok(())
}
