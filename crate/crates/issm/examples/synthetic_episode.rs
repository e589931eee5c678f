//! One full training episode on generated data: the environment reveals
//! labels as the agent buys them, retrains its recognizer after every
//! batch, and pays the agent the accuracy change on a held-out reward set.
//!
//!     cargo run --example synthetic_episode

use issm::agent::{AgentHyper, QAgent, ReplayBuffer};
use issm::alsim::{run_episode, EnvConfig, EpisodeMode, PoolEnvironment};
use issm::datagen::{generate, split_pools, SyntheticSpec};
use issm::error::Result;
use issm::hypgeo::Curvature;
use issm::recognizer::RecognizerConfig;
use issm::seeding::derive_seed;

fn main() -> Result<()> {
    let seed = 11;
    let spec = SyntheticSpec {
        classes: 4,
        samples_per_class: 40,
        frames: 12,
        joints: 4,
        dims: 2,
        class_separation: 2.0,
        noise_sigma: 0.6,
    };
    let dataset = generate(&spec, derive_seed(seed, "dataset"))?;
    let split = split_pools(&dataset, 16, 24, derive_seed(seed, "split"))?;
    println!(
        "dataset: {} samples, pools: {} labeled / {} unlabeled / {} reward",
        dataset.len(),
        split.labeled.len(),
        split.unlabeled.len(),
        split.reward.len()
    );

    let n_bins = 6;
    let config = EnvConfig {
        budget: 40,
        n_bins,
        curvature: Curvature::unit(),
        recognizer: RecognizerConfig { hidden: vec![24, 12], epochs: 12, ..Default::default() },
    };
    let mut env = PoolEnvironment::new(&dataset, &split, config, derive_seed(seed, "env"))?;
    println!("recognizer accuracy before any selection: {:.3}\n", env.last_accuracy());

    let hyper = AgentHyper {
        n_bins,
        hidden: vec![32, 16],
        learning_rate: 1e-3,
        epsilon_decay_steps: 6,
        ..AgentHyper::default()
    };
    let mut agent = QAgent::new(hyper, derive_seed(seed, "agent"))?;
    let mut replay = ReplayBuffer::new(512, derive_seed(seed, "replay"))?;
    let mode = EpisodeMode::Train { replay: &mut replay, td_batch_size: 16, updates_per_step: 2 };

    let log = run_episode(&mut env, &mut agent, mode, 8)?;
    println!(
        "{:>5} {:>6} {:>9} {:>8} {:>9}  first ids",
        "round", "spent", "mmd", "reward", "accuracy"
    );
    for r in &log.records {
        let ids: Vec<String> = r.selected_ids.iter().take(4).map(|i| i.to_string()).collect();
        println!(
            "{:>5} {:>6} {:>9.5} {:>+8.3} {:>9.3}  {}…",
            r.iter,
            r.spent,
            r.mmd,
            r.reward,
            r.accuracy,
            ids.join(",")
        );
    }
    println!(
        "\nnet accuracy change {:+.3} (= summed rewards {:+.3}), curve AUC {:.3}",
        log.final_accuracy() - log.initial_accuracy,
        log.cumulative_reward(),
        log.accuracy_auc()
    );
    println!("{}", log.summary_json());
    Ok(())
}
