//! The three reference selectors head-to-head on one shared world: every
//! method sees the same dataset, the same pools, and the same recognizer;
//! only the choice of which samples to buy differs.
//!
//!     cargo run --example baseline_comparison

use issm::alsim::{run_baseline_episode, Baseline, EnvConfig, PoolEnvironment};
use issm::datagen::{generate, split_pools, SyntheticSpec};
use issm::error::Result;
use issm::hypgeo::Curvature;
use issm::recognizer::RecognizerConfig;
use issm::seeding::derive_seed;

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

    println!(
        "{:>8} {:>6}  {:>8} {:>8} {:>8}",
        "method", "seed", "initial", "final", "auc"
    );
    for baseline in [Baseline::Uniform, Baseline::Margin, Baseline::Coreset] {
        let mut finals = Vec::new();
        for seed in [1, 2, 3] {
            let dataset = generate(&spec, derive_seed(seed, "dataset"))?;
            let split = split_pools(&dataset, 16, 40, derive_seed(seed, "split"))?;
            let config = EnvConfig {
                budget: 60,
                n_bins: 6,
                curvature: Curvature::unit(),
                recognizer: RecognizerConfig {
                    hidden: vec![24, 12],
                    epochs: 25,
                    ..Default::default()
                },
            };
            let mut env =
                PoolEnvironment::new(&dataset, &split, config, derive_seed(seed, "env"))?;
            let log = run_baseline_episode(&mut env, baseline, seed, 10)?;
            println!(
                "{:>8} {:>6}  {:>8.3} {:>8.3} {:>8.3}",
                log.method,
                seed,
                log.initial_accuracy,
                log.final_accuracy(),
                log.accuracy_auc()
            );
            finals.push(log.final_accuracy());
        }
        let mean = finals.iter().sum::<f64>() / finals.len() as f64;
        println!("{:>8} {:>6}  {:>8} {:>8.3} (mean)\n", baseline.label(), "all", "", mean);
    }
    Ok(())
}
