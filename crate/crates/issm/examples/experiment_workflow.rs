//! The whole experiment loop as the CLI runs it, driven through the
//! library API: parse a config, train across seeds, reload the checkpoint,
//! and compare the trained selector against the baselines on fresh worlds.
//!
//!     cargo run --example experiment_workflow

use issm::agent::QAgent;
use issm::commands::{cmd_train, run_comparison};
use issm::config::{parse_config, RunInput};
use issm::error::Result;

const CONFIG: &str = r#"
seeds = [1, 2, 3]
methods = ["issm", "uniform", "margin", "coreset"]

[dataset.synthetic]
classes = 4
samples_per_class = 60
frames = 12
joints = 4
dims = 2
class_separation = 2.0
noise_sigma = 0.6

[pools]
init_labeled_n = 16
reward_n = 40
budget = 50
batch_n = 10

[agent]
n_bins = 6
hidden = [32, 16]
learning_rate = 1e-3

[recognizer]
hidden = [24, 12]
epochs = 25
"#;

fn main() -> Result<()> {
    let config = parse_config(CONFIG)?;
    config.validate()?;
    let input = RunInput {
        config_text: CONFIG.into(),
        config: config.clone(),
        recorded_seed_override: None,
    };

    let out = std::env::temp_dir().join("issm_experiment_workflow_example");
    let outputs = cmd_train(&input, &out, None)?;
    println!("training wrote:");
    for name in &outputs {
        println!("  {}", out.join(name).display());
    }

    let mut agent = QAgent::load_checkpoint(&out.join("agent_checkpoint.json"), 0)?;
    let comparison = run_comparison(&config, &config.seeds, Some(&mut agent))?;
    println!(
        "\n{:>8} {:>18} {:>18}",
        "method", "final accuracy", "curve AUC"
    );
    for s in &comparison.summaries {
        println!(
            "{:>8} {:>11.3} ± {:.3} {:>11.3} ± {:.3}",
            s.method,
            s.final_accuracy_mean,
            s.final_accuracy_sd,
            s.accuracy_auc_mean,
            s.accuracy_auc_sd
        );
    }
    Ok(())
}
