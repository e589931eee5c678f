//! Feature-file interchange: write a generated dataset to CSV and JSONL,
//! read both back, and confirm the three agree bit for bit. Precomputed
//! features skip sequence pooling, so externally computed embeddings drop
//! straight into the same pipeline.
//!
//!     cargo run --example feature_files

use issm::datagen::{
    generate, read_features_csv, read_features_jsonl, write_features_csv,
    write_features_jsonl, SyntheticSpec,
};
use issm::error::Result;

fn main() -> Result<()> {
    let spec = SyntheticSpec {
        classes: 3,
        samples_per_class: 5,
        frames: 10,
        joints: 3,
        dims: 2,
        class_separation: 2.0,
        noise_sigma: 0.4,
    };
    let dataset = generate(&spec, 77)?;
    println!(
        "generated {} samples, {} pooled features each",
        dataset.len(),
        dataset.feature_dim()
    );

    let dir = std::env::temp_dir().join("issm_feature_files_example");
    std::fs::create_dir_all(&dir).ok();
    let csv_path = dir.join("features.csv");
    let jsonl_path = dir.join("features.jsonl");
    write_features_csv(&dataset, &csv_path)?;
    write_features_jsonl(&dataset, &jsonl_path)?;
    println!("wrote {} and {}", csv_path.display(), jsonl_path.display());

    let from_csv = read_features_csv(&csv_path)?;
    let from_jsonl = read_features_jsonl(&jsonl_path)?;
    let mut max_err = 0.0f64;
    for i in 0..dataset.len() {
        assert_eq!(dataset.id(i), from_csv.id(i));
        assert_eq!(from_csv.label(i), from_jsonl.label(i));
        for ((a, b), c) in dataset
            .features(i)
            .iter()
            .zip(from_csv.features(i))
            .zip(from_jsonl.features(i))
        {
            max_err = max_err.max((a - b).abs()).max((b - c).abs());
        }
    }
    println!("max round-trip error across formats: {max_err:.1e}");

    let first = &dataset.features(0)[..4.min(dataset.feature_dim())];
    println!("first sample, leading features: {first:?}");
    Ok(())
}
