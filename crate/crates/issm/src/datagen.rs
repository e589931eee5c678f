//! Datasets: synthetic skeleton motions, feature files, and pool splits.
//!
//! The synthetic generator builds one motion template per class — a
//! sinusoidal trajectory per joint coordinate whose frequency and phase are
//! drawn once from the seed, with amplitude scaled by `class_separation` —
//! and adds i.i.d. Gaussian jitter per frame coordinate (`noise_sigma`).
//! With zero jitter every sample of a class is the template itself.
//!
//! A [`Dataset`] holds samples addressed by dense index 0..n with external
//! ids carried alongside (ascending, unique). Classifier input features are
//! precomputed once: pooled statistics for sequence data, the raw vectors
//! for ingested feature files.
//!
//! Interchange formats:
//! - features CSV: header `id,label,f0,…,f{m−1}`, empty label = unlabeled
//! - features JSONL: `{"id":…,"label":…,"features":[…]}` per line
//! - sequences JSONL: `{"id":…,"label":…,"frames":[[[…]]]}` (T×p×d)

use crate::error::{Error, Result};
use crate::recognizer::{pool_features, SkeletonSequence};
use crate::seeding;
use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

/// Shape and difficulty of a generated dataset.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticSpec {
    pub classes: usize,
    pub samples_per_class: usize,
    pub frames: usize,
    pub joints: usize,
    pub dims: usize,
    /// Amplitude of the class templates; 0 collapses all classes onto noise.
    pub class_separation: f64,
    /// Std of the per-frame Gaussian jitter; 0 makes classmates identical.
    pub noise_sigma: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            classes: 4,
            samples_per_class: 50,
            frames: 24,
            joints: 8,
            dims: 3,
            class_separation: 1.0,
            noise_sigma: 0.5,
        }
    }
}

impl SyntheticSpec {
    /// All violations, or empty when the spec is usable.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.classes < 2 {
            v.push(format!("dataset.classes must be ≥ 2, got {}", self.classes));
        }
        if self.samples_per_class == 0 {
            v.push("dataset.samples_per_class must be ≥ 1".into());
        }
        if self.frames == 0 || self.joints == 0 || self.dims == 0 {
            v.push("dataset.frames/joints/dims must all be ≥ 1".into());
        }
        if !self.class_separation.is_finite() || self.class_separation < 0.0 {
            v.push(format!(
                "dataset.class_separation must be finite and ≥ 0, got {}",
                self.class_separation
            ));
        }
        if !self.noise_sigma.is_finite() || self.noise_sigma < 0.0 {
            v.push(format!(
                "dataset.noise_sigma must be finite and ≥ 0, got {}",
                self.noise_sigma
            ));
        }
        v
    }
}

/// A fixed collection of samples with precomputed classifier features.
#[derive(Clone, Debug)]
pub struct Dataset {
    ids: Vec<u64>,
    labels: Vec<Option<usize>>,
    features: Vec<Vec<f64>>,
    sequences: Option<Vec<SkeletonSequence>>,
    class_count: usize,
}

impl Dataset {
    /// Build from labeled sequences; features are pooled immediately.
    pub fn from_sequences(
        sequences: Vec<(Option<usize>, SkeletonSequence)>,
        class_count: usize,
    ) -> Result<Self> {
        if sequences.is_empty() {
            return Err(Error::InsufficientData("dataset has no samples".into()));
        }
        let (p, d) = (sequences[0].1.joints(), sequences[0].1.dims());
        for (i, (label, s)) in sequences.iter().enumerate() {
            if s.joints() != p || s.dims() != d {
                return Err(Error::Shape(format!(
                    "sequence {i} is {}x{} joints×dims, expected {p}x{d}",
                    s.joints(),
                    s.dims()
                )));
            }
            if let Some(y) = label {
                if *y >= class_count {
                    return Err(Error::Integrity(format!(
                        "label {y} of sample {i} is outside 0..{class_count}"
                    )));
                }
            }
        }
        let n = sequences.len();
        let features = sequences.iter().map(|(_, s)| pool_features(s)).collect();
        let labels = sequences.iter().map(|(l, _)| *l).collect();
        let seqs = sequences.into_iter().map(|(_, s)| s).collect();
        Ok(Dataset {
            ids: (0..n as u64).collect(),
            labels,
            features,
            sequences: Some(seqs),
            class_count,
        })
    }

    fn from_feature_rows(mut rows: Vec<FeatureRow>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InsufficientData("dataset has no samples".into()));
        }
        rows.sort_by_key(|r| r.id);
        if let Some(w) = rows.windows(2).find(|w| w[0].id == w[1].id) {
            return Err(Error::Integrity(format!("duplicate sample id {}", w[0].id)));
        }
        let class_count =
            rows.iter().filter_map(|r| r.label).map(|y| y + 1).max().unwrap_or(0);
        Ok(Dataset {
            ids: rows.iter().map(|r| r.id).collect(),
            labels: rows.iter().map(|r| r.label).collect(),
            features: rows.into_iter().map(|r| r.features).collect(),
            sequences: None,
            class_count,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.features[0].len()
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    /// External id of the sample at dense index `i`.
    pub fn id(&self, i: usize) -> u64 {
        self.ids[i]
    }

    /// Ground-truth label of the sample at dense index `i` (None when the
    /// source data had no annotation for it).
    pub fn label(&self, i: usize) -> Option<usize> {
        self.labels[i]
    }

    /// Classifier input features of the sample at dense index `i`.
    pub fn features(&self, i: usize) -> &[f64] {
        &self.features[i]
    }

    /// Raw sequence at dense index `i`, when this dataset carries sequences.
    pub fn sequence(&self, i: usize) -> Option<&SkeletonSequence> {
        self.sequences.as_ref().map(|s| &s[i])
    }

    pub fn has_sequences(&self) -> bool {
        self.sequences.is_some()
    }

    /// Indices whose ground-truth label is present.
    pub fn labeled_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.labels[i].is_some()).collect()
    }
}

/// Generate a synthetic dataset. Deterministic in `(spec, seed)`; ids are
/// dense 0..n in class-major order and every sample carries its label.
pub fn generate(spec: &SyntheticSpec, seed: u64) -> Result<Dataset> {
    let violations = spec.violations();
    if !violations.is_empty() {
        return Err(Error::Config(violations));
    }
    let coords = spec.joints * spec.dims;
    let mut template_rng = seeding::stream_rng(seed, "dataset-template");
    let mut noise_rng = seeding::stream_rng(seed, "dataset-noise");
    let noise = if spec.noise_sigma > 0.0 {
        Some(Normal::new(0.0, spec.noise_sigma).expect("validated sigma"))
    } else {
        None
    };

    let mut sequences = Vec::with_capacity(spec.classes * spec.samples_per_class);
    for class in 0..spec.classes {
        // One motion template per class: frequency (cycles per sequence) and
        // phase per joint coordinate, amplitude from the separation knob.
        let params: Vec<(f64, f64)> = (0..coords)
            .map(|_| {
                (
                    template_rng.random_range(0.3..1.8),
                    template_rng.random_range(0.0..std::f64::consts::TAU),
                )
            })
            .collect();
        let amp = spec.class_separation;
        for _ in 0..spec.samples_per_class {
            let mut values = Vec::with_capacity(spec.frames * coords);
            for t in 0..spec.frames {
                let phase_t = t as f64 / spec.frames as f64;
                for (freq, phase) in &params {
                    let clean = amp * (std::f64::consts::TAU * freq * phase_t + phase).sin();
                    let jitter = match &noise {
                        Some(n) => n.sample(&mut noise_rng),
                        None => 0.0,
                    };
                    values.push(clean + jitter);
                }
            }
            sequences.push((
                Some(class),
                SkeletonSequence::new(values, spec.frames, spec.joints, spec.dims)?,
            ));
        }
    }
    Dataset::from_sequences(sequences, spec.classes)
}

/// Disjoint, exhaustive partition of a dataset into the three pools.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PoolSplit {
    /// Initially annotated samples.
    pub labeled: Vec<usize>,
    /// The selection pool.
    pub unlabeled: Vec<usize>,
    /// Held-out reward set; never trained on, never selectable.
    pub reward: Vec<usize>,
}

/// Split a dataset into initial-labeled / unlabeled / reward pools.
///
/// Seeded and class-stratified when every class can fill its quota from the
/// dataset's annotated samples (largest-remainder apportionment, lowest
/// class first on ties); otherwise a plain seeded draw over annotated
/// samples. Everything not drawn becomes the unlabeled pool. All three
/// lists come back sorted ascending.
pub fn split_pools(
    dataset: &Dataset,
    init_labeled_n: usize,
    reward_n: usize,
    seed: u64,
) -> Result<PoolSplit> {
    let universe: Vec<usize> = (0..dataset.len()).collect();
    split_id_subset(dataset, &universe, init_labeled_n, reward_n, seed)
}

/// [`split_pools`] restricted to a subset of the dataset: labeled and
/// reward pools are drawn from the annotated members of `ids`, and the
/// unlabeled pool is whatever of `ids` remains.
pub fn split_id_subset(
    dataset: &Dataset,
    ids: &[usize],
    init_labeled_n: usize,
    reward_n: usize,
    seed: u64,
) -> Result<PoolSplit> {
    if init_labeled_n == 0 || reward_n == 0 {
        return Err(Error::InvalidInput(
            "init_labeled_n and reward_n must both be ≥ 1".into(),
        ));
    }
    let mut universe = ids.to_vec();
    universe.sort_unstable();
    if universe.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::InvalidInput("subset contains duplicate ids".into()));
    }
    if universe.last().is_some_and(|&i| i >= dataset.len()) {
        return Err(Error::InvalidInput(format!(
            "subset id {} outside dataset of {} samples",
            universe.last().unwrap(),
            dataset.len()
        )));
    }
    let eligible: Vec<usize> = universe
        .iter()
        .copied()
        .filter(|&i| dataset.label(i).is_some())
        .collect();
    if init_labeled_n + reward_n > eligible.len() {
        return Err(Error::InsufficientData(format!(
            "need {} annotated samples for the labeled and reward pools, subset has {}",
            init_labeled_n + reward_n,
            eligible.len()
        )));
    }
    let mut rng = seeding::stream_rng(seed, "split");

    let mut labeled = draw_stratified(dataset, &eligible, init_labeled_n, &mut rng);
    let remaining: Vec<usize> =
        eligible.iter().copied().filter(|i| !labeled.contains(i)).collect();
    let mut reward = draw_stratified(dataset, &remaining, reward_n, &mut rng);

    labeled.sort_unstable();
    reward.sort_unstable();
    let unlabeled: Vec<usize> = universe
        .into_iter()
        .filter(|i| labeled.binary_search(i).is_err() && reward.binary_search(i).is_err())
        .collect();
    Ok(PoolSplit { labeled, unlabeled, reward })
}

/// Draw `n` indices from `from`, class-stratified when every class can fill
/// its largest-remainder quota, plain uniform otherwise.
fn draw_stratified(
    dataset: &Dataset,
    from: &[usize],
    n: usize,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> Vec<usize> {
    let classes = dataset.class_count();
    let mut per_class: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for &i in from {
        if let Some(y) = dataset.label(i) {
            per_class[y].push(i);
        }
    }
    let quotas = apportion(&per_class.iter().map(Vec::len).collect::<Vec<_>>(), n);
    let feasible = quotas
        .iter()
        .zip(&per_class)
        .all(|(q, pool)| *q <= pool.len());
    if !feasible || classes == 0 {
        let picked = index::sample(rng, from.len(), n);
        return picked.iter().map(|k| from[k]).collect();
    }
    let mut out = Vec::with_capacity(n);
    for (quota, pool) in quotas.iter().zip(&per_class) {
        let picked = index::sample(rng, pool.len(), *quota);
        out.extend(picked.iter().map(|k| pool[k]));
    }
    out
}

/// Largest-remainder apportionment of `n` slots over `sizes`, ties broken
/// toward the lower index.
fn apportion(sizes: &[usize], n: usize) -> Vec<usize> {
    let total: usize = sizes.iter().sum();
    if total == 0 {
        return vec![0; sizes.len()];
    }
    let exact: Vec<f64> =
        sizes.iter().map(|s| n as f64 * *s as f64 / total as f64).collect();
    let mut quotas: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut leftover = n - quotas.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = exact[a] - exact[a].floor();
        let fb = exact[b] - exact[b].floor();
        fb.partial_cmp(&fa).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b))
    });
    for &c in &order {
        if leftover == 0 {
            break;
        }
        // Never apportion beyond a class's actual size.
        if quotas[c] < sizes[c] {
            quotas[c] += 1;
            leftover -= 1;
        }
    }
    // If caps blocked slots (tiny classes), spill them anywhere with room.
    for c in 0..quotas.len() {
        while leftover > 0 && quotas[c] < sizes[c] {
            quotas[c] += 1;
            leftover -= 1;
        }
    }
    quotas
}

// ===== file formats =====

#[derive(Serialize, Deserialize)]
struct FeatureRow {
    id: u64,
    label: Option<usize>,
    features: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct SequenceRow {
    id: u64,
    label: Option<usize>,
    frames: Vec<Vec<Vec<f64>>>,
}

/// Write classifier features as CSV (`id,label,f0,…`); unlabeled samples
/// get an empty label field.
pub fn write_features_csv(dataset: &Dataset, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
    let m = dataset.feature_dim();
    let mut header = vec!["id".to_string(), "label".to_string()];
    header.extend((0..m).map(|i| format!("f{i}")));
    w.write_record(&header).map_err(|e| csv_io(path, e))?;
    for i in 0..dataset.len() {
        let mut rec = vec![
            dataset.id(i).to_string(),
            dataset.label(i).map_or(String::new(), |y| y.to_string()),
        ];
        rec.extend(dataset.features(i).iter().map(|x| x.to_string()));
        w.write_record(&rec).map_err(|e| csv_io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Read a features CSV written by [`write_features_csv`] (or compatible).
pub fn read_features_csv(path: &Path) -> Result<Dataset> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)
        .map_err(|e| csv_io(path, e))?;
    let header = r.headers().map_err(|e| csv_io(path, e))?.clone();
    if header.len() < 3 || &header[0] != "id" || &header[1] != "label" {
        return Err(Error::Parse {
            line: 1,
            message: format!(
                "expected header starting `id,label,f0,…`, got {:?}",
                header.iter().collect::<Vec<_>>().join(",")
            ),
        });
    }
    for (k, name) in header.iter().skip(2).enumerate() {
        if name != format!("f{k}") {
            return Err(Error::Parse {
                line: 1,
                message: format!("feature column {} is named {name:?}, expected f{k}", k + 2),
            });
        }
    }
    let m = header.len() - 2;
    let mut rows = Vec::new();
    for (k, rec) in r.records().enumerate() {
        let line = k + 2; // 1-based, after the header
        let rec = rec.map_err(|e| Error::Parse { line, message: e.to_string() })?;
        if rec.len() != m + 2 {
            return Err(Error::Parse {
                line,
                message: format!("row has {} fields, expected {}", rec.len(), m + 2),
            });
        }
        let id: u64 = rec[0].parse().map_err(|_| Error::Parse {
            line,
            message: format!("bad id {:?}", &rec[0]),
        })?;
        let label = if rec[1].is_empty() {
            None
        } else {
            Some(rec[1].parse::<usize>().map_err(|_| Error::Parse {
                line,
                message: format!("bad label {:?}", &rec[1]),
            })?)
        };
        let mut features = Vec::with_capacity(m);
        for j in 0..m {
            let x: f64 = rec[j + 2].parse().map_err(|_| Error::Parse {
                line,
                message: format!("bad feature f{j}: {:?}", &rec[j + 2]),
            })?;
            if !x.is_finite() {
                return Err(Error::Parse {
                    line,
                    message: format!("non-finite feature f{j}"),
                });
            }
            features.push(x);
        }
        rows.push(FeatureRow { id, label, features });
    }
    Dataset::from_feature_rows(rows)
}

/// Write classifier features as JSONL, one object per line.
pub fn write_features_jsonl(dataset: &Dataset, path: &Path) -> Result<()> {
    let mut out = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    for i in 0..dataset.len() {
        let row = FeatureRow {
            id: dataset.id(i),
            label: dataset.label(i),
            features: dataset.features(i).to_vec(),
        };
        let json = serde_json::to_string(&row).expect("serializable row");
        writeln!(out, "{json}").map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

/// Read a features JSONL file written by [`write_features_jsonl`].
pub fn read_features_jsonl(path: &Path) -> Result<Dataset> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    for (k, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: FeatureRow = serde_json::from_str(line).map_err(|e| Error::Parse {
            line: k + 1,
            message: e.to_string(),
        })?;
        if let Some(x) = row.features.iter().find(|x| !x.is_finite()) {
            return Err(Error::Parse {
                line: k + 1,
                message: format!("non-finite feature {x}"),
            });
        }
        if let Some(first) = rows.first() {
            let f: &FeatureRow = first;
            if row.features.len() != f.features.len() {
                return Err(Error::Parse {
                    line: k + 1,
                    message: format!(
                        "row has {} features, expected {}",
                        row.features.len(),
                        f.features.len()
                    ),
                });
            }
        }
        rows.push(row);
    }
    Dataset::from_feature_rows(rows)
}

/// Load a features file by format name ("csv" or "jsonl").
pub fn load_feature_file(path: &Path, format: &str) -> Result<Dataset> {
    match format {
        "csv" => read_features_csv(path),
        "jsonl" => read_features_jsonl(path),
        other => Err(Error::Usage(format!(
            "unknown feature file format {other:?} (expected \"csv\" or \"jsonl\")"
        ))),
    }
}

/// Write raw sequences as JSONL with nested T×p×d `frames`.
pub fn write_sequences_jsonl(dataset: &Dataset, path: &Path) -> Result<()> {
    if !dataset.has_sequences() {
        return Err(Error::Usage(
            "dataset was loaded from features; it has no sequences to write".into(),
        ));
    }
    let mut out = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    for i in 0..dataset.len() {
        let seq = dataset.sequence(i).expect("checked above");
        let frames: Vec<Vec<Vec<f64>>> = (0..seq.frames())
            .map(|t| {
                seq.frame(t)
                    .chunks(seq.dims())
                    .map(|joint| joint.to_vec())
                    .collect()
            })
            .collect();
        let row = SequenceRow { id: dataset.id(i), label: dataset.label(i), frames };
        let json = serde_json::to_string(&row).expect("serializable row");
        writeln!(out, "{json}").map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

/// Read a sequences JSONL file written by [`write_sequences_jsonl`].
pub fn read_sequences_jsonl(path: &Path) -> Result<Dataset> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows: Vec<(u64, Option<usize>, SkeletonSequence)> = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let lineno = k + 1;
        if line.trim().is_empty() {
            continue;
        }
        let row: SequenceRow = serde_json::from_str(line).map_err(|e| Error::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        let t = row.frames.len();
        let p = row.frames.first().map_or(0, Vec::len);
        let d = row.frames.first().and_then(|f| f.first()).map_or(0, Vec::len);
        let mut values = Vec::with_capacity(t * p * d);
        for frame in &row.frames {
            if frame.len() != p {
                return Err(Error::Parse {
                    line: lineno,
                    message: format!("frame has {} joints, expected {p}", frame.len()),
                });
            }
            for joint in frame {
                if joint.len() != d {
                    return Err(Error::Parse {
                        line: lineno,
                        message: format!("joint has {} dims, expected {d}", joint.len()),
                    });
                }
                values.extend_from_slice(joint);
            }
        }
        let seq = SkeletonSequence::new(values, t, p, d).map_err(|e| Error::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        rows.push((row.id, row.label, seq));
    }
    if rows.is_empty() {
        return Err(Error::InsufficientData("dataset has no samples".into()));
    }
    rows.sort_by_key(|r| r.0);
    if let Some(w) = rows.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(Error::Integrity(format!("duplicate sample id {}", w[0].0)));
    }
    let class_count = rows.iter().filter_map(|r| r.1).map(|y| y + 1).max().unwrap_or(0);
    let ids: Vec<u64> = rows.iter().map(|r| r.0).collect();
    let mut ds = Dataset::from_sequences(
        rows.into_iter().map(|(_, l, s)| (l, s)).collect(),
        class_count,
    )?;
    // from_sequences assigned dense ids; restore the file's ids.
    ds.ids = ids;
    Ok(ds)
}

fn csv_io(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse { line: 0, message: format!("{other:?}") },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec() -> SyntheticSpec {
        SyntheticSpec {
            classes: 3,
            samples_per_class: 10,
            frames: 8,
            joints: 2,
            dims: 2,
            class_separation: 2.0,
            noise_sigma: 0.3,
        }
    }

    #[test]
    fn generation_is_deterministic_in_spec_and_seed() {
        let a = generate(&small_spec(), 5).unwrap();
        let b = generate(&small_spec(), 5).unwrap();
        let c = generate(&small_spec(), 6).unwrap();
        assert_eq!(a.features(7), b.features(7));
        assert_ne!(a.features(7), c.features(7));
        assert_eq!(a.len(), 30);
        assert_eq!(a.class_count(), 3);
        assert_eq!(a.feature_dim(), 2 * 2 * 2);
    }

    #[test]
    fn zero_noise_collapses_classmates_onto_the_template() {
        let spec = SyntheticSpec { noise_sigma: 0.0, ..small_spec() };
        let ds = generate(&spec, 1).unwrap();
        // Samples 0 and 1 are both class 0.
        assert_eq!(ds.label(0), Some(0));
        assert_eq!(ds.label(1), Some(0));
        assert_eq!(ds.features(0), ds.features(1));
        // Different classes still differ.
        assert_ne!(ds.features(0), ds.features(10));
    }

    #[test]
    fn zero_separation_removes_all_class_signal() {
        let spec = SyntheticSpec {
            class_separation: 0.0,
            noise_sigma: 0.0,
            ..small_spec()
        };
        let ds = generate(&spec, 2).unwrap();
        assert!(ds.features(0).iter().all(|x| *x == 0.0));
        assert_eq!(ds.features(0), ds.features(20));
    }

    #[test]
    fn invalid_spec_reports_every_violation() {
        let spec = SyntheticSpec {
            classes: 1,
            samples_per_class: 0,
            noise_sigma: -1.0,
            ..small_spec()
        };
        match generate(&spec, 0) {
            Err(Error::Config(v)) => assert_eq!(v.len(), 3),
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn split_is_stratified_disjoint_and_exhaustive() {
        let spec = SyntheticSpec {
            classes: 5,
            samples_per_class: 20,
            ..small_spec()
        };
        let ds = generate(&spec, 3).unwrap();
        let split = split_pools(&ds, 10, 5, 11).unwrap();
        assert_eq!(split.labeled.len(), 10);
        assert_eq!(split.reward.len(), 5);
        assert_eq!(split.unlabeled.len(), 100 - 15);

        // Stratification: 10 over 5 balanced classes → exactly 2 each.
        for class in 0..5 {
            let got = split
                .labeled
                .iter()
                .filter(|&&i| ds.label(i) == Some(class))
                .count();
            assert_eq!(got, 2, "class {class}");
        }

        // Disjoint and exhaustive.
        let mut all: Vec<usize> = split
            .labeled
            .iter()
            .chain(&split.unlabeled)
            .chain(&split.reward)
            .copied()
            .collect();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());

        // Deterministic.
        assert_eq!(split, split_pools(&ds, 10, 5, 11).unwrap());
        assert_ne!(split, split_pools(&ds, 10, 5, 12).unwrap());
    }

    #[test]
    fn split_falls_back_when_stratification_is_impossible() {
        // 2 classes × 3 samples; asking for 5 labeled can't give ⌊⌋+LR
        // quotas within class sizes, but the split must still succeed.
        let spec = SyntheticSpec {
            classes: 2,
            samples_per_class: 3,
            ..small_spec()
        };
        let ds = generate(&spec, 9).unwrap();
        let split = split_pools(&ds, 5, 1, 0).unwrap();
        assert_eq!(split.labeled.len(), 5);
        assert_eq!(split.reward.len(), 1);
        assert_eq!(split.unlabeled.len(), 0);
    }

    #[test]
    fn split_rejects_oversized_requests() {
        let ds = generate(&small_spec(), 1).unwrap();
        assert!(matches!(
            split_pools(&ds, 25, 10, 0),
            Err(Error::InsufficientData(_))
        ));
        assert!(matches!(split_pools(&ds, 0, 5, 0), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn csv_round_trip_preserves_everything() {
        let ds = generate(&small_spec(), 4).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("features.csv");
        write_features_csv(&ds, &path).unwrap();
        let back = read_features_csv(&path).unwrap();
        assert_eq!(back.len(), ds.len());
        assert_eq!(back.class_count(), ds.class_count());
        for i in 0..ds.len() {
            assert_eq!(back.id(i), ds.id(i));
            assert_eq!(back.label(i), ds.label(i));
            for (a, b) in back.features(i).iter().zip(ds.features(i)) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn jsonl_and_csv_agree() {
        let ds = generate(&small_spec(), 4).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let csv_path = dir.path().join("features.csv");
        let jsonl_path = dir.path().join("features.jsonl");
        write_features_csv(&ds, &csv_path).unwrap();
        write_features_jsonl(&ds, &jsonl_path).unwrap();
        let a = load_feature_file(&csv_path, "csv").unwrap();
        let b = load_feature_file(&jsonl_path, "jsonl").unwrap();
        for i in 0..a.len() {
            assert_eq!(a.id(i), b.id(i));
            assert_eq!(a.label(i), b.label(i));
            for (x, y) in a.features(i).iter().zip(b.features(i)) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sequence_jsonl_round_trip() {
        let ds = generate(&small_spec(), 7).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sequences.jsonl");
        write_sequences_jsonl(&ds, &path).unwrap();
        let back = read_sequences_jsonl(&path).unwrap();
        assert_eq!(back.len(), ds.len());
        assert!(back.has_sequences());
        for i in 0..ds.len() {
            assert_eq!(back.label(i), ds.label(i));
            assert_eq!(back.sequence(i).unwrap(), ds.sequence(i).unwrap());
            assert_eq!(back.features(i), ds.features(i));
        }
    }

    #[test]
    fn malformed_rows_name_their_line() {
        let dir = tempfile::tempdir().unwrap();

        // Ragged row on line 3.
        let path = dir.path().join("ragged.csv");
        std::fs::write(&path, "id,label,f0,f1\n0,1,0.5,0.25\n1,0,0.5\n").unwrap();
        match read_features_csv(&path) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }

        // Non-finite feature on line 2.
        let path = dir.path().join("nan.csv");
        std::fs::write(&path, "id,label,f0\n0,1,NaN\n").unwrap();
        match read_features_csv(&path) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }

        // Duplicate id → integrity, not parse.
        let path = dir.path().join("dup.csv");
        std::fs::write(&path, "id,label,f0\n4,1,0.5\n4,0,0.25\n").unwrap();
        assert!(matches!(read_features_csv(&path), Err(Error::Integrity(_))));

        // Bad header.
        let path = dir.path().join("hdr.csv");
        std::fs::write(&path, "idx,label,f0\n0,1,0.5\n").unwrap();
        match read_features_csv(&path) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 1),
            other => panic!("expected parse error, got {other:?}"),
        }

        // JSONL with a broken record on line 2.
        let path = dir.path().join("bad.jsonl");
        std::fs::write(
            &path,
            "{\"id\":0,\"label\":1,\"features\":[0.5]}\n{\"id\":1,\"label\":}\n",
        )
        .unwrap();
        match read_features_jsonl(&path) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_format_name_is_a_usage_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.parquet");
        std::fs::write(&path, "").unwrap();
        assert!(matches!(
            load_feature_file(&path, "parquet"),
            Err(Error::Usage(_))
        ));
    }
}
