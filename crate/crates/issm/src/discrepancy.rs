//! Distribution gap between labeled and unlabeled embeddings.
//!
//! The gap is the biased (V-statistic) estimate of squared maximum mean
//! discrepancy under an RBF kernel k(x, y) = exp(−‖x−y‖² / (2σ²)):
//!
//! mmd(P, Q) = (1/n_L²)·Σᵢⱼ k(pᵢ, pⱼ) + (1/n_U²)·Σᵢⱼ k(qᵢ, qⱼ)
//!           − (2/(n_L·n_U))·Σᵢⱼ k(pᵢ, qⱼ)
//!
//! Both double sums include their diagonals. The estimate is the squared
//! norm of the difference of kernel mean embeddings, so it is non-negative
//! and bounded by 2 for the RBF kernel; tiny negative rounding residue is
//! clamped to 0.
//!
//! σ either comes fixed from the caller or from the median heuristic: the
//! median of the pairwise Euclidean distances over all distinct unordered
//! pairs of the combined rows (even counts average the two middle values).
//! A zero median falls back to the smallest nonzero distance, and 1.0 if
//! every distance is zero.
//!
//! Sides larger than [`MAX_MMD_ROWS`] are reduced to a seeded uniform
//! subsample before anything else, so the cost is bounded and runs stay
//! reproducible.

use crate::error::{Error, Result};
use crate::seeding;
use rand::seq::index;

/// Per-side row cap; larger sides are subsampled with the config seed.
pub const MAX_MMD_ROWS: usize = 4096;

/// Which pool a feature matrix was built from. Purely bookkeeping; carried
/// along so logs and errors can say which side misbehaved.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SetOrigin {
    Labeled,
    Unlabeled,
    Reward,
    Candidate,
}

/// A dense n×m matrix of f64 features, one sample per row.
#[derive(Clone, Debug)]
pub struct FeatureMatrix {
    data: Vec<f64>,
    rows: usize,
    cols: usize,
    origin: SetOrigin,
}

impl FeatureMatrix {
    /// Build from per-sample rows. Rows must agree in length and contain
    /// only finite values; an empty matrix (no rows) is allowed.
    pub fn from_rows(rows: Vec<Vec<f64>>, origin: SetOrigin) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != cols {
                return Err(Error::Shape(format!(
                    "row {i} has {} features, expected {cols}",
                    row.len()
                )));
            }
            if let Some(x) = row.iter().find(|x| !x.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "non-finite feature {x} in row {i}"
                )));
            }
            data.extend_from_slice(row);
        }
        Ok(FeatureMatrix { data, rows: rows.len(), cols, origin })
    }

    pub fn n_rows(&self) -> usize {
        self.rows
    }

    pub fn n_cols(&self) -> usize {
        self.cols
    }

    pub fn origin(&self) -> SetOrigin {
        self.origin
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    fn subsampled_rows(&self, cap: usize, seed: u64) -> Vec<usize> {
        if self.rows <= cap {
            return (0..self.rows).collect();
        }
        let mut rng = seeding::stream_rng(seed, "mmd-subsample");
        let mut picked = index::sample(&mut rng, self.rows, cap).into_vec();
        picked.sort_unstable();
        picked
    }
}

/// RBF bandwidth selection.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Bandwidth {
    /// Use this σ as given.
    Fixed(f64),
    /// Median pairwise distance over the combined rows of both sides.
    MedianHeuristic,
}

/// Kernel settings for [`mmd`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KernelConfig {
    pub bandwidth: Bandwidth,
    /// Seed for the over-cap row subsample; recorded so runs replay exactly.
    pub subsample_seed: u64,
}

impl KernelConfig {
    pub fn fixed(sigma: f64) -> Self {
        KernelConfig { bandwidth: Bandwidth::Fixed(sigma), subsample_seed: 0 }
    }

    pub fn median() -> Self {
        KernelConfig { bandwidth: Bandwidth::MedianHeuristic, subsample_seed: 0 }
    }
}

impl Default for KernelConfig {
    fn default() -> Self {
        KernelConfig::median()
    }
}

/// RBF kernel value exp(−‖x−y‖² / (2σ²)).
pub fn rbf_kernel(x: &[f64], y: &[f64], sigma: f64) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Shape(format!(
            "kernel arguments differ in length: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    if !sigma.is_finite() || sigma <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "kernel bandwidth must be finite and > 0, got {sigma}"
        )));
    }
    Ok((-sq_dist(x, y) / (2.0 * sigma * sigma)).exp())
}

/// Median heuristic bandwidth over all distinct unordered row pairs.
pub fn median_bandwidth(rows: &FeatureMatrix) -> Result<f64> {
    let n = rows.n_rows();
    if n < 2 {
        return Err(Error::InsufficientData(format!(
            "median bandwidth needs at least 2 rows, got {n}"
        )));
    }
    let mut dists = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            dists.push(sq_dist(rows.row(i), rows.row(j)).sqrt());
        }
    }
    dists.sort_unstable_by(|a, b| a.partial_cmp(b).expect("finite distances"));
    let k = dists.len();
    let median = if k % 2 == 1 {
        dists[k / 2]
    } else {
        0.5 * (dists[k / 2 - 1] + dists[k / 2])
    };
    if median > 0.0 {
        return Ok(median);
    }
    // Degenerate spread: fall back to the smallest nonzero distance, or 1.
    Ok(dists.iter().copied().find(|d| *d > 0.0).unwrap_or(1.0))
}

/// Squared-MMD gap between two feature matrices (see module docs).
pub fn mmd(sl: &FeatureMatrix, su: &FeatureMatrix, kcfg: &KernelConfig) -> Result<f64> {
    if sl.n_rows() == 0 || su.n_rows() == 0 {
        return Err(Error::InsufficientData(
            "mmd needs at least one row on each side".into(),
        ));
    }
    if sl.n_cols() != su.n_cols() {
        return Err(Error::Shape(format!(
            "feature dims differ: {} vs {}",
            sl.n_cols(),
            su.n_cols()
        )));
    }

    let li = sl.subsampled_rows(MAX_MMD_ROWS, kcfg.subsample_seed);
    let ui = su.subsampled_rows(MAX_MMD_ROWS, kcfg.subsample_seed.wrapping_add(1));

    let sigma = match kcfg.bandwidth {
        Bandwidth::Fixed(s) => {
            if !s.is_finite() || s <= 0.0 {
                return Err(Error::InvalidInput(format!(
                    "kernel bandwidth must be finite and > 0, got {s}"
                )));
            }
            s
        }
        Bandwidth::MedianHeuristic => {
            let mut combined: Vec<Vec<f64>> =
                li.iter().map(|&i| sl.row(i).to_vec()).collect();
            combined.extend(ui.iter().map(|&i| su.row(i).to_vec()));
            median_bandwidth(&FeatureMatrix::from_rows(combined, SetOrigin::Candidate)?)?
        }
    };

    let two_sigma_sq = 2.0 * sigma * sigma;
    let kernel_sum = |rows_a: &FeatureMatrix, idx_a: &[usize], rows_b: &FeatureMatrix, idx_b: &[usize]| {
        let mut acc = 0.0;
        for &i in idx_a {
            let a = rows_a.row(i);
            for &j in idx_b {
                acc += (-sq_dist(a, rows_b.row(j)) / two_sigma_sq).exp();
            }
        }
        acc
    };

    let n_l = li.len() as f64;
    let n_u = ui.len() as f64;
    let within_l = kernel_sum(sl, &li, sl, &li) / (n_l * n_l);
    let within_u = kernel_sum(su, &ui, su, &ui) / (n_u * n_u);
    let cross = kernel_sum(sl, &li, su, &ui) / (n_l * n_u);
    Ok((within_l + within_u - 2.0 * cross).max(0.0))
}

fn sq_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter()
        .zip(y)
        .map(|(a, b)| {
            let d = a - b;
            d * d
        })
        .sum()
}
