//! Budget-constrained sample selection for skeleton action recognition.
//!
//! Labeling skeleton sequences is expensive; this crate decides *which*
//! unlabeled sequences are worth annotating. Selection is learned: a small
//! Q-network scores candidate samples from a distribution-gap summary
//! (labeled vs unlabeled embeddings), the classifier's uncertainty, and a
//! representativeness histogram — all projected into a Poincaré ball before
//! they reach the network — and is trained with Double DQN on the accuracy
//! gain each labeling round buys. A meta-tuning loop produces initializations
//! that adapt to a new pool in fewer updates.
//!
//! The crate is organized bottom-up:
//!
//! - [`hypgeo`] — Poincaré-ball maps used by the feature builders
//! - [`discrepancy`] — RBF-kernel MMD between feature matrices
//! - [`nncore`] — dense nets, backprop, Adam, checkpoints
//! - [`recognizer`] — the pooled-feature action classifier
//! - [`datagen`] — synthetic motion data, feature files, pool splits
//! - [`featurize`] — state/action feature construction
//! - [`agent`] — the Q-learning selector (replay, Double DQN updates)
//! - [`alsim`] — the labeling-round environment, episodes, baselines
//! - [`metatune`] — meta tuning for fast adaptation
//! - [`config`] / [`commands`] — run configs and the four run entry points
//!
//! Each major capability has a runnable demo under `examples/`; the thin
//! `issm` binary exposes the same entry points as subcommands
//! (`train`, `metatune`, `compare`, `generate-data`).

pub mod agent;
pub mod alsim;
pub mod commands;
pub mod config;
pub mod datagen;
pub mod discrepancy;
pub mod error;
pub mod featurize;
pub mod hypgeo;
pub mod metatune;
pub mod nncore;
pub mod recognizer;
pub mod seeding;

pub use error::{Error, Result};
