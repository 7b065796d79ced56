//! Weakly-supervised learning of the visual appearance of semantic elements
//! on ancient-coin reverses.
//!
//! Auction lots pair a coin photograph with an unstructured dealer
//! description. This crate turns those pairs into training data and trained
//! detectors, end to end:
//!
//! - [`text`] derives per-concept binary weak labels from the descriptions
//!   via cleanup, word-frequency analysis, and a multilingual keyword lexicon;
//! - [`preprocess`] crops the reverse side out of two-sided photographs and
//!   resizes it to the network input scale;
//! - [`dataset`] assembles balanced, stratified, seeded train/val/test
//!   manifests and mini-batches;
//! - [`nn`] is a from-scratch CNN core (tensors, conv/pool/dense layers,
//!   softmax cross-entropy, Adam) with exact, finite-difference-verified
//!   gradients;
//! - [`train`] runs the training loop with loss-threshold / patience / max-epoch
//!   stopping rules and computes classification metrics;
//! - [`saliency`] localizes the learned element with multi-scale occlusion
//!   heatmaps;
//! - [`synth`] generates a fully-labeled synthetic coin corpus so the whole
//!   pipeline can be verified at desk scale.
//!
//! The `numis` binary exposes the stages as subcommands (`synth`,
//! `build-dataset`, `train`, `eval`, `saliency`).

pub mod checkpoint;
pub mod config;
pub mod dataset;
pub mod error;
pub mod metrics;
pub mod nn;
pub mod preprocess;
pub mod saliency;
pub mod seed;
pub mod synth;
pub mod tensor;
pub mod text;
pub mod train;

pub use error::{Error, Result};
pub use tensor::{Tensor, TensorOf};

mod book;
