//! Interpretable image classification with an additive ensemble of small
//! CNNs, one per opponent perceptual feature map (light–dark, coarse–fine,
//! blue–yellow, green–red).
//!
//! The ensemble output is `σ(β + Σᵢ rssᵢ)`, where each relative similarity
//! score `rssᵢ ∈ [−1, 1]` is the tanh head of one sub-network. Alongside the
//! prediction the crate produces per-feature relevance maps, local and global
//! bar charts, and an interpretability accuracy metric.
//!
//! - [`tensor`]: dense tensors and a reverse-mode autodiff tape
//! - [`pfm`]: colour conversion, Haar wavelets and feature-map stacks
//! - [`model`]: sub-networks and the additive ensemble
//! - [`train`]: loss, augmentation, k-fold splits, checkpoints, training loop
//! - [`interpret`]: relevance maps, thresholding and SVG charts
//! - [`metrics`]: AUC and interpretability accuracy
//! - [`data`]: PPM codec, datasets and the synthetic generator
//! - [`cli`]: run configuration and subcommand implementations

pub mod cli;
pub mod data;
pub mod error;
pub mod interpret;
pub mod metrics;
pub mod model;
pub mod pfm;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
