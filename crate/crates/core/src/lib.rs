//! Curriculum training over class-decomposition granularity levels.
//!
//! The pipeline runs in five steps:
//!
//! 1. [`data`] loads or synthesizes a gray-scale image dataset, splits it
//!    stratified by class and optionally augments the training split.
//! 2. [`cae`] trains a small convolutional autoencoder on the training images
//!    and encodes each of them into a latent vector.
//! 3. [`decomposition`] clusters every class's latents with k-means for each
//!    granularity level `i = k..1` and relabels the training set with dense
//!    sub-class indices.
//! 4. [`curriculum`] expands a strategy (baseline, ascending, descending or
//!    oscillating with step delta) into passes over those levels and drives
//!    the [`trainer`] through them, swapping the classification head whenever
//!    the label space changes.
//! 5. [`evaluation`] recombines sub-class probabilities into parent classes
//!    and reports accuracy, macro precision/recall/F1, confusion matrices,
//!    bootstrap intervals and fitted curves.
//!
//! [`runner`] ties the steps together behind the `clogcd` binary.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cae;
pub mod curriculum;
pub mod data;
pub mod decomposition;
pub mod error;
pub mod evaluation;
pub mod nn;
pub mod runner;
pub mod seed;
pub mod trainer;

pub use error::{Error, Result};
