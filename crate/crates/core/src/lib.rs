//! Scores how well a feature space supports category readout by kernel
//! analysis: the accuracy of least-squares readouts confined to the leading
//! kernel-PCA subspace, traced as a function of subspace dimension, and
//! summarized by the area under that curve (KA-AUC).
//!
//! The crate also carries the surrounding machinery: class-balanced subset
//! protocols, normalization of repeated spike-count recordings into
//! features, saturation fits of KA-AUC against population size, a seeded
//! random-search harness, and synthetic representations with known answers.

pub mod dataset;
pub mod error;
pub mod extrapolation;
pub mod kernel;
pub mod neural;
pub mod protocol;
pub mod rng;
pub mod search;
pub mod synth;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
