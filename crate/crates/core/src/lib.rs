//! Continual learning with a frozen sparse binary expansion layer.
//!
//! The model mirrors the insect olfactory pathway: inputs (projection
//! neurons) fan out through a fixed random 0/1 matrix into a much wider
//! layer (Kenyon cells), a top-k winner-take-all keeps only the most excited
//! units, and a trainable linear head reads out class logits. Everything
//! needed to study catastrophic forgetting and plasticity loss with it lives
//! here:
//!
//! - [`fly`]: the model, its forward/backward passes and checkpoint codec.
//! - [`learners`]: SGD, EWC, SI, L2 Init, Shrink & Perturb and continual
//!   backprop, plus gradient clipping.
//! - [`tasks`]: synthetic odors, permuted streams, class imbalance, feature
//!   and IDX file ingestion.
//! - [`harness`]: class-incremental and streaming training loops, sweeps and
//!   ledgers.
//! - [`metrics`]: accuracy/transfer metrics and plasticity diagnostics.
//! - [`analysis`]: angle distributions, birthday combinatorics, gradient
//!   orthogonality, KC overlap and FLOPs accounting.
//! - [`report`]: seed aggregation and acceptance verdicts.

pub mod analysis;
mod codec;
pub mod error;
pub mod fly;
pub mod harness;
pub mod learners;
pub mod metrics;
pub mod report;
pub mod rng;
pub mod tasks;

pub use codec::write_atomic;
pub use error::{Error, Result};
