//! Domain-group RBF KAN detector heads with data-free feature replay for
//! domain-incremental binary classification.
//!
//! The crate is organised bottom-up:
//!
//! - [`numcore`]: dense matrices, Adam, seeded random streams and a
//!   finite-difference gradient oracle.
//! - [`kanheads`]: Gaussian RBF activations, domain-group layers, the stacked
//!   detector head, the MLP / GroupKAN baselines and the small feature
//!   extractor.
//! - [`losses`]: classification, supervised contrastive, distillation and
//!   alignment objectives.
//! - [`fskdcp`]: representative-feature memory, drift-compensation projection
//!   and replay augmentation.
//! - [`continual`]: the task-by-task trainer and the Acc / AUC / forgetting
//!   metrics.
//! - [`synthbench`]: synthetic domain streams and their file format.

pub mod continual;
pub mod error;
pub mod fskdcp;
pub mod kanheads;
pub mod losses;
pub mod numcore;
pub mod synthbench;

pub use error::{Error, Result};
