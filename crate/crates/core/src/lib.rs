//! NOMA-based cell outage compensation.
//!
//! When a base station fails, its users ("failed users") are re-homed onto the
//! NOMA clusters of neighbouring compensating cells. This crate provides the
//! pieces needed to simulate and evaluate that process:
//!
//! * [`units`]: unit conversions, the path-loss channel model and random
//!   topology generation.
//! * [`domain`]: clusters, SIC ordering, spectral-efficiency formulas and the
//!   constraint checker.
//! * [`solver`]: a log-barrier interior-point solver for the pre-outage,
//!   compensation and interference-aware power-allocation problems, plus a
//!   brute-force grid oracle.
//! * [`association`]: the greedy failed-user association heuristic.
//! * [`baseline`]: exhaustive joint optimum over all associations.
//! * [`surrogate`]: a from-scratch feedforward network that replaces the
//!   convex solve at inference time.
//! * [`dataset`]: labelled-sample generation, splitting and augmentation.
//! * [`metrics`]: Jain fairness, scheme evaluation and runtime benchmarks.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod association;
pub mod baseline;
pub mod dataset;
pub mod domain;
mod error;
pub mod metrics;
pub mod solver;
pub mod surrogate;
pub mod units;

pub use error::{Error, Result};
