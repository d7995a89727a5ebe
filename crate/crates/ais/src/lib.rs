//! Partition-based adaptive importance sampling with explicit
//! exploration-exploitation.
//!
//! The library provides:
//! - fixed-partition adaptive IS with optimism boosts ([`daisee`]),
//! - its α-divergence generalization ([`alpha`]),
//! - a hierarchical partition-refining variant ([`hidaisee`]),
//! - an exact quadrature oracle for ground-truth cell masses ([`oracle`]),
//! - IS estimators, KL regret and full-KL metrics ([`metrics`]),
//! - an experiment harness with JSON configs and CSV traces ([`runner`]).

pub mod alpha;
pub mod config;
pub mod daisee;
pub mod error;
pub mod hidaisee;
pub mod metrics;
pub mod oracle;
pub mod partition;
pub mod recipes;
pub mod runner;
pub mod targets;

pub use error::{Error, Result};
