//! Imbalance-aware multi-label learning with classifier chains.
//!
//! Ensembles of classifier chains whose binary training sets are balanced by
//! random undersampling (ECCRU), two budget-redistributing variants (ECCRU2,
//! ECCRU3), binary-relevance and plain-chain baselines, and the evaluation
//! protocol used to compare them: per-label thresholds, macro-averaged
//! metrics, stratified cross-validation and rank tables.

pub mod chain;
pub mod cli;
pub mod dataset;
pub mod ensemble;
pub mod error;
pub mod learner;
pub mod metrics;
pub mod sampling;
pub mod simulate;

pub use error::{Error, Result};
