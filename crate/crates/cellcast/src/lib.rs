//! Realtime mobile bandwidth and 4G/5G handoff prediction over fixed-route
//! cellular traces.
//!
//! The crate covers the full desk-scale pipeline:
//!
//! - [`trace`]: trace data model, CSV ingestion, time splits, sliding windows
//! - [`synth`]: deterministic synthetic fixed-route trace generation
//! - [`filters`]: univariate baselines (history-repeat, EWMA, harmonic mean, RLS)
//! - [`trees`]: CART regression trees, random forests, gradient boosting
//! - [`features`]: correlation screening and random-forest feature importance
//! - [`nn`]: reverse-mode autodiff, stacked LSTM and temporal-pattern-attention
//!   forecasters with a deterministic training loop
//! - [`handoff`]: binary and continuous 4G/5G handoff prediction
//! - [`metrics`]: RMSE/MAE/CORR, confusion matrices, ROC/AUC, k-fold CV,
//!   boxplot statistics
//! - [`bench`]: the per-route, per-horizon comparison protocol
//!
//! See the `examples/` directory for one runnable program per capability, or
//! the `cellcast` binary for the command-line pipeline.

pub mod bench;
pub mod error;
pub mod features;
pub mod filters;
pub mod handoff;
pub mod metrics;
pub mod nn;
pub mod predictor;
pub mod serial;
pub mod synth;
pub mod trace;
pub mod trees;

pub use error::{Error, Result};
