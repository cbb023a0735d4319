//! Tabular in-context learning engine.
//!
//! The crate covers the whole pipeline of a three-stage tabular foundation
//! model at desk scale:
//!
//! - [`tensor`]: dense kernels (matmul, RMSNorm, attention, RoPE) with
//!   allocation accounting for peak-memory measurements.
//! - [`prior`]: synthetic task generation from sampled structural causal models.
//! - [`preprocess`]: per-estimator dataset views and post-hoc calibration.
//! - [`model`]: cell embedding, column-wise inducing-point stage, row-wise
//!   CLS aggregation, in-context learning transformer and the output heads.
//! - [`inference`]: row chunking, KV cache, ensembling and quantile decoding.
//! - [`bench`]: benchmarking and metric utilities behind the `tfe` CLI.

pub mod bench;
pub mod dataset;
pub mod error;
pub mod inference;
pub mod model;
pub mod preprocess;
pub mod prior;
pub mod records;
pub mod rng;
pub mod tensor;
pub mod verify;

pub use error::{Error, Result};
