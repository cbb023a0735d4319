//! Benchmarking and metric utilities.

pub mod many_class;
pub mod metrics;
pub mod timing;

pub use many_class::{build_many_class_benchmark, ManyClassLabels};
pub use metrics::{improvability, normalize_scores, normalize_table, Direction, ScoreEntry};
pub use timing::{run_bench, BenchMode, BenchRecord, BenchShape};
