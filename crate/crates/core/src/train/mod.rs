//! Training, evaluation and benchmarking.

pub mod bench;
pub mod data;
pub mod eval;
pub mod loss;
pub mod metrics;
pub mod trainer;
