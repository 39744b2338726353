//! Offline replay of ground-truth histories, prefix by prefix, for any
//! recommender, plus the benchmark runner built on top of it.

mod bench;
mod config;
mod dataset;
mod replay;

pub use bench::{replay_seed, run_benchmark, BenchOptions, BenchResult, CellFailure};
pub use config::{Recommender, RunConfig};
pub use dataset::{Dataset, Manifest, Prepared, MANIFEST, SYNTHETIC_HISTORY_LEN};
pub use replay::{grid_oracle, run_trajectory, RoundRecord, TrajectoryRecord};

#[cfg(test)]
mod tests;
