//! Disentangled quality-diversity determinantal point processes for batch
//! recommendation.
//!
//! The crate is organised bottom-up:
//!
//! * [`kernel`]: kernels, Nyström feature maps, Cholesky log-determinants and
//!   truncated matrix powers.
//! * [`neighbors`]: cosine nearest-neighbour queries restricted to a subset of
//!   the item universe.
//! * [`engine`]: likelihood factors for every DQD variant, greedy MAP
//!   inference and exact k-DPP sampling.
//! * [`baselines`]: MMR and xQuAD rerankers.
//! * [`feedback`]: feedback oracles and noisy observation channels.
//! * [`tuner`]: AdaHedge tuning of the quality-diversity weight and regret
//!   accounting.
//! * [`metrics`]: per-round and per-trajectory metrics, aggregation and
//!   dataset diagnostics.
//! * [`data`]: synthetic generation, embedding/score/history file formats.
//! * [`harness`]: the offline replay protocol and benchmark runner.

pub mod baselines;
pub mod data;
pub mod dense;
pub mod engine;
mod error;
pub mod feedback;
pub mod harness;
pub mod kernel;
pub mod metrics;
pub mod neighbors;
pub mod tuner;
pub(crate) mod util;

pub use error::{Error, Result};

/// Index of an item in the universe `0..N`.
pub type ItemId = usize;

/// Index of a user.
pub type UserId = usize;
