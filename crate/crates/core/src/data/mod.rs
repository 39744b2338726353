//! Item stores, synthetic generation and the on-disk formats for embeddings,
//! precomputed scores and user histories.

mod history;
mod items;
mod scores;
mod synthetic;

pub use history::{parse_history, HistoryLog};
pub use items::{
    load_items, parse_items_csv, parse_items_packed, write_items, BatchView, ItemFormat,
    ItemStore, StoreBacking,
};
pub use scores::{load_scores, parse_scores, ScoreTable};
pub use synthetic::{generate_synthetic, synthetic_histories, SyntheticData, DEFAULT_DIM};
