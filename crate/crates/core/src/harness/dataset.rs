use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::data::{
    generate_synthetic, load_items, load_scores, synthetic_histories, write_items, HistoryLog, ItemFormat,
    ItemStore, ScoreTable,
};
use crate::feedback::FeedbackModel;
use crate::kernel::{fit_nystroem, Embedding, FeatureMap, KernelSpec};
use crate::metrics::{dataset_diagnostics, Diagnostics};
use crate::neighbors::{build_index, IndexStructure, NeighborIndex};
use crate::{Error, ItemId, Result, UserId};

/// Range of synthetic ground-truth history lengths.
pub const SYNTHETIC_HISTORY_LEN: (usize, usize) = (5, 15);

pub const MANIFEST: &str = "dataset.toml";

/// On-disk description of a dataset directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub n_items: usize,
    pub dim: usize,
    pub n_users: usize,
    pub items: PathBuf,
    pub format: ItemFormat,
    /// User contexts for the synthetic feedback model.
    #[serde(default)]
    pub users: Option<PathBuf>,
    /// Precomputed `(user, item, score)` table; wins over `users`.
    #[serde(default)]
    pub scores: Option<PathBuf>,
    #[serde(default)]
    pub seed: Option<u64>,
}

/// Items, feedback oracle and ground-truth histories.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub items: Arc<ItemStore>,
    pub feedback: FeedbackModel,
    /// Indexed by user id.
    pub histories: Vec<Vec<ItemId>>,
}

/// Per-seed Nyström map and neighbor index.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub feat: FeatureMap,
    pub index: NeighborIndex,
}

impl Prepared {
    pub fn fit(items: &ItemStore, kernel: &KernelSpec, rank: usize, structure: IndexStructure, seed: u64) -> Result<Self> {
        let feat = fit_nystroem(kernel, items, rank.min(items.len()), seed)?;
        let index = build_index(&feat, structure)?;
        Ok(Self { feat, index })
    }
}

impl Dataset {
    pub fn new(items: Arc<ItemStore>, feedback: FeedbackModel, histories: Vec<Vec<ItemId>>) -> Result<Self> {
        let n = items.len();
        if let Some(bad) = histories.iter().flatten().find(|&&i| i >= n) {
            return Err(Error::invalid(format!("history refers to unknown item {bad}")));
        }
        Ok(Self {
            items,
            feedback,
            histories,
        })
    }

    /// Synthetic items in `batch_size` near-duplicate groups, random user
    /// contexts, and top-quality histories.
    pub fn synthetic(n_items: usize, dim: usize, batch_size: usize, n_users: usize, seed: u64) -> Result<Self> {
        let data = generate_synthetic(n_items, dim, batch_size, n_users, seed)?;
        let histories = synthetic_histories(&data.items, &data.contexts, SYNTHETIC_HISTORY_LEN, seed)?;
        let items = Arc::new(data.items);
        let feedback = FeedbackModel::SyntheticLinear {
            items: Arc::clone(&items),
            contexts: data.contexts,
        };
        Self::new(items, feedback, histories)
    }

    pub fn n_users(&self) -> usize {
        self.histories.len()
    }

    pub fn n_items(&self) -> usize {
        self.items.len()
    }

    pub fn history(&self, user: UserId) -> Result<&[ItemId]> {
        self.histories
            .get(user)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::invalid(format!("unknown user {user}")))
    }

    pub fn save(&self, dir: &Path, format: ItemFormat, seed: Option<u64>) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let items_name = match format {
            ItemFormat::Csv => "items.csv",
            ItemFormat::PackedBinary => "items.bin",
        };
        write_items(&self.items, &dir.join(items_name), format)?;
        let (users, scores) = match &self.feedback {
            FeedbackModel::SyntheticLinear { contexts, .. } => {
                let store = ItemStore::in_memory(contexts.clone())?;
                write_items(&store, &dir.join("users.csv"), ItemFormat::Csv)?;
                (Some(PathBuf::from("users.csv")), None)
            }
            FeedbackModel::Precomputed(table) => {
                write_scores(table, &dir.join("scores.csv"))?;
                (None, Some(PathBuf::from("scores.csv")))
            }
        };
        let hist_dir = dir.join("histories");
        if hist_dir.exists() {
            std::fs::remove_dir_all(&hist_dir)?;
        }
        let log = HistoryLog::open(&hist_dir)?;
        for (u, h) in self.histories.iter().enumerate() {
            log.append(u, h)?;
        }
        let manifest = Manifest {
            n_items: self.items.len(),
            dim: self.items.dim(),
            n_users: self.n_users(),
            items: PathBuf::from(items_name),
            format,
            users,
            scores,
            seed,
        };
        let text = toml::to_string(&manifest).map_err(|e| Error::Config(e.to_string()))?;
        std::fs::write(dir.join(MANIFEST), text)?;
        Ok(())
    }

    pub fn load(dir: &Path, batch_rows: Option<usize>) -> Result<Self> {
        let text = std::fs::read_to_string(dir.join(MANIFEST))?;
        let m: Manifest = toml::from_str(&text).map_err(|e| Error::Config(format!("{MANIFEST}: {e}")))?;
        let items = Arc::new(load_items(&dir.join(&m.items), m.format, batch_rows)?);
        if items.len() != m.n_items || items.dim() != m.dim {
            return Err(Error::Config(format!(
                "{MANIFEST} declares {}x{} items, file holds {}x{}",
                m.n_items,
                m.dim,
                items.len(),
                items.dim()
            )));
        }
        let feedback = match (&m.scores, &m.users) {
            (Some(s), _) => FeedbackModel::Precomputed(load_scores(&dir.join(s))?),
            (None, Some(u)) => {
                let ctx = load_items(&dir.join(u), ItemFormat::Csv, None)?;
                let all: Vec<usize> = (0..ctx.len()).collect();
                let contexts: Vec<Embedding> = ctx.rows(&all)?;
                if contexts.len() != m.n_users {
                    return Err(Error::Config(format!(
                        "{MANIFEST} declares {} users, context file holds {}",
                        m.n_users,
                        contexts.len()
                    )));
                }
                FeedbackModel::SyntheticLinear {
                    items: Arc::clone(&items),
                    contexts,
                }
            }
            (None, None) => return Err(Error::Config(format!("{MANIFEST} names neither users nor scores"))),
        };
        let log = HistoryLog::open(dir.join("histories"))?;
        let histories = (0..m.n_users).map(|u| log.load(u)).collect::<Result<Vec<_>>>()?;
        Self::new(items, feedback, histories)
    }

    /// Diagnostics over the score table, or over the histories read as
    /// implicit ratings when the feedback is synthetic.
    pub fn diagnostics(&self, kernel: &KernelSpec, rank: usize, seed: u64) -> Result<Diagnostics> {
        let feat = fit_nystroem(kernel, &self.items, rank.min(self.items.len()), seed)?;
        let table = match &self.feedback {
            FeedbackModel::Precomputed(t) => t.clone(),
            FeedbackModel::SyntheticLinear { .. } => {
                let mut t = ScoreTable::new();
                for (u, h) in self.histories.iter().enumerate() {
                    for &i in h {
                        t.insert(u, i, 1.0)?;
                    }
                }
                t
            }
        };
        dataset_diagnostics(&table, self.n_users(), &feat, &self.histories)
    }
}

fn write_scores(table: &ScoreTable, path: &Path) -> Result<()> {
    use std::io::Write;
    let mut rows: Vec<_> = table.iter().collect();
    rows.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "user_id,item_id,score")?;
    for (u, i, s) in rows {
        writeln!(out, "{u},{i},{s:?}")?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let ds = Dataset::synthetic(30, 4, 3, 2, 9).unwrap();
        for h in &ds.histories {
            assert!((5..=15).contains(&h.len()));
        }
        for format in [ItemFormat::Csv, ItemFormat::PackedBinary] {
            ds.save(dir.path(), format, Some(9)).unwrap();
            let back = Dataset::load(dir.path(), None).unwrap();
            assert_eq!(back.histories, ds.histories);
            assert_eq!(back.items.to_matrix().unwrap(), ds.items.to_matrix().unwrap());
            for u in 0..2 {
                assert_eq!(
                    back.feedback.quality_vector(u, 30).unwrap(),
                    ds.feedback.quality_vector(u, 30).unwrap()
                );
            }
            let lazy = Dataset::load(dir.path(), Some(4)).unwrap();
            assert_eq!(lazy.items.to_matrix().unwrap(), ds.items.to_matrix().unwrap());
        }
    }

    #[test]
    fn precomputed_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let base = Dataset::synthetic(10, 3, 2, 2, 1).unwrap();
        let mut t = ScoreTable::new();
        for u in 0..2 {
            for i in 0..10 {
                t.insert(u, i, 0.1 + (u * 10 + i) as f64 / 20.0).unwrap();
            }
        }
        let ds = Dataset::new(base.items.clone(), FeedbackModel::Precomputed(t), base.histories.clone()).unwrap();
        ds.save(dir.path(), ItemFormat::Csv, None).unwrap();
        let back = Dataset::load(dir.path(), None).unwrap();
        assert_eq!(back.feedback.quality_vector(1, 10).unwrap(), ds.feedback.quality_vector(1, 10).unwrap());
        let d = back.diagnostics(&KernelSpec::linear(), 100, 0).unwrap();
        assert_eq!(d.sparsity, 100.0);
    }

    #[test]
    fn missing_manifest_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(Dataset::load(dir.path(), None).is_err());
    }
}
