use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::ItemStore;
use crate::dense::RowMatrix;
use crate::feedback::synthetic_score;
use crate::kernel::{normalize_in_place, Embedding};
use crate::util::rng_for;
use crate::{Error, ItemId, Result};

/// Embedding dimension used for synthetic sets when none is given.
pub const DEFAULT_DIM: usize = 20;

/// Offset added per group index to the base block.
const GROUP_OFFSET: f64 = 0.01;

#[derive(Debug)]
pub struct SyntheticData {
    pub items: ItemStore,
    pub contexts: Vec<Embedding>,
}

/// Generates `batch_size` near-duplicate groups of items: a base block of
/// `⌈N/B⌉` normalised Gaussian rows, then for `ℓ = 2..=B` the base block
/// shifted by `0.01·ℓ` in every coordinate and renormalised. Blocks are
/// concatenated and truncated to `N` rows. User contexts are normalised
/// standard Gaussian rows of the same dimension.
pub fn generate_synthetic(
    n_items: usize,
    dim: usize,
    batch_size: usize,
    n_users: usize,
    seed: u64,
) -> Result<SyntheticData> {
    if batch_size == 0 || dim == 0 {
        return Err(Error::invalid("batch size and dimension must be positive"));
    }
    if n_items < batch_size {
        return Err(Error::invalid(format!(
            "need at least as many items ({n_items}) as the batch size ({batch_size})"
        )));
    }
    let group = n_items.div_ceil(batch_size);
    let mut rng = rng_for(seed, &[0x5359]);
    let item_law = Normal::new(0.0, 2f64.sqrt()).expect("valid normal");
    let mut base = RowMatrix::zeros(group, dim);
    for i in 0..group {
        let row = base.row_mut(i);
        loop {
            row.iter_mut().for_each(|v| *v = item_law.sample(&mut rng));
            if normalize_in_place(row).is_ok() {
                break;
            }
        }
    }

    let mut data = Vec::with_capacity(group * batch_size * dim);
    data.extend_from_slice(base.as_slice());
    for ell in 2..=batch_size {
        let shift = GROUP_OFFSET * ell as f64;
        for i in 0..group {
            let start = data.len();
            data.extend(base.row(i).iter().map(|v| v + shift));
            normalize_in_place(&mut data[start..])?;
        }
    }
    data.truncate(n_items * dim);
    let items = ItemStore::from_matrix(RowMatrix::from_vec(n_items, dim, data))?;

    let user_law = Normal::new(0.0, 1.0).expect("valid normal");
    let mut contexts = Vec::with_capacity(n_users);
    for _ in 0..n_users {
        loop {
            let v: Vec<f64> = (0..dim).map(|_| user_law.sample(&mut rng)).collect();
            if let Ok(e) = Embedding::normalized(v) {
                contexts.push(e);
                break;
            }
        }
    }
    Ok(SyntheticData { items, contexts })
}

/// Ground-truth histories for synthetic users: the top-`M` items by expected
/// feedback, `M` uniform in `len_range` (clamped to `N`), best item first.
pub fn synthetic_histories(
    items: &ItemStore,
    contexts: &[Embedding],
    len_range: (usize, usize),
    seed: u64,
) -> Result<Vec<Vec<ItemId>>> {
    let (lo, hi) = len_range;
    if lo > hi {
        return Err(Error::invalid("history length range is empty"));
    }
    let mut rng = rng_for(seed, &[0x4869]);
    let mut out = Vec::with_capacity(contexts.len());
    for ctx in contexts {
        let m = rng.random_range(lo..=hi).min(items.len());
        let mut scored = Vec::with_capacity(items.len());
        items.for_each_batch(|start, b| {
            for r in 0..b.nrows() {
                scored.push((start + r, synthetic_score(b.row(r), ctx.as_slice())));
            }
            Ok(())
        })?;
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        out.push(scored.into_iter().take(m).map(|(i, _)| i).collect());
    }
    Ok(out)
}
