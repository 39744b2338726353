//! Greedy log-det maximisation with incremental Cholesky updates.

use super::LFactor;
use crate::{Error, ItemId, Result};

/// An item whose residual variance falls below this fraction of `L_ii` is
/// treated as spanned by the current selection.
pub const COLLAPSE_TOL: f64 = 1e-9;

/// Gains within this relative margin count as tied (lowest id wins).
const TIE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    /// Items in selection order.
    pub items: Vec<ItemId>,
    /// `log det L_{S,S}`; `-∞` once padding was needed.
    pub log_det: f64,
    /// Fewer than `B` items had a finite marginal gain.
    pub rank_deficient: bool,
}

pub fn greedy_map(factor: &LFactor, batch_size: usize) -> Result<Selection> {
    let n = factor.len();
    if batch_size == 0 || batch_size > n {
        return Err(Error::invalid(format!(
            "batch size {batch_size} must lie in 1..={n}"
        )));
    }
    let l = &factor.likelihood;
    let cands = &factor.active_ids;
    let m = cands.len();
    let diag: Vec<f64> = cands.iter().map(|&i| l.diag(i)).collect();
    let mut d2 = diag.clone();
    // c[k * batch_size + t]: t-th coordinate of the Cholesky row of cands[k].
    let mut c = vec![0.0; m * batch_size];
    let mut live = vec![true; m];
    let mut items = Vec::with_capacity(batch_size);
    let mut log_det = 0.0;

    while items.len() < batch_size {
        let mut best: Option<usize> = None;
        for k in 0..m {
            if !live[k] {
                continue;
            }
            if !(d2[k] > COLLAPSE_TOL * diag[k]) {
                live[k] = false;
                continue;
            }
            if best.is_none_or(|b| d2[k] > d2[b] * (1.0 + TIE_TOL)) {
                best = Some(k);
            }
        }
        let Some(j) = best else { break };
        let t = items.len();
        live[j] = false;
        items.push(cands[j]);
        log_det += d2[j].ln();
        let dj = d2[j].sqrt();
        let cj = j * batch_size;
        for k in 0..m {
            if !live[k] {
                continue;
            }
            let base = k * batch_size;
            let mut acc = 0.0;
            for s in 0..t {
                acc += c[cj + s] * c[base + s];
            }
            let e = (l.entry(cands[j], cands[k]) - acc) / dj;
            c[base + t] = e;
            d2[k] -= e * e;
        }
    }

    let rank_deficient = items.len() < batch_size;
    if rank_deficient {
        let mut rest: Vec<ItemId> = {
            let mut chosen = vec![false; n];
            items.iter().for_each(|&i| chosen[i] = true);
            (0..n).filter(|&i| !chosen[i]).collect()
        };
        let q = &factor.quality;
        rest.sort_by(|&a, &b| q[b].total_cmp(&q[a]).then(a.cmp(&b)));
        items.extend(rest.into_iter().take(batch_size - items.len()));
        log_det = f64::NEG_INFINITY;
    }
    Ok(Selection {
        items,
        log_det,
        rank_deficient,
    })
}
