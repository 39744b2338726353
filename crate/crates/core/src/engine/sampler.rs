//! Exact k-DPP sampling through the dual eigendecomposition.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{Factor, LFactor};
use crate::kernel::{sym_eigen, EIGEN_FLOOR};
use crate::util::rng_for;
use crate::{Error, ItemId, Result};

const KDPP_STREAM: u64 = 0xD99;

/// Draws `B` items with `P(S) ∝ det L_{S,S}`. Returns the sample sorted by id.
pub fn sample_kdpp(factor: &LFactor, batch_size: usize, seed: u64) -> Result<Vec<ItemId>> {
    let n = factor.len();
    if batch_size == 0 || batch_size > n {
        return Err(Error::invalid(format!(
            "batch size {batch_size} must lie in 1..={n}"
        )));
    }
    let mut rng = rng_for(seed, &[KDPP_STREAM]);
    let mut out = match &factor.likelihood {
        Factor::Diagonal(d) => {
            let pos: Vec<usize> = (0..n).filter(|&i| d[i] > 0.0).collect();
            let vals: Vec<f64> = pos.iter().map(|&i| d[i]).collect();
            let picked = select_eigen(&vals, batch_size, &mut rng)?;
            picked.into_iter().map(|k| pos[k]).collect()
        }
        Factor::LowRank(f) => {
            let eig = sym_eigen(&f.cross());
            let top = eig.values.iter().copied().fold(0.0, f64::max);
            let kept: Vec<usize> = (0..eig.values.len())
                .filter(|&k| top > 0.0 && eig.values[k] > EIGEN_FLOOR * top)
                .collect();
            let vals: Vec<f64> = kept.iter().map(|&k| eig.values[k]).collect();
            let picked = select_eigen(&vals, batch_size, &mut rng)?;
            // Orthonormal columns u_k = F v_k / √λ_k of the primal eigenbasis.
            let mut cols: Vec<Vec<f64>> = picked
                .iter()
                .map(|&p| {
                    let k = kept[p];
                    let s = eig.values[k].sqrt();
                    (0..n)
                        .map(|i| {
                            f.row(i)
                                .iter()
                                .enumerate()
                                .map(|(a, x)| x * eig.vectors[(a, k)])
                                .sum::<f64>()
                                / s
                        })
                        .collect()
                })
                .collect();
            sample_projection(&mut cols, n, &mut rng)
        }
    };
    out.sort_unstable();
    Ok(out)
}

/// Picks `k` eigen-indices with the elementary symmetric polynomial recursion,
/// evaluated in log space.
fn select_eigen(vals: &[f64], k: usize, rng: &mut ChaCha8Rng) -> Result<Vec<usize>> {
    let m = vals.len();
    if m < k {
        return Err(Error::RankDeficient { rank: m, batch: k });
    }
    let top = vals.iter().copied().fold(0.0, f64::max);
    let logs: Vec<f64> = vals.iter().map(|v| (v / top).ln()).collect();
    // e[l][j] = log e_l(λ_1..λ_j)
    let mut e = vec![vec![f64::NEG_INFINITY; m + 1]; k + 1];
    e[0].iter_mut().for_each(|v| *v = 0.0);
    for l in 1..=k {
        for j in 1..=m {
            e[l][j] = log_add(e[l][j - 1], logs[j - 1] + e[l - 1][j - 1]);
        }
    }
    let mut picked = Vec::with_capacity(k);
    let mut l = k;
    for j in (1..=m).rev() {
        if l == 0 {
            break;
        }
        let p = (logs[j - 1] + e[l - 1][j - 1] - e[l][j]).exp();
        if rng.random::<f64>() < p {
            picked.push(j - 1);
            l -= 1;
        }
    }
    debug_assert_eq!(l, 0);
    Ok(picked)
}

fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let hi = a.max(b);
    hi + ((a - hi).exp() + (b - hi).exp()).ln()
}

/// Sequential sampling from the projection DPP spanned by `cols`.
fn sample_projection(cols: &mut Vec<Vec<f64>>, n: usize, rng: &mut ChaCha8Rng) -> Vec<ItemId> {
    let mut out = Vec::with_capacity(cols.len());
    let mut taken = vec![false; n];
    while !cols.is_empty() {
        let probs: Vec<f64> = (0..n)
            .map(|i| {
                if taken[i] {
                    0.0
                } else {
                    cols.iter().map(|c| c[i] * c[i]).sum()
                }
            })
            .collect();
        let total: f64 = probs.iter().sum();
        let mut u = rng.random::<f64>() * total;
        let mut pick = n - 1;
        for (i, &p) in probs.iter().enumerate() {
            if p > 0.0 {
                pick = i;
                if u < p {
                    break;
                }
                u -= p;
            }
        }
        taken[pick] = true;
        out.push(pick);

        let pivot = (0..cols.len())
            .max_by(|&a, &b| cols[a][pick].abs().total_cmp(&cols[b][pick].abs()))
            .unwrap_or(0);
        let pv = cols.swap_remove(pivot);
        for c in cols.iter_mut() {
            let r = c[pick] / pv[pick];
            c.iter_mut().zip(&pv).for_each(|(x, p)| *x -= r * p);
        }
        // Re-orthonormalise the remaining basis.
        for a in 0..cols.len() {
            let (done, rest) = cols.split_at_mut(a);
            let cur = &mut rest[0];
            for prev in done.iter() {
                let proj: f64 = prev.iter().zip(cur.iter()).map(|(x, y)| x * y).sum();
                cur.iter_mut().zip(prev).for_each(|(x, p)| *x -= proj * p);
            }
            let nrm = cur.iter().map(|x| x * x).sum::<f64>().sqrt();
            if nrm > 0.0 {
                cur.iter_mut().for_each(|x| *x /= nrm);
            }
        }
    }
    out
}
