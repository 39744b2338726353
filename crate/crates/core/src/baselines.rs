//! Non-DPP rerankers: maximal marginal relevance and xQuAD with history items
//! as subqueries.

use serde::{Deserialize, Serialize};

use crate::kernel::FeatureMap;
use crate::neighbors::{NeighborIndex, RestrictSet};
use crate::{Error, ItemId, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RerankConfig {
    pub lambda: f64,
    /// Cosine threshold for xQuAD coverage.
    pub alpha: f64,
    pub batch_size: usize,
}

impl RerankConfig {
    pub fn new(lambda: f64, alpha: f64, batch_size: usize) -> Self {
        Self {
            lambda,
            alpha,
            batch_size,
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::invalid(format!("lambda {} outside [0, 1]", self.lambda)));
        }
        if !(0.0..=2.0).contains(&self.alpha) {
            return Err(Error::invalid(format!("alpha {} outside [0, 2]", self.alpha)));
        }
        if self.batch_size == 0 || self.batch_size > n {
            return Err(Error::invalid(format!(
                "batch size {} must lie in 1..={n}",
                self.batch_size
            )));
        }
        Ok(())
    }
}

fn check_inputs(cfg: &RerankConfig, quality: &[f64], feat: &FeatureMap, history: &[ItemId]) -> Result<()> {
    cfg.validate(feat.len())?;
    if quality.len() != feat.len() {
        return Err(Error::invalid("quality length differs from the item count"));
    }
    feat.check_ids(history)
}

/// Picks `argmax λ·q_i − (1−λ)·max_{j ∈ H ∪ S} k(x_i, x_j)` one item at a time.
pub fn mmr_select(
    cfg: &RerankConfig,
    quality: &[f64],
    feat: &FeatureMap,
    history: &[ItemId],
) -> Result<Vec<ItemId>> {
    check_inputs(cfg, quality, feat, history)?;
    let n = feat.len();
    let mut context: Vec<ItemId> = RestrictSet::new(history.iter().copied()).members().to_vec();
    let mut chosen = vec![false; n];
    let mut out = Vec::with_capacity(cfg.batch_size);
    for _ in 0..cfg.batch_size {
        let mut best: Option<(ItemId, f64)> = None;
        for i in (0..n).filter(|&i| !chosen[i]) {
            let penalty = context
                .iter()
                .map(|&j| feat.kernel(i, j))
                .fold(f64::NEG_INFINITY, f64::max);
            let penalty = if context.is_empty() { 0.0 } else { penalty };
            let score = cfg.lambda * quality[i] - (1.0 - cfg.lambda) * penalty;
            if best.is_none_or(|(_, s)| score > s) {
                best = Some((i, score));
            }
        }
        let (pick, _) = best.expect("batch size checked against N");
        chosen[pick] = true;
        out.push(pick);
        if !context.contains(&pick) {
            context.push(pick);
        }
    }
    Ok(out)
}

/// xQuAD over history subqueries: item `i` covers `h` when
/// `cos(ν_i, ν_h) ≥ α`, each subquery weighted `1/|H|`.
pub fn xquad_select(
    cfg: &RerankConfig,
    quality: &[f64],
    feat: &FeatureMap,
    index: &NeighborIndex,
    history: &[ItemId],
) -> Result<Vec<ItemId>> {
    check_inputs(cfg, quality, feat, history)?;
    let n = feat.len();
    if index.len() != n {
        return Err(Error::invalid("neighbor index does not cover the feature map"));
    }
    let subqueries = RestrictSet::new(history.iter().copied());
    let m = subqueries.len();
    let lambda = if m == 0 { 1.0 } else { cfg.lambda };
    let w = if m == 0 { 0.0 } else { 1.0 / m as f64 };
    let mut cover = vec![false; n * m];
    for i in 0..n {
        for (k, &h) in subqueries.members().iter().enumerate() {
            cover[i * m + k] = index.cosine(i, h)? >= cfg.alpha;
        }
    }
    let mut uncovered = vec![true; m];
    let mut chosen = vec![false; n];
    let mut out = Vec::with_capacity(cfg.batch_size);
    for _ in 0..cfg.batch_size {
        let mut best: Option<(ItemId, f64)> = None;
        for i in (0..n).filter(|&i| !chosen[i]) {
            let gain: f64 = (0..m)
                .filter(|&k| uncovered[k] && cover[i * m + k])
                .map(|_| w)
                .sum();
            let score = lambda * quality[i] + (1.0 - lambda) * gain;
            if best.is_none_or(|(_, s)| score > s) {
                best = Some((i, score));
            }
        }
        let (pick, _) = best.expect("batch size checked against N");
        chosen[pick] = true;
        out.push(pick);
        for k in 0..m {
            if cover[pick * m + k] {
                uncovered[k] = false;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dense::RowMatrix;
    use crate::neighbors::{build_index, IndexStructure};
    use crate::util::rng_for;
    use proptest::prelude::*;
    use rand::Rng;

    fn feat(rows: &[Vec<f64>]) -> FeatureMap {
        FeatureMap::from_rows(RowMatrix::from_rows(rows)).unwrap()
    }

    fn random_instance(n: usize, d: usize, seed: u64) -> (FeatureMap, Vec<f64>) {
        let mut rng = rng_for(seed, &[]);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                let v: Vec<f64> = (0..d).map(|_| rng.random::<f64>() - 0.5).collect();
                let s = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                v.iter().map(|x| x / s).collect()
            })
            .collect();
        let q = (0..n).map(|_| rng.random::<f64>() + 1e-3).collect();
        (feat(&rows), q)
    }

    fn top(q: &[f64], b: usize) -> Vec<usize> {
        let mut ids: Vec<usize> = (0..q.len()).collect();
        ids.sort_by(|&a, &c| q[c].total_cmp(&q[a]).then(a.cmp(&c)));
        ids.truncate(b);
        ids
    }

    #[test]
    fn mmr_examples() {
        let (f, q) = random_instance(20, 4, 1);
        assert_eq!(mmr_select(&RerankConfig::new(1.0, 0.0, 5), &q, &f, &[3, 4]).unwrap(), top(&q, 5));

        let f = feat(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0]]);
        let q = vec![0.2, 0.5, 0.9];
        assert_eq!(mmr_select(&RerankConfig::new(0.0, 0.0, 2), &q, &f, &[]).unwrap(), vec![0, 1]);

        let f = feat(&[vec![1.0, 0.0], vec![1.0, 0.0]]);
        assert_eq!(
            mmr_select(&RerankConfig::new(0.5, 0.0, 2), &[0.9, 0.8], &f, &[]).unwrap(),
            vec![0, 1]
        );
        assert!(mmr_select(&RerankConfig::new(0.5, 0.0, 3), &[0.9, 0.8], &f, &[]).is_err());
    }

    #[test]
    fn xquad_examples() {
        let (f, q) = random_instance(20, 4, 2);
        let idx = build_index(&f, IndexStructure::Brute).unwrap();
        assert_eq!(xquad_select(&RerankConfig::new(0.0, 0.5, 4), &q, &f, &idx, &[]).unwrap(), top(&q, 4));
        assert_eq!(xquad_select(&RerankConfig::new(1.0, 0.5, 4), &q, &f, &idx, &[1, 2]).unwrap(), top(&q, 4));

        let f = feat(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![0.0, 1.0]]);
        let idx = build_index(&f, IndexStructure::Brute).unwrap();
        // Item 2 is the history; candidate 0 is orthogonal, candidate 1 covers it.
        let pick = xquad_select(&RerankConfig::new(0.0, 0.9, 1), &[0.9, 0.1, 0.1], &f, &idx, &[2]).unwrap();
        assert_eq!(pick, vec![1]);
    }

    /// Recomputes every penalty from scratch over all pairs.
    fn naive_mmr(lambda: f64, q: &[f64], f: &FeatureMap, h: &[usize], b: usize) -> Vec<usize> {
        let n = q.len();
        let mut sel: Vec<usize> = Vec::new();
        while sel.len() < b {
            let mut best = usize::MAX;
            let mut best_score = f64::NEG_INFINITY;
            for i in 0..n {
                if sel.contains(&i) {
                    continue;
                }
                let mut pen = f64::NEG_INFINITY;
                for j in 0..n {
                    if h.contains(&j) || sel.contains(&j) {
                        pen = pen.max(f.kernel(i, j));
                    }
                }
                if pen == f64::NEG_INFINITY {
                    pen = 0.0;
                }
                let s = lambda * q[i] - (1.0 - lambda) * pen;
                if s > best_score {
                    best_score = s;
                    best = i;
                }
            }
            sel.push(best);
        }
        sel
    }

    #[test]
    fn mmr_quality_monotone_in_lambda() {
        for seed in 0..50 {
            let (f, q) = random_instance(40, 5, 100 + seed);
            let h = vec![(seed % 40) as usize, ((seed * 7) % 40) as usize];
            let mut prev = f64::NEG_INFINITY;
            for lambda in [0.0, 0.25, 0.5, 0.75, 1.0] {
                let s = mmr_select(&RerankConfig::new(lambda, 0.0, 4), &q, &f, &h).unwrap();
                let mean = s.iter().map(|&i| q[i]).sum::<f64>() / 4.0;
                assert!(mean >= prev - 1e-9, "seed {seed} lambda {lambda}");
                prev = mean;
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn mmr_matches_naive(seed in any::<u64>(), n in 2usize..200, lambda in 0.0f64..=1.0, hn in 0usize..5) {
            let (f, q) = random_instance(n, 6, seed);
            let h: Vec<usize> = (0..hn).map(|k| (seed as usize).wrapping_add(k * 31) % n).collect();
            let b = 1 + (seed as usize % n.min(6));
            let cfg = RerankConfig::new(lambda, 0.0, b);
            prop_assert_eq!(mmr_select(&cfg, &q, &f, &h).unwrap(), naive_mmr(lambda, &q, &f, &h, b));
        }

        #[test]
        fn selectors_return_distinct_batches(seed in any::<u64>(), n in 1usize..60, lambda in 0.0f64..=1.0, alpha in 0.0f64..=2.0) {
            let (f, q) = random_instance(n, 3, seed);
            let idx = build_index(&f, IndexStructure::Brute).unwrap();
            let b = 1 + (seed as usize % n);
            let h: Vec<usize> = (0..3).map(|k| (seed as usize + k) % n).collect();
            let cfg = RerankConfig::new(lambda, alpha, b);
            for out in [mmr_select(&cfg, &q, &f, &h).unwrap(), xquad_select(&cfg, &q, &f, &idx, &h).unwrap()] {
                prop_assert_eq!(out.len(), b);
                prop_assert_eq!(RestrictSet::new(out.iter().copied()).len(), b);
            }
        }
    }
}
