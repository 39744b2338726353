//! Feedback oracles `q_θ(item, user)` and noisy observation channels.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{ItemStore, ScoreTable};
use crate::kernel::Embedding;
use crate::util::{dot, rng_for};
use crate::{Error, ItemId, Result, UserId};

/// Floor keeping synthetic feedback strictly positive.
pub const FEEDBACK_FLOOR: f64 = 1e-9;

/// `((x·c) + 1) / 2`, clamped to `[1e-9, 1]`.
#[inline]
pub fn synthetic_score(item: &[f64], context: &[f64]) -> f64 {
    ((dot(item, context) + 1.0) / 2.0).clamp(FEEDBACK_FLOOR, 1.0)
}

#[derive(Debug, Clone)]
pub enum FeedbackModel {
    /// Affine map of the item/context inner product.
    SyntheticLinear {
        items: Arc<ItemStore>,
        contexts: Vec<Embedding>,
    },
    /// Scores exported by an external model.
    Precomputed(ScoreTable),
}

impl FeedbackModel {
    pub fn n_users(&self) -> usize {
        match self {
            FeedbackModel::SyntheticLinear { contexts, .. } => contexts.len(),
            FeedbackModel::Precomputed(t) => t.users(),
        }
    }

    pub fn expected_feedback(&self, item: ItemId, user: UserId) -> Result<f64> {
        match self {
            FeedbackModel::SyntheticLinear { items, contexts } => {
                let ctx = contexts
                    .get(user)
                    .ok_or_else(|| Error::invalid(format!("unknown user {user}")))?;
                let x = items.row(item)?;
                if x.dim() != ctx.dim() {
                    return Err(Error::invalid("item and context dimensions differ"));
                }
                Ok(synthetic_score(x.as_slice(), ctx.as_slice()))
            }
            FeedbackModel::Precomputed(t) => t.get(user, item),
        }
    }

    /// Expected feedback of `user` for every item `0..n_items`.
    pub fn quality_vector(&self, user: UserId, n_items: usize) -> Result<Vec<f64>> {
        match self {
            FeedbackModel::SyntheticLinear { items, contexts } => {
                let ctx = contexts
                    .get(user)
                    .ok_or_else(|| Error::invalid(format!("unknown user {user}")))?;
                if items.len() != n_items {
                    return Err(Error::invalid("item count mismatch"));
                }
                let mut q = Vec::with_capacity(n_items);
                items.for_each_batch(|_, b| {
                    for r in 0..b.nrows() {
                        q.push(synthetic_score(b.row(r), ctx.as_slice()));
                    }
                    Ok(())
                })?;
                Ok(q)
            }
            FeedbackModel::Precomputed(t) => (0..n_items).map(|i| t.get(user, i)).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    /// Observed feedback equals the expected feedback.
    #[default]
    None,
    /// `2` with probability `clamp(q, 0, 1)`, else `1`.
    Bernoulli12,
    /// Trial outcome codes: 3 success, 2 untested, 1 failure.
    DiscreteClinical,
    /// Star rating shifted into `{1, …, 6}`.
    Rating,
}

impl std::str::FromStr for NoiseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(NoiseKind::None),
            "bernoulli12" => Ok(NoiseKind::Bernoulli12),
            "discrete_clinical" => Ok(NoiseKind::DiscreteClinical),
            "rating" => Ok(NoiseKind::Rating),
            other => Err(Error::Config(format!("unknown noise channel {other:?}"))),
        }
    }
}

/// Counter-based noisy channel: identical `(seed, round, slot)` triples give
/// identical observations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct NoiseChannel {
    pub kind: NoiseKind,
    pub seed: u64,
}

impl NoiseChannel {
    pub fn new(kind: NoiseKind, seed: u64) -> Self {
        Self { kind, seed }
    }

    pub fn observe(&self, expected: f64, round: usize, slot: usize) -> f64 {
        match self.kind {
            NoiseKind::None => expected,
            NoiseKind::Bernoulli12 => {
                let p = expected.clamp(0.0, 1.0);
                let mut rng = rng_for(self.seed, &[0xB12, round as u64, slot as u64]);
                let u: f64 = rng.random();
                if u < p {
                    2.0
                } else {
                    1.0
                }
            }
            NoiseKind::DiscreteClinical => {
                // ≥ 0.75 success, < 0.25 failure, untested in between.
                if expected >= 0.75 {
                    3.0
                } else if expected < 0.25 {
                    1.0
                } else {
                    2.0
                }
            }
            NoiseKind::Rating => expected.round().clamp(0.0, 5.0) + 1.0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::parse_items_csv;

    fn model() -> FeedbackModel {
        let items = parse_items_csv(b"1,0\n-1,0\n0,1\n").unwrap();
        FeedbackModel::SyntheticLinear {
            items: Arc::new(items),
            contexts: vec![Embedding::normalized(vec![1.0, 0.0]).unwrap()],
        }
    }

    #[test]
    fn synthetic_examples() {
        let m = model();
        assert_eq!(m.expected_feedback(0, 0).unwrap(), 1.0);
        assert_eq!(m.expected_feedback(1, 0).unwrap(), 1e-9);
        assert_eq!(m.expected_feedback(2, 0).unwrap(), 0.5);
        assert_eq!(m.quality_vector(0, 3).unwrap(), vec![1.0, 1e-9, 0.5]);
        assert!(m.expected_feedback(0, 1).is_err());
    }

    #[test]
    fn precomputed_missing() {
        let mut t = ScoreTable::new();
        t.insert(0, 0, 0.7).unwrap();
        let m = FeedbackModel::Precomputed(t);
        assert_eq!(m.expected_feedback(0, 0).unwrap(), 0.7);
        assert!(matches!(m.expected_feedback(0, 3), Err(Error::MissingScore { .. })));
        assert!(m.quality_vector(0, 2).is_err());
    }

    #[test]
    fn channels() {
        let none = NoiseChannel::new(NoiseKind::None, 0);
        assert_eq!(none.observe(0.7, 0, 0), 0.7);
        let b = NoiseChannel::new(NoiseKind::Bernoulli12, 3);
        for r in 0..200 {
            assert_eq!(b.observe(1.0, r, 1), 2.0);
            assert_eq!(b.observe(0.0, r, 1), 1.0);
        }
        let c = NoiseChannel::new(NoiseKind::DiscreteClinical, 0);
        assert_eq!(
            [c.observe(0.9, 0, 0), c.observe(0.5, 0, 0), c.observe(0.1, 0, 0)],
            [3.0, 2.0, 1.0]
        );
        let r = NoiseChannel::new(NoiseKind::Rating, 0);
        assert_eq!([r.observe(0.2, 0, 0), r.observe(4.6, 0, 0), r.observe(9.0, 0, 0)], [1.0, 6.0, 6.0]);
    }

    #[test]
    fn bernoulli_half_mean() {
        let b = NoiseChannel::new(NoiseKind::Bernoulli12, 2024);
        let draws = 20_000;
        let twos = (0..draws).filter(|&t| b.observe(0.5, t, t % 3) == 2.0).count();
        let frac = twos as f64 / draws as f64;
        assert!((frac - 0.5).abs() <= 0.01, "fraction {frac}");
    }

    #[test]
    fn deterministic_and_positive() {
        let b = NoiseChannel::new(NoiseKind::Bernoulli12, 9);
        for t in 0..100 {
            let a = b.observe(0.3, t, 2);
            assert_eq!(a, b.observe(0.3, t, 2));
            assert!(a > 0.0);
        }
    }
}
