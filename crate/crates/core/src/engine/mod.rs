//! DQD likelihood construction and inference.
//!
//! Every likelihood is kept in factored form `L = F Fᵀ` (or as a diagonal),
//! so nothing of size `N × N` is ever materialised.

mod greedy;
mod sampler;

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub use greedy::{greedy_map, Selection, COLLAPSE_TOL};
pub use sampler::sample_kdpp;

use crate::dense::RowMatrix;
use crate::kernel::{cholesky_with_tol, log_volume_rows, sym_eigen, FeatureMap, EIGEN_FLOOR};
use crate::neighbors::{NeighborIndex, RestrictSet};
use crate::util::{derive_seed, rng_for};
use crate::{Error, ItemId, Result};

/// Cosine slack so that an exact duplicate still triggers the filter at α = 0.
pub const FILTER_SLACK: f64 = 1e-9;
/// Relative pivot under which a conditioning Gram block counts as singular.
const CONDITION_PIVOT: f64 = 1e-10;
const EPS_COIN: u64 = 0xE95;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    QdDecomp,
    CondDpp,
    EpsGreedy,
    MarkovDpp,
    BDivrec,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::QdDecomp,
        Method::CondDpp,
        Method::EpsGreedy,
        Method::MarkovDpp,
        Method::BDivrec,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::QdDecomp => "qd_decomp",
            Method::CondDpp => "cond_dpp",
            Method::EpsGreedy => "eps_greedy",
            Method::MarkovDpp => "markov_dpp",
            Method::BDivrec => "b_divrec",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown DQD method {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    #[default]
    Maximization,
    Sampling,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Strategy::Maximization => "maximization",
            Strategy::Sampling => "sampling",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "maximization" => Ok(Strategy::Maximization),
            "sampling" => Ok(Strategy::Sampling),
            other => Err(Error::Config(format!("unknown strategy {other:?}"))),
        }
    }
}

/// A fully resolved DQD instance for one user and round.
#[derive(Debug, Clone, PartialEq)]
pub struct LikelihoodSpec {
    pub method: Method,
    pub lambda: f64,
    /// Filter width of `b_divrec`.
    pub alpha: f64,
    /// Greedy-phase probability of `eps_greedy`.
    pub epsilon: f64,
    /// `q_θ(x_i, c_u)` for every item.
    pub quality: Vec<f64>,
    pub history: Vec<ItemId>,
    /// Batch recommended in the previous round (`markov_dpp`).
    pub previous_batch: Vec<ItemId>,
}

impl LikelihoodSpec {
    pub fn new(method: Method, quality: Vec<f64>) -> Self {
        Self {
            method,
            lambda: 0.5,
            alpha: 0.0,
            epsilon: 0.9,
            quality,
            history: Vec::new(),
            previous_batch: Vec::new(),
        }
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn with_history(mut self, history: Vec<ItemId>) -> Self {
        self.history = history;
        self
    }

    pub fn with_previous_batch(mut self, batch: Vec<ItemId>) -> Self {
        self.previous_batch = batch;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::invalid(format!("lambda {} outside [0, 1]", self.lambda)));
        }
        if !(0.0..=2.0).contains(&self.alpha) {
            return Err(Error::invalid(format!("alpha {} outside [0, 2]", self.alpha)));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(Error::invalid(format!("epsilon {} outside [0, 1]", self.epsilon)));
        }
        check_quality(&self.quality)
    }
}

pub(crate) fn check_quality(q: &[f64]) -> Result<()> {
    if let Some((i, v)) = q.iter().enumerate().find(|(_, v)| !(**v > 0.0 && v.is_finite())) {
        return Err(Error::AssumptionViolation(format!(
            "quality of item {i} is {v}, expected a finite positive value"
        )));
    }
    Ok(())
}

/// A PSD matrix over the item universe, either `R Rᵀ` or a diagonal.
#[derive(Debug, Clone, PartialEq)]
pub enum Factor {
    LowRank(RowMatrix),
    Diagonal(Vec<f64>),
}

impl Factor {
    pub fn len(&self) -> usize {
        match self {
            Factor::LowRank(r) => r.nrows(),
            Factor::Diagonal(d) => d.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn entry(&self, i: ItemId, j: ItemId) -> f64 {
        match self {
            Factor::LowRank(r) => r.row_dot(i, j),
            Factor::Diagonal(d) => {
                if i == j {
                    d[i]
                } else {
                    0.0
                }
            }
        }
    }

    #[inline]
    pub fn diag(&self, i: ItemId) -> f64 {
        self.entry(i, i)
    }

    /// Restriction `M_{S,S}` as a dense matrix.
    pub fn restrict(&self, ids: &[ItemId]) -> Result<DMatrix<f64>> {
        self.check_ids(ids)?;
        Ok(DMatrix::from_fn(ids.len(), ids.len(), |a, b| self.entry(ids[a], ids[b])))
    }

    fn check_ids(&self, ids: &[ItemId]) -> Result<()> {
        match ids.iter().find(|&&i| i >= self.len()) {
            Some(bad) => Err(Error::invalid(format!("unknown item id {bad}"))),
            None => Ok(()),
        }
    }

    /// `½ log det M_{S,S}`: `0` on the empty set, `-∞` when singular.
    pub fn log_volume(&self, ids: &[ItemId]) -> Result<f64> {
        self.check_ids(ids)?;
        Ok(match self {
            Factor::LowRank(r) => log_volume_rows(r, ids),
            Factor::Diagonal(d) => {
                let set = RestrictSet::new(ids.iter().copied());
                if set.len() != ids.len() {
                    f64::NEG_INFINITY
                } else {
                    ids.iter().map(|&i| 0.5 * d[i].ln()).sum()
                }
            }
        })
    }
}

/// Factored likelihood `L` plus the diversity factor `f` it was built from.
#[derive(Debug, Clone)]
pub struct LFactor {
    pub likelihood: Factor,
    pub diversity: Factor,
    /// Items with `L_ii > 0`.
    pub active_ids: Vec<ItemId>,
    pub quality: Vec<f64>,
    /// λ actually applied (differs from the request for `eps_greedy`).
    pub lambda_used: f64,
    /// Items whose row was denuded by the history filter.
    pub filtered: Vec<ItemId>,
}

impl LFactor {
    /// Wraps an explicit likelihood; the diversity factor is taken equal to it.
    pub fn from_likelihood(likelihood: Factor, quality: Vec<f64>) -> Result<Self> {
        if likelihood.len() != quality.len() {
            return Err(Error::invalid("quality length differs from the factor"));
        }
        check_quality(&quality)?;
        let active_ids = (0..likelihood.len()).filter(|&i| likelihood.diag(i) > 0.0).collect();
        Ok(Self {
            diversity: likelihood.clone(),
            likelihood,
            active_ids,
            quality,
            lambda_used: 0.5,
            filtered: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.likelihood.len()
    }

    pub fn is_empty(&self) -> bool {
        self.likelihood.is_empty()
    }
}

/// Greedy (`true`) or exploratory phase of the ε-greedy coin for a round.
pub fn eps_greedy_phase(epsilon: f64, round: usize, rng_seed: u64) -> bool {
    use rand::Rng;
    let mut rng = rng_for(derive_seed(rng_seed, &[EPS_COIN]), &[round as u64]);
    rng.random::<f64>() < epsilon
}

pub fn build_l_factor(
    spec: &LikelihoodSpec,
    feat: &FeatureMap,
    index: &NeighborIndex,
    round: usize,
    rng_seed: u64,
) -> Result<LFactor> {
    spec.validate()?;
    let n = feat.len();
    if spec.quality.len() != n {
        return Err(Error::invalid(format!(
            "quality has {} entries for {n} items",
            spec.quality.len()
        )));
    }
    if index.len() != n {
        return Err(Error::invalid("neighbor index does not cover the feature map"));
    }
    feat.check_ids(&spec.history)?;
    feat.check_ids(&spec.previous_batch)?;

    let nu = feat.rows();
    let mut filtered = Vec::new();
    let (diversity, lambda) = match spec.method {
        Method::QdDecomp => (Factor::LowRank(nu.clone()), spec.lambda),
        Method::CondDpp => (Factor::LowRank(condition(nu, &spec.history)?), spec.lambda),
        Method::MarkovDpp => {
            let kept = independent_subset(nu, &spec.previous_batch);
            (Factor::LowRank(condition(nu, &kept)?), spec.lambda)
        }
        Method::EpsGreedy => {
            if eps_greedy_phase(spec.epsilon, round, rng_seed) {
                (Factor::Diagonal(vec![1.0; n]), 0.5)
            } else {
                (Factor::LowRank(nu.clone()), 0.0)
            }
        }
        Method::BDivrec => {
            let (rows, hits) = denude(nu, index, &spec.history, spec.alpha)?;
            filtered = hits;
            (Factor::LowRank(rows), spec.lambda)
        }
    };
    let likelihood = weight(&diversity, &spec.quality, lambda);
    let active_ids = (0..n).filter(|&i| likelihood.diag(i) > 0.0).collect();
    Ok(LFactor {
        likelihood,
        diversity,
        active_ids,
        quality: spec.quality.clone(),
        lambda_used: lambda,
        filtered,
    })
}

/// `ν P⊥` with `P⊥ = I − ν_Hᵀ K_HH⁻¹ ν_H`, so that `(νP⊥)(νP⊥)ᵀ` is the kernel
/// conditioned on the items of `given`.
fn condition(nu: &RowMatrix, given: &[ItemId]) -> Result<RowMatrix> {
    let set: Vec<ItemId> = {
        let mut seen = std::collections::HashSet::new();
        given.iter().copied().filter(|i| seen.insert(*i)).collect()
    };
    if set.is_empty() {
        return Ok(nu.clone());
    }
    let k_hh = nu.gram(&set);
    let ch = cholesky_with_tol(&k_hh, CONDITION_PIVOT).map_err(|_| {
        Error::HistoryDegenerate(format!(
            "kernel block of {} conditioning items is singular",
            set.len()
        ))
    })?;
    let r = nu.ncols();
    let nu_h = DMatrix::from_fn(set.len(), r, |a, k| nu.row(set[a])[k]);
    let x = ch.solve(&nu_h)?;
    let proj = DMatrix::identity(r, r) - nu_h.transpose() * x;
    Ok(nu.mul(&proj))
}

/// Greedy pivot pass over `given` (deduplicated, in order) that keeps only
/// rows adding a new direction to the ones already kept.
fn independent_subset(nu: &RowMatrix, given: &[ItemId]) -> Vec<ItemId> {
    let r = nu.ncols();
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut kept = Vec::new();
    for &i in given {
        if kept.contains(&i) {
            continue;
        }
        let row = nu.row(i);
        let sq: f64 = row.iter().map(|v| v * v).sum();
        let mut resid = row.to_vec();
        for b in &basis {
            let c: f64 = resid.iter().zip(b).map(|(x, y)| x * y).sum();
            resid.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
        }
        let left: f64 = resid.iter().map(|v| v * v).sum();
        if sq > 0.0 && left > CONDITION_PIVOT * sq {
            let n = left.sqrt();
            resid.iter_mut().for_each(|v| *v /= n);
            basis.push(resid);
            kept.push(i);
        }
        if basis.len() == r {
            break;
        }
    }
    kept
}

/// Rows `ν_i − ν_{g(i)}` where `g(i)` is the nearest history item whenever its
/// cosine reaches `1 − α`.
fn denude(
    nu: &RowMatrix,
    index: &NeighborIndex,
    history: &[ItemId],
    alpha: f64,
) -> Result<(RowMatrix, Vec<ItemId>)> {
    let mut rows = nu.clone();
    let restrict = RestrictSet::new(history.iter().copied());
    let mut hits = Vec::new();
    if restrict.is_empty() {
        return Ok((rows, hits));
    }
    let threshold = 1.0 - alpha - FILTER_SLACK;
    for i in 0..nu.nrows() {
        if let (Some(j), cos) = index.max_cosine_in(i, &restrict)? {
            if cos >= threshold {
                let src = nu.row(j);
                rows.row_mut(i).iter_mut().zip(src).for_each(|(x, g)| *x -= g);
                hits.push(i);
            }
        }
    }
    Ok((rows, hits))
}

/// Applies `Q^{2λ} f^{2(1−λ)} Q^{2λ}` to a diversity factor.
fn weight(diversity: &Factor, q: &[f64], lambda: f64) -> Factor {
    match diversity {
        Factor::Diagonal(f) => Factor::Diagonal(
            f.iter()
                .zip(q)
                .map(|(&fi, &qi)| qi.powf(4.0 * lambda) * fi.powf(2.0 * (1.0 - lambda)))
                .collect(),
        ),
        Factor::LowRank(_) if lambda == 1.0 => {
            Factor::Diagonal(q.iter().map(|&qi| qi.powi(4)).collect())
        }
        Factor::LowRank(d) if lambda == 0.5 => {
            let mut f = d.clone();
            for (i, &qi) in q.iter().enumerate() {
                f.row_mut(i).iter_mut().for_each(|v| *v *= qi);
            }
            Factor::LowRank(f)
        }
        Factor::LowRank(d) => {
            // f = D Dᵀ and DᵀD = V Σ Vᵀ give f^p = (D V Σ^{(p-1)/2})(…)ᵀ.
            let eig = sym_eigen(&d.cross());
            let top = eig.values.iter().copied().fold(0.0, f64::max);
            let kept: Vec<usize> = (0..eig.values.len())
                .filter(|&k| top > 0.0 && eig.values[k] > EIGEN_FLOOR * top)
                .collect();
            if kept.is_empty() {
                return Factor::LowRank(RowMatrix::zeros(d.nrows(), 1));
            }
            let exponent = 0.5 - lambda;
            let m = DMatrix::from_fn(d.ncols(), kept.len(), |a, k| {
                eig.vectors[(a, kept[k])] * eig.values[kept[k]].powf(exponent)
            });
            let mut f = d.mul(&m);
            for (i, &qi) in q.iter().enumerate() {
                let s = qi.powf(2.0 * lambda);
                f.row_mut(i).iter_mut().for_each(|v| *v *= s);
            }
            Factor::LowRank(f)
        }
    }
}

/// `4(1−λ)·log vol(f_S) + 4λ·Σ log y`, with `0` for the empty set.
pub fn set_score(factor: &LFactor, subset: &[ItemId], lambda: f64, feedback: &[f64]) -> Result<f64> {
    if let Some(y) = feedback.iter().find(|y| !(**y > 0.0)) {
        return Err(Error::AssumptionViolation(format!("feedback {y} is not positive")));
    }
    if subset.is_empty() {
        return Ok(0.0);
    }
    let quality_term = 4.0 * lambda * feedback.iter().map(|y| y.ln()).sum::<f64>();
    if lambda == 1.0 {
        return Ok(quality_term);
    }
    let log_vol = factor.diversity.log_volume(subset)?;
    Ok(4.0 * (1.0 - lambda) * log_vol + quality_term)
}

#[cfg(test)]
mod tests;
