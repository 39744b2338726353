//! Online tuning of λ with AdaHedge over a diversity expert and a quality
//! expert, plus regret accounting against the best fixed λ in hindsight.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

const LN2: f64 = std::f64::consts::LN_2;

/// AdaHedge accumulator. Expert 0 is diversity, expert 1 is quality.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HedgeState {
    pub cum_loss: [f64; 2],
    /// Cumulative mixability gap `Δ`.
    pub gap_budget: f64,
    pub current_lambda: f64,
    pub round: usize,
}

impl Default for HedgeState {
    fn default() -> Self {
        Self {
            cum_loss: [0.0, 0.0],
            gap_budget: 0.0,
            current_lambda: 0.5,
            round: 0,
        }
    }
}

impl HedgeState {
    pub fn new() -> Self {
        Self::default()
    }

    fn learning_rate(&self) -> f64 {
        if self.gap_budget > 0.0 {
            LN2 / self.gap_budget
        } else {
            f64::INFINITY
        }
    }

    fn weights(&self) -> [f64; 2] {
        weights(self.cum_loss, self.learning_rate())
    }
}

fn weights(cum: [f64; 2], eta: f64) -> [f64; 2] {
    let lo = cum[0].min(cum[1]);
    if eta.is_infinite() {
        // Follow the leader, splitting ties.
        let lead = [cum[0] == lo, cum[1] == lo];
        let k = lead.iter().filter(|&&b| b).count() as f64;
        return lead.map(|b| if b { 1.0 / k } else { 0.0 });
    }
    let w = cum.map(|l| (-eta * (l - lo)).exp());
    let z = w[0] + w[1];
    w.map(|v| v / z)
}

/// `C_t = −4·log vol(f_S) + 4·Σ log y`; `None` when the volume is degenerate
/// and the round must be skipped.
pub fn score_gradient(log_vol_f: f64, feedback: &[f64]) -> Result<Option<f64>> {
    if let Some(y) = feedback.iter().find(|y| !(**y > 0.0 && y.is_finite())) {
        return Err(Error::AssumptionViolation(format!("feedback {y} is not positive")));
    }
    if !log_vol_f.is_finite() {
        return Ok(None);
    }
    Ok(Some(-4.0 * log_vol_f + 4.0 * feedback.iter().map(|y| y.ln()).sum::<f64>()))
}

pub fn hedge_update(state: &HedgeState, gradient: f64) -> HedgeState {
    let loss = [gradient, -gradient];
    let eta = state.learning_rate();
    let w = state.weights();
    let hedge = w[0] * loss[0] + w[1] * loss[1];
    let mix = if eta.is_infinite() {
        (0..2)
            .filter(|&k| w[k] > 0.0)
            .map(|k| loss[k])
            .fold(f64::INFINITY, f64::min)
    } else {
        let lo = loss[0].min(loss[1]);
        let s: f64 = (0..2).map(|k| w[k] * (-eta * (loss[k] - lo)).exp()).sum();
        lo - s.ln() / eta
    };
    let delta = (hedge - mix).max(0.0);
    let mut next = HedgeState {
        cum_loss: [state.cum_loss[0] + loss[0], state.cum_loss[1] + loss[1]],
        gap_budget: state.gap_budget + delta,
        current_lambda: 0.5,
        round: state.round + 1,
    };
    next.current_lambda = next.weights()[1];
    next
}

/// One round as seen by the regret analysis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub lambda: f64,
    pub gradient: f64,
    /// `log vol f(k, S, H)`, i.e. `log a_t`.
    pub log_vol: f64,
    /// `max_k y_k`.
    pub max_feedback: f64,
    /// Score of the batch at the played λ.
    pub score: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RegretLedger {
    batch_size: usize,
    entries: Vec<LedgerEntry>,
    delta_t: f64,
    skipped: usize,
}

impl RegretLedger {
    pub fn new(batch_size: usize) -> Self {
        Self {
            batch_size,
            entries: Vec::new(),
            delta_t: f64::NEG_INFINITY,
            skipped: 0,
        }
    }

    /// Records a round played at `lambda`; returns its gradient, or `None` for
    /// a skipped round.
    pub fn record(&mut self, lambda: f64, log_vol: f64, feedback: &[f64]) -> Result<Option<f64>> {
        let Some(c) = score_gradient(log_vol, feedback)? else {
            self.skipped += 1;
            return Ok(None);
        };
        let max_feedback = feedback.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        self.delta_t = self.delta_t.max(delta_term(self.batch_size, max_feedback, log_vol));
        self.entries.push(LedgerEntry {
            lambda,
            gradient: c,
            log_vol,
            max_feedback,
            score: 4.0 * log_vol + lambda * c,
        });
        Ok(Some(c))
    }

    pub fn entries(&self) -> &[LedgerEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn skipped(&self) -> usize {
        self.skipped
    }

    /// Running `δ_T`; `-∞` before the first recorded round.
    pub fn delta_t(&self) -> f64 {
        self.delta_t
    }

    pub fn gradient_sum(&self) -> f64 {
        self.entries.iter().map(|e| e.gradient).sum()
    }

    /// `Σ_t score^λ` for a fixed λ.
    pub fn total_score(&self, lambda: f64) -> f64 {
        self.entries
            .iter()
            .map(|e| 4.0 * e.log_vol + lambda * e.gradient)
            .sum()
    }
}

fn delta_term(batch: usize, max_feedback: f64, log_vol: f64) -> f64 {
    8.0 * (batch as f64 * max_feedback.ln() - log_vol)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleLambda {
    /// Exact maximiser of the hindsight objective (affine in λ).
    pub endpoint: f64,
    /// First maximiser over the grid `0, 0.01, …, 1`.
    pub grid: f64,
}

pub fn oracle_lambda(ledger: &RegretLedger) -> OracleLambda {
    let total = ledger.gradient_sum();
    let endpoint = if total > 0.0 {
        1.0
    } else if total < 0.0 {
        0.0
    } else {
        0.5
    };
    let mut grid = 0.0;
    let mut best = f64::NEG_INFINITY;
    for step in 0..=100 {
        let lambda = step as f64 / 100.0;
        let v = ledger.total_score(lambda);
        if v > best {
            best = v;
            grid = lambda;
        }
    }
    OracleLambda { endpoint, grid }
}

/// Hindsight regret of the played λ sequence and the guaranteed bound
/// `2δ√(T ln 2) + 16δ(2 + ln 2 / 3)`.
pub fn regret_and_bound(ledger: &RegretLedger, batch_size: usize) -> Result<(f64, f64)> {
    if ledger.is_empty() {
        return Err(Error::BoundUndefined(
            "no round with a non-degenerate volume was recorded".into(),
        ));
    }
    let played: f64 = ledger.entries.iter().map(|e| e.lambda * e.gradient).sum();
    let regret = ledger.gradient_sum().max(0.0) - played;
    let delta = ledger
        .entries
        .iter()
        .map(|e| delta_term(batch_size, e.max_feedback, e.log_vol))
        .fold(f64::NEG_INFINITY, f64::max);
    let t = ledger.len() as f64;
    let bound = 2.0 * delta * (t * LN2).sqrt() + 16.0 * delta * (2.0 + LN2 / 3.0);
    Ok((regret, bound))
}
