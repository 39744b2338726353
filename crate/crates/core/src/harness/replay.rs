use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{Dataset, Prepared, Recommender, RunConfig};
use crate::baselines::{mmr_select, xquad_select, RerankConfig};
use crate::engine::{build_l_factor, greedy_map, sample_kdpp, set_score, LikelihoodSpec, Strategy};
use crate::feedback::NoiseChannel;
use crate::metrics::{effective_diversity, round_metrics, RoundMetrics, TrajectorySummary};
use crate::tuner::{hedge_update, HedgeState, RegretLedger};
use crate::util::derive_seed;
use crate::{Error, ItemId, Result, UserId};

const NOISE_STREAM: u64 = 0x401;
const SAMPLER_STREAM: u64 = 0x5A3;
const COIN_STREAM: u64 = 0xC01;

/// One replayed round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    /// Length of the ground-truth history prefix shown to the recommender.
    pub history_len: usize,
    pub batch: Vec<ItemId>,
    pub feedback: Vec<f64>,
    pub lambda: f64,
    pub metrics: RoundMetrics,
    pub rank_deficient: bool,
    /// Score of the batch at `lambda` (DQD methods only).
    pub score: Option<f64>,
    /// The tuner skipped this round (degenerate volume).
    pub skipped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub user: UserId,
    pub seed: u64,
    pub rounds: Vec<RoundRecord>,
    pub summary: TrajectorySummary,
    pub ledger: Option<RegretLedger>,
}

impl TrajectoryRecord {
    pub fn lambdas(&self) -> Vec<f64> {
        self.rounds.iter().map(|r| r.lambda).collect()
    }

    /// Writes one JSON object per round.
    pub fn write_round_log<W: Write>(&self, mut out: W) -> Result<()> {
        for r in &self.rounds {
            let line = serde_json::to_string(r).map_err(|e| Error::invalid(e.to_string()))?;
            writeln!(out, "{line}")?;
        }
        Ok(())
    }
}

/// Replays `user`'s ground-truth history prefix by prefix (lengths `0..=M`).
pub fn run_trajectory(
    cfg: &RunConfig,
    dataset: &Dataset,
    prepared: &Prepared,
    user: UserId,
    seed: u64,
) -> Result<TrajectoryRecord> {
    cfg.validate()?;
    let n = dataset.n_items();
    if prepared.feat.len() != n {
        return Err(Error::invalid("feature map does not match the dataset"));
    }
    if cfg.batch_size > n {
        return Err(Error::Config(format!("batch size {} exceeds the {n} items", cfg.batch_size)));
    }
    let truth = dataset.history(user)?;
    let quality = dataset.feedback.quality_vector(user, n)?;
    let (feat, index) = (&prepared.feat, &prepared.index);
    let user_seed = derive_seed(seed, &[user as u64]);
    let channel = NoiseChannel::new(cfg.noise, derive_seed(user_seed, &[NOISE_STREAM]));
    let b = cfg.batch_size;

    let mut hedge = HedgeState::new();
    let mut ledger = cfg.adaptive.then(|| RegretLedger::new(b));
    let mut previous: Vec<ItemId> = Vec::new();
    let mut rounds = Vec::with_capacity(truth.len() + 1);

    for r in 0..=truth.len() {
        let history = &truth[..r];
        let lambda = if cfg.adaptive { hedge.current_lambda } else { cfg.lambda };
        let start = Instant::now();
        let (batch, rank_deficient, factor) = match cfg.method {
            Recommender::Dqd(method) => {
                let spec = LikelihoodSpec::new(method, quality.clone())
                    .with_lambda(lambda)
                    .with_alpha(cfg.alpha())
                    .with_epsilon(cfg.epsilon())
                    .with_history(history.to_vec())
                    .with_previous_batch(previous.clone());
                let lf = build_l_factor(&spec, feat, index, r, derive_seed(user_seed, &[COIN_STREAM]))?;
                let (items, deficient) = match cfg.strategy {
                    Strategy::Maximization => {
                        let s = greedy_map(&lf, b)?;
                        (s.items, s.rank_deficient)
                    }
                    Strategy::Sampling => {
                        match sample_kdpp(&lf, b, derive_seed(user_seed, &[SAMPLER_STREAM, r as u64])) {
                            Ok(items) => (items, false),
                            Err(Error::RankDeficient { .. }) => {
                                let s = greedy_map(&lf, b)?;
                                (s.items, true)
                            }
                            Err(e) => return Err(e),
                        }
                    }
                };
                (items, deficient, Some(lf))
            }
            Recommender::Mmr => {
                let rc = RerankConfig::new(lambda, cfg.alpha(), b);
                (mmr_select(&rc, &quality, feat, history)?, false, None)
            }
            Recommender::Xquad => {
                let rc = RerankConfig::new(lambda, cfg.alpha(), b);
                (xquad_select(&rc, &quality, feat, index, history)?, false, None)
            }
        };
        let elapsed = start.elapsed().as_secs_f64();

        let feedback: Vec<f64> = batch
            .iter()
            .enumerate()
            .map(|(slot, &i)| channel.observe(quality[i], r, slot))
            .collect();
        let mut metrics = round_metrics(&batch, &quality, feat, history, cfg.threshold)?;
        metrics.runtime_seconds = elapsed;

        let mut skipped = false;
        let mut score = None;
        if let Some(lf) = &factor {
            score = Some(set_score(lf, &batch, lambda, &feedback)?);
            if let Some(ledger) = ledger.as_mut() {
                let log_vol = lf.diversity.log_volume(&batch)?;
                match ledger.record(lambda, log_vol, &feedback)? {
                    Some(c) => hedge = hedge_update(&hedge, c),
                    None => skipped = true,
                }
            }
        }
        rounds.push(RoundRecord {
            round: r,
            history_len: r,
            batch: batch.clone(),
            feedback,
            lambda,
            metrics,
            rank_deficient,
            score,
            skipped,
        });
        previous = batch;
    }

    let batches: Vec<Vec<ItemId>> = rounds.iter().map(|r| r.batch.clone()).collect();
    let div_plus = effective_diversity(&batches, &quality, feat, cfg.threshold)?;
    let per_round: Vec<RoundMetrics> = rounds.iter().map(|r| r.metrics).collect();
    Ok(TrajectoryRecord {
        user,
        seed,
        summary: TrajectorySummary::from_rounds(user, seed, &per_round, div_plus),
        rounds,
        ledger,
    })
}

/// Re-runs the trajectory at every fixed λ of `grid` and returns the λ with
/// the largest total score, along with each total.
pub fn grid_oracle(
    cfg: &RunConfig,
    dataset: &Dataset,
    prepared: &Prepared,
    user: UserId,
    seed: u64,
    grid: &[f64],
) -> Result<(f64, Vec<f64>)> {
    if !matches!(cfg.method, Recommender::Dqd(_)) {
        return Err(Error::Config(format!("{} has no DQD score", cfg.method)));
    }
    let mut totals = Vec::with_capacity(grid.len());
    for &lambda in grid {
        let fixed = RunConfig {
            lambda,
            adaptive: false,
            ..cfg.clone()
        };
        let rec = run_trajectory(&fixed, dataset, prepared, user, seed)?;
        totals.push(rec.rounds.iter().filter_map(|r| r.score).sum::<f64>());
    }
    let best = (0..grid.len())
        .max_by(|&a, &b| totals[a].total_cmp(&totals[b]).then(b.cmp(&a)))
        .ok_or_else(|| Error::invalid("empty λ grid"))?;
    Ok((grid[best], totals))
}
