//! Pointwise round metrics, trajectory summaries, cross-user aggregation and
//! dataset diagnostics.

use std::fmt::Write as _;
use std::io;

use serde::{Deserialize, Serialize};

use crate::data::ScoreTable;
use crate::kernel::{volume, FeatureMap};
use crate::neighbors::RestrictSet;
use crate::{Error, ItemId, Result, UserId};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RoundMetrics {
    pub rel: f64,
    pub prec: f64,
    pub div_local: f64,
    pub div_global: f64,
    pub runtime_seconds: f64,
}

/// `quality` is indexed by item id. Runtime is left at zero for the caller.
pub fn round_metrics(
    batch: &[ItemId],
    quality: &[f64],
    feat: &FeatureMap,
    history: &[ItemId],
    tau: f64,
) -> Result<RoundMetrics> {
    if batch.is_empty() {
        return Err(Error::invalid("round metrics need a non-empty batch"));
    }
    feat.check_ids(batch)?;
    feat.check_ids(history)?;
    if quality.len() != feat.len() {
        return Err(Error::invalid("quality length differs from the item count"));
    }
    let b = batch.len() as f64;
    let rel = batch.iter().map(|&i| quality[i]).sum::<f64>() / b;
    let prec = batch.iter().filter(|&&i| quality[i] >= tau).count() as f64 / b;
    let union = RestrictSet::new(batch.iter().chain(history).copied());
    Ok(RoundMetrics {
        rel,
        prec,
        div_local: volume(feat, batch)?,
        div_global: volume(feat, union.members())?,
        runtime_seconds: 0.0,
    })
}

/// Volume of the distinct recommended items whose expected feedback reaches τ.
pub fn effective_diversity(
    batches: &[Vec<ItemId>],
    quality: &[f64],
    feat: &FeatureMap,
    tau: f64,
) -> Result<f64> {
    let set = RestrictSet::new(batches.iter().flatten().copied());
    feat.check_ids(set.members())?;
    let good: Vec<ItemId> = set
        .members()
        .iter()
        .copied()
        .filter(|&i| quality[i] >= tau)
        .collect();
    volume(feat, &good)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySummary {
    pub user: UserId,
    pub seed: u64,
    pub rounds: usize,
    pub rel: f64,
    pub prec: f64,
    pub div_local: f64,
    pub div_global: f64,
    pub div_plus: f64,
    pub runtime_seconds: f64,
}

impl TrajectorySummary {
    pub fn from_rounds(user: UserId, seed: u64, rounds: &[RoundMetrics], div_plus: f64) -> Self {
        let t = rounds.len().max(1) as f64;
        let mean = |f: fn(&RoundMetrics) -> f64| rounds.iter().map(f).sum::<f64>() / t;
        Self {
            user,
            seed,
            rounds: rounds.len(),
            rel: mean(|r| r.rel),
            prec: mean(|r| r.prec),
            div_local: mean(|r| r.div_local),
            div_global: mean(|r| r.div_global),
            div_plus,
            runtime_seconds: mean(|r| r.runtime_seconds),
        }
    }

    fn values(&self) -> [f64; 6] {
        [
            self.rel,
            self.prec,
            self.div_local,
            self.div_global,
            self.div_plus,
            self.runtime_seconds,
        ]
    }
}

/// Names of the aggregated metrics, in column order.
pub const METRICS: [&str; 6] = ["rel", "prec", "div_local", "div_global", "div_plus", "time"];

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    /// Mean and population standard deviation.
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self::default();
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Self { mean, std: var.sqrt() }
    }

    pub fn render(&self) -> String {
        format!("{:.2} ± {:.2}", self.mean, self.std)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Aggregate {
    pub users: usize,
    /// Indexed like [`METRICS`].
    pub stats: [MeanStd; 6],
}

impl Aggregate {
    pub fn get(&self, metric: &str) -> Option<MeanStd> {
        METRICS.iter().position(|m| *m == metric).map(|k| self.stats[k])
    }
}

/// Per-user mean over seeds, then mean ± population std across users.
pub fn aggregate(summaries: &[TrajectorySummary]) -> Result<Aggregate> {
    if summaries.is_empty() {
        return Err(Error::invalid("nothing to aggregate"));
    }
    let mut users: Vec<UserId> = summaries.iter().map(|s| s.user).collect();
    users.sort_unstable();
    users.dedup();
    let per_user: Vec<[f64; 6]> = users
        .iter()
        .map(|&u| {
            let mine: Vec<&TrajectorySummary> = summaries.iter().filter(|s| s.user == u).collect();
            let mut acc = [0.0; 6];
            for s in &mine {
                for (a, v) in acc.iter_mut().zip(s.values()) {
                    *a += v;
                }
            }
            acc.map(|a| a / mine.len() as f64)
        })
        .collect();
    let stats = std::array::from_fn(|k| MeanStd::of(&per_user.iter().map(|v| v[k]).collect::<Vec<_>>()));
    Ok(Aggregate {
        users: users.len(),
        stats,
    })
}

/// One configuration cell of a benchmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub method: String,
    pub strategy: String,
    pub lambda: f64,
    pub alpha: f64,
    pub adaptive: bool,
    /// Trajectories that failed and were left out.
    pub failures: usize,
    pub aggregate: Aggregate,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ReportTable {
    pub rows: Vec<ReportRow>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    method: String,
    strategy: String,
    lambda: f64,
    alpha: f64,
    adaptive: bool,
    users: usize,
    failures: usize,
    rel_mean: f64,
    rel_std: f64,
    prec_mean: f64,
    prec_std: f64,
    div_local_mean: f64,
    div_local_std: f64,
    div_global_mean: f64,
    div_global_std: f64,
    div_plus_mean: f64,
    div_plus_std: f64,
    time_mean: f64,
    time_std: f64,
}

fn csv_err(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    Error::format(line, e.to_string())
}

impl ReportTable {
    pub fn find(&self, method: &str, strategy: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.method == method && r.strategy == strategy)
    }

    /// Machine-readable form with raw (unrounded) values.
    pub fn write_csv<W: io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.rows {
            let s = &r.aggregate.stats;
            w.serialize(CsvRow {
                method: r.method.clone(),
                strategy: r.strategy.clone(),
                lambda: r.lambda,
                alpha: r.alpha,
                adaptive: r.adaptive,
                users: r.aggregate.users,
                failures: r.failures,
                rel_mean: s[0].mean,
                rel_std: s[0].std,
                prec_mean: s[1].mean,
                prec_std: s[1].std,
                div_local_mean: s[2].mean,
                div_local_std: s[2].std,
                div_global_mean: s[3].mean,
                div_global_std: s[3].std,
                div_plus_mean: s[4].mean,
                div_plus_std: s[4].std,
                time_mean: s[5].mean,
                time_std: s[5].std,
            })
            .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: io::Read>(input: R) -> Result<Self> {
        let mut rows = Vec::new();
        for rec in csv::Reader::from_reader(input).deserialize::<CsvRow>() {
            let c = rec.map_err(csv_err)?;
            let ms = |mean, std| MeanStd { mean, std };
            rows.push(ReportRow {
                method: c.method,
                strategy: c.strategy,
                lambda: c.lambda,
                alpha: c.alpha,
                adaptive: c.adaptive,
                failures: c.failures,
                aggregate: Aggregate {
                    users: c.users,
                    stats: [
                        ms(c.rel_mean, c.rel_std),
                        ms(c.prec_mean, c.prec_std),
                        ms(c.div_local_mean, c.div_local_std),
                        ms(c.div_global_mean, c.div_global_std),
                        ms(c.div_plus_mean, c.div_plus_std),
                        ms(c.time_mean, c.time_std),
                    ],
                },
            });
        }
        Ok(Self { rows })
    }

    /// Aligned text table, values rounded to two decimals.
    pub fn render_text(&self) -> String {
        let mut header = vec![
            "method".to_string(),
            "strategy".into(),
            "lambda".into(),
            "alpha".into(),
            "users".into(),
            "failures".into(),
        ];
        header.extend(METRICS.iter().map(|m| m.to_string()));
        let mut cells: Vec<Vec<String>> = vec![header];
        for r in &self.rows {
            let mut row = vec![
                r.method.clone(),
                r.strategy.clone(),
                if r.adaptive { "adaptive".into() } else { format!("{}", r.lambda) },
                format!("{}", r.alpha),
                r.aggregate.users.to_string(),
                r.failures.to_string(),
            ];
            row.extend(r.aggregate.stats.iter().enumerate().map(|(k, s)| {
                if METRICS[k] == "time" {
                    format!("{:.4} ± {:.4}", s.mean, s.std)
                } else {
                    s.render()
                }
            }));
            cells.push(row);
        }
        let widths: Vec<usize> = (0..cells[0].len())
            .map(|c| cells.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for row in &cells {
            let line: Vec<String> = row
                .iter()
                .zip(&widths)
                .map(|(v, w)| format!("{v:<w$}"))
                .collect();
            let _ = writeln!(out, "{}", line.join("  ").trim_end());
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub n_users: usize,
    pub n_items: usize,
    pub n_ratings: usize,
    /// Percentage of observed user-item pairs.
    pub sparsity: f64,
    pub gini: f64,
    pub hist_div: f64,
}

/// Gini coefficient: mean absolute pairwise difference over twice the mean.
pub fn gini(values: &[f64]) -> f64 {
    let n = values.len();
    let total: f64 = values.iter().sum();
    if n == 0 || total <= 0.0 {
        return 0.0;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let weighted: f64 = v
        .iter()
        .enumerate()
        .map(|(i, x)| (2.0 * (i + 1) as f64 - n as f64 - 1.0) * x)
        .sum();
    weighted / (n as f64 * total)
}

/// Observed pairs are the table entries; histories give `hist_div`.
pub fn dataset_diagnostics(
    ratings: &ScoreTable,
    n_users: usize,
    feat: &FeatureMap,
    histories: &[Vec<ItemId>],
) -> Result<Diagnostics> {
    if ratings.is_empty() {
        return Err(Error::invalid("ratings table is empty"));
    }
    let n_items = feat.len();
    let mut popularity = vec![0.0; n_items];
    let mut n_ratings = 0;
    for (_, item, _) in ratings.iter() {
        if item >= n_items {
            return Err(Error::invalid(format!("rating for unknown item {item}")));
        }
        popularity[item] += 1.0;
        n_ratings += 1;
    }
    let pairs = (n_users * n_items) as f64;
    let hist_div = if histories.is_empty() {
        0.0
    } else {
        let mut acc = 0.0;
        for h in histories {
            let set = RestrictSet::new(h.iter().copied());
            acc += volume(feat, set.members())?;
        }
        acc / histories.len() as f64
    };
    Ok(Diagnostics {
        n_users,
        n_items,
        n_ratings,
        sparsity: if pairs > 0.0 { 100.0 * n_ratings as f64 / pairs } else { 0.0 },
        gini: gini(&popularity),
        hist_div,
    })
}
