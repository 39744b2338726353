use std::collections::HashMap;
use std::sync::Arc;

use rayon::prelude::*;

use super::{run_trajectory, Dataset, Prepared, RunConfig};
use crate::metrics::{aggregate, Aggregate, ReportRow, ReportTable, TrajectorySummary};
use crate::util::derive_seed;
use crate::{Error, Result, UserId};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BenchOptions {
    /// Run every cell on one thread, for stable timings.
    pub single_thread: bool,
    /// Keep wall-clock timings; when off, times are reported as zero so the
    /// output is a pure function of its inputs.
    pub record_time: bool,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self {
            single_thread: false,
            record_time: true,
        }
    }
}

/// A trajectory that could not be completed.
#[derive(Debug, Clone, PartialEq)]
pub struct CellFailure {
    pub config: usize,
    pub user: UserId,
    pub seed: u64,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct BenchResult {
    pub table: ReportTable,
    /// Successful summaries per configuration, in cell order.
    pub summaries: Vec<Vec<TrajectorySummary>>,
    pub failures: Vec<CellFailure>,
}

/// The `k`-th replay seed of a configuration.
pub fn replay_seed(base: u64, k: usize) -> u64 {
    derive_seed(base, &[k as u64])
}

fn users_for(cfg: &RunConfig, dataset: &Dataset, users: Option<&[UserId]>) -> Vec<UserId> {
    match (users, &cfg.users) {
        (Some(u), _) => u.to_vec(),
        (None, Some(u)) => u.clone(),
        (None, None) => (0..dataset.n_users()).collect(),
    }
}

type PrepKey = (String, u64);

fn prep_key(cfg: &RunConfig, seed: u64) -> PrepKey {
    (format!("{:?}/{}/{:?}", cfg.kernel, cfg.rank, cfg.index), seed)
}

/// Runs every (configuration × user × seed) cell and aggregates per
/// configuration. Failed cells are reported and left out of the aggregate.
pub fn run_benchmark(
    configs: &[RunConfig],
    dataset: &Dataset,
    users: Option<&[UserId]>,
    opts: BenchOptions,
) -> Result<BenchResult> {
    if configs.is_empty() {
        return Err(Error::Config("no configuration to benchmark".into()));
    }
    for cfg in configs {
        cfg.validate()?;
    }
    let work = || run_cells(configs, dataset, users, opts);
    if opts.single_thread {
        rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .map_err(|e| Error::Config(e.to_string()))?
            .install(work)
    } else {
        work()
    }
}

fn run_cells(
    configs: &[RunConfig],
    dataset: &Dataset,
    users: Option<&[UserId]>,
    opts: BenchOptions,
) -> Result<BenchResult> {
    let mut cells = Vec::new();
    let mut prep_jobs: Vec<(PrepKey, usize)> = Vec::new();
    for (c, cfg) in configs.iter().enumerate() {
        for k in 0..cfg.seeds {
            let seed = replay_seed(cfg.seed, k);
            let key = prep_key(cfg, seed);
            if !prep_jobs.iter().any(|(existing, _)| *existing == key) {
                prep_jobs.push((key, c));
            }
            for &u in &users_for(cfg, dataset, users) {
                cells.push((c, u, seed));
            }
        }
    }
    let fitted: Vec<(PrepKey, Result<Arc<Prepared>>)> = prep_jobs
        .into_par_iter()
        .map(|(key, c)| {
            let cfg = &configs[c];
            let p = Prepared::fit(&dataset.items, &cfg.kernel, cfg.rank, cfg.index, key.1).map(Arc::new);
            (key, p)
        })
        .collect();
    let mut prepared: HashMap<PrepKey, Arc<Prepared>> = HashMap::new();
    for (key, p) in fitted {
        prepared.insert(key, p?);
    }

    let outcomes: Vec<Result<TrajectorySummary>> = cells
        .par_iter()
        .map(|&(c, u, seed)| {
            let cfg = &configs[c];
            let prep = &prepared[&prep_key(cfg, seed)];
            let mut s = run_trajectory(cfg, dataset, prep, u, seed)?.summary;
            if !opts.record_time {
                s.runtime_seconds = 0.0;
            }
            Ok(s)
        })
        .collect();

    let mut summaries = vec![Vec::new(); configs.len()];
    let mut failures = Vec::new();
    for (&(c, user, seed), out) in cells.iter().zip(outcomes) {
        match out {
            Ok(s) => summaries[c].push(s),
            Err(e) => {
                log::warn!("{} user {user} seed {seed}: {e}", configs[c].method);
                failures.push(CellFailure {
                    config: c,
                    user,
                    seed,
                    message: e.to_string(),
                });
            }
        }
    }
    let rows = configs
        .iter()
        .enumerate()
        .map(|(c, cfg)| {
            let agg = if summaries[c].is_empty() {
                Aggregate::default()
            } else {
                aggregate(&summaries[c])?
            };
            Ok(ReportRow {
                method: cfg.method.name().to_string(),
                strategy: cfg.strategy.name().to_string(),
                lambda: cfg.lambda,
                alpha: cfg.alpha(),
                adaptive: cfg.adaptive,
                failures: failures.iter().filter(|f| f.config == c).count(),
                aggregate: agg,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BenchResult {
        table: ReportTable { rows },
        summaries,
        failures,
    })
}
