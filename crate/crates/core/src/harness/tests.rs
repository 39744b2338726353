use std::sync::Arc;

use super::*;
use crate::engine::{Method, Strategy};
use crate::feedback::{FeedbackModel, NoiseKind};
use crate::kernel::KernelSpec;
use crate::neighbors::IndexStructure;
use crate::Error;

fn small() -> Dataset {
    Dataset::synthetic(60, 6, 3, 4, 5).unwrap()
}

fn prep(ds: &Dataset, seed: u64) -> Prepared {
    Prepared::fit(&ds.items, &KernelSpec::linear(), 100, IndexStructure::Brute, seed).unwrap()
}

fn cfg(method: Recommender) -> RunConfig {
    RunConfig {
        method,
        seeds: 2,
        ..RunConfig::default()
    }
}

#[test]
fn round_count_follows_history_prefixes() {
    let mut ds = small();
    ds.histories[0] = vec![];
    ds.histories[1] = vec![4, 9, 13];
    let p = prep(&ds, 1);
    let c = cfg(Recommender::Dqd(Method::BDivrec));
    let rec = run_trajectory(&c, &ds, &p, 0, 1).unwrap();
    assert_eq!(rec.rounds.len(), 1);
    assert_eq!(rec.rounds[0].history_len, 0);
    let rec = run_trajectory(&c, &ds, &p, 1, 1).unwrap();
    assert_eq!(rec.rounds.iter().map(|r| r.history_len).collect::<Vec<_>>(), vec![0, 1, 2, 3]);
    assert!(rec.lambdas().iter().all(|&l| l == 0.5));
    assert_eq!(rec.summary.rounds, 4);
}

#[test]
fn history_is_the_ground_truth_prefix() {
    let ds = small();
    let p = prep(&ds, 2);
    // With α = 0 each history item is zeroed, so it can never be recommended
    // while it is part of the prefix.
    let c = RunConfig {
        alpha: Some(0.0),
        ..cfg(Recommender::Dqd(Method::BDivrec))
    };
    let rec = run_trajectory(&c, &ds, &p, 2, 2).unwrap();
    for r in &rec.rounds {
        let prefix = &ds.histories[2][..r.history_len];
        if !r.rank_deficient {
            assert!(r.batch.iter().all(|i| !prefix.contains(i)));
        }
    }
}

#[test]
fn every_recommender_runs() {
    let ds = small();
    let p = prep(&ds, 3);
    let mut recs = vec![Recommender::Mmr, Recommender::Xquad];
    recs.extend(Method::ALL.map(Recommender::Dqd));
    for m in recs {
        for strategy in [Strategy::Maximization, Strategy::Sampling] {
            let c = RunConfig {
                strategy,
                noise: NoiseKind::Bernoulli12,
                ..cfg(m)
            };
            if c.validate().is_err() {
                assert!(!matches!(m, Recommender::Dqd(_)));
                continue;
            }
            let rec = match run_trajectory(&c, &ds, &p, 1, 3) {
                // Synthetic histories hold shifted copies of one base row.
                Err(Error::HistoryDegenerate(_)) if m == Recommender::Dqd(Method::CondDpp) => continue,
                r => r.unwrap(),
            };
            for r in &rec.rounds {
                assert_eq!(r.batch.len(), 3);
                assert!(r.feedback.iter().all(|&y| y == 1.0 || y == 2.0));
                assert!((0.0..=1.0).contains(&r.metrics.prec));
            }
        }
    }
}

#[test]
fn adaptive_runs_keep_a_ledger() {
    let ds = small();
    let p = prep(&ds, 4);
    let c = RunConfig {
        adaptive: true,
        noise: NoiseKind::Bernoulli12,
        ..cfg(Recommender::Dqd(Method::QdDecomp))
    };
    let rec = run_trajectory(&c, &ds, &p, 3, 4).unwrap();
    let ledger = rec.ledger.as_ref().unwrap();
    assert_eq!(ledger.len() + ledger.skipped(), rec.rounds.len());
    assert_eq!(rec.rounds[0].lambda, 0.5);
    assert!(rec.lambdas().iter().all(|l| (0.0..=1.0).contains(l)));
}

#[test]
fn trajectories_are_deterministic() {
    let ds = small();
    let p = prep(&ds, 5);
    let c = RunConfig {
        strategy: Strategy::Sampling,
        noise: NoiseKind::Bernoulli12,
        ..cfg(Recommender::Dqd(Method::EpsGreedy))
    };
    let a = run_trajectory(&c, &ds, &p, 0, 5).unwrap();
    let b = run_trajectory(&c, &ds, &p, 0, 5).unwrap();
    assert_eq!(a.rounds.iter().map(|r| &r.batch).collect::<Vec<_>>(), b.rounds.iter().map(|r| &r.batch).collect::<Vec<_>>());
    assert_eq!(a.summary.div_plus, b.summary.div_plus);
}

#[test]
fn round_log_is_json_lines() {
    let ds = small();
    let p = prep(&ds, 6);
    let rec = run_trajectory(&cfg(Recommender::Mmr), &ds, &p, 0, 6).unwrap();
    let mut buf = Vec::new();
    rec.write_round_log(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().count(), rec.rounds.len());
    for line in text.lines() {
        let back: RoundRecord = serde_json::from_str(line).unwrap();
        assert!(back.batch.len() == 3);
    }
}

#[test]
fn benchmark_shapes_and_determinism() {
    let ds = small();
    let one = RunConfig {
        seeds: 1,
        ..cfg(Recommender::Dqd(Method::BDivrec))
    };
    let opts = BenchOptions {
        record_time: false,
        ..BenchOptions::default()
    };
    let r = run_benchmark(std::slice::from_ref(&one), &ds, Some(&[0]), opts).unwrap();
    assert_eq!(r.table.rows.len(), 1);
    assert_eq!(r.table.rows[0].aggregate.users, 1);

    let configs = vec![cfg(Recommender::Dqd(Method::QdDecomp)), cfg(Recommender::Mmr)];
    let a = run_benchmark(&configs, &ds, None, opts).unwrap();
    let b = run_benchmark(&configs, &ds, None, BenchOptions { single_thread: true, ..opts }).unwrap();
    let csv = |t: &crate::metrics::ReportTable| {
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        buf
    };
    assert_eq!(csv(&a.table), csv(&b.table));
    let permuted = run_benchmark(&configs, &ds, Some(&[3, 1, 2, 0]), opts).unwrap();
    for (x, y) in a.table.rows.iter().zip(&permuted.table.rows) {
        for k in 0..6 {
            assert!((x.aggregate.stats[k].mean - y.aggregate.stats[k].mean).abs() < 1e-12);
            assert!((x.aggregate.stats[k].std - y.aggregate.stats[k].std).abs() < 1e-12);
        }
    }
}

#[test]
fn benchmark_records_failures_and_continues() {
    let ds = small();
    let c = cfg(Recommender::Dqd(Method::QdDecomp));
    let r = run_benchmark(std::slice::from_ref(&c), &ds, Some(&[0, 99]), BenchOptions::default()).unwrap();
    assert_eq!(r.table.rows[0].failures, 2);
    assert_eq!(r.table.rows[0].aggregate.users, 1);
}

#[test]
fn config_mismatch_is_rejected() {
    let ds = small();
    let p = prep(&ds, 7);
    let c = RunConfig {
        alpha: Some(0.5),
        ..cfg(Recommender::Mmr)
    };
    assert!(matches!(run_trajectory(&c, &ds, &p, 0, 0), Err(Error::Config(_))));
    assert!(run_benchmark(&[c], &ds, None, BenchOptions::default()).is_err());
}

#[test]
fn grid_oracle_picks_best_total() {
    let ds = small();
    let p = prep(&ds, 8);
    let c = RunConfig {
        noise: NoiseKind::Bernoulli12,
        ..cfg(Recommender::Dqd(Method::BDivrec))
    };
    let grid = [0.0, 0.25, 0.5, 0.75, 1.0];
    let (best, totals) = grid_oracle(&c, &ds, &p, 0, 8, &grid).unwrap();
    let top = totals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(totals[grid.iter().position(|&g| g == best).unwrap()], top);
    assert!(grid_oracle(&cfg(Recommender::Mmr), &ds, &p, 0, 8, &grid).is_err());
}

#[test]
fn precomputed_feedback_replays() {
    let ds = small();
    let mut table = crate::data::ScoreTable::new();
    for u in 0..4 {
        for i in 0..60 {
            table.insert(u, i, 1.0 + ((u + i) % 5) as f64).unwrap();
        }
    }
    let pre = Dataset::new(Arc::clone(&ds.items), FeedbackModel::Precomputed(table), ds.histories.clone()).unwrap();
    let p = prep(&pre, 9);
    let c = RunConfig {
        threshold: 2.5,
        noise: NoiseKind::Rating,
        ..cfg(Recommender::Dqd(Method::MarkovDpp))
    };
    let rec = run_trajectory(&c, &pre, &p, 1, 9).unwrap();
    assert!(rec.rounds.iter().all(|r| r.feedback.iter().all(|&y| (1.0..=6.0).contains(&y))));
}
