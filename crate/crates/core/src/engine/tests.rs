use std::collections::HashMap;

use proptest::prelude::*;
use rand::Rng;

use super::*;
use crate::kernel::matrix_power;
use crate::neighbors::{build_index, IndexStructure};

fn feat(rows: &[Vec<f64>]) -> FeatureMap {
    FeatureMap::from_rows(RowMatrix::from_rows(rows)).unwrap()
}

fn index(f: &FeatureMap) -> NeighborIndex {
    build_index(f, IndexStructure::Brute).unwrap()
}

fn random_rows(n: usize, d: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            let v: Vec<f64> = (0..d).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
            let nrm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.into_iter().map(|x| x / nrm).collect()
        })
        .collect()
}

fn dense(f: &Factor, n: usize) -> DMatrix<f64> {
    let ids: Vec<usize> = (0..n).collect();
    f.restrict(&ids).unwrap()
}

fn diag_factor(d: &[f64]) -> LFactor {
    LFactor::from_likelihood(Factor::Diagonal(d.to_vec()), vec![1.0; d.len()]).unwrap()
}

fn lowrank_factor(rows: &[Vec<f64>], q: Vec<f64>) -> LFactor {
    LFactor::from_likelihood(Factor::LowRank(RowMatrix::from_rows(rows)), q).unwrap()
}

fn build(spec: &LikelihoodSpec, f: &FeatureMap) -> LFactor {
    build_l_factor(spec, f, &index(f), 0, 0).unwrap()
}

#[test]
fn qd_decomp_half_lambda_is_qkq() {
    let f = feat(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
    let l = build(&LikelihoodSpec::new(Method::QdDecomp, vec![2.0, 1.0]), &f);
    let m = dense(&l.likelihood, 2);
    assert_eq!(m, DMatrix::from_row_slice(2, 2, &[4.0, 0.0, 0.0, 1.0]));
}

#[test]
fn b_divrec_without_history_matches_qd_decomp_exactly() {
    let mut rng = rng_for(3, &[]);
    let f = feat(&random_rows(30, 6, &mut rng));
    let q: Vec<f64> = (0..30).map(|_| rng.random::<f64>() + 0.1).collect();
    for lambda in [0.0, 0.3, 0.5, 0.8, 1.0] {
        let a = build(&LikelihoodSpec::new(Method::QdDecomp, q.clone()).with_lambda(lambda), &f);
        let b = build(
            &LikelihoodSpec::new(Method::BDivrec, q.clone()).with_lambda(lambda).with_alpha(0.7),
            &f,
        );
        assert_eq!(a.likelihood, b.likelihood);
        assert_eq!(a.diversity, b.diversity);
    }
}

#[test]
fn b_divrec_zeroes_exact_duplicates() {
    let f = feat(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0]]);
    let spec = LikelihoodSpec::new(Method::BDivrec, vec![1.0; 3]).with_history(vec![2]);
    let l = build(&spec, &f);
    assert_eq!(l.likelihood.diag(0), 0.0);
    assert_eq!(l.likelihood.diag(2), 0.0);
    assert_eq!(l.likelihood.diag(1), 1.0);
    assert_eq!(l.active_ids, vec![1]);
    assert_eq!(l.filtered, vec![0, 2]);
}

#[test]
fn filtered_rows_grow_with_alpha() {
    let mut rng = rng_for(17, &[]);
    let f = feat(&random_rows(60, 5, &mut rng));
    let idx = index(&f);
    let hist: Vec<usize> = (0..8).map(|_| rng.random_range(0..60)).collect();
    let mut prev = 0;
    for step in 0..=20 {
        let alpha = step as f64 * 0.1;
        let spec = LikelihoodSpec::new(Method::BDivrec, vec![1.0; 60])
            .with_alpha(alpha)
            .with_history(hist.clone());
        let l = build_l_factor(&spec, &f, &idx, 0, 0).unwrap();
        assert!(l.filtered.len() >= prev);
        prev = l.filtered.len();
    }
    assert_eq!(prev, 60);
}

#[test]
fn cond_dpp_projects_out_history() {
    let f = feat(&[vec![1.0, 0.0, 0.0], vec![0.6, 0.8, 0.0], vec![0.0, 0.0, 1.0]]);
    let spec = LikelihoodSpec::new(Method::CondDpp, vec![1.0; 3]).with_history(vec![0]);
    let l = build(&spec, &f);
    // f = k − k_{·0} k_{0·}
    let expect = DMatrix::from_row_slice(3, 3, &[0.0, 0.0, 0.0, 0.0, 0.64, 0.0, 0.0, 0.0, 1.0]);
    assert!((dense(&l.diversity, 3) - expect).amax() < 1e-12);
    assert!(l.likelihood.diag(0).abs() < 1e-12);
}

#[test]
fn cond_dpp_singular_history_is_reported() {
    let f = feat(&[vec![1.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]]);
    let spec = LikelihoodSpec::new(Method::CondDpp, vec![1.0; 3]).with_history(vec![0, 1]);
    let err = build_l_factor(&spec, &f, &index(&f), 0, 0).unwrap_err();
    assert!(matches!(err, Error::HistoryDegenerate(_)));
    // Repeated ids are a set, not a singular block.
    let spec = LikelihoodSpec::new(Method::CondDpp, vec![1.0; 3]).with_history(vec![0, 0]);
    assert!(build_l_factor(&spec, &f, &index(&f), 0, 0).is_ok());
}

#[test]
fn markov_dpp_conditions_on_previous_batch_only() {
    let f = feat(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
    let spec = LikelihoodSpec::new(Method::MarkovDpp, vec![1.0; 2])
        .with_history(vec![1])
        .with_previous_batch(vec![0]);
    let l = build(&spec, &f);
    assert!(l.likelihood.diag(0).abs() < 1e-12);
    assert!((l.likelihood.diag(1) - 1.0).abs() < 1e-12);
}

#[test]
fn markov_dpp_skips_collinear_batch_items() {
    let f = feat(&[vec![1.0, 0.0, 0.0], vec![0.6, 0.8, 0.0], vec![0.8, 0.6, 0.0], vec![0.0, 0.0, 1.0]]);
    let spec = LikelihoodSpec::new(Method::MarkovDpp, vec![1.0; 4]).with_previous_batch(vec![0, 1, 2]);
    let l = build(&spec, &f);
    let two = build(
        &LikelihoodSpec::new(Method::MarkovDpp, vec![1.0; 4]).with_previous_batch(vec![0, 1]),
        &f,
    );
    assert!((dense(&l.likelihood, 4) - dense(&two.likelihood, 4)).amax() < 1e-12);
    assert!((l.likelihood.diag(3) - 1.0).abs() < 1e-12);
}

#[test]
fn eps_greedy_phases() {
    let f = feat(&[vec![1.0, 0.0], vec![0.8, 0.6]]);
    let q = vec![2.0, 1.0];
    let greedy = build(&LikelihoodSpec::new(Method::EpsGreedy, q.clone()).with_epsilon(1.0), &f);
    assert_eq!(greedy.likelihood, Factor::Diagonal(vec![4.0, 1.0]));
    assert_eq!(greedy.lambda_used, 0.5);
    let explore = build(&LikelihoodSpec::new(Method::EpsGreedy, q).with_epsilon(0.0), &f);
    assert_eq!(explore.lambda_used, 0.0);
    let k = dense(&explore.likelihood, 2);
    // L = k² for λ = 0.
    let kk = DMatrix::from_row_slice(2, 2, &[1.0, 0.8, 0.8, 1.0]);
    assert!((k - &kk * &kk).amax() < 1e-12);

    let hits = (0..2000).filter(|&r| eps_greedy_phase(0.9, r, 5)).count();
    assert!((hits as f64 / 2000.0 - 0.9).abs() < 0.03);
    assert_eq!(eps_greedy_phase(0.9, 7, 5), eps_greedy_phase(0.9, 7, 5));
}

#[test]
fn quality_must_be_positive() {
    let f = feat(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
    let spec = LikelihoodSpec::new(Method::QdDecomp, vec![1.0, 0.0]);
    assert!(matches!(
        build_l_factor(&spec, &f, &index(&f), 0, 0),
        Err(Error::AssumptionViolation(_))
    ));
    let spec = LikelihoodSpec::new(Method::QdDecomp, vec![1.0, 1.0]).with_lambda(1.5);
    assert!(build_l_factor(&spec, &f, &index(&f), 0, 0).is_err());
}

#[test]
fn general_lambda_matches_dense_power() {
    let mut rng = rng_for(23, &[]);
    let rows = random_rows(7, 4, &mut rng);
    let f = feat(&rows);
    let q: Vec<f64> = (0..7).map(|_| rng.random::<f64>() + 0.2).collect();
    let k = f.rows().gram(&(0..7).collect::<Vec<_>>());
    for lambda in [0.0, 0.2, 0.5, 0.7, 0.95] {
        let l = build(&LikelihoodSpec::new(Method::QdDecomp, q.clone()).with_lambda(lambda), &f);
        let fp = matrix_power(&k, 2.0 * (1.0 - lambda), Some(7)).unwrap();
        let qd = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            7,
            q.iter().map(|x| x.powf(2.0 * lambda)),
        ));
        let oracle = &qd * fp * &qd;
        let got = dense(&l.likelihood, 7);
        assert!((got - oracle).amax() < 1e-8, "lambda {lambda}");
    }
}

#[test]
fn greedy_examples() {
    let s = greedy_map(&diag_factor(&[3.0, 2.0, 1.0]), 2).unwrap();
    assert_eq!(s.items, vec![0, 1]);
    assert!((s.log_det - 6f64.ln()).abs() < 1e-12);
    assert!(!s.rank_deficient);

    let s = greedy_map(&diag_factor(&[1.0, 1.0, 1.0]), 2).unwrap();
    assert_eq!(s.items, vec![0, 1]);

    let store = crate::data::ItemStore::in_memory(
        [vec![1.0, 0.0], vec![0.0, 1.0], vec![0.9, 0.436]]
            .into_iter()
            .map(|r| crate::kernel::Embedding::normalized(r).unwrap())
            .collect(),
    )
    .unwrap();
    let f = FeatureMap::from_rows(store.to_matrix().unwrap()).unwrap();
    let l = build(&LikelihoodSpec::new(Method::QdDecomp, vec![1.0; 3]), &f);
    let mut items = greedy_map(&l, 2).unwrap().items;
    items.sort_unstable();
    assert_eq!(items, vec![0, 1]);

    assert!(greedy_map(&diag_factor(&[1.0]), 2).is_err());
}

#[test]
fn greedy_pads_by_quality_when_rank_runs_out() {
    let l = lowrank_factor(
        &[vec![1.0, 0.0], vec![1.0, 0.0], vec![0.0, 0.0], vec![0.5, 0.0]],
        vec![0.1, 0.2, 0.9, 0.3],
    );
    let s = greedy_map(&l, 3).unwrap();
    assert!(s.rank_deficient);
    assert_eq!(s.items, vec![0, 2, 3]);
    assert_eq!(s.log_det, f64::NEG_INFINITY);
}

fn brute_best(l: &DMatrix<f64>, b: usize) -> f64 {
    let n = l.nrows();
    let mut best = f64::NEG_INFINITY;
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize != b {
            continue;
        }
        let ids: Vec<usize> = (0..n).filter(|i| mask >> i & 1 == 1).collect();
        let sub = DMatrix::from_fn(b, b, |x, y| l[(ids[x], ids[y])]);
        best = best.max(sub.determinant().ln());
    }
    best
}

#[test]
fn greedy_is_near_optimal() {
    let mut exact = 0;
    let trials = 60;
    for t in 0..trials {
        let mut rng = rng_for(100, &[t]);
        let n = rng.random_range(4..=10);
        let b = rng.random_range(1..=4.min(n));
        // Random rotation of eigenvalues drawn in [1.1, 10].
        let z = DMatrix::from_fn(n, n, |_, _| rng.random::<f64>() - 0.5);
        let rot = z.qr().q();
        let eig = nalgebra::DVector::from_fn(n, |_, _| 1.1 + 8.9 * rng.random::<f64>());
        let l = &rot * DMatrix::from_diagonal(&eig) * rot.transpose();
        let l = (&l + l.transpose()) * 0.5;
        let ch = l.clone().cholesky().unwrap().l();
        let f = RowMatrix::from_dmatrix(&ch);
        let sel = greedy_map(&LFactor::from_likelihood(Factor::LowRank(f), vec![1.0; n]).unwrap(), b).unwrap();
        let opt = brute_best(&l, b);
        assert!(sel.log_det >= 0.25 * opt - 1e-9);
        if (sel.log_det - opt).abs() < 1e-9 {
            exact += 1;
        }
    }
    assert!(exact * 10 >= trials * 9, "{exact}/{trials}");
}

fn frequencies(l: &LFactor, b: usize, draws: u64) -> HashMap<Vec<usize>, f64> {
    let mut counts = HashMap::new();
    for s in 0..draws {
        *counts.entry(sample_kdpp(l, b, s).unwrap()).or_insert(0.0) += 1.0;
    }
    counts.values_mut().for_each(|v| *v /= draws as f64);
    counts
}

#[test]
fn sampler_singletons_follow_diagonal() {
    let freq = frequencies(&diag_factor(&[1.0, 2.0, 3.0]), 1, 30_000);
    for (i, p) in [1.0 / 6.0, 1.0 / 3.0, 0.5].into_iter().enumerate() {
        let got = freq.get(&vec![i]).copied().unwrap_or(0.0);
        assert!((got - p).abs() < 0.015, "item {i}: {got}");
    }
}

#[test]
fn sampler_full_set() {
    let l = lowrank_factor(&[vec![1.0, 0.0], vec![0.0, 1.0]], vec![1.0; 2]);
    for s in 0..20 {
        assert_eq!(sample_kdpp(&l, 2, s).unwrap(), vec![0, 1]);
    }
    assert!(matches!(sample_kdpp(&l, 3, 0), Err(Error::InvalidInput(_))));
    let thin = lowrank_factor(&[vec![1.0], vec![1.0], vec![1.0]], vec![1.0; 3]);
    assert!(matches!(sample_kdpp(&thin, 2, 0), Err(Error::RankDeficient { rank: 1, batch: 2 })));
}

#[test]
fn sampler_orthogonal_quality_pairs() {
    let mut eye = vec![vec![0.0; 4]; 4];
    (0..4).for_each(|i| eye[i][i] = 1.0);
    let f = feat(&eye);
    let q = vec![2.0, 1.0, 1.0, 1.0];
    let l = build(&LikelihoodSpec::new(Method::QdDecomp, q.clone()), &f);
    let freq = frequencies(&l, 2, 30_000);
    let mut weights = HashMap::new();
    for a in 0..4 {
        for b in a + 1..4 {
            weights.insert(vec![a, b], q[a] * q[a] * q[b] * q[b]);
        }
    }
    let z: f64 = weights.values().sum();
    let tv: f64 = weights
        .iter()
        .map(|(k, w)| (freq.get(k).copied().unwrap_or(0.0) - w / z).abs())
        .sum::<f64>()
        / 2.0;
    assert!(tv < 0.02, "tv {tv}");
}

#[test]
fn sampler_is_deterministic() {
    let mut rng = rng_for(8, &[]);
    let l = lowrank_factor(&random_rows(20, 5, &mut rng), vec![1.0; 20]);
    assert_eq!(sample_kdpp(&l, 3, 77).unwrap(), sample_kdpp(&l, 3, 77).unwrap());
}

#[test]
fn score_examples() {
    let l = diag_factor(&[1.0, 1.0, 1.0]);
    assert_eq!(set_score(&l, &[], 0.3, &[]).unwrap(), 0.0);
    assert_eq!(set_score(&l, &[0, 1, 2], 0.3, &[1.0, 1.0, 1.0]).unwrap(), 0.0);
    let e = std::f64::consts::E;
    assert!((set_score(&l, &[0, 1], 1.0, &[e, e]).unwrap() - 8.0).abs() < 1e-12);
    assert!(matches!(set_score(&l, &[0], 0.5, &[0.0]), Err(Error::AssumptionViolation(_))));
    let dup = lowrank_factor(&[vec![1.0, 0.0], vec![1.0, 0.0]], vec![1.0; 2]);
    assert_eq!(set_score(&dup, &[0, 1], 0.5, &[1.0, 1.0]).unwrap(), f64::NEG_INFINITY);
    assert_eq!(set_score(&dup, &[0, 1], 1.0, &[1.0, 1.0]).unwrap(), 0.0);
}

fn top_by_quality(q: &[f64], b: usize) -> Vec<usize> {
    let mut ids: Vec<usize> = (0..q.len()).collect();
    ids.sort_by(|&a, &c| q[c].total_cmp(&q[a]).then(a.cmp(&c)));
    ids.truncate(b);
    ids.sort_unstable();
    ids
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn lambda_one_returns_top_quality(seed in any::<u64>(), n in 3usize..50, hist in 0usize..6) {
        let mut rng = rng_for(seed, &[]);
        let f = feat(&random_rows(n, 6, &mut rng));
        let q: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 0.01).collect();
        let h: Vec<usize> = (0..hist.min(n - 1)).map(|_| rng.random_range(0..n)).collect();
        let b = rng.random_range(1..=3.min(n));
        for method in Method::ALL {
            let spec = LikelihoodSpec::new(method, q.clone())
                .with_lambda(1.0)
                .with_epsilon(1.0)
                .with_history(h.clone())
                .with_previous_batch(h.iter().copied().take(1).collect());
            let l = build_l_factor(&spec, &f, &index(&f), 0, seed).unwrap();
            let mut got = greedy_map(&l, b).unwrap().items;
            got.sort_unstable();
            prop_assert_eq!(got, top_by_quality(&q, b));
        }
    }

    #[test]
    fn lambda_zero_ignores_quality(seed in any::<u64>(), n in 3usize..40) {
        let mut rng = rng_for(seed, &[]);
        let f = feat(&random_rows(n, 6, &mut rng));
        let q1: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 0.01).collect();
        let q2: Vec<f64> = q1.iter().map(|x| x * (rng.random::<f64>() * 10.0 + 0.1)).collect();
        let b = rng.random_range(1..=3.min(n));
        for method in [Method::QdDecomp, Method::CondDpp, Method::BDivrec, Method::MarkovDpp] {
            let a = build(&LikelihoodSpec::new(method, q1.clone()).with_lambda(0.0), &f);
            let c = build(&LikelihoodSpec::new(method, q2.clone()).with_lambda(0.0), &f);
            prop_assert_eq!(greedy_map(&a, b).unwrap().items, greedy_map(&c, b).unwrap().items);
        }
    }

    #[test]
    fn likelihood_is_psd(seed in any::<u64>(), n in 2usize..20, lambda in 0.0f64..1.0) {
        let mut rng = rng_for(seed, &[]);
        let f = feat(&random_rows(n, 4, &mut rng));
        let q: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 0.05).collect();
        let h = vec![rng.random_range(0..n)];
        for method in Method::ALL {
            let spec = LikelihoodSpec::new(method, q.clone()).with_lambda(lambda).with_history(h.clone()).with_alpha(0.5);
            let l = build_l_factor(&spec, &f, &index(&f), 1, seed).unwrap();
            let m = dense(&l.likelihood, n);
            prop_assert!((&m - m.transpose()).amax() < 1e-9);
            let scale = m.amax().max(1.0);
            prop_assert!(m.symmetric_eigenvalues().min() >= -1e-8 * scale);
        }
    }
}
