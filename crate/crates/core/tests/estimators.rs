use std::sync::Arc;

use cardbench_core::catalog::{Catalog, Column, ColumnKind, ColumnRef, JoinEdge, KeyRole, TableData};
use cardbench_core::estimators::{build, CardinalityEstimator, Estimator, EstimatorConfig, Method, ModelState};
use cardbench_core::oracle::execute_count;
use cardbench_core::queryir::{enumerate_subplans, Predicate, Query, Region};
use cardbench_testkit::{max_weight_trees, mutual_information, random_attributes, random_instance, InstanceSpec};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn two_tables(a_rows: usize, b_rows: usize, keys: usize) -> Arc<Catalog> {
    let a = TableData::new(
        "a",
        vec![
            Column::from_values(
                "k",
                ColumnKind::Categorical,
                (0..a_rows).map(|i| (i % keys) as f64).collect(),
            ),
            Column::from_values(
                "x",
                ColumnKind::Continuous,
                (0..a_rows).map(|i| (i % 100 + 1) as f64).collect(),
            ),
        ],
    )
    .unwrap();
    let b = TableData::new(
        "b",
        vec![Column::from_values(
            "k",
            ColumnKind::Categorical,
            (0..b_rows).map(|i| (i % keys) as f64).collect(),
        )],
    )
    .unwrap();
    let e = JoinEdge::new(ColumnRef::new("a", "k"), ColumnRef::new("b", "k"), KeyRole::FkFk);
    Arc::new(Catalog::new(vec![a, b], vec![e]).unwrap())
}

fn join_query(cat: &Catalog, preds: Vec<Predicate>) -> Query {
    Query::new("q", vec!["a".into(), "b".into()], cat.join_graph().edges.clone(), preds).unwrap()
}

#[test]
fn no_predicate_single_table_is_exact_for_every_method() {
    let cat = two_tables(137, 50, 10);
    let q = join_query(&cat, vec![]);
    let sp = q.subplan(&cardbench_core::SubPlanKey::parse("a"));
    for m in Method::ESTIMATORS.into_iter().chain([Method::TrueCard]) {
        let est = build(m, cat.clone(), &EstimatorConfig::default()).unwrap();
        assert_eq!(est.estimate(&sp, 3).unwrap(), 137.0, "{m}");
    }
}

#[test]
fn histogram_join_uniformity() {
    let cat = two_tables(100, 50, 10);
    let q = join_query(&cat, vec![]);
    let est = build(Method::IndepHist, cat.clone(), &EstimatorConfig::default()).unwrap();
    assert_eq!(est.estimate(&q.as_subplan(), 0).unwrap(), 500.0);
    assert_eq!(execute_count(&q.as_subplan(), &cat).unwrap(), 500);
}

#[test]
fn histogram_range_within_one_bucket() {
    let cat = two_tables(1000, 1, 1);
    let pred = Predicate {
        table: "a".into(),
        column: "x".into(),
        region: Region::closed(f64::NEG_INFINITY, 50.0),
    };
    let q = join_query(&cat, vec![pred]);
    let sp = q.subplan(&cardbench_core::SubPlanKey::parse("a"));
    let truth = execute_count(&sp, &cat).unwrap() as f64;
    assert_eq!(truth, 500.0);
    let cfg = EstimatorConfig {
        histogram_buckets: 10,
        ..Default::default()
    };
    let est = build(Method::IndepHist, cat.clone(), &cfg).unwrap();
    let e = est.estimate(&sp, 0).unwrap();
    assert!((e - truth).abs() <= 100.0, "{e}");
}

#[test]
fn pk_pk_bound_is_min_of_sides() {
    let a = TableData::new(
        "a",
        vec![Column::from_values(
            "k",
            ColumnKind::Categorical,
            (0..30).map(f64::from).collect(),
        )],
    )
    .unwrap();
    let b = TableData::new(
        "b",
        vec![Column::from_values(
            "k",
            ColumnKind::Categorical,
            (0..70).map(f64::from).collect(),
        )],
    )
    .unwrap();
    let e = JoinEdge::new(ColumnRef::new("a", "k"), ColumnRef::new("b", "k"), KeyRole::PkFk);
    let cat = Arc::new(Catalog::new(vec![a, b], vec![e]).unwrap());
    let q = join_query(&cat, vec![]);
    let est = build(Method::PessBound, cat.clone(), &EstimatorConfig::default()).unwrap();
    assert_eq!(est.estimate(&q.as_subplan(), 0).unwrap(), 30.0);
    assert_eq!(execute_count(&q.as_subplan(), &cat).unwrap(), 30);
}

#[test]
fn wander_join_without_matches_is_zero() {
    let a = TableData::new(
        "a",
        vec![Column::from_values("k", ColumnKind::Categorical, vec![1.0, 2.0])],
    )
    .unwrap();
    let b = TableData::new(
        "b",
        vec![Column::from_values("k", ColumnKind::Categorical, vec![3.0, 4.0])],
    )
    .unwrap();
    let e = JoinEdge::new(ColumnRef::new("a", "k"), ColumnRef::new("b", "k"), KeyRole::FkFk);
    let cat = Arc::new(Catalog::new(vec![a, b], vec![e]).unwrap());
    let q = join_query(&cat, vec![]);
    let est = build(Method::WjSample, cat.clone(), &EstimatorConfig::default()).unwrap();
    assert_eq!(est.estimate(&q.as_subplan(), 9).unwrap(), 0.0);
}

#[test]
fn chow_liu_independent_columns_multiply() {
    let n = 4000;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x: Vec<f64> = (0..n).map(|_| rng.gen_range(0..8) as f64).collect();
    let y: Vec<f64> = (0..n).map(|_| rng.gen_range(0..5) as f64).collect();
    let t = TableData::new(
        "t",
        vec![
            Column::from_values("x", ColumnKind::Categorical, x),
            Column::from_values("y", ColumnKind::Categorical, y),
        ],
    )
    .unwrap();
    let cat = Arc::new(Catalog::new(vec![t], vec![]).unwrap());
    let preds = vec![
        Predicate {
            table: "t".into(),
            column: "x".into(),
            region: Region::closed(0.0, 3.0),
        },
        Predicate {
            table: "t".into(),
            column: "y".into(),
            region: Region::point(2.0),
        },
    ];
    let q = Query::new("q", vec!["t".into()], vec![], preds.clone()).unwrap();
    let sel = |p: &Predicate| {
        let one = Query::new("s", vec!["t".into()], vec![], vec![p.clone()]).unwrap();
        execute_count(&one.as_subplan(), &cat).unwrap() as f64 / n as f64
    };
    let expected = n as f64 * sel(&preds[0]) * sel(&preds[1]);
    let est = build(Method::ChowLiu, cat.clone(), &EstimatorConfig::default()).unwrap();
    let got = est.estimate(&q.as_subplan(), 0).unwrap();
    // The learned tree links x and y, so the estimate equals the empirical
    // joint; independence holds up to sampling noise.
    let truth = execute_count(&q.as_subplan(), &cat).unwrap() as f64;
    assert!((got - truth).abs() < 1e-6 * truth, "{got} vs {truth}");
    assert!((got - expected).abs() < 0.15 * expected, "{got} vs {expected}");
}

#[test]
fn model_bytes_round_trip() {
    let cat = two_tables(300, 80, 12);
    let q = join_query(&cat, vec![]);
    for m in Method::ESTIMATORS {
        let est = build(m, cat.clone(), &EstimatorConfig::default()).unwrap();
        let bytes = est.to_bytes();
        assert_eq!(bytes.len() as u64, est.build_stats().model_bytes);
        let back = Estimator::from_bytes(&bytes, cat.clone()).unwrap();
        assert_eq!(
            back.estimate(&q.as_subplan(), 4).unwrap(),
            est.estimate(&q.as_subplan(), 4).unwrap()
        );
    }
    assert!(Estimator::from_bytes(b"nonsense", cat).is_err());
}

#[test]
fn uni_sample_handle_is_small() {
    let cat = two_tables(300, 80, 12);
    let est = build(Method::UniSample, cat, &EstimatorConfig::default()).unwrap();
    assert!(est.build_stats().model_bytes < 64);
}

fn spec() -> InstanceSpec {
    InstanceSpec {
        max_rows: 120,
        ..Default::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn pess_bound_dominates_truth(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (cat, q) = random_instance(&mut rng, &spec());
        let cat = Arc::new(cat);
        let est = build(Method::PessBound, cat.clone(), &EstimatorConfig::default()).unwrap();
        for sp in enumerate_subplans(&q, &cat).entries {
            let truth = execute_count(&sp, &cat).unwrap() as f64;
            prop_assert!(est.estimate(&sp, 0).unwrap() >= truth, "{}", sp.key);
        }
    }

    #[test]
    fn estimates_are_finite_and_deterministic(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (cat, q) = random_instance(&mut rng, &spec());
        let cat = Arc::new(cat);
        let cfg = EstimatorConfig { sample_size: 50, walks: 200, ..Default::default() };
        for m in Method::ESTIMATORS {
            let est = build(m, cat.clone(), &cfg).unwrap();
            for sp in enumerate_subplans(&q, &cat).entries {
                let a = est.estimate(&sp, seed).unwrap();
                prop_assert!(a.is_finite() && a >= 0.0);
                prop_assert_eq!(a, est.estimate(&sp, seed).unwrap());
            }
        }
    }

    #[test]
    fn chow_liu_tree_is_a_max_mi_tree(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cols = random_attributes(&mut rng);
        let t = TableData::new("t", cols.clone()).unwrap();
        let cat = Arc::new(Catalog::new(vec![t], vec![]).unwrap());
        let est = build(Method::ChowLiu, cat, &EstimatorConfig::default()).unwrap();
        let ModelState::ChowLiu(m) = est.state() else { unreachable!() };
        let net = &m.tables["t"];
        let data: Vec<Vec<Option<f64>>> = cols.iter().map(|c| (0..c.len()).map(|r| c.get(r)).collect()).collect();
        let w = |i: usize, j: usize| mutual_information(&data[i], &data[j]);
        let (best, trees) = max_weight_trees(cols.len(), &w, 1e-9);
        let mut learned: Vec<(usize, usize)> = net.edges().into_iter().map(|(a, b)| (a.min(b), a.max(b))).collect();
        learned.sort_unstable();
        let total: f64 = learned.iter().map(|&(i, j)| w(i, j)).sum();
        prop_assert!((total - best).abs() < 1e-9);
        prop_assert!(trees.contains(&learned));
        for cpt in &net.cpt {
            for row in cpt {
                prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
        }
    }
}
