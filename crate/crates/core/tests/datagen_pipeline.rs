mod common;

use std::collections::BTreeSet;

use common::*;
use mpe_core::datagen::{
    collect_dataset, generate_query, label_neighbors, query_count, read_dataset, solve_mpe_anytime, DatagenConfig,
    DatasetWriter, QueryRatio, SolverBudget, TrainingRecord,
};
use mpe_core::gibbs::GibbsConfig;
use mpe_core::search::enumerate_neighbors;
use mpe_core::{Assignment, GraphicalModel, QuerySpec};

fn test_cfg(n: usize, stl: usize, seed: u64) -> DatagenConfig {
    DatagenConfig {
        qr: QueryRatio::Range(0.6, 0.9),
        budget: SolverBudget::Steps(300),
        stl,
        n,
        seed,
        workers: Some(2),
        gibbs: GibbsConfig {
            burn_in: 20,
            thin: 2,
            seed: 0,
        },
    }
}

fn collect(model: &GraphicalModel, cfg: &DatagenConfig) -> Vec<TrainingRecord> {
    let mut out = Vec::new();
    collect_dataset(model, cfg, |r| {
        out.push(r.clone());
        Ok(())
    })
    .unwrap();
    out
}

#[test]
fn query_sizes_follow_the_floor() {
    let mut rng = rng(1);
    let model = random_model(&mut rng, 37, 3, 20, 0.0);
    for (i, qr) in [0.1, 0.5, 0.8, 0.9, 0.95].into_iter().enumerate() {
        let (q, x) = generate_query(&model, qr, i as u64).unwrap();
        assert_eq!(q.query_vars().len(), (qr * 37.0f64).floor() as usize);
        assert_eq!(q.query_vars().len() + q.evidence().len(), 37);
        assert!(q.is_consistent(&x));
        assert_eq!(generate_query(&model, qr, i as u64).unwrap().0, q);
    }
    assert_eq!(query_count(0.9, 1156), 1040);
    assert!(generate_query(&model, 1.0, 0).is_err());
}

#[test]
fn anytime_solver_finds_enumerated_optimum() {
    let mut rng = rng(2);
    for t in 0..10 {
        let model = random_model(&mut rng, 14, 2, 16, 0.0);
        let x = random_assignment(&mut rng, &model);
        let q = random_query(&mut rng, &model, &x, 0.8);
        assert!(q.query_vars().len() <= 14);
        let (opt, _) = enumerate_optimum(&model, &q);
        let best = solve_mpe_anytime(&model, &q, SolverBudget::Steps(3000), t).unwrap();
        assert!(q.is_consistent(&best));
        assert!((model.log_potential_sum(&best) - opt).abs() < 1e-9, "instance {t}");
    }
}

#[test]
fn anytime_solver_honors_wall_clock() {
    let mut rng = rng(3);
    let model = random_model(&mut rng, 40, 3, 40, 0.0);
    let q = QuerySpec::all_query(&model);
    let t0 = std::time::Instant::now();
    let best = solve_mpe_anytime(&model, &q, SolverBudget::Seconds(0.2), 5).unwrap();
    let secs = t0.elapsed().as_secs_f64();
    assert!((0.2..2.0).contains(&secs), "{secs}");
    let start = mpe_core::rng::random_assignment(&model, &q, &mut mpe_core::rng::rng_from_seed(5));
    assert!(model.log_potential_sum(&best) >= model.log_potential_sum(&start));
}

#[test]
fn labels_match_distance_recount_on_multivalued_domains() {
    let mut rng = rng(4);
    for _ in 0..30 {
        let model = random_model(&mut rng, 10, 4, 4, 0.0);
        let x = random_assignment(&mut rng, &model);
        let q = random_query(&mut rng, &model, &x, 0.7);
        let r = mpe_core::rng::random_assignment(&model, &q, &mut rng);
        let d = brute_hamming(x.values(), r.values(), &q);
        let labels = label_neighbors(&model, &x, &r, &q).unwrap();
        for (m, l) in labels {
            assert_eq!(l, brute_hamming(x.with_move(m).values(), r.values(), &q) < d);
        }
    }
}

#[test]
fn binary_mismatches_give_one_positive_each() {
    let mut rng = rng(5);
    let model = random_model(&mut rng, 16, 2, 0, 0.0);
    let q = QuerySpec::all_query(&model);
    let x = random_assignment(&mut rng, &model);
    let r = random_assignment(&mut rng, &model);
    let pos = label_neighbors(&model, &x, &r, &q)
        .unwrap()
        .iter()
        .filter(|(_, l)| *l)
        .count();
    assert_eq!(pos, brute_hamming(x.values(), r.values(), &q));
}

#[test]
fn record_accounting_and_contract() {
    let mut rng = rng(6);
    let model = random_model(&mut rng, 20, 3, 20, 0.0);
    let cfg = test_cfg(2, 10, 7);
    let recs = collect(&model, &cfg);
    assert_eq!(recs.len(), 2 * (10 + 1));
    for r in &recs {
        let q = QuerySpec::from_evidence(&model, r.evidence.clone()).unwrap();
        let x = Assignment::new(r.state.clone());
        assert!(q.is_consistent(&x));
        let expect: usize = q.query_vars().iter().map(|&v| model.cardinality(v) - 1).sum();
        assert_eq!(r.neighbors.len(), expect);
        let moves = enumerate_neighbors(&model, &x, &q);
        assert!(moves
            .iter()
            .zip(&r.neighbors)
            .all(|(m, n)| (m.var, m.value) == (n.0, n.1)));
        // each mismatched query variable has exactly one fixing flip
        let pos = r.neighbors.iter().filter(|n| n.2 == 1).count();
        let vars: BTreeSet<usize> = r.neighbors.iter().filter(|n| n.2 == 1).map(|n| n.0).collect();
        assert_eq!(pos, vars.len());
    }
}

#[test]
fn step_budget_makes_generation_deterministic() {
    let mut rng = rng(7);
    let model = random_model(&mut rng, 15, 3, 15, 0.0);
    let mut a = test_cfg(5, 20, 11);
    let b_recs = {
        let mut b = a.clone();
        b.workers = Some(1);
        collect(&model, &b)
    };
    let a_recs = collect(&model, &a);
    assert_eq!(a_recs, b_recs);
    a.seed = 12;
    assert_ne!(collect(&model, &a), a_recs);
}

#[test]
fn sink_file_round_trips() {
    let mut rng = rng(8);
    let model = random_model(&mut rng, 12, 4, 10, 0.0);
    let cfg = test_cfg(3, 8, 2);
    let mut w = DatasetWriter::new(Vec::new(), &model).unwrap();
    let summary = collect_dataset(&model, &cfg, |r| w.write(r)).unwrap();
    let bytes = w.into_inner().unwrap();
    let text = String::from_utf8(bytes.clone()).unwrap();
    let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    assert_eq!(first["format"], 1);
    assert_eq!(first["num_vars"], 12);
    assert_eq!(first["model_hash"].as_str().unwrap(), model.content_hash());
    let second: serde_json::Value = serde_json::from_str(text.lines().nth(1).unwrap()).unwrap();
    let keys: BTreeSet<&str> = second.as_object().unwrap().keys().map(|k| k.as_str()).collect();
    assert_eq!(keys, BTreeSet::from(["evidence", "neighbors", "state"]));
    assert_eq!(second["neighbors"][0].as_array().unwrap().len(), 3);
    let (header, recs) = read_dataset(&bytes[..]).unwrap();
    assert_eq!(header.cardinalities, model.cardinalities());
    assert_eq!(recs.len(), summary.records);
    assert_eq!(summary.queries_ok, 3);
}

#[test]
fn failing_queries_are_skipped_until_all_fail() {
    // a model whose only variable is evidence after qr = 0.5 of 1 variable rounds to 0
    let model = random_model(&mut rng(9), 1, 2, 0, 0.0);
    let mut cfg = test_cfg(3, 5, 0);
    cfg.qr = QueryRatio::Fixed(0.5);
    assert!(collect_dataset(&model, &cfg, |_| Ok(())).is_err());
}

#[test]
fn config_validation() {
    let ok = test_cfg(1, 1, 0);
    assert!(ok.validate().is_ok());
    for bad in [
        DatagenConfig { stl: 0, ..ok.clone() },
        DatagenConfig { n: 0, ..ok.clone() },
        DatagenConfig {
            budget: SolverBudget::Seconds(0.0),
            ..ok.clone()
        },
        DatagenConfig {
            budget: SolverBudget::Steps(0),
            ..ok.clone()
        },
        DatagenConfig {
            qr: QueryRatio::Range(0.5, 1.0),
            ..ok.clone()
        },
        DatagenConfig {
            workers: Some(0),
            ..ok.clone()
        },
    ] {
        assert!(bad.validate().is_err(), "{bad:?}");
    }
    let d = DatagenConfig::new(500);
    assert_eq!(d.stl, 500);
    assert_eq!(d.qr, QueryRatio::Range(0.8, 0.95));
    assert_eq!(d.budget, SolverBudget::Seconds(300.0));
    assert_eq!(d.n, 1000);
}
