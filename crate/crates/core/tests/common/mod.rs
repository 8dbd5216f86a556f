#![allow(dead_code)]

use std::collections::BTreeMap;

use mpe_core::rng::rng_from_seed;
use mpe_core::{Assignment, Factor, GraphicalModel, QuerySpec};
use rand::seq::SliceRandom;
use rand::Rng;

pub use mpe_core::rng::SearchRng;

pub fn rng(seed: u64) -> SearchRng {
    rng_from_seed(seed)
}

/// Random model: one unary factor per variable plus `extra` factors of arity 2..=3.
/// With probability `zero_p` a table entry is a hard zero (`-inf`).
pub fn random_model(rng: &mut SearchRng, n_vars: usize, max_card: usize, extra: usize, zero_p: f64) -> GraphicalModel {
    let cards: Vec<usize> = (0..n_vars).map(|_| rng.random_range(2..=max_card)).collect();
    let mut factors = Vec::new();
    let table = |rng: &mut SearchRng, scope: &[usize]| -> Vec<f64> {
        let size: usize = scope.iter().map(|&v| cards[v]).product();
        (0..size)
            .map(|_| {
                if rng.random_bool(zero_p) {
                    f64::NEG_INFINITY
                } else {
                    rng.random_range(-2.0..2.0)
                }
            })
            .collect()
    };
    for v in 0..n_vars {
        let t = table(rng, &[v]);
        factors.push(Factor::new(vec![v], t, &cards).unwrap());
    }
    for _ in 0..extra {
        let arity = rng.random_range(2..=3).min(n_vars);
        let mut vars: Vec<usize> = (0..n_vars).collect();
        vars.shuffle(rng);
        vars.truncate(arity);
        let t = table(rng, &vars);
        factors.push(Factor::new(vars, t, &cards).unwrap());
    }
    GraphicalModel::new(cards, factors).unwrap()
}

/// F(x) by independent mixed-radix lookup (last scope variable fastest).
pub fn brute_f(model: &GraphicalModel, x: &[usize]) -> f64 {
    model
        .factors()
        .iter()
        .map(|f| {
            let mut idx = 0;
            for &v in f.scope() {
                idx = idx * model.cardinality(v) + x[v];
            }
            f.log_table()[idx]
        })
        .sum()
}

/// Query variables on which `a` and `b` differ, counted directly.
pub fn brute_hamming(a: &[usize], b: &[usize], q: &QuerySpec) -> usize {
    (0..a.len()).filter(|&v| q.is_query(v) && a[v] != b[v]).count()
}

pub fn random_assignment(rng: &mut SearchRng, model: &GraphicalModel) -> Assignment {
    Assignment::new(model.cardinalities().iter().map(|&c| rng.random_range(0..c)).collect())
}

/// Random query set of roughly `frac` of the variables (at least one), evidence from `x`.
pub fn random_query(rng: &mut SearchRng, model: &GraphicalModel, x: &Assignment, frac: f64) -> QuerySpec {
    let n = model.num_vars();
    let mut evidence = BTreeMap::new();
    let keep = rng.random_range(0..n);
    for v in 0..n {
        if v != keep && !rng.random_bool(frac) {
            evidence.insert(v, x[v]);
        }
    }
    QuerySpec::from_evidence(model, evidence).unwrap()
}

/// Exhaustive maximum of F over the query variables, evidence fixed from `q`.
pub fn enumerate_optimum(model: &GraphicalModel, q: &QuerySpec) -> (f64, Vec<usize>) {
    let mut x = vec![0; model.num_vars()];
    for (&v, &val) in q.evidence() {
        x[v] = val;
    }
    let qv = q.query_vars().to_vec();
    let mut best = (f64::NEG_INFINITY, x.clone());
    loop {
        let f = brute_f(model, &x);
        if f > best.0 {
            best = (f, x.clone());
        }
        let mut k = 0;
        loop {
            if k == qv.len() {
                return best;
            }
            let v = qv[k];
            x[v] += 1;
            if x[v] < model.cardinality(v) {
                break;
            }
            x[v] = 0;
            k += 1;
        }
    }
}

/// Five-variable chain whose all-zeros state is a strict local optimum (F = 0).
///
/// The pair (x1, x2) scores 0 at (0,0), 2 at (1,1) and -3 when mixed; x0 costs 1 to flip,
/// x3 and x4 cost 2. The global optimum is (0,1,1,0,0) with F = 2. Every single flip
/// from all-zeros loses, the cheapest being x0, and from there the best move is
/// flipping x0 back, so greedy without restarts cycles between two states.
pub fn trap_chain() -> GraphicalModel {
    let cards = vec![2; 5];
    let f = |scope: Vec<usize>, t: Vec<f64>| Factor::new(scope, t, &cards).unwrap();
    let factors = vec![
        f(vec![0], vec![0.0, -1.0]),
        f(vec![3], vec![0.0, -2.0]),
        f(vec![4], vec![0.0, -2.0]),
        f(vec![0, 1], vec![0.0; 4]),
        f(vec![1, 2], vec![0.0, -3.0, -3.0, 2.0]),
        f(vec![2, 3], vec![0.0; 4]),
        f(vec![3, 4], vec![0.0; 4]),
    ];
    GraphicalModel::new(cards, factors).unwrap()
}
