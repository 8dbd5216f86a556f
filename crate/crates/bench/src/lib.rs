//! Fixtures shared by the benchmarks.

use mpe_core::rng::rng_from_seed;
use mpe_core::scorer::{NeuralScorer, ScorerWeights, WeightsMeta};
use mpe_core::{Factor, GraphicalModel};
use rand::Rng;

/// A chain of pairwise factors plus `extra` random triples, domains of size `card`.
pub fn grid_like_model(n: usize, card: usize, extra: usize, seed: u64) -> GraphicalModel {
    let mut rng = rng_from_seed(seed);
    let cards = vec![card; n];
    let mut table = |len: usize| (0..len).map(|_| rng.random_range(-2.0..2.0)).collect::<Vec<f64>>();
    let mut factors = Vec::with_capacity(2 * n + extra);
    for v in 0..n {
        factors.push(Factor::new(vec![v], table(card), &cards).unwrap());
    }
    for v in 1..n {
        factors.push(Factor::new(vec![v - 1, v], table(card * card), &cards).unwrap());
    }
    let mut pick = rng_from_seed(seed ^ 0x5eed);
    for _ in 0..extra {
        let mut scope = rand::seq::index::sample(&mut pick, n, 3).into_vec();
        scope.sort_unstable();
        factors.push(Factor::new(scope, table(card * card * card), &cards).unwrap());
    }
    GraphicalModel::new(cards, factors).unwrap()
}

/// Network with small random parameters sized for `model`.
pub fn random_network(model: &GraphicalModel, d_model: usize, ffn_blocks: usize, seed: u64) -> NeuralScorer {
    let meta = WeightsMeta::for_model(model, d_model, 4, 2, ffn_blocks, 2 * d_model);
    let mut w = ScorerWeights::zeros(meta);
    let mut rng = rng_from_seed(seed);
    let names: Vec<String> = w.tensors().keys().cloned().collect();
    for name in names {
        for v in &mut w.tensor_mut(&name).unwrap().data {
            *v = rng.random_range(-0.1..0.1);
        }
    }
    NeuralScorer::new(w).unwrap()
}
