//! Penalty bookkeeping for guided local search.
//!
//! Features are factor instantiations. At a local optimum of the augmented objective
//! every factor touching a query variable gets utility
//! `(max entry - current entry) / (1 + penalty of the current instantiation)`, and the
//! current instantiation of each factor with maximal utility gets one more penalty.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::model::{Assignment, GraphicalModel, Move, QuerySpec};

use super::trajectory::PenaltyEvent;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GlsConfig {
    /// Weight `w` of the penalty term, in log-potential units.
    pub penalty_weight: f64,
    /// Penalty rounds allowed at one local optimum before the best augmented move is
    /// taken anyway.
    pub max_penalty_rounds: usize,
}

impl Default for GlsConfig {
    fn default() -> Self {
        GlsConfig {
            penalty_weight: 1.0,
            max_penalty_rounds: 16,
        }
    }
}

/// Per-factor penalty counts keyed by table index. Counts only ever grow.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Penalties {
    counts: Vec<HashMap<usize, u32>>,
}

impl Penalties {
    pub fn new(model: &GraphicalModel) -> Self {
        Penalties {
            counts: vec![HashMap::new(); model.factors().len()],
        }
    }

    pub(crate) fn fits(&self, model: &GraphicalModel) -> bool {
        self.counts.len() == model.factors().len()
    }

    pub fn get(&self, factor: usize, instantiation: usize) -> u32 {
        self.counts
            .get(factor)
            .and_then(|m| m.get(&instantiation))
            .copied()
            .unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flat_map(|m| m.values()).map(|&c| c as u64).sum()
    }

    fn bump(&mut self, factor: usize, instantiation: usize) -> u32 {
        let c = self.counts[factor].entry(instantiation).or_insert(0);
        *c += 1;
        *c
    }

    /// Change in summed penalty over the factors incident to `m.var` when applying `m`.
    pub fn delta(&self, model: &GraphicalModel, x: &Assignment, m: Move) -> f64 {
        let cur = x[m.var];
        let mut d = 0i64;
        for (fi, stride) in model.incidence(m.var) {
            let map = &self.counts[fi];
            if map.is_empty() {
                continue;
            }
            let idx = model.factors()[fi].index_of(x.values());
            let new = idx + m.value * stride - cur * stride;
            d += map.get(&new).copied().unwrap_or(0) as i64 - map.get(&idx).copied().unwrap_or(0) as i64;
        }
        d as f64
    }

    /// Applies the utility rule at `x`, returning the increments made.
    pub(crate) fn penalize(
        &mut self,
        model: &GraphicalModel,
        candidates: &[usize],
        x: &Assignment,
        step: usize,
    ) -> Vec<PenaltyEvent> {
        let mut best = f64::NEG_INFINITY;
        let mut chosen: Vec<(usize, usize)> = Vec::new();
        for &fi in candidates {
            let f = &model.factors()[fi];
            let idx = f.index_of(x.values());
            let gap = f.max_entry() - f.log_table()[idx];
            let gap = if gap.is_nan() { 0.0 } else { gap };
            let utility = gap / (1.0 + self.get(fi, idx) as f64);
            if utility > best {
                best = utility;
                chosen.clear();
            }
            if utility == best {
                chosen.push((fi, idx));
            }
        }
        chosen
            .into_iter()
            .map(|(factor, instantiation)| PenaltyEvent {
                step,
                factor,
                instantiation,
                count: self.bump(factor, instantiation),
            })
            .collect()
    }
}

/// Factors with at least one query variable in scope; only these can be escaped from.
pub(crate) fn penalizable_factors(model: &GraphicalModel, q: &QuerySpec) -> Vec<usize> {
    model
        .factors()
        .iter()
        .enumerate()
        .filter(|(_, f)| f.scope().iter().any(|&v| q.is_query(v)))
        .map(|(i, _)| i)
        .collect()
}
