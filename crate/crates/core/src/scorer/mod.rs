//! Neighbor scoring.
//!
//! Every scorer maps a batch of 1-flip moves from the current state to one real
//! score per move; the search executes the highest-scoring move. Four scorers are
//! provided: the raw log-likelihood gain, a Hamming-distance oracle toward a known
//! reference, the attention network loaded from a weight file, and a convex
//! combination of min-max normalized gains with the network output.

mod neural;
mod weights;

pub use neural::NeuralScorer;
pub use weights::{ScorerWeights, Tensor, WeightsMeta, WEIGHTS_MAGIC, WEIGHTS_VERSION};

use crate::error::{Error, Result};
use crate::model::{Assignment, GraphicalModel, Move, QuerySpec};

/// Scores a batch of moves from state `x`.
///
/// Implementations are read-only after construction and may be shared between
/// threads running independent trajectories.
pub trait NeighborScorer: Send + Sync {
    /// Returns one score per move, parallel to `moves`.
    fn score_all(&self, model: &GraphicalModel, x: &Assignment, q: &QuerySpec, moves: &[Move]) -> Result<Vec<f64>>;

    /// Like [`score_all`](Self::score_all) but with the raw log-likelihood gains of
    /// `moves` already computed by the caller. Scorers that use the gains override this.
    fn score_with_gains(
        &self,
        model: &GraphicalModel,
        x: &Assignment,
        q: &QuerySpec,
        moves: &[Move],
        gains: &[f64],
    ) -> Result<Vec<f64>> {
        let _ = gains;
        self.score_all(model, x, q, moves)
    }
}

/// Raw log-likelihood gain of every move.
pub fn neighborhood_gains(model: &GraphicalModel, x: &Assignment, moves: &[Move]) -> Vec<f64> {
    moves.iter().map(|&m| model.gain_unchecked(x.values(), m)).collect()
}

/// Scores moves by their log-likelihood gain F(x') - F(x).
#[derive(Debug, Clone, Copy, Default)]
pub struct LlScorer;

impl NeighborScorer for LlScorer {
    fn score_all(&self, model: &GraphicalModel, x: &Assignment, _q: &QuerySpec, moves: &[Move]) -> Result<Vec<f64>> {
        Ok(neighborhood_gains(model, x, moves))
    }

    fn score_with_gains(
        &self,
        _model: &GraphicalModel,
        _x: &Assignment,
        _q: &QuerySpec,
        _moves: &[Move],
        gains: &[f64],
    ) -> Result<Vec<f64>> {
        Ok(gains.to_vec())
    }
}

/// 1.0 for moves that bring the state closer (in Hamming distance) to `reference`,
/// 0.0 otherwise.
#[derive(Debug, Clone)]
pub struct OracleScorer {
    reference: Assignment,
}

impl OracleScorer {
    pub fn new(reference: Assignment) -> Self {
        OracleScorer { reference }
    }

    pub fn reference(&self) -> &Assignment {
        &self.reference
    }
}

impl NeighborScorer for OracleScorer {
    fn score_all(&self, _model: &GraphicalModel, x: &Assignment, _q: &QuerySpec, moves: &[Move]) -> Result<Vec<f64>> {
        if x.len() != self.reference.len() {
            return Err(Error::contract("oracle reference length differs from state"));
        }
        Ok(moves
            .iter()
            .map(|m| {
                let r = self.reference[m.var];
                if x[m.var] != r && m.value == r {
                    1.0
                } else {
                    0.0
                }
            })
            .collect())
    }
}

/// Min-max scales `gains` into [0, 1].
///
/// Finite gains are scaled between their own minimum and maximum; when they are all
/// equal they map to 0.5. `-inf` maps to 0 and `+inf` to 1, and if any `+inf` is
/// present the finite values are halved so they stay below it. Only the exact
/// maximum maps to 1, so the arg-max (first on ties) matches that of the raw gains.
pub fn minmax_normalize(gains: &[f64]) -> Vec<f64> {
    let (lo, hi) = gains
        .iter()
        .filter(|g| g.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &g| {
            (lo.min(g), hi.max(g))
        });
    let span = hi - lo;
    let below_one = 1.0 - f64::EPSILON / 2.0;
    let finite_scale = if gains.contains(&f64::INFINITY) { 0.5 } else { 1.0 };
    gains
        .iter()
        .map(|&g| {
            if g == f64::NEG_INFINITY || g.is_nan() {
                0.0
            } else if g == f64::INFINITY {
                1.0
            } else if span > 0.0 {
                let t = if g == hi {
                    1.0
                } else {
                    ((g - lo) / span).clamp(0.0, below_one)
                };
                finite_scale * t
            } else {
                finite_scale * 0.5
            }
        })
        .collect()
}

/// `(1 - lambda) * minmax(gain) + lambda * network`, elementwise.
#[derive(Debug, Clone)]
pub struct CombinedScorer {
    lambda: f64,
    neural: NeuralScorer,
}

impl CombinedScorer {
    pub fn new(lambda: f64, neural: NeuralScorer) -> Result<Self> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::config(format!("lambda {lambda} outside [0, 1]")));
        }
        Ok(CombinedScorer { lambda, neural })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn neural(&self) -> &NeuralScorer {
        &self.neural
    }
}

impl NeighborScorer for CombinedScorer {
    fn score_all(&self, model: &GraphicalModel, x: &Assignment, q: &QuerySpec, moves: &[Move]) -> Result<Vec<f64>> {
        let gains = neighborhood_gains(model, x, moves);
        self.score_with_gains(model, x, q, moves, &gains)
    }

    fn score_with_gains(
        &self,
        model: &GraphicalModel,
        x: &Assignment,
        q: &QuerySpec,
        moves: &[Move],
        gains: &[f64],
    ) -> Result<Vec<f64>> {
        let nn = self.neural.score_all(model, x, q, moves)?;
        let ll = minmax_normalize(gains);
        let lam = self.lambda;
        Ok(ll.iter().zip(&nn).map(|(&l, &n)| (1.0 - lam) * l + lam * n).collect())
    }
}
