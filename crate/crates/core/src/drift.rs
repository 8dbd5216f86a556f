//! Hitting times of the biased distance walk, and the rate at which a recorded
//! search actually reduces its distance to a reference.
//!
//! The walk starts at distance `h0` and moves to `h - 1` with probability `alpha`,
//! else to `h + 1`, until it reaches 0. For `alpha > 1/2` the expected hitting time
//! is `h0 / (2 alpha - 1)`.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{hamming_unchecked, Assignment, QuerySpec};
use crate::rng::{derive_seed, rng_from_seed};
use crate::search::{Trajectory, Transition};

/// Per-trial step cap; a walk that has not absorbed by then aborts the simulation.
pub const MAX_WALK_STEPS: u64 = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftConfig {
    pub h0: u64,
    pub alpha: f64,
    pub trials: usize,
    pub seed: u64,
}

impl DriftConfig {
    pub fn validate(&self) -> Result<()> {
        if self.h0 < 1 {
            return Err(Error::config("h0 must be at least 1"));
        }
        if !(self.alpha > 0.5 && self.alpha <= 1.0) {
            return Err(Error::config(format!("alpha {} outside (0.5, 1]", self.alpha)));
        }
        if self.trials < 1 {
            return Err(Error::config("trials must be at least 1"));
        }
        Ok(())
    }

    /// `h0 / (2 alpha - 1)`.
    pub fn bound(&self) -> f64 {
        self.h0 as f64 / (2.0 * self.alpha - 1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftReport {
    pub mean_tau: f64,
    pub bound: f64,
    pub p50: u64,
    pub p90: u64,
    pub p99: u64,
    /// Hitting time of every trial, in trial order.
    pub taus: Vec<u64>,
}

/// Runs `cfg.trials` independent walks. Trial `i` draws from a stream seeded by
/// `(cfg.seed, i)`, so two configurations differing only in `alpha` share random numbers.
pub fn simulate_drift(cfg: &DriftConfig) -> Result<DriftReport> {
    cfg.validate()?;
    let taus = (0..cfg.trials)
        .into_par_iter()
        .map(|i| walk(cfg, i))
        .collect::<Result<Vec<u64>>>()?;
    let mean_tau = taus.iter().map(|&t| t as f64).sum::<f64>() / taus.len() as f64;
    let mut sorted = taus.clone();
    sorted.sort_unstable();
    Ok(DriftReport {
        mean_tau,
        bound: cfg.bound(),
        p50: quantile(&sorted, 0.50),
        p90: quantile(&sorted, 0.90),
        p99: quantile(&sorted, 0.99),
        taus,
    })
}

fn walk(cfg: &DriftConfig, trial: usize) -> Result<u64> {
    let mut rng = rng_from_seed(derive_seed(cfg.seed, trial as u64));
    let mut h = cfg.h0;
    let mut t = 0u64;
    while h > 0 {
        if t >= MAX_WALK_STEPS {
            return Err(Error::Drift(format!(
                "trial {trial} did not absorb within {MAX_WALK_STEPS} steps (h = {h})"
            )));
        }
        if rng.random::<f64>() < cfg.alpha {
            h -= 1;
        } else {
            h += 1;
        }
        t += 1;
    }
    Ok(t)
}

/// Nearest-rank quantile of sorted data.
fn quantile(sorted: &[u64], p: f64) -> u64 {
    let rank = ((p * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaEstimate {
    /// `reducing / (reducing + nonreducing)`, absent when no step qualified.
    pub alpha_hat: Option<f64>,
    pub reducing: usize,
    pub nonreducing: usize,
}

/// Fraction of moves that strictly reduced the Hamming distance to `reference`.
///
/// Only 1-flip transitions out of states with nonzero distance count; restarts are
/// skipped. A flip that leaves the distance unchanged counts as nonreducing.
pub fn measure_alpha(trajectory: &Trajectory, reference: &Assignment, q: &QuerySpec) -> Result<AlphaEstimate> {
    q.check_consistent(reference)?;
    let mut prev: Option<usize> = None;
    let mut reducing = 0;
    let mut nonreducing = 0;
    let mut bad = None;
    trajectory.for_each_state(|s, x| {
        if bad.is_none() && !q.is_consistent(x) {
            bad = Some(s.step);
        }
        let d = hamming_unchecked(x, reference, q);
        if let (Some(p), Transition::Flip(_) | Transition::GuidedFlip(_)) = (prev, s.transition) {
            if p > 0 {
                if d < p {
                    reducing += 1;
                } else {
                    nonreducing += 1;
                }
            }
        }
        prev = Some(d);
    });
    if let Some(step) = bad {
        return Err(Error::contract(format!(
            "trajectory state at step {step} contradicts the evidence"
        )));
    }
    let total = reducing + nonreducing;
    Ok(AlphaEstimate {
        alpha_hat: (total > 0).then(|| reducing as f64 / total as f64),
        reducing,
        nonreducing,
    })
}
