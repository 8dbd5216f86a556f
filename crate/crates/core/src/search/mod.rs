//! 1-flip local search: best-improvement with restarts, GLS+, and the mixed
//! greedy/reference-guided walker used to collect training states.
//!
//! Every procedure counts one step per applied move and one step per restart, and
//! breaks ties by the neighborhood order (variable ascending, then value ascending).

mod gls;
mod trajectory;

pub use gls::{GlsConfig, Penalties};
pub use trajectory::{PenaltyEvent, StepTiming, Trajectory, TrajectoryState, Transition};

pub use crate::model::Move;

use std::time::Instant;

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Assignment, GraphicalModel, QuerySpec};
use crate::rng::{randomize_query, rng_from_seed, SearchRng};
use crate::scorer::{neighborhood_gains, NeighborScorer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RestartPolicy {
    /// Never restart.
    Never,
    /// Restart when no neighbor has a positive raw log-likelihood gain.
    OnLocalOptimum,
    /// Restart at every step index divisible by `k`.
    FixedInterval(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub max_steps: usize,
    pub restart_policy: RestartPolicy,
    pub seed: u64,
    pub gls: Option<GlsConfig>,
}

impl SearchConfig {
    pub fn greedy(max_steps: usize, seed: u64) -> Self {
        SearchConfig {
            max_steps,
            restart_policy: RestartPolicy::OnLocalOptimum,
            seed,
            gls: None,
        }
    }

    pub fn gls(max_steps: usize, seed: u64) -> Self {
        SearchConfig {
            max_steps,
            restart_policy: RestartPolicy::Never,
            seed,
            gls: Some(GlsConfig::default()),
        }
    }

    pub fn with_restarts(mut self, policy: RestartPolicy) -> Self {
        self.restart_policy = policy;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_steps == 0 {
            return Err(Error::config("max_steps must be at least 1"));
        }
        if self.restart_policy == RestartPolicy::FixedInterval(0) {
            return Err(Error::config("restart interval must be at least 1"));
        }
        if let Some(g) = &self.gls {
            if !g.penalty_weight.is_finite() || g.penalty_weight < 0.0 {
                return Err(Error::config("GLS penalty weight must be a finite nonnegative number"));
            }
        }
        Ok(())
    }
}

/// All 1-flip moves over the query variables, ordered by (variable, value).
pub fn enumerate_neighbors(model: &GraphicalModel, x: &Assignment, q: &QuerySpec) -> Vec<Move> {
    let mut out = Vec::new();
    fill_neighbors(model, x, q, &mut out);
    out
}

fn fill_neighbors(model: &GraphicalModel, x: &Assignment, q: &QuerySpec, out: &mut Vec<Move>) {
    out.clear();
    for &v in q.query_vars() {
        let cur = x[v];
        out.extend(
            (0..model.cardinality(v))
                .filter(|&val| val != cur)
                .map(|val| Move::new(v, val)),
        );
    }
}

/// Index of the first maximal score; NaN never wins.
fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    let mut best_s = f64::NEG_INFINITY;
    for (i, &s) in scores.iter().enumerate() {
        if s > best_s {
            best = i;
            best_s = s;
        }
    }
    best
}

fn check_inputs(model: &GraphicalModel, q: &QuerySpec, x0: &Assignment) -> Result<()> {
    model.check_assignment(x0)?;
    q.check_consistent(x0)?;
    let moves: usize = q.query_vars().iter().map(|&v| model.cardinality(v) - 1).sum();
    if moves == 0 {
        return Err(Error::config("empty neighborhood: no query variable can change value"));
    }
    Ok(())
}

struct Walker<'a> {
    model: &'a GraphicalModel,
    q: &'a QuerySpec,
    x: Assignment,
    f: f64,
    rng: SearchRng,
    traj: Trajectory,
    moves: Vec<Move>,
}

impl<'a> Walker<'a> {
    fn new(model: &'a GraphicalModel, q: &'a QuerySpec, x0: Assignment, seed: u64, record: bool) -> Self {
        let f = model.log_potential_sum(&x0);
        let traj = if record {
            Trajectory::start(x0.clone(), f)
        } else {
            Trajectory::start_unrecorded(x0.clone(), f)
        };
        Walker {
            model,
            q,
            x: x0,
            f,
            rng: rng_from_seed(seed),
            traj,
            moves: Vec::new(),
        }
    }

    fn refresh_moves(&mut self) {
        fill_neighbors(self.model, &self.x, self.q, &mut self.moves);
    }

    fn apply(&mut self, m: Move, gain: f64, guided: bool) {
        self.x.apply(m);
        // incremental update unless a zero-probability factor is involved
        self.f = if self.f.is_finite() && gain.is_finite() {
            self.f + gain
        } else {
            self.model.log_potential_sum(&self.x)
        };
        self.traj.push_move(m, guided, &self.x, self.f);
    }

    fn restart(&mut self) {
        randomize_query(self.model, self.q, &mut self.x, &mut self.rng);
        self.f = self.model.log_potential_sum(&self.x);
        self.traj.push_restart(&self.x, self.f);
    }

    fn finish(self) -> Trajectory {
        debug_assert!({
            let exact = self.model.log_potential_sum(self.traj.best());
            !exact.is_finite() || (exact - self.traj.best_f()).abs() <= 1e-6 * exact.abs().max(1.0)
        });
        self.traj
    }
}

fn interval_restart(policy: RestartPolicy, step: usize) -> bool {
    matches!(policy, RestartPolicy::FixedInterval(k) if step.is_multiple_of(k))
}

/// Best-improvement search driven by `scorer`.
///
/// Each step scores the whole neighborhood and applies the top-scoring move. Under
/// [`RestartPolicy::OnLocalOptimum`] a restart replaces the move whenever the best raw
/// log-likelihood gain is `<= 0`, whatever scorer is in use.
pub fn greedy_search(
    model: &GraphicalModel,
    q: &QuerySpec,
    scorer: &dyn NeighborScorer,
    cfg: &SearchConfig,
    x0: &Assignment,
) -> Result<Trajectory> {
    cfg.validate()?;
    check_inputs(model, q, x0)?;
    let mut w = Walker::new(model, q, x0.clone(), cfg.seed, true);
    for step in 1..=cfg.max_steps {
        let t0 = Instant::now();
        if interval_restart(cfg.restart_policy, step) {
            w.restart();
        } else {
            w.refresh_moves();
            let gains = neighborhood_gains(model, &w.x, &w.moves);
            let stuck = gains.iter().copied().fold(f64::NEG_INFINITY, f64::max) <= 0.0;
            if cfg.restart_policy == RestartPolicy::OnLocalOptimum && stuck {
                w.restart();
            } else {
                let scores = scorer.score_with_gains(model, &w.x, q, &w.moves, &gains)?;
                let i = argmax(&scores);
                let m = w.moves[i];
                w.apply(m, gains[i], false);
            }
        }
        w.traj.timing.push(t0.elapsed().as_secs_f64());
    }
    Ok(w.finish())
}

/// Guided local search over `scorer - w * Δpenalty`.
///
/// When no move has a positive augmented log-likelihood gain the penalty rule fires
/// (up to `max_penalty_rounds` times) instead of a restart, then the best augmented
/// move is applied. `best_f` always tracks the true objective.
pub fn gls_plus_search(
    model: &GraphicalModel,
    q: &QuerySpec,
    scorer: &dyn NeighborScorer,
    cfg: &SearchConfig,
    x0: &Assignment,
) -> Result<Trajectory> {
    let mut penalties = Penalties::new(model);
    gls_plus_search_with_penalties(model, q, scorer, cfg, x0, &mut penalties)
}

/// [`gls_plus_search`] continuing from (and updating) existing penalty counts.
pub fn gls_plus_search_with_penalties(
    model: &GraphicalModel,
    q: &QuerySpec,
    scorer: &dyn NeighborScorer,
    cfg: &SearchConfig,
    x0: &Assignment,
    penalties: &mut Penalties,
) -> Result<Trajectory> {
    gls_run(model, q, scorer, cfg, x0, penalties, None, true)
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn gls_run(
    model: &GraphicalModel,
    q: &QuerySpec,
    scorer: &dyn NeighborScorer,
    cfg: &SearchConfig,
    x0: &Assignment,
    penalties: &mut Penalties,
    deadline: Option<Instant>,
    record: bool,
) -> Result<Trajectory> {
    cfg.validate()?;
    check_inputs(model, q, x0)?;
    let gls = cfg
        .gls
        .ok_or_else(|| Error::config("GLS+ search requires a GLS configuration"))?;
    if !penalties.fits(model) {
        if penalties.total() > 0 {
            return Err(Error::contract("penalty table belongs to a different model"));
        }
        *penalties = Penalties::new(model);
    }
    let weight = gls.penalty_weight;
    let candidates = gls::penalizable_factors(model, q);
    let mut w = Walker::new(model, q, x0.clone(), cfg.seed, record);
    let mut dpen = Vec::new();
    for step in 1..=cfg.max_steps {
        if deadline.is_some_and(|d| Instant::now() >= d) {
            break;
        }
        let t0 = Instant::now();
        if interval_restart(cfg.restart_policy, step) {
            w.restart();
        } else {
            w.refresh_moves();
            let gains = neighborhood_gains(model, &w.x, &w.moves);
            let mut rounds = 0;
            loop {
                dpen.clear();
                dpen.extend(w.moves.iter().map(|&m| penalties.delta(model, &w.x, m)));
                let improving = gains.iter().zip(&dpen).any(|(&g, &p)| g - weight * p > 0.0);
                if improving || rounds >= gls.max_penalty_rounds || candidates.is_empty() {
                    break;
                }
                for ev in penalties.penalize(model, &candidates, &w.x, step) {
                    w.traj.push_penalty(ev);
                }
                rounds += 1;
            }
            let scores = scorer.score_with_gains(model, &w.x, q, &w.moves, &gains)?;
            let augmented: Vec<f64> = scores.iter().zip(&dpen).map(|(&s, &p)| s - weight * p).collect();
            let i = argmax(&augmented);
            let m = w.moves[i];
            w.apply(m, gains[i], false);
        }
        w.traj.timing.push(t0.elapsed().as_secs_f64());
    }
    Ok(w.finish())
}

/// Walker used to gather training states around a reference assignment.
///
/// Starts from a uniform random assignment and runs `stl` steps. Every `stl / 5`
/// steps it restarts; otherwise a fair coin picks either the best log-likelihood move
/// or a uniformly random move among those that reduce the Hamming distance to
/// `reference` (any uniformly random move if none does). Guided moves are recorded as
/// [`Transition::GuidedFlip`].
pub fn collect_states(
    model: &GraphicalModel,
    q: &QuerySpec,
    reference: &Assignment,
    stl: usize,
    seed: u64,
) -> Result<Trajectory> {
    if stl == 0 {
        return Err(Error::config("step limit must be at least 1"));
    }
    model.check_assignment(reference)?;
    q.check_consistent(reference)?;
    let mut rng = rng_from_seed(seed);
    let mut x0 = reference.clone();
    randomize_query(model, q, &mut x0, &mut rng);
    check_inputs(model, q, &x0)?;
    let mut w = Walker::new(model, q, x0, seed, true);
    w.rng = rng;
    let interval = stl / 5;
    let mut reducing = Vec::new();
    for step in 1..=stl {
        if interval > 0 && step % interval == 0 {
            w.restart();
            continue;
        }
        w.refresh_moves();
        let guided = w.rng.random_bool(0.5);
        if guided {
            reducing.clear();
            reducing.extend(
                w.moves
                    .iter()
                    .copied()
                    .filter(|m| w.x[m.var] != reference[m.var] && m.value == reference[m.var]),
            );
            let pool = if reducing.is_empty() { &w.moves } else { &reducing };
            let m = *pool.choose(&mut w.rng).expect("neighborhood is nonempty");
            let gain = model.gain_unchecked(w.x.values(), m);
            w.apply(m, gain, true);
        } else {
            let gains = neighborhood_gains(model, &w.x, &w.moves);
            let i = argmax(&gains);
            let m = w.moves[i];
            w.apply(m, gains[i], false);
        }
    }
    Ok(w.finish())
}
