use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Assignment, Move};

/// How a trajectory entered a state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Transition {
    Start,
    /// A scored 1-flip move.
    Flip(Move),
    /// A 1-flip move chosen by the reference-guided branch of the data collector.
    GuidedFlip(Move),
    /// Query variables re-randomized; the new assignment is kept in the trajectory.
    Restart,
}

impl Transition {
    pub fn flip(&self) -> Option<Move> {
        match *self {
            Transition::Flip(m) | Transition::GuidedFlip(m) => Some(m),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryState {
    pub step: usize,
    pub transition: Transition,
    /// F of the state entered at this step.
    pub f: f64,
}

/// A penalty increment made by guided local search.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PenaltyEvent {
    pub step: usize,
    pub factor: usize,
    pub instantiation: usize,
    /// Count after the increment.
    pub count: u32,
}

/// Wall-clock seconds per step (not part of trajectory equality).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepTiming {
    pub steps: usize,
    pub mean_seconds: f64,
    pub sd_seconds: f64,
    m2: f64,
}

impl StepTiming {
    pub(crate) fn push(&mut self, secs: f64) {
        self.steps += 1;
        let delta = secs - self.mean_seconds;
        self.mean_seconds += delta / self.steps as f64;
        self.m2 += delta * (secs - self.mean_seconds);
        self.sd_seconds = if self.steps > 1 {
            (self.m2 / (self.steps - 1) as f64).sqrt()
        } else {
            0.0
        };
    }
}

/// Visited states of one search run, stored as deltas from the initial assignment.
///
/// Restarts store a full snapshot. `best_f` is the maximum F over all states.
#[derive(Debug, Clone)]
pub struct Trajectory {
    initial: Assignment,
    states: Vec<TrajectoryState>,
    restarts: Vec<usize>,
    restart_snapshots: Vec<Assignment>,
    best: Assignment,
    best_f: f64,
    steps: usize,
    record: bool,
    penalty_events: Vec<PenaltyEvent>,
    pub timing: StepTiming,
}

impl PartialEq for Trajectory {
    fn eq(&self, other: &Self) -> bool {
        self.initial == other.initial
            && self.states == other.states
            && self.restarts == other.restarts
            && self.restart_snapshots == other.restart_snapshots
            && self.best == other.best
            && self.best_f.to_bits() == other.best_f.to_bits()
            && self.steps == other.steps
            && self.penalty_events == other.penalty_events
    }
}

impl Trajectory {
    /// Starts a trajectory at `x0` with objective `f0`.
    pub fn start(x0: Assignment, f0: f64) -> Self {
        Trajectory {
            best: x0.clone(),
            best_f: f0,
            states: vec![TrajectoryState {
                step: 0,
                transition: Transition::Start,
                f: f0,
            }],
            initial: x0,
            restarts: Vec::new(),
            restart_snapshots: Vec::new(),
            steps: 0,
            record: true,
            penalty_events: Vec::new(),
            timing: StepTiming::default(),
        }
    }

    /// Like [`start`](Self::start) but keeps only the incumbent and counters.
    pub(crate) fn start_unrecorded(x0: Assignment, f0: f64) -> Self {
        let mut t = Self::start(x0, f0);
        t.record = false;
        t
    }

    /// Records a move. `x_after` is the state after applying it.
    pub fn push_move(&mut self, m: Move, guided: bool, x_after: &Assignment, f: f64) {
        self.steps += 1;
        if self.record {
            let transition = if guided {
                Transition::GuidedFlip(m)
            } else {
                Transition::Flip(m)
            };
            self.states.push(TrajectoryState {
                step: self.steps,
                transition,
                f,
            });
        }
        self.observe(x_after, f);
    }

    pub fn push_restart(&mut self, x: &Assignment, f: f64) {
        self.steps += 1;
        self.restarts.push(self.steps);
        if self.record {
            self.restart_snapshots.push(x.clone());
            self.states.push(TrajectoryState {
                step: self.steps,
                transition: Transition::Restart,
                f,
            });
        }
        self.observe(x, f);
    }

    pub(crate) fn push_penalty(&mut self, ev: PenaltyEvent) {
        if self.record {
            self.penalty_events.push(ev);
        }
    }

    fn observe(&mut self, x: &Assignment, f: f64) {
        if f > self.best_f {
            self.best_f = f;
            self.best = x.clone();
        }
    }

    pub fn initial(&self) -> &Assignment {
        &self.initial
    }

    pub fn states(&self) -> &[TrajectoryState] {
        &self.states
    }

    /// Step indices at which a restart happened.
    pub fn restarts(&self) -> &[usize] {
        &self.restarts
    }

    pub fn best(&self) -> &Assignment {
        &self.best
    }

    pub fn best_f(&self) -> f64 {
        self.best_f
    }

    /// Number of steps taken (moves plus restarts).
    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn penalty_events(&self) -> &[PenaltyEvent] {
        &self.penalty_events
    }

    /// Best F among states with step index `<= step`.
    pub fn best_f_at(&self, step: usize) -> f64 {
        self.states
            .iter()
            .take_while(|s| s.step <= step)
            .map(|s| s.f)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Calls `visit` with every recorded state and the assignment at that point.
    pub fn for_each_state(&self, mut visit: impl FnMut(&TrajectoryState, &Assignment)) {
        let mut x = self.initial.clone();
        let mut snapshots = self.restart_snapshots.iter();
        for s in &self.states {
            match s.transition {
                Transition::Start => {}
                Transition::Flip(m) | Transition::GuidedFlip(m) => {
                    x.apply(m);
                }
                Transition::Restart => {
                    x = snapshots.next().expect("one snapshot per recorded restart").clone();
                }
            }
            visit(s, &x);
        }
    }

    /// All recorded assignments, initial state first.
    pub fn assignments(&self) -> Vec<Assignment> {
        let mut out = Vec::with_capacity(self.states.len());
        self.for_each_state(|_, x| out.push(x.clone()));
        out
    }

    /// Assignment after the last recorded step.
    pub fn final_state(&self) -> Assignment {
        let mut last = self.initial.clone();
        self.for_each_state(|_, x| last.clone_from(x));
        last
    }

    /// Writes one JSON object per state. Start and restart lines always carry the full
    /// assignment; move lines carry `var`/`value` and, if `with_assignments`, the
    /// assignment too. `f` is `null` for a zero-probability state.
    pub fn write_jsonl<W: Write>(&self, mut w: W, with_assignments: bool) -> Result<()> {
        let mut err = None;
        self.for_each_state(|s, x| {
            if err.is_some() {
                return;
            }
            let (kind, mv) = match s.transition {
                Transition::Start => ("start", None),
                Transition::Flip(m) => ("flip", Some(m)),
                Transition::GuidedFlip(m) => ("guided", Some(m)),
                Transition::Restart => ("restart", None),
            };
            let full = with_assignments || mv.is_none();
            let rec = StateRecord {
                step: s.step,
                kind: kind.to_string(),
                var: mv.map(|m| m.var),
                value: mv.map(|m| m.value),
                f: s.f.is_finite().then_some(s.f),
                assignment: full.then(|| x.values().to_vec()),
            };
            let res = serde_json::to_writer(&mut w, &rec)
                .map_err(Error::from)
                .and_then(|_| w.write_all(b"\n").map_err(Error::from));
            if let Err(e) = res {
                err = Some(e);
            }
        });
        match err {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }

    /// Reads the format written by [`write_jsonl`](Self::write_jsonl).
    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Self> {
        let mut traj: Option<Trajectory> = None;
        let mut x = Assignment::new(Vec::new());
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: StateRecord = serde_json::from_str(&line)?;
            let f = rec.f.unwrap_or(f64::NEG_INFINITY);
            let bad = |msg: &str| Error::parse(i + 1, msg.to_string());
            match (rec.kind.as_str(), traj.as_mut()) {
                ("start", None) => {
                    x = Assignment::new(rec.assignment.ok_or_else(|| bad("start without assignment"))?);
                    traj = Some(Trajectory::start(x.clone(), f));
                }
                ("restart", Some(t)) => {
                    x = Assignment::new(rec.assignment.ok_or_else(|| bad("restart without assignment"))?);
                    t.push_restart(&x, f);
                }
                (k @ ("flip" | "guided"), Some(t)) => {
                    let (var, value) = rec.var.zip(rec.value).ok_or_else(|| bad("move without var/value"))?;
                    if var >= x.len() {
                        return Err(bad("move variable out of range"));
                    }
                    let m = Move::new(var, value);
                    x.apply(m);
                    t.push_move(m, k == "guided", &x, f);
                }
                _ => return Err(bad("unexpected record kind or missing start")),
            }
            if traj.as_ref().map(|t| t.steps) != Some(rec.step) {
                return Err(bad("non-consecutive step index"));
            }
        }
        traj.ok_or_else(|| Error::parse(1, "empty trajectory"))
    }
}

#[derive(Serialize, Deserialize)]
struct StateRecord {
    step: usize,
    kind: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    var: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    value: Option<usize>,
    f: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    assignment: Option<Vec<usize>>,
}
