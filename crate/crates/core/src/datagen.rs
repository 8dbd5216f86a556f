//! Training-set generation.
//!
//! For each query: sample a full assignment from the model, hide a random subset of
//! variables, find a strong reference solution with GLS+, walk toward it with the
//! 50/50 collector, and label every neighbor of every visited state by whether it
//! reduces the Hamming distance to the reference.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::time::{Duration, Instant};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gibbs::{gibbs_sample, GibbsConfig};
use crate::model::{hamming_unchecked, Assignment, GraphicalModel, Move, QuerySpec};
use crate::rng::{derive_seed, random_assignment, rng_from_seed};
use crate::scorer::LlScorer;
use crate::search::{collect_states, enumerate_neighbors, gls_run, Penalties, RestartPolicy, SearchConfig};

/// Dataset file format version written in the header line.
pub const DATASET_FORMAT: u32 = 1;

/// Restart interval of the reference solver.
pub const ANYTIME_RESTART_INTERVAL: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum QueryRatio {
    Fixed(f64),
    /// Drawn uniformly per query.
    Range(f64, f64),
}

impl QueryRatio {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = match *self {
            QueryRatio::Fixed(r) => (r, r),
            QueryRatio::Range(lo, hi) => (lo, hi),
        };
        if !(lo > 0.0 && lo <= hi && hi < 1.0) {
            return Err(Error::config(format!(
                "query ratio [{lo}, {hi}] must satisfy 0 < lo <= hi < 1"
            )));
        }
        Ok(())
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            QueryRatio::Fixed(r) => r,
            QueryRatio::Range(lo, hi) if lo == hi => lo,
            QueryRatio::Range(lo, hi) => rng.random_range(lo..hi),
        }
    }
}

/// Budget of the reference solver. `Steps` makes generation fully deterministic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SolverBudget {
    Seconds(f64),
    Steps(usize),
}

impl SolverBudget {
    pub fn validate(&self) -> Result<()> {
        match *self {
            SolverBudget::Seconds(s) if !(s > 0.0 && s.is_finite()) => {
                Err(Error::config(format!("solver budget {s} s must be positive")))
            }
            SolverBudget::Steps(0) => Err(Error::config("solver step budget must be at least 1")),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatagenConfig {
    pub qr: QueryRatio,
    pub budget: SolverBudget,
    pub stl: usize,
    pub n: usize,
    pub seed: u64,
    /// Queries processed concurrently; `None` uses all cores.
    pub workers: Option<usize>,
    /// Chain settings for evidence sampling; the seed field is replaced per query.
    pub gibbs: GibbsConfig,
}

impl DatagenConfig {
    /// Standard settings with the given trajectory length; `stl` has no default.
    pub fn new(stl: usize) -> Self {
        DatagenConfig {
            qr: QueryRatio::Range(0.8, 0.95),
            budget: SolverBudget::Seconds(300.0),
            stl,
            n: 1000,
            seed: 0,
            workers: None,
            gibbs: GibbsConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.qr.validate()?;
        self.budget.validate()?;
        if self.stl < 1 {
            return Err(Error::config("stl must be at least 1"));
        }
        if self.n < 1 {
            return Err(Error::config("number of queries must be at least 1"));
        }
        if self.workers == Some(0) {
            return Err(Error::config("workers must be at least 1"));
        }
        Ok(())
    }
}

/// One dataset row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingRecord {
    pub evidence: BTreeMap<usize, usize>,
    pub state: Vec<usize>,
    /// `(var, value, label)` for every 1-flip neighbor, in enumeration order.
    pub neighbors: Vec<(usize, usize, u8)>,
}

/// First line of a dataset file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub format: u32,
    pub model_hash: String,
    pub num_vars: usize,
    pub cardinalities: Vec<usize>,
}

impl DatasetHeader {
    pub fn for_model(model: &GraphicalModel) -> Self {
        DatasetHeader {
            format: DATASET_FORMAT,
            model_hash: model.content_hash(),
            num_vars: model.num_vars(),
            cardinalities: model.cardinalities().to_vec(),
        }
    }
}

/// Samples evidence and a query set of exactly `floor(qr * n)` variables.
/// Returns the query and the full sample it was projected from.
pub fn generate_query(model: &GraphicalModel, qr: f64, seed: u64) -> Result<(QuerySpec, Assignment)> {
    let gibbs = GibbsConfig {
        seed,
        ..GibbsConfig::default()
    };
    generate_query_with(model, qr, &gibbs)
}

/// [`generate_query`] with explicit chain settings; `gibbs.seed` seeds everything.
pub fn generate_query_with(model: &GraphicalModel, qr: f64, gibbs: &GibbsConfig) -> Result<(QuerySpec, Assignment)> {
    QueryRatio::Fixed(qr).validate()?;
    let x = gibbs_sample(model, gibbs, 1)?
        .pop()
        .ok_or_else(|| Error::contract("gibbs returned no sample"))?;
    let n = model.num_vars();
    let k = query_count(qr, n);
    let mut rng = rng_from_seed(derive_seed(gibbs.seed, 1));
    let mut vars = rand::seq::index::sample(&mut rng, n, k).into_vec();
    vars.sort_unstable();
    let q = QuerySpec::project(model, &vars, &x)?;
    Ok((q, x))
}

/// `floor(qr * n)`, nudged so that products like `0.9 * 1156` that should be exact
/// are not lost to rounding.
pub fn query_count(qr: f64, n: usize) -> usize {
    ((qr * n as f64 + 1e-9).floor() as usize).min(n)
}

/// Reference solution: GLS+ with restarts every [`ANYTIME_RESTART_INTERVAL`] steps,
/// started from a seeded random assignment. Returns the best assignment found.
pub fn solve_mpe_anytime(model: &GraphicalModel, q: &QuerySpec, budget: SolverBudget, seed: u64) -> Result<Assignment> {
    budget.validate()?;
    let mut rng = rng_from_seed(seed);
    let x0 = random_assignment(model, q, &mut rng);
    let (max_steps, deadline) = match budget {
        SolverBudget::Steps(s) => (s, None),
        SolverBudget::Seconds(s) => (usize::MAX, Some(Instant::now() + Duration::from_secs_f64(s))),
    };
    let cfg = SearchConfig::gls(max_steps, derive_seed(seed, 1))
        .with_restarts(RestartPolicy::FixedInterval(ANYTIME_RESTART_INTERVAL));
    let mut penalties = Penalties::new(model);
    let traj = gls_run(model, q, &LlScorer, &cfg, &x0, &mut penalties, deadline, false)?;
    Ok(traj.best().clone())
}

/// Labels every neighbor of `x`: true iff the flip sets a mismatched query variable
/// to its reference value.
pub fn label_neighbors(
    model: &GraphicalModel,
    x: &Assignment,
    reference: &Assignment,
    q: &QuerySpec,
) -> Result<Vec<(Move, bool)>> {
    model.check_assignment(x)?;
    model.check_assignment(reference)?;
    q.check_consistent(x)?;
    q.check_consistent(reference)?;
    Ok(enumerate_neighbors(model, x, q)
        .into_iter()
        .map(|m| (m, x[m.var] != reference[m.var] && m.value == reference[m.var]))
        .collect())
}

/// Outcome counts of [`collect_dataset`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DatagenSummary {
    pub queries_ok: usize,
    pub queries_failed: usize,
    pub records: usize,
}

/// Runs the whole pipeline, handing records to `sink` in query order. Query `i` uses
/// seeds derived from `(cfg.seed, i)`, so output does not depend on the worker count.
/// Failed queries are logged and skipped; the call fails only if every query fails.
pub fn collect_dataset(
    model: &GraphicalModel,
    cfg: &DatagenConfig,
    mut sink: impl FnMut(&TrainingRecord) -> Result<()>,
) -> Result<DatagenSummary> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers.unwrap_or(0))
        .build()
        .map_err(|e| Error::config(format!("cannot start worker pool: {e}")))?;
    let batch = pool.current_num_threads().max(1) * 2;
    let mut summary = DatagenSummary::default();
    let mut last_err = None;
    let mut start = 0;
    while start < cfg.n {
        let end = (start + batch).min(cfg.n);
        let results: Vec<Result<Vec<TrainingRecord>>> = pool.install(|| {
            (start..end)
                .into_par_iter()
                .map(|i| query_records(model, cfg, i))
                .collect()
        });
        for (i, res) in (start..end).zip(results) {
            match res {
                Ok(records) => {
                    for r in &records {
                        sink(r)?;
                    }
                    summary.queries_ok += 1;
                    summary.records += records.len();
                }
                Err(e) => {
                    log::warn!("query {i} skipped: {e}");
                    summary.queries_failed += 1;
                    last_err = Some(e);
                }
            }
        }
        start = end;
    }
    if summary.queries_ok == 0 {
        let e = last_err.map(|e| e.to_string()).unwrap_or_default();
        return Err(Error::contract(format!(
            "all {} queries failed; last error: {e}",
            cfg.n
        )));
    }
    Ok(summary)
}

fn query_records(model: &GraphicalModel, cfg: &DatagenConfig, i: usize) -> Result<Vec<TrainingRecord>> {
    let seed = derive_seed(cfg.seed, i as u64);
    let qr = cfg.qr.draw(&mut rng_from_seed(derive_seed(seed, 0)));
    let gibbs = GibbsConfig {
        seed: derive_seed(seed, 1),
        ..cfg.gibbs
    };
    let (q, _) = generate_query_with(model, qr, &gibbs)?;
    let reference = solve_mpe_anytime(model, &q, cfg.budget, derive_seed(seed, 2))?;
    let traj = collect_states(model, &q, &reference, cfg.stl, derive_seed(seed, 3))?;
    let mut audit = rng_from_seed(derive_seed(seed, 4));
    let mut out = Vec::with_capacity(traj.steps() + 1);
    let mut failure = None;
    traj.for_each_state(|_, x| {
        if failure.is_some() {
            return;
        }
        let labels = match label_neighbors(model, x, &reference, &q) {
            Ok(l) => l,
            Err(e) => {
                failure = Some(e);
                return;
            }
        };
        if audit.random_bool(0.01) {
            if let Err(e) = audit_labels(x, &reference, &q, &labels) {
                failure = Some(e);
                return;
            }
        }
        out.push(TrainingRecord {
            evidence: q.evidence().clone(),
            state: x.values().to_vec(),
            neighbors: labels.into_iter().map(|(m, l)| (m.var, m.value, l as u8)).collect(),
        });
    });
    match failure {
        Some(e) => Err(e),
        None => Ok(out),
    }
}

fn audit_labels(x: &Assignment, reference: &Assignment, q: &QuerySpec, labels: &[(Move, bool)]) -> Result<()> {
    let d = hamming_unchecked(x, reference, q);
    for &(m, l) in labels {
        let reduces = hamming_unchecked(&x.with_move(m), reference, q) < d;
        if reduces != l {
            return Err(Error::contract(format!(
                "label of move {m} disagrees with distance recount"
            )));
        }
    }
    Ok(())
}

/// Writes the header line and then one record per line.
pub struct DatasetWriter<W: Write> {
    out: W,
}

impl<W: Write> DatasetWriter<W> {
    pub fn new(mut out: W, model: &GraphicalModel) -> Result<Self> {
        serde_json::to_writer(&mut out, &DatasetHeader::for_model(model))?;
        out.write_all(b"\n")?;
        Ok(DatasetWriter { out })
    }

    pub fn write(&mut self, record: &TrainingRecord) -> Result<()> {
        serde_json::to_writer(&mut self.out, record)?;
        self.out.write_all(b"\n")?;
        Ok(())
    }

    pub fn into_inner(mut self) -> Result<W> {
        self.out.flush()?;
        Ok(self.out)
    }
}

/// Reads a dataset file: header plus all records.
pub fn read_dataset<R: BufRead>(r: R) -> Result<(DatasetHeader, Vec<TrainingRecord>)> {
    let mut lines = r.lines().enumerate();
    let header: DatasetHeader = match lines.next() {
        Some((_, line)) => serde_json::from_str(&line?).map_err(|e| Error::parse(1, e.to_string()))?,
        None => return Err(Error::parse(1, "empty dataset")),
    };
    if header.format != DATASET_FORMAT {
        return Err(Error::parse(1, format!("unsupported dataset format {}", header.format)));
    }
    let mut records = Vec::new();
    for (i, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: TrainingRecord = serde_json::from_str(&line).map_err(|e| Error::parse(i + 1, e.to_string()))?;
        if rec.state.len() != header.num_vars {
            return Err(Error::parse(i + 1, "state length differs from header num_vars"));
        }
        records.push(rec);
    }
    Ok((header, records))
}
