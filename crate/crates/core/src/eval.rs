//! Method comparisons: checkpointed best-so-far curves, win percentage, percentage
//! log-likelihood improvement and lambda sweeps.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Assignment, GraphicalModel, QuerySpec};
use crate::rng::{derive_seed, random_assignment, rng_from_seed};
use crate::scorer::{CombinedScorer, LlScorer, NeighborScorer, NeuralScorer};
use crate::search::{gls_plus_search, greedy_search, SearchConfig, StepTiming};

/// A named search method. Runs GLS+ when `cfg.gls` is set, greedy otherwise.
#[derive(Clone)]
pub struct Method {
    pub name: String,
    pub scorer: Arc<dyn NeighborScorer>,
    pub cfg: SearchConfig,
}

impl Method {
    pub fn new(name: impl Into<String>, scorer: Arc<dyn NeighborScorer>, cfg: SearchConfig) -> Self {
        Method {
            name: name.into(),
            scorer,
            cfg,
        }
    }
}

impl std::fmt::Debug for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Method")
            .field("name", &self.name)
            .field("cfg", &self.cfg)
            .finish()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub query_id: usize,
    pub method: String,
    /// Best-so-far F when the step counter reached each checkpoint.
    pub checkpoints: BTreeMap<usize, f64>,
    pub sec_per_step_mean: f64,
    pub sec_per_step_sd: f64,
    /// Set when the run failed; checkpoints are then empty.
    pub error: Option<String>,
}

fn check_checkpoints(checkpoints: &[usize], methods: &[Method]) -> Result<()> {
    if checkpoints.is_empty() {
        return Err(Error::config("at least one checkpoint is required"));
    }
    if checkpoints.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::config("checkpoints must be strictly ascending"));
    }
    let last = *checkpoints.last().unwrap();
    for m in methods {
        if last > m.cfg.max_steps {
            return Err(Error::config(format!(
                "checkpoint {last} exceeds max_steps {} of method {}",
                m.cfg.max_steps, m.name
            )));
        }
    }
    Ok(())
}

/// Runs every method on every query. The start state of query `i` is drawn from
/// `(seed, i)` and shared by all methods; the search seed of query `i` is derived from
/// `(method cfg seed, i)`. Failed runs are reported in [`RunResult::error`].
/// Results are ordered by query, then method.
pub fn run_matrix(
    model: &GraphicalModel,
    queries: &[QuerySpec],
    methods: &[Method],
    checkpoints: &[usize],
    seed: u64,
) -> Result<Vec<RunResult>> {
    check_checkpoints(checkpoints, methods)?;
    let starts: Vec<Assignment> = queries
        .iter()
        .enumerate()
        .map(|(i, q)| random_assignment(model, q, &mut rng_from_seed(derive_seed(seed, i as u64))))
        .collect();
    let jobs: Vec<(usize, usize)> = (0..queries.len())
        .flat_map(|qi| (0..methods.len()).map(move |mi| (qi, mi)))
        .collect();
    Ok(jobs
        .into_par_iter()
        .map(|(qi, mi)| run_one(model, &queries[qi], &methods[mi], &starts[qi], qi, checkpoints))
        .collect())
}

fn run_one(
    model: &GraphicalModel,
    q: &QuerySpec,
    method: &Method,
    x0: &Assignment,
    query_id: usize,
    checkpoints: &[usize],
) -> RunResult {
    let mut cfg = method.cfg;
    cfg.seed = derive_seed(method.cfg.seed, query_id as u64);
    cfg.max_steps = *checkpoints.last().unwrap();
    let run = if cfg.gls.is_some() {
        gls_plus_search(model, q, method.scorer.as_ref(), &cfg, x0)
    } else {
        greedy_search(model, q, method.scorer.as_ref(), &cfg, x0)
    };
    let mut result = RunResult {
        query_id,
        method: method.name.clone(),
        checkpoints: BTreeMap::new(),
        sec_per_step_mean: f64::NAN,
        sec_per_step_sd: f64::NAN,
        error: None,
    };
    match run {
        Ok(traj) => {
            result.checkpoints = checkpoints.iter().map(|&s| (s, traj.best_f_at(s))).collect();
            let StepTiming {
                mean_seconds,
                sd_seconds,
                ..
            } = traj.timing;
            result.sec_per_step_mean = mean_seconds;
            result.sec_per_step_sd = sd_seconds;
        }
        Err(e) => {
            log::warn!("query {query_id}, method {}: {e}", method.name);
            result.error = Some(e.to_string());
        }
    }
    result
}

/// Results of one method, keyed by query id.
fn by_query(rs: &[RunResult], step: usize) -> Result<HashMap<usize, f64>> {
    let mut out = HashMap::new();
    for r in rs {
        let f = r.checkpoints.get(&step).copied().ok_or_else(|| {
            Error::Eval(format!(
                "query {} ({}) has no checkpoint at step {step}",
                r.query_id, r.method
            ))
        })?;
        if out.insert(r.query_id, f).is_some() {
            return Err(Error::Eval(format!(
                "query {} appears twice for {}",
                r.query_id, r.method
            )));
        }
    }
    Ok(out)
}

fn paired(a: &[RunResult], b: &[RunResult], step: usize) -> Result<Vec<(f64, f64)>> {
    let fa = by_query(a, step)?;
    let fb = by_query(b, step)?;
    if fa.len() != fb.len() || fa.keys().any(|k| !fb.contains_key(k)) {
        return Err(Error::Eval("result sets cover different queries".into()));
    }
    if fa.is_empty() {
        return Err(Error::Eval("no results to compare".into()));
    }
    let mut ids: Vec<usize> = fa.keys().copied().collect();
    ids.sort_unstable();
    Ok(ids.into_iter().map(|i| (fa[&i], fb[&i])).collect())
}

/// Mean over queries of win = 1, tie = 0.5, loss = 0 for `a` against `b`, times 100.
pub fn win_percentage(a: &[RunResult], b: &[RunResult], step: usize) -> Result<f64> {
    let pairs = paired(a, b, step)?;
    let score: f64 = pairs
        .iter()
        .map(|&(x, y)| {
            if x > y {
                1.0
            } else if x == y {
                0.5
            } else {
                0.0
            }
        })
        .sum();
    Ok(score / pairs.len() as f64 * 100.0)
}

/// Mean of `(F_treat - F_base) / |F_base| * 100` over queries. Queries whose baseline
/// is zero or non-finite, or whose treatment is non-finite, are skipped with a warning.
pub fn pct_improvement(base: &[RunResult], treat: &[RunResult], step: usize) -> Result<f64> {
    let pairs = paired(base, treat, step)?;
    let mut sum = 0.0;
    let mut n = 0usize;
    for (s, d) in pairs {
        if s == 0.0 || !s.is_finite() || !d.is_finite() {
            log::warn!("percentage improvement undefined for baseline {s}, treatment {d}; query excluded");
            continue;
        }
        sum += (d - s) / s.abs() * 100.0;
        n += 1;
    }
    if n == 0 {
        return Err(Error::Eval(
            "every query was excluded from the percentage improvement".into(),
        ));
    }
    Ok(sum / n as f64)
}

/// Results of one method, filtered by name.
pub fn results_for(results: &[RunResult], method: &str) -> Vec<RunResult> {
    results.iter().filter(|r| r.method == method).cloned().collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub lambda: f64,
    /// Mean and sample standard deviation of F per checkpoint, in checkpoint order.
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub checkpoints: Vec<usize>,
    pub rows: Vec<SweepRow>,
    /// Lambda with the largest mean F at the last checkpoint (first on ties).
    pub selected_lambda: f64,
}

/// Runs the combined scorer for every lambda under `cfg` and tabulates mean and sd of
/// the checkpointed F. Any failed run fails the sweep.
pub fn lambda_sweep(
    model: &GraphicalModel,
    queries: &[QuerySpec],
    neural: &NeuralScorer,
    lambdas: &[f64],
    cfg: &SearchConfig,
    checkpoints: &[usize],
    seed: u64,
) -> Result<SweepTable> {
    if lambdas.is_empty() {
        return Err(Error::config("at least one lambda is required"));
    }
    let methods = lambdas
        .iter()
        .enumerate()
        .map(|(i, &l)| {
            let scorer = CombinedScorer::new(l, neural.clone())?;
            Ok(Method::new(format!("lambda#{i}"), Arc::new(scorer), *cfg))
        })
        .collect::<Result<Vec<_>>>()?;
    let results = run_matrix(model, queries, &methods, checkpoints, seed)?;
    if let Some(r) = results.iter().find(|r| r.error.is_some()) {
        return Err(Error::Eval(format!(
            "query {} failed at lambda {}: {}",
            r.query_id,
            lambdas[methods.iter().position(|m| m.name == r.method).unwrap()],
            r.error.as_deref().unwrap_or_default()
        )));
    }
    let rows: Vec<SweepRow> = methods
        .iter()
        .zip(lambdas)
        .map(|(m, &lambda)| {
            let rs = results_for(&results, &m.name);
            let (mean, sd) = checkpoints
                .iter()
                .map(|s| mean_sd(rs.iter().map(|r| r.checkpoints[s])))
                .unzip();
            SweepRow { lambda, mean, sd }
        })
        .collect();
    let mut best = 0;
    for (i, r) in rows.iter().enumerate() {
        if r.mean.last() > rows[best].mean.last() {
            best = i;
        }
    }
    Ok(SweepTable {
        checkpoints: checkpoints.to_vec(),
        selected_lambda: rows[best].lambda,
        rows,
    })
}

/// Greedy with the plain log-likelihood scorer under `cfg`, the reference row of a sweep.
pub fn baseline_method(cfg: &SearchConfig) -> Method {
    Method::new("greedy", Arc::new(LlScorer), *cfg)
}

fn mean_sd(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let v: Vec<f64> = values.collect();
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if !mean.is_finite() {
        return (mean, f64::NAN);
    }
    let sd = if v.len() > 1 {
        (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, sd)
}

/// One line of the summary CSV: `a` compared against `b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method_a: String,
    pub method_b: String,
    pub step: usize,
    pub win_pct: f64,
    /// Improvement of `a` over baseline `b`; absent when every query was excluded.
    pub pct_impr: Option<f64>,
}

/// Compares every method against `baseline` at every checkpoint.
pub fn summarize(results: &[RunResult], baseline: &str, checkpoints: &[usize]) -> Result<Vec<SummaryRow>> {
    let base = results_for(results, baseline);
    if base.is_empty() {
        return Err(Error::Eval(format!("no results for baseline method {baseline}")));
    }
    let mut names: Vec<&str> = Vec::new();
    for r in results {
        if r.method != baseline && !names.contains(&r.method.as_str()) {
            names.push(&r.method);
        }
    }
    let mut rows = Vec::new();
    for name in names {
        let treat = results_for(results, name);
        for &step in checkpoints {
            rows.push(SummaryRow {
                method_a: name.to_string(),
                method_b: baseline.to_string(),
                step,
                win_pct: win_percentage(&treat, &base, step)?,
                pct_impr: pct_improvement(&base, &treat, step).ok(),
            });
        }
    }
    Ok(rows)
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// `query,method,step,F,sec_per_step`, one line per checkpoint. Failed runs are omitted.
pub fn write_results_csv<W: Write>(mut w: W, results: &[RunResult]) -> Result<()> {
    writeln!(w, "query,method,step,F,sec_per_step")?;
    for r in results {
        for (step, f) in &r.checkpoints {
            writeln!(
                w,
                "{},{},{},{},{}",
                r.query_id,
                csv_field(&r.method),
                step,
                f,
                r.sec_per_step_mean
            )?;
        }
    }
    Ok(())
}

/// `method_a,method_b,step,win_pct,pct_impr`; an undefined improvement is left empty.
pub fn write_summary_csv<W: Write>(mut w: W, rows: &[SummaryRow]) -> Result<()> {
    writeln!(w, "method_a,method_b,step,win_pct,pct_impr")?;
    for r in rows {
        let impr = r.pct_impr.map(|p| p.to_string()).unwrap_or_default();
        writeln!(
            w,
            "{},{},{},{},{}",
            csv_field(&r.method_a),
            csv_field(&r.method_b),
            r.step,
            r.win_pct,
            impr
        )?;
    }
    Ok(())
}

/// `lambda,step,mean_F,sd_F`.
pub fn write_sweep_csv<W: Write>(mut w: W, table: &SweepTable) -> Result<()> {
    writeln!(w, "lambda,step,mean_F,sd_F")?;
    for r in &table.rows {
        for (i, step) in table.checkpoints.iter().enumerate() {
            writeln!(w, "{},{},{},{}", r.lambda, step, r.mean[i], r.sd[i])?;
        }
    }
    Ok(())
}
