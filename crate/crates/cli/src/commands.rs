use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use mpe_core::datagen::{collect_dataset, generate_query, DatagenConfig, DatasetWriter, QueryRatio, SolverBudget};
use mpe_core::drift::{measure_alpha, simulate_drift, DriftConfig};
use mpe_core::eval::{
    lambda_sweep, run_matrix, summarize, write_results_csv, write_summary_csv, write_sweep_csv, Method, RunResult,
};
use mpe_core::gibbs::{gibbs_sample, GibbsConfig};
use mpe_core::rng::{derive_seed, random_assignment, rng_from_seed};
use mpe_core::scorer::{CombinedScorer, LlScorer, NeighborScorer, NeuralScorer, ScorerWeights};
use mpe_core::search::{gls_plus_search, greedy_search, RestartPolicy, SearchConfig, Trajectory, Transition};
use mpe_core::uai::{parse_solution, parse_uai_with_preamble, query_from_evid, write_solution};
use mpe_core::{GraphicalModel, QuerySpec};
use rand::Rng;

use crate::params::{write_manifest, MethodArg, Params, RatioArg, RestartArg};
use crate::plot::{line_chart, Series};
use crate::CliError;

pub const DEFAULT_STEPS: usize = 4000;
pub const DEFAULT_CHECKPOINTS: [usize; 4] = [500, 1000, 2000, 4000];
pub const DEFAULT_EVAL_QUERIES: usize = 100;
pub const DEFAULT_TRIALS: usize = 100_000;

pub struct Ctx<'a> {
    pub command: &'a str,
    pub config: Option<&'a Path>,
}

impl Ctx<'_> {
    /// Writes the manifest if an output directory was requested.
    fn start(&self, p: &Params) -> Result<(), CliError> {
        if let Some(out) = &p.out {
            write_manifest(out, self.command, self.config, p)?;
        }
        Ok(())
    }
}

fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Data(format!("cannot create {}: {e}", path.display())))
}

fn write_file(path: &Path, body: impl FnOnce(&mut BufWriter<File>) -> mpe_core::Result<()>) -> Result<(), CliError> {
    let mut w = create(path)?;
    body(&mut w)?;
    w.flush()
        .map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))
}

fn load_model(path: &Path) -> Result<GraphicalModel, CliError> {
    let (model, _) =
        parse_uai_with_preamble(&read_text(path)?).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    Ok(model)
}

fn load_query(model: &GraphicalModel, evid: &Path) -> Result<QuerySpec, CliError> {
    query_from_evid(model, &read_text(evid)?).map_err(|e| CliError::Data(format!("{}: {e}", evid.display())))
}

fn single_query(model: &GraphicalModel, p: &Params) -> Result<QuerySpec, CliError> {
    match p.evid.as_slice() {
        [] => Ok(QuerySpec::all_query(model)),
        [e] => load_query(model, e),
        _ => Err(CliError::Usage("this command takes at most one evidence file".into())),
    }
}

fn load_weights(path: &Path, model: &GraphicalModel) -> Result<NeuralScorer, CliError> {
    let w = ScorerWeights::read(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    w.check_model(model)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    Ok(NeuralScorer::new(w)?)
}

fn query_ratio(r: RatioArg) -> QueryRatio {
    if r.0 == r.1 {
        QueryRatio::Fixed(r.0)
    } else {
        QueryRatio::Range(r.0, r.1)
    }
}

fn pool(p: &Params) -> Result<rayon::ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(p.workers.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Data(format!("cannot start worker pool: {e}")))
}

fn restart_policy(p: &Params, method: MethodArg) -> RestartPolicy {
    match (p.restart_interval, p.restart, method) {
        (Some(k), _, _) => RestartPolicy::FixedInterval(k),
        (None, Some(RestartArg::Local), _) => RestartPolicy::OnLocalOptimum,
        (None, Some(RestartArg::Never), _) => RestartPolicy::Never,
        (None, None, MethodArg::Greedy) => RestartPolicy::OnLocalOptimum,
        (None, None, MethodArg::GlsPlus) => RestartPolicy::Never,
    }
}

fn search_config(p: &Params, method: MethodArg, steps: usize, seed: u64) -> SearchConfig {
    let base = match method {
        MethodArg::Greedy => SearchConfig::greedy(steps, seed),
        MethodArg::GlsPlus => SearchConfig::gls(steps, seed),
    };
    base.with_restarts(restart_policy(p, method))
}

fn method_name(m: MethodArg) -> &'static str {
    match m {
        MethodArg::Greedy => "greedy",
        MethodArg::GlsPlus => "gls+",
    }
}

/// Debug formatting keeps a trailing `.0` on integral values.
fn num(v: f64) -> String {
    format!("{v:?}")
}

pub fn validate(ctx: &Ctx, p: Params) -> Result<(), CliError> {
    ctx.start(&p)?;
    let path = p.model()?;
    let (model, preamble) =
        parse_uai_with_preamble(&read_text(path)?).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let mut out = String::new();
    let _ = writeln!(out, "type {}", format!("{preamble:?}").to_uppercase());
    let _ = writeln!(out, "variables {}", model.num_vars());
    let _ = writeln!(out, "factors {}", model.factors().len());
    let _ = writeln!(
        out,
        "max_cardinality {}",
        model.cardinalities().iter().max().unwrap_or(&0)
    );
    let _ = writeln!(
        out,
        "max_arity {}",
        model.factors().iter().map(|f| f.scope().len()).max().unwrap_or(0)
    );
    let zeros: usize = model
        .factors()
        .iter()
        .map(|f| f.log_table().iter().filter(|v| **v == f64::NEG_INFINITY).count())
        .sum();
    let _ = writeln!(out, "zero_entries {zeros}");
    let _ = writeln!(out, "hash {}", model.content_hash());
    for e in &p.evid {
        let q = load_query(&model, e)?;
        let _ = writeln!(
            out,
            "evidence {} observed {} query {}",
            e.display(),
            q.evidence().len(),
            q.query_vars().len()
        );
    }
    if let Some(w) = &p.weights {
        let n = load_weights(w, &model)?;
        let m = n.weights().meta();
        let _ = writeln!(
            out,
            "weights {} d_model {} heads {} ok",
            w.display(),
            m.d_model,
            m.n_heads
        );
    }
    print!("{out}");
    Ok(())
}

pub fn sample(ctx: &Ctx, mut p: Params) -> Result<(), CliError> {
    let d = GibbsConfig::default();
    let n = *p.samples.get_or_insert(10);
    let cfg = GibbsConfig {
        burn_in: *p.burn_in.get_or_insert(d.burn_in),
        thin: *p.thin.get_or_insert(d.thin),
        seed: *p.seed.get_or_insert(0),
    };
    ctx.start(&p)?;
    let model = load_model(p.model()?)?;
    let mut text = String::new();
    for x in gibbs_sample(&model, &cfg, n)? {
        let vals: Vec<String> = x.values().iter().map(|v| v.to_string()).collect();
        let _ = writeln!(text, "{}", vals.join(" "));
    }
    if let Some(out) = &p.out {
        std::fs::write(out.join("samples.txt"), &text).map_err(|e| CliError::Data(e.to_string()))?;
    }
    print!("{text}");
    Ok(())
}

pub fn solve(ctx: &Ctx, mut p: Params) -> Result<(), CliError> {
    let method = *p.method.get_or_insert(MethodArg::Greedy);
    let steps = *p.steps.get_or_insert(DEFAULT_STEPS);
    let seed = *p.seed.get_or_insert(0);
    if p.lambda.len() > 1 {
        return Err(CliError::Usage("solve takes a single --lambda".into()));
    }
    if p.weights.is_some() != !p.lambda.is_empty() {
        return Err(CliError::Usage("--weights and --lambda must be given together".into()));
    }
    ctx.start(&p)?;
    let model = load_model(p.model()?)?;
    let q = single_query(&model, &p)?;
    let scorer: Box<dyn NeighborScorer> = match &p.weights {
        Some(w) => Box::new(CombinedScorer::new(p.lambda[0], load_weights(w, &model)?)?),
        None => Box::new(LlScorer),
    };
    let cfg = search_config(&p, method, steps, derive_seed(seed, 1));
    let x0 = random_assignment(&model, &q, &mut rng_from_seed(derive_seed(seed, 0)));
    let traj = match method {
        MethodArg::Greedy => greedy_search(&model, &q, scorer.as_ref(), &cfg, &x0)?,
        MethodArg::GlsPlus => gls_plus_search(&model, &q, scorer.as_ref(), &cfg, &x0)?,
    };
    log::info!(
        "{} steps, {:.3e} s/step (sd {:.3e})",
        traj.steps(),
        traj.timing.mean_seconds,
        traj.timing.sd_seconds
    );
    let solution = write_solution(traj.best());
    print!(
        "F {}\nrestarts {}\n{solution}",
        num(traj.best_f()),
        traj.restarts().len()
    );
    if let Some(out) = &p.out {
        std::fs::write(out.join("solution.mpe"), &solution).map_err(|e| CliError::Data(e.to_string()))?;
        write_file(&out.join("trajectory.jsonl"), |w| traj.write_jsonl(w, false))?;
    }
    if let Some(csv) = &p.csv {
        write_file(csv, |w| write_trajectory_csv(w, &traj))?;
    }
    Ok(())
}

fn write_trajectory_csv<W: Write>(w: &mut W, traj: &Trajectory) -> mpe_core::Result<()> {
    writeln!(w, "step,kind,F,best_F")?;
    let mut res = Ok(());
    traj.for_each_state(|s, _| {
        let kind = match s.transition {
            Transition::Start => "start",
            Transition::Flip(_) => "flip",
            Transition::GuidedFlip(_) => "guided",
            Transition::Restart => "restart",
        };
        if res.is_ok() {
            res = writeln!(w, "{},{kind},{},{}", s.step, s.f, traj.best_f_at(s.step));
        }
    });
    Ok(res?)
}

pub fn datagen(ctx: &Ctx, mut p: Params) -> Result<(), CliError> {
    let stl = p
        .stl
        .ok_or_else(|| CliError::Usage("datagen needs --stl (states per query trajectory)".into()))?;
    let out = p
        .out
        .clone()
        .ok_or_else(|| CliError::Usage("datagen needs --out".into()))?;
    let mut cfg = DatagenConfig::new(stl);
    cfg.budget = match (p.budget_seconds, p.budget_steps) {
        (Some(_), Some(_)) => return Err(CliError::Usage("give either budget_seconds or budget_steps".into())),
        (None, Some(s)) => SolverBudget::Steps(s),
        (s, None) => SolverBudget::Seconds(*p.budget_seconds.get_or_insert(s.unwrap_or(300.0))),
    };
    let ratio = *p.query_ratio.get_or_insert(RatioArg(0.8, 0.95));
    cfg.qr = query_ratio(ratio);
    cfg.n = *p.queries.get_or_insert(cfg.n);
    cfg.seed = *p.seed.get_or_insert(0);
    cfg.workers = p.workers;
    cfg.gibbs.burn_in = *p.burn_in.get_or_insert(cfg.gibbs.burn_in);
    cfg.gibbs.thin = *p.thin.get_or_insert(cfg.gibbs.thin);
    cfg.validate()?;
    ctx.start(&p)?;
    let model = load_model(p.model()?)?;
    let path = out.join("dataset.jsonl");
    let mut writer = DatasetWriter::new(create(&path)?, &model)?;
    let summary = collect_dataset(&model, &cfg, |r| writer.write(r))?;
    writer
        .into_inner()?
        .flush()
        .map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))?;
    println!(
        "queries_ok {}\nqueries_failed {}\nrecords {}\ndataset {}",
        summary.queries_ok,
        summary.queries_failed,
        summary.records,
        path.display()
    );
    Ok(())
}

pub fn drift(ctx: &Ctx, mut p: Params) -> Result<(), CliError> {
    if let Some(traj_path) = p.trajectory.clone() {
        ctx.start(&p)?;
        let model = load_model(p.model()?)?;
        let q = single_query(&model, &p)?;
        let reference_path = p
            .reference
            .as_deref()
            .ok_or_else(|| CliError::Usage("--reference is required".into()))?;
        let reference = parse_solution(&read_text(reference_path)?)
            .map_err(|e| CliError::Data(format!("{}: {e}", reference_path.display())))?;
        model.check_assignment(&reference)?;
        let file =
            File::open(&traj_path).map_err(|e| CliError::Data(format!("cannot read {}: {e}", traj_path.display())))?;
        let traj = Trajectory::read_jsonl(BufReader::new(file))
            .map_err(|e| CliError::Data(format!("{}: {e}", traj_path.display())))?;
        let a = measure_alpha(&traj, &reference, &q)?;
        let alpha = a.alpha_hat.map(num).unwrap_or_else(|| "undefined".into());
        println!(
            "reducing {}\nnonreducing {}\nalpha_hat {alpha}",
            a.reducing, a.nonreducing
        );
        return Ok(());
    }
    let cfg = DriftConfig {
        h0: p
            .h0
            .ok_or_else(|| CliError::Usage("drift needs --h0 (or --trajectory)".into()))?,
        alpha: p
            .alpha
            .ok_or_else(|| CliError::Usage("drift needs --alpha (or --trajectory)".into()))?,
        trials: *p.trials.get_or_insert(DEFAULT_TRIALS),
        seed: *p.seed.get_or_insert(0),
    };
    cfg.validate()?;
    ctx.start(&p)?;
    let r = pool(&p)?.install(|| simulate_drift(&cfg))?;
    println!(
        "h0 {}\nalpha {}\ntrials {}\nbound {}\nmean_tau {}\nrel_error {:.6}\np50 {}\np90 {}\np99 {}",
        cfg.h0,
        num(cfg.alpha),
        cfg.trials,
        num(r.bound),
        num(r.mean_tau),
        (r.mean_tau - r.bound).abs() / r.bound,
        r.p50,
        r.p90,
        r.p99
    );
    if let Some(csv) = &p.csv {
        write_file(csv, |w| {
            writeln!(w, "trial,tau")?;
            for (i, t) in r.taus.iter().enumerate() {
                writeln!(w, "{i},{t}")?;
            }
            Ok(())
        })?;
    }
    if p.plots() {
        let out = plot_dir(&p)?;
        let mut sorted = r.taus.clone();
        sorted.sort_unstable();
        let stride = (sorted.len() / 500).max(1);
        let points = sorted
            .iter()
            .enumerate()
            .filter(|(i, _)| i % stride == 0 || *i + 1 == sorted.len())
            .map(|(i, &t)| (t as f64, (i + 1) as f64 / sorted.len() as f64))
            .collect();
        let svg = line_chart(
            &format!("hitting time, h0 = {}, alpha = {}", cfg.h0, cfg.alpha),
            "tau",
            "empirical CDF",
            &[Series {
                label: format!("bound {:.1}", r.bound),
                points,
            }],
        );
        save_svg(&out.join("drift_cdf.svg"), &svg)?;
    }
    Ok(())
}

fn plot_dir(p: &Params) -> Result<PathBuf, CliError> {
    p.out
        .clone()
        .ok_or_else(|| CliError::Usage("--plots needs --out".into()))
}

fn save_svg(path: &Path, svg: &str) -> Result<(), CliError> {
    std::fs::write(path, svg).map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))
}

fn checkpoints(p: &mut Params) -> Result<Vec<usize>, CliError> {
    if p.checkpoints.is_empty() {
        p.checkpoints = match p.steps {
            Some(s) => vec![s],
            None => DEFAULT_CHECKPOINTS.to_vec(),
        };
    }
    let cps = p.checkpoints.clone();
    if cps[0] == 0 || cps.windows(2).any(|w| w[0] >= w[1]) {
        return Err(CliError::Usage(
            "checkpoints must be positive and strictly increasing".into(),
        ));
    }
    Ok(cps)
}

/// Evidence files if given, otherwise `--queries` queries sampled from the model.
fn query_set(model: &GraphicalModel, p: &mut Params) -> Result<Vec<QuerySpec>, CliError> {
    if !p.evid.is_empty() {
        return p.evid.iter().map(|e| load_query(model, e)).collect();
    }
    let n = *p.queries.get_or_insert(DEFAULT_EVAL_QUERIES);
    let qr = query_ratio(*p.query_ratio.get_or_insert(RatioArg(0.8, 0.95)));
    qr.validate()?;
    let seed = derive_seed(p.seed(), u64::MAX);
    (0..n)
        .map(|i| {
            let s = derive_seed(seed, i as u64);
            let r = match qr {
                QueryRatio::Fixed(r) => r,
                QueryRatio::Range(lo, hi) => rng_from_seed(s).random_range(lo..hi),
            };
            Ok(generate_query(model, r, derive_seed(s, 1))?.0)
        })
        .collect()
}

/// Drops every query on which some method failed, so the comparisons stay paired.
fn complete_queries(results: Vec<RunResult>) -> Vec<RunResult> {
    let failed: std::collections::BTreeSet<usize> = results
        .iter()
        .filter(|r| r.error.is_some())
        .map(|r| r.query_id)
        .collect();
    if !failed.is_empty() {
        log::warn!("{} queries excluded from the summary after failed runs", failed.len());
    }
    results.into_iter().filter(|r| !failed.contains(&r.query_id)).collect()
}

pub fn eval(ctx: &Ctx, mut p: Params) -> Result<(), CliError> {
    p.seed.get_or_insert(0);
    let cps = checkpoints(&mut p)?;
    if !p.lambda.is_empty() && p.weights.is_none() {
        return Err(CliError::Usage("--lambda needs --weights".into()));
    }
    let model = load_model(p.model()?)?;
    let queries = query_set(&model, &mut p)?;
    let steps = *cps.last().unwrap();
    let mut methods = vec![
        Method::new(
            "greedy",
            Arc::new(LlScorer),
            search_config(&p, MethodArg::Greedy, steps, p.seed()),
        ),
        Method::new(
            "gls+",
            Arc::new(LlScorer),
            search_config(&p, MethodArg::GlsPlus, steps, p.seed()),
        ),
    ];
    if let Some(w) = &p.weights {
        if p.lambda.is_empty() {
            return Err(CliError::Usage("--weights needs --lambda".into()));
        }
        let neural = load_weights(w, &model)?;
        for &l in &p.lambda {
            for m in [MethodArg::Greedy, MethodArg::GlsPlus] {
                let scorer = CombinedScorer::new(l, neural.clone())?;
                let name = format!("{}+nn@{l}", method_name(m));
                methods.push(Method::new(
                    name,
                    Arc::new(scorer),
                    search_config(&p, m, steps, p.seed()),
                ));
            }
        }
    }
    ctx.start(&p)?;
    let results = pool(&p)?.install(|| run_matrix(&model, &queries, &methods, &cps, p.seed()))?;
    let ok = complete_queries(results.clone());
    if ok.is_empty() {
        return Err(CliError::Data("every query had a failed run".into()));
    }
    let rows = summarize(&ok, "greedy", &cps)?;
    let mut stdout = std::io::stdout().lock();
    write_summary_csv(&mut stdout, &rows)?;
    if let Some(out) = &p.out {
        write_file(&out.join("results.csv"), |w| write_results_csv(w, &results))?;
        write_file(&out.join("summary.csv"), |w| write_summary_csv(w, &rows))?;
    }
    if let Some(csv) = &p.csv {
        write_file(csv, |w| write_results_csv(w, &results))?;
    }
    if p.plots() {
        let out = plot_dir(&p)?;
        let series = methods
            .iter()
            .map(|m| {
                let rs: Vec<&RunResult> = ok.iter().filter(|r| r.method == m.name).collect();
                let points = cps
                    .iter()
                    .map(|s| {
                        (
                            *s as f64,
                            rs.iter().map(|r| r.checkpoints[s]).sum::<f64>() / rs.len() as f64,
                        )
                    })
                    .collect();
                Series {
                    label: m.name.clone(),
                    points,
                }
            })
            .collect::<Vec<_>>();
        save_svg(
            &out.join("eval_curves.svg"),
            &line_chart("mean incumbent F", "step", "F", &series),
        )?;
    }
    Ok(())
}

pub fn sweep(ctx: &Ctx, mut p: Params) -> Result<(), CliError> {
    p.seed.get_or_insert(0);
    let method = *p.method.get_or_insert(MethodArg::Greedy);
    let cps = checkpoints(&mut p)?;
    if p.lambda.is_empty() {
        p.lambda = (0..=10).map(|i| i as f64 / 10.0).collect();
    }
    let weights = p
        .weights
        .clone()
        .ok_or_else(|| CliError::Usage("sweep needs --weights".into()))?;
    let model = load_model(p.model()?)?;
    let queries = query_set(&model, &mut p)?;
    let neural = load_weights(&weights, &model)?;
    let cfg = search_config(&p, method, *cps.last().unwrap(), p.seed());
    ctx.start(&p)?;
    let table = pool(&p)?.install(|| lambda_sweep(&model, &queries, &neural, &p.lambda, &cfg, &cps, p.seed()))?;
    log::info!("selected lambda {}", table.selected_lambda);
    let mut stdout = std::io::stdout().lock();
    write_sweep_csv(&mut stdout, &table)?;
    if let Some(out) = &p.out {
        write_file(&out.join("sweep.csv"), |w| write_sweep_csv(w, &table))?;
        std::fs::write(out.join("selected_lambda.txt"), format!("{}\n", table.selected_lambda))
            .map_err(|e| CliError::Data(e.to_string()))?;
    }
    if let Some(csv) = &p.csv {
        write_file(csv, |w| write_sweep_csv(w, &table))?;
    }
    if p.plots() {
        let out = plot_dir(&p)?;
        let curves: Vec<Series> = table
            .rows
            .iter()
            .map(|r| Series {
                label: format!("lambda {}", r.lambda),
                points: cps.iter().zip(&r.mean).map(|(s, m)| (*s as f64, *m)).collect(),
            })
            .collect();
        save_svg(
            &out.join("sweep_curves.svg"),
            &line_chart("mean incumbent F", "step", "F", &curves),
        )?;
        let last = Series {
            label: format!("step {}", cps.last().unwrap()),
            points: table.rows.iter().map(|r| (r.lambda, *r.mean.last().unwrap())).collect(),
        };
        save_svg(
            &out.join("sweep_lambda.svg"),
            &line_chart("mean F at last checkpoint", "lambda", "F", &[last]),
        )?;
    }
    Ok(())
}
