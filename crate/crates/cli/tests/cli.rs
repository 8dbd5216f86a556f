use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mpe_core::scorer::{ScorerWeights, WeightsMeta};
use mpe_core::uai::parse_uai;
use tempfile::TempDir;

// 6 binary/ternary variables on a chain with one triple
const MODEL: &str = "MARKOV
6
2 3 2 2 3 2
6
2 0 1
2 1 2
2 2 3
2 3 4
2 4 5
3 0 2 5

6
0.9 0.1 0.5
0.2 0.3 0.7

6
0.4 0.6
0.1 0.9
0.8 0.2

4
0.3 0.7
0.6 0.4

6
0.5 0.2 0.3
0.1 0.6 0.3

6
0.9 0.1
0.2 0.8
0.5 0.5

8
0.1 0.2 0.3 0.4
0.4 0.3 0.2 0.1
";

fn mpe(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mpe")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

struct Fixture {
    dir: TempDir,
}

impl Fixture {
    fn new() -> Self {
        let f = Fixture { dir: tempfile::tempdir().unwrap() };
        std::fs::write(f.path("m.uai"), MODEL).unwrap();
        std::fs::write(f.path("q.evid"), "1 1 2\n").unwrap();
        f
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn s(&self, name: &str) -> String {
        self.path(name).to_str().unwrap().to_string()
    }

    fn zero_weights(&self) -> String {
        let model = parse_uai(MODEL).unwrap();
        let w = ScorerWeights::zeros(WeightsMeta::for_model(&model, 8, 2, 1, 1, 8));
        w.write(self.path("w.mpew")).unwrap();
        self.s("w.mpew")
    }
}

fn read(p: &Path) -> String {
    std::fs::read_to_string(p).unwrap()
}

#[test]
fn validate_reports_counts() {
    let f = Fixture::new();
    let o = mpe(&["validate", &f.s("m.uai"), "--evid", &f.s("q.evid")]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    assert!(out.contains("type MARKOV\nvariables 6\nfactors 6\n"), "{out}");
    assert!(out.contains("max_arity 3"));
    assert!(out.contains("observed 1 query 5"));
}

#[test]
fn exit_codes() {
    let f = Fixture::new();
    assert_eq!(mpe(&["validate", &f.s("m.uai"), "--no-such-flag"]).status.code(), Some(1));
    assert_eq!(mpe(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(mpe(&["validate"]).status.code(), Some(1));
    assert_eq!(mpe(&["validate", &f.s("missing.uai")]).status.code(), Some(2));
    std::fs::write(f.path("bad.uai"), "MARKOV\n2\n2 2\n1\n1 0\n3\n0.1 0.2 0.3\n").unwrap();
    let o = mpe(&["validate", &f.s("bad.uai")]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line"));
    assert_eq!(mpe(&["drift", "--alpha", "0.4", "--h0", "3"]).status.code(), Some(1));
    assert_eq!(mpe(&["--help"]).status.code(), Some(0));
}

#[test]
fn drift_prints_bound_and_mean() {
    let o = mpe(&["drift", "--alpha", "0.75", "--h0", "20", "--trials", "100000"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!(out.contains("bound 40.0\n"), "{out}");
    let mean: f64 = out
        .lines()
        .find_map(|l| l.strip_prefix("mean_tau "))
        .unwrap()
        .parse()
        .unwrap();
    assert!((mean - 40.0).abs() / 40.0 < 0.05, "{mean}");
}

#[test]
fn solve_is_deterministic() {
    let f = Fixture::new();
    let run = |out: &str| {
        mpe(&[
            "solve",
            &f.s("m.uai"),
            "--evid",
            &f.s("q.evid"),
            "--method",
            "gls+",
            "--steps",
            "4000",
            "--seed",
            "7",
            "--out",
            &f.s(out),
        ])
    };
    let (a, b) = (run("a"), run("b"));
    assert_eq!(a.status.code(), Some(0), "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(a.stdout, b.stdout);
    for file in ["solution.mpe", "trajectory.jsonl"] {
        assert_eq!(read(&f.path("a").join(file)), read(&f.path("b").join(file)));
    }
    let out = stdout(&a);
    assert!(out.starts_with("F "));
    let sol = read(&f.path("a").join("solution.mpe"));
    let vals: Vec<&str> = sol.lines().nth(1).unwrap().split(' ').collect();
    assert_eq!(vals[0], "6");
    assert_eq!(vals[2], "2", "evidence must be kept");
    let manifest = read(&f.path("a").join("manifest.toml"));
    assert!(manifest.contains("command = \"solve\""));
    assert!(manifest.contains("method = \"gls+\""));
}

#[test]
fn solve_with_weights_and_csv() {
    let f = Fixture::new();
    let w = f.zero_weights();
    let csv = f.s("traj.csv");
    let o = mpe(&[
        "solve",
        &f.s("m.uai"),
        "--weights",
        &w,
        "--lambda",
        "0.5",
        "--steps",
        "50",
        "--csv",
        &csv,
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = read(Path::new(&csv));
    assert!(text.starts_with("step,kind,F,best_F\n0,start,"));
    assert_eq!(text.lines().count(), 52);
    assert_eq!(mpe(&["solve", &f.s("m.uai"), "--weights", &w]).status.code(), Some(1));

    std::fs::write(f.path("other.uai"), "MARKOV\n2\n2 2\n0\n").unwrap();
    let o = mpe(&["solve", &f.s("other.uai"), "--weights", &w, "--lambda", "0.5"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("vocabulary"));
}

#[test]
fn config_file_and_manifest_replay() {
    let f = Fixture::new();
    std::fs::write(
        f.path("run.toml"),
        format!("model = {:?}\nsteps = 300\nseed = 3\nmethod = \"gls+\"\n", f.s("m.uai")),
    )
    .unwrap();
    let a = mpe(&["solve", "--config", &f.s("run.toml"), "--out", &f.s("a")]);
    assert_eq!(a.status.code(), Some(0), "{}", String::from_utf8_lossy(&a.stderr));
    let direct = mpe(&[
        "solve",
        &f.s("m.uai"),
        "--steps",
        "300",
        "--seed",
        "3",
        "--method",
        "gls+",
    ]);
    assert_eq!(a.stdout, direct.stdout);
    // the flag wins over the file
    let b = mpe(&["solve", "--config", &f.s("run.toml"), "--seed", "4"]);
    let c = mpe(&["solve", &f.s("m.uai"), "--steps", "300", "--seed", "4", "--method", "gls+"]);
    assert_eq!(b.stdout, c.stdout);
    // replaying the manifest reproduces the run
    let r = mpe(&["solve", "--config", &f.path("a").join("manifest.toml").to_string_lossy()]);
    assert_eq!(r.status.code(), Some(0), "{}", String::from_utf8_lossy(&r.stderr));
    assert_eq!(r.stdout, a.stdout);

    std::fs::write(f.path("bad.toml"), "stepz = 3\n").unwrap();
    assert_eq!(mpe(&["solve", "--config", &f.s("bad.toml")]).status.code(), Some(1));
}

#[test]
fn datagen_writes_dataset() {
    let f = Fixture::new();
    let args = [
        "datagen",
        &f.s("m.uai"),
        "--stl",
        "5",
        "--queries",
        "3",
        "--budget-steps",
        "200",
        "--query-ratio",
        "0.5:0.9",
        "--workers",
        "2",
        "--out",
    ];
    let mut a = args.to_vec();
    let out_a = f.s("d");
    a.push(&out_a);
    let o = mpe(&a);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("records 18\n"));
    let (header, recs) =
        mpe_core::datagen::read_dataset(std::io::BufReader::new(std::fs::File::open(f.path("d/dataset.jsonl")).unwrap()))
            .unwrap();
    assert_eq!(header.cardinalities, vec![2, 3, 2, 2, 3, 2]);
    assert_eq!(recs.len(), 18);
    let mut b = args.to_vec();
    let out_b = f.s("e");
    b.push(&out_b);
    mpe(&b);
    assert_eq!(read(&f.path("d/dataset.jsonl")), read(&f.path("e/dataset.jsonl")));

    assert_eq!(
        mpe(&["datagen", &f.s("m.uai"), "--out", &f.s("x")]).status.code(),
        Some(1),
        "stl has no default"
    );
}

#[test]
fn eval_writes_tables_and_plots() {
    let f = Fixture::new();
    let w = f.zero_weights();
    let o = mpe(&[
        "eval",
        &f.s("m.uai"),
        "--queries",
        "4",
        "--checkpoints",
        "10,20,40",
        "--weights",
        &w,
        "--lambda",
        "0",
        "--out",
        &f.s("ev"),
        "--plots",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let summary = stdout(&o);
    assert!(summary.starts_with("method_a,method_b,step,win_pct,pct_impr\n"));
    // lambda 0 reproduces the baseline exactly
    assert!(summary.contains("greedy+nn@0,greedy,40,50,0"), "{summary}");
    let results = read(&f.path("ev/results.csv"));
    assert_eq!(results.lines().count(), 1 + 4 * 4 * 3);
    assert!(read(&f.path("ev/eval_curves.svg")).starts_with("<svg"));
    assert_eq!(read(&f.path("ev/summary.csv")), summary);
}

#[test]
fn sweep_selects_a_lambda() {
    let f = Fixture::new();
    let w = f.zero_weights();
    let o = mpe(&[
        "sweep",
        &f.s("m.uai"),
        "--weights",
        &w,
        "--lambda",
        "0,0.5,1",
        "--queries",
        "3",
        "--checkpoints",
        "10,30",
        "--out",
        &f.s("sw"),
        "--plots",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = stdout(&o);
    assert!(csv.starts_with("lambda,step,mean_F,sd_F\n"));
    assert_eq!(csv.lines().count(), 1 + 3 * 2);
    let sel: f64 = read(&f.path("sw/selected_lambda.txt")).trim().parse().unwrap();
    assert!([0.0, 0.5, 1.0].contains(&sel));
    assert!(f.path("sw/sweep_lambda.svg").exists());
    assert_eq!(mpe(&["sweep", &f.s("m.uai")]).status.code(), Some(1));
}

#[test]
fn drift_measures_solver_trajectory() {
    let f = Fixture::new();
    let o = mpe(&["solve", &f.s("m.uai"), "--steps", "30", "--restart", "never", "--out", &f.s("s")]);
    assert_eq!(o.status.code(), Some(0));
    let o = mpe(&[
        "drift",
        &f.s("m.uai"),
        "--trajectory",
        &f.path("s/trajectory.jsonl").to_string_lossy(),
        "--reference",
        &f.path("s/solution.mpe").to_string_lossy(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    assert!(out.contains("reducing ") && out.contains("alpha_hat "), "{out}");
}

#[test]
fn sample_is_seeded() {
    let f = Fixture::new();
    let a = mpe(&["sample", &f.s("m.uai"), "--samples", "5", "--seed", "1"]);
    let b = mpe(&["sample", &f.s("m.uai"), "--samples", "5", "--seed", "1"]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let out = stdout(&a);
    assert_eq!(out.lines().count(), 5);
    assert!(out.lines().all(|l| l.split(' ').count() == 6));
}

#[test]
fn inputs_are_not_modified() {
    let f = Fixture::new();
    let before = read(&f.path("m.uai"));
    mpe(&["solve", &f.s("m.uai"), "--evid", &f.s("q.evid"), "--steps", "20"]);
    assert_eq!(read(&f.path("m.uai")), before);
    assert_eq!(read(&f.path("q.evid")), "1 1 2\n");
}
