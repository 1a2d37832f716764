use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use bandit_unlearn::harness::{read_results_csv, Algorithm, SweepVar};
use bandit_unlearn::unlearner::{Mechanism, UnlearnOutcome};
use bandit_unlearn::{lcb_learn, ConfidenceLevel, DataModel, Dataset, LearnOutput, UnlearningRequest};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_bandit-unlearn"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Fitted {
    _dir: tempfile::TempDir,
    data: PathBuf,
    request: PathBuf,
    learned: PathBuf,
}

fn fitted(k: usize) -> Fitted {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    let request = dir.path().join("r.csv");
    let learned = dir.path().join("l.json");
    let k = k.to_string();
    ok(&["gen", "--n", "500", "--k", &k, "--out", s(&data), "--request-out", s(&request), "--seed", "4"]);
    ok(&["learn", "--data", s(&data), "--out", s(&learned)]);
    Fitted { _dir: dir, data, request, learned }
}

fn outcome(out: &Output) -> UnlearnOutcome {
    serde_json::from_slice(&out.stdout).unwrap()
}

#[test]
fn unlearn_matches_library_call() {
    let f = fitted(20);
    let out = ok(&[
        "unlearn", "--learned", s(&f.learned), "--data", s(&f.data), "--request", s(&f.request),
        "--mechanism", "gaussian", "--gamma", "0.5", "--seed", "9",
    ]);
    let dataset = Dataset::load_csv(&f.data, None, DataModel::FixedSample).unwrap();
    let request = UnlearningRequest::load_csv(&f.request, &dataset).unwrap();
    let learned = lcb_learn(&dataset, ConfidenceLevel::for_size(dataset.len())).unwrap();
    let from_file: LearnOutput = serde_json::from_str(&std::fs::read_to_string(&f.learned).unwrap()).unwrap();
    assert_eq!(learned, from_file);
    let direct = Mechanism::Gaussian
        .apply(&learned, &request, &request.deleted_rewards(&dataset), 0.5, 9)
        .unwrap();
    assert_eq!(outcome(&out), direct);
}

#[test]
fn same_seed_same_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for p in [&a, &b] {
        ok(&["gen", "--model", "distribution", "--cstar", "2", "--n", "300", "--out", s(p), "--seed", "3"]);
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn empty_request_keeps_choice() {
    let f = fitted(5);
    std::fs::write(&f.request, "index\n").unwrap();
    let learned: LearnOutput = serde_json::from_str(&std::fs::read_to_string(&f.learned).unwrap()).unwrap();
    for mech in ["adaptive", "gaussian", "rollback", "mixing"] {
        let out = ok(&[
            "unlearn", "--learned", s(&f.learned), "--data", s(&f.data), "--request", s(&f.request),
            "--mechanism", mech, "--gamma", "0.5",
        ]);
        assert_eq!(outcome(&out).chosen, learned.chosen, "{mech}");
    }
}

#[test]
fn gamma_overrides_budget_with_warning() {
    let f = fitted(20);
    let args = |extra: &[&'static str]| {
        let mut v = vec![
            "unlearn", "--learned", s(&f.learned), "--data", s(&f.data), "--request", s(&f.request),
            "--mechanism", "gaussian",
        ];
        v.extend_from_slice(extra);
        run(&v)
    };
    let both = args(&["--gamma", "0.3", "--epsilon", "1", "--delta", "0.05"]);
    let direct = args(&["--gamma", "0.3"]);
    assert!(both.status.success());
    assert!(String::from_utf8_lossy(&both.stderr).contains("warning"));
    assert_eq!(both.stdout, direct.stdout);
    assert_eq!(args(&[]).status.code(), Some(1));
}

#[test]
fn audit_exit_codes() {
    let pass = run(&["audit", "--fixture", "--epsilon", "1", "--delta", "0.05"]);
    assert_eq!(pass.status.code(), Some(0), "{}", String::from_utf8_lossy(&pass.stderr));
    let broken = run(&["audit", "--fixture", "--broken", "--epsilon", "1.5", "--delta", "0.05"]);
    assert_eq!(broken.status.code(), Some(2));
    let few = run(&["audit", "--fixture", "--epsilon", "1", "--delta", "0.05", "--trials", "100"]);
    assert_eq!(few.status.code(), Some(1));
}

#[test]
fn audit_rollback_from_files() {
    let f = fitted(20);
    let out = run(&[
        "audit", "--data", s(&f.data), "--request", s(&f.request), "--mechanism", "rollback",
        "--epsilon", "0.1", "--delta", "0.01", "--trials", "10000",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["freq_a"], v["freq_b"]);
}

#[test]
fn malformed_dataset_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("bad.csv");
    std::fs::write(&data, "index,arm,reward\n0,0,1\n1,1,oops\n").unwrap();
    let out = run(&["learn", "--data", s(&data), "--out", s(&dir.path().join("l.json"))]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("bad.csv:3"), "{err}");
}

#[test]
fn bounds_curve_csv() {
    let out = ok(&[
        "bounds", "--n", "3000", "--n-a0", "600", "--n-star", "600", "--k", "80", "--vary", "gamma",
        "--grid", "0.1,0.2", "--kinds", "upper-fixed-single",
    ]);
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "bound,param,value");
    assert_eq!(lines.len(), 3);
    let v: f64 = lines[2].rsplit(',').next().unwrap().parse().unwrap();
    assert!((v - 0.19599032772017208).abs() < 1e-12);
    assert_eq!(run(&["bounds", "--vary", "n", "--grid", "1", "--kinds", "nope"]).status.code(), Some(1));
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

#[test]
fn experiment_near_uniform() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["experiment", "--config", s(&configs_dir().join("near_uniform.json")), "--out", s(dir.path())]);
    let csv = std::fs::read_to_string(dir.path().join("results.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "model,case,vary,value,algorithm,mean_subopt,trials");
    let table = read_results_csv(&dir.path().join("results.csv")).unwrap();
    let mean = |n: f64, alg| table.get("hard", SweepVar::N, n, alg).unwrap().mean_subopt;
    assert!(mean(900.0, Algorithm::Imitation) <= 0.002);
    for (n, target) in [(900.0, 0.0120), (1000.0, 0.0115), (1100.0, 0.0110)] {
        assert!((mean(n, Algorithm::Adaptive) - target).abs() <= 0.01);
        assert!(mean(n, Algorithm::Imitation) <= 0.0005 || n == 900.0);
    }
    for n in [1200.0, 1300.0, 1400.0, 1500.0] {
        assert!(mean(n, Algorithm::Adaptive) <= 0.0005);
        assert!(mean(n, Algorithm::Imitation) <= 0.0005);
    }
    assert!(dir.path().join("distribution_hard_n.svg").exists());
}

#[test]
fn plot_rerenders_from_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(
        &cfg,
        r#"{"model":"fixed-sample","case":"easy","num_datasets":4,"runs_per_config":1,
            "sweep":{"vary":"n","grid":[500,800]}}"#,
    )
    .unwrap();
    let first = dir.path().join("first");
    ok(&["experiment", "--config", s(&cfg), "--out", s(&first)]);
    let second = dir.path().join("second");
    ok(&["plot", "--results", s(&first.join("results.csv")), "--out", s(&second)]);
    let svg = |d: &Path| std::fs::read_to_string(d.join("fixed-sample_easy_n.svg")).unwrap();
    assert_eq!(svg(&first), svg(&second));
}

#[test]
fn empty_sweep_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"model":"fixed-sample","case":"hard","sweep":{"vary":"n","grid":[]}}"#).unwrap();
    let out_dir = dir.path().join("out");
    assert_eq!(run(&["experiment", "--config", s(&cfg), "--out", s(&out_dir)]).status.code(), Some(1));
    assert!(!out_dir.join("results.csv").exists());
}
