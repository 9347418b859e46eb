use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_branchsim"))
}

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json_file(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

fn topology(cfg: &str, out: &Path) -> PathBuf {
    let o = run(&["topology", "--config", s(&config(cfg)), "--out", s(out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    out.join("topology.json")
}

#[test]
fn topology_is_deterministic_and_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let a = topology("branching.toml", &dir.path().join("a"));
    let b = topology("branching.toml", &dir.path().join("b"));
    let text = fs::read_to_string(&a).unwrap();
    assert_eq!(text, fs::read_to_string(&b).unwrap());
    let loaded = branchsim::OrbitTopology::from_json(&text).unwrap();
    assert_eq!(loaded.to_json(), text);
    let manifest = json_file(&dir.path().join("a/topology.manifest.json"));
    assert_eq!(manifest["subcommand"], "topology");
    assert_eq!(manifest["seed"], 0);
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "topology",
        "--config",
        s(&config("branching.toml")),
        "--seed",
        "5",
        "--out",
        s(dir.path()),
    ]);
    assert!(o.status.success());
    let manifest = json_file(&dir.path().join("topology.manifest.json"));
    assert_eq!(manifest["seed"], 5);
    assert_eq!(manifest["params"]["seed"], 5);
}

#[test]
fn missing_key_exits_2_naming_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "K = 8\nQ_size = 4\nI = 4\nT = 2\nalpha = 1.5\nL0 = 1.0\nd_min = 2\nseed = 0\n")
        .unwrap();
    let o = run(&["topology", "--config", s(&cfg), "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("`N`"));
}

#[test]
fn evolve_two_branchings_gives_four_rows() {
    let dir = tempfile::tempdir().unwrap();
    let topo = topology("two_branch.toml", dir.path());
    let o = run(&["evolve", "--topology", s(&topo), "--T", "4", "--out", s(dir.path())]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(dir.path().join("branches.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some(branchsim::evolution::CSV_HEADER));
    assert_eq!(lines.count(), 4);
    let summary = json_file(&dir.path().join("evolve_summary.json"));
    assert_eq!(summary["norm"], 1.0);
    assert_eq!(summary["norm_exact"], true);
    assert_eq!(summary["closed_form_agreement"], true);
}

#[test]
fn closed_form_agrees_on_shipped_configs() {
    for (cfg, steps) in [("micro.toml", "2"), ("two_branch.toml", "4"), ("branching.toml", "40")] {
        let dir = tempfile::tempdir().unwrap();
        let topo = topology(cfg, dir.path());
        let o = run(&["evolve", "--topology", s(&topo), "--T", steps, "--out", s(dir.path())]);
        assert!(o.status.success(), "{cfg}");
        let summary = json_file(&dir.path().join("evolve_summary.json"));
        assert_eq!(summary["closed_form_agreement"], true, "{cfg}");
    }
}

#[test]
fn evolve_branch_limit_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let topo = topology("two_branch.toml", dir.path());
    let o = run(&[
        "evolve",
        "--topology",
        s(&topo),
        "--T",
        "4",
        "--branch-limit",
        "2",
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("branch limit"));
}

#[test]
fn evolve_lifetime_at_age_levels_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let topo = topology("micro.toml", dir.path());
    let o = run(&["evolve", "--topology", s(&topo), "--T", "3", "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn verify_micro_passes() {
    let dir = tempfile::tempdir().unwrap();
    let topo = topology("micro.toml", dir.path());
    let o = run(&["verify", "--topology", s(&topo), "--out", s(dir.path())]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report = json_file(&dir.path().join("oracle_report.json"));
    assert!(report["max_amp_err"].as_f64().unwrap() < 1e-12);
    assert_eq!(report["structure_match"], true);
    for key in ["dim", "steps", "max_amp_err", "gram_err", "structure_match"] {
        assert!(report.get(key).is_some(), "{key}");
    }
}

#[test]
fn verify_dimension_cap_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let topo = topology("micro.toml", dir.path());
    let o = run(&["verify", "--topology", s(&topo), "--dim-cap", "100", "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn stats_zero_trials_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "stats", "--sigma", "0.02", "--T", "100", "--alpha", "1.5", "--L0", "10", "--trials", "0",
        "--out", s(dir.path()),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn stats_writes_summary_and_trials() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "stats", "--sigma", "0.02", "--T", "100", "--alpha", "1.5", "--L0", "10", "--trials",
        "1000", "--seed", "3", "--out", s(dir.path()),
    ]);
    assert!(o.status.success());
    let csv = fs::read_to_string(dir.path().join("trials.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("Y,R1,R2,D,log2E"));
    assert_eq!(csv.lines().count(), 1001);
    let summary = json_file(&dir.path().join("stats_summary.json"));
    assert_eq!(summary["trials"], 1000);
    assert!(summary["log2E"]["median"].is_number());
}

#[test]
fn born_quarter_over_eight() {
    let o = run(&["born", "--a-sq", "0.25", "--n", "8"]);
    assert!(o.status.success());
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["m"], 2);
    let c = v["moduli"][0].as_f64().unwrap();
    assert!((c - 8f64.sqrt().recip()).abs() < 1e-12);
}

#[test]
fn born_brute_force_agrees() {
    let o = run(&["born", "--a-sq", "0.5", "--n", "4", "--brute-force"]);
    assert!(o.status.success());
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["agree"], true);
    assert_eq!(v["brute_force"]["m"], 2);
}

#[test]
fn born_non_integral_exits_1_with_candidates() {
    let o = run(&["born", "--a-sq", "0.3", "--n", "4"]);
    assert_eq!(o.status.code(), Some(1));
    let v: Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(v["detail"]["candidates"].as_array().unwrap().len(), 2);
}

/// topology -> evolve -> verify -> stats at a given thread count; returns
/// every non-manifest output file.
fn pipeline(dir: &Path, threads: &str) -> Vec<(String, Vec<u8>)> {
    let args = |extra: &[&str]| {
        let mut v: Vec<String> = extra.iter().map(|x| x.to_string()).collect();
        v.extend(["--threads".into(), threads.into(), "--out".into(), s(dir).into()]);
        v
    };
    let topo = dir.join("topology.json");
    let steps = [
        args(&["topology", "--config", s(&config("micro.toml"))]),
        args(&["verify", "--topology", s(&topo)]),
        args(&["topology", "--config", s(&config("branching.toml"))]),
        args(&["evolve", "--topology", s(&topo), "--T", "40", "--verbose"]),
        args(&[
            "stats", "--sigma", "0.02", "--T", "100", "--alpha", "1.5", "--L0", "10", "--trials",
            "2000", "--seed", "11",
        ]),
    ];
    for a in &steps {
        let o = bin().args(a).output().unwrap();
        assert!(o.status.success(), "{a:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| !p.to_string_lossy().ends_with(".manifest.json"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

#[test]
fn pipeline_byte_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let reference = pipeline(&dir.path().join("t1"), "1");
    assert_eq!(reference.len(), 6);
    for t in ["2", "8"] {
        assert_eq!(pipeline(&dir.path().join(format!("t{t}")), t), reference, "threads {t}");
    }
}
