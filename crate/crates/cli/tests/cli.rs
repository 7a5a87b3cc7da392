use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_spectralens"));
    c.env_remove("SPECTRALENS_FMNIST").env("SPECTRALENS_THREADS", "1");
    c
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().expect("spawn spectralens")
}

fn listing(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    v.sort();
    v
}

fn read_json(path: &Path) -> Value {
    serde_json::from_slice(&fs::read(path).unwrap()).unwrap()
}

#[test]
fn conflicting_flags_exit_1_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["synth", "--d", "20", "--m", "50", "--ugd", "--alpha", "0.5", "--out", "x.grm1"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!out.stderr.is_empty());
    assert!(listing(dir.path()).is_empty());

    let out = run(dir.path(), &["figure", "fig3-goe", "--synthetic-only", "--fmnist", "f.idx", "--out-dir", "figs"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(listing(dir.path()).is_empty());
}

#[test]
fn missing_input_exits_1_and_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["spectrum", "--in", "absent.grm1", "--out", "r.json", "--svg", "s.svg"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(listing(dir.path()).is_empty());
}

#[test]
fn unstable_learning_rate_is_rejected_before_writing() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["ts", "--d-in", "50", "--n-train", "200", "--alpha", "0.25", "--eta", "10", "--out", "ts.csv"];
    let out = run(dir.path(), &args);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("stability"));
    assert!(listing(dir.path()).is_empty());
}

#[test]
fn help_and_version_exit_0() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(dir.path(), &["--help"]).status.code(), Some(0));
    assert_eq!(run(dir.path(), &["--version"]).status.code(), Some(0));
    assert_eq!(run(dir.path(), &["bogus"]).status.code(), Some(1));
}

#[test]
fn same_seed_gives_identical_csv() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    for name in ["a.csv", "b.csv"] {
        let out = run(p, &["synth", "--d", "30", "--m", "40", "--alpha", "0.25", "--seed", "9", "--out-format", "csv", "--out", name]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    assert_eq!(fs::read(p.join("a.csv")).unwrap(), fs::read(p.join("b.csv")).unwrap());

    let out = run(p, &["synth", "--d", "30", "--m", "40", "--alpha", "0.25", "--seed", "10", "--out-format", "csv", "--out", "c.csv"]);
    assert!(out.status.success());
    assert_ne!(fs::read(p.join("a.csv")).unwrap(), fs::read(p.join("c.csv")).unwrap());

    for name in ["t1.csv", "t2.csv"] {
        let args = [
            "ts", "--d-in", "60", "--n-train", "240", "--alpha", "0.25", "--steps", "300", "--seeds", "3", "--seed", "4",
            "--out", name,
        ];
        let out = run(p, &args);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    assert_eq!(fs::read(p.join("t1.csv")).unwrap(), fs::read(p.join("t2.csv")).unwrap());
}

#[test]
fn thread_count_does_not_change_convergence_csv() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    assert!(run(p, &["synth", "--d", "120", "--m", "1500", "--alpha", "0.25", "--out", "x.grm1"]).status.success());
    for (threads, name) in [("1", "c1.csv"), ("3", "c3.csv")] {
        let out = bin()
            .current_dir(p)
            .args(["--threads", threads, "converge", "--in", "x.grm1", "--m-grid", "300,600,1000,1500", "--seeds", "2"])
            .args(["--out", name])
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    assert_eq!(fs::read(p.join("c1.csv")).unwrap(), fs::read(p.join("c3.csv")).unwrap());
}

#[test]
fn spectrum_report_round_trips_and_embeds_config() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    assert!(run(p, &["synth", "--d", "150", "--m", "3000", "--alpha", "0.25", "--seed", "1", "--out", "x.grm1"]).status.success());
    let out = run(p, &["spectrum", "--in", "x.grm1", "--out", "r.json", "--eigenvalues-csv", "e.csv", "--svg", "s.svg"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(listing(p), ["e.csv", "r.json", "s.svg", "x.grm1"]);

    let v = read_json(&p.join("r.json"));
    let again: Value = serde_json::from_str(&serde_json::to_string(&v).unwrap()).unwrap();
    assert_eq!(v, again);
    assert_eq!(v["schema_version"], 1);
    assert_eq!(v["command"], "spectrum");
    assert_eq!(v["config"]["bins"], 64);
    assert_eq!(v["config"]["bulk"]["bulk_start"], 10);
    assert_eq!(v["preprocessing"]["centered"], true);
    assert_eq!(v["spectrum"]["d"], 150);
    let alpha = v["spectrum"]["alpha"].as_f64().unwrap();
    assert!((alpha - 0.25).abs() < 0.1, "alpha {alpha}");

    let csv = fs::read_to_string(p.join("e.csv")).unwrap();
    assert_eq!(csv.lines().count(), 151);
    assert!(fs::read_to_string(p.join("s.svg")).unwrap().starts_with("<svg"));
}

#[test]
fn rmt_report_has_sff_summary() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    assert!(run(p, &["synth", "--d", "300", "--m", "6000", "--alpha", "0.25", "--seed", "2", "--out", "x.grm1"]).status.success());
    let out = run(p, &["rmt", "--in", "x.grm1", "--out", "r.json", "--sff-members", "3", "--sff-csv", "k.csv"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v = read_json(&p.join("r.json"));
    let r = v["rmt"]["mean_r"].as_f64().unwrap();
    assert!((r - 0.536).abs() < 0.03, "<r> = {r}");
    assert_eq!(v["rmt"]["sff"]["members"], 3);
    assert_eq!(v["seed"]["seed"], 0);
    assert!(fs::read_to_string(p.join("k.csv")).unwrap().starts_with("tau,sff,sff_goe"));
}

#[test]
fn mp_curve_integrates_to_one() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    assert!(run(p, &["theory", "mp", "--gamma", "0.25", "--points", "4001", "--out", "mp.csv"]).status.success());
    let mut rdr = csv::Reader::from_path(p.join("mp.csv")).unwrap();
    let rows: Vec<(f64, f64)> = rdr.records().map(|r| {
        let r = r.unwrap();
        (r[0].parse().unwrap(), r[1].parse().unwrap())
    }).collect();
    let mass: f64 = rows.windows(2).map(|w| 0.5 * (w[1].0 - w[0].0) * (w[0].1 + w[1].1)).sum();
    assert!((mass - 1.0).abs() < 0.01, "mass {mass}");
}

#[test]
fn converge_reports_mcrit_and_reference() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    assert!(run(p, &["synth", "--d", "100", "--m", "3000", "--alpha", "0.25", "--out", "x.grm1"]).status.success());
    let out = run(p, &["converge", "--in", "x.grm1", "--m-grid", "log:150:3000:6", "--seeds", "2", "--out", "c.csv", "--report", "c.json"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v = read_json(&p.join("c.json"));
    assert_eq!(v["results"]["reference"]["m_full"], 3000);
    assert!(v["results"]["mcrit"]["delta"]["status"].is_string());

    let out = run(p, &["converge", "--in", "x.grm1", "--m-grid", "100,5000", "--out", "d.csv"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!p.join("d.csv").exists());
}

#[test]
fn fig3_goe_synthetic_matches_goe_ratio() {
    let dir = tempfile::tempdir().unwrap();
    let figs = dir.path().join("figs");
    let out = bin()
        .args(["figure", "fig3-goe", "--synthetic-only", "--out-dir"])
        .arg(&figs)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("estimated runtime"));
    let v = read_json(&figs.join("fig3-goe.json"));
    let r = v["rmt"]["mean_r"].as_f64().unwrap();
    assert!((r - 0.536).abs() < 0.015, "<r> = {r}");
    assert!(figs.join("fig3-goe-sff.svg").exists());
}

#[test]
fn quick_figures_write_their_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["fig1-scree", "appB-genmp", "appD-teacher"] {
        let out = bin()
            .args(["figure", name, "--synthetic-only", "--quick", "--out-dir"])
            .arg(dir.path())
            .output()
            .unwrap();
        assert!(out.status.success(), "{name}: {}", String::from_utf8_lossy(&out.stderr));
        let v = read_json(&dir.path().join(format!("{name}.json")));
        assert_eq!(v["config"]["name"], name);
        assert_eq!(v["config"]["quick"], true);
    }
    let kl = read_json(&dir.path().join("appB-genmp.json"))["theory_kl"][0]["kl"].as_f64().unwrap();
    assert!(kl < 0.1, "KL {kl}");
}

#[test]
fn fmnist_env_pointing_nowhere_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .env("SPECTRALENS_FMNIST", dir.path().join("missing.idx"))
        .args(["figure", "fig1-scree", "--quick", "--out-dir"])
        .arg(dir.path().join("figs"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(!dir.path().join("figs").exists());
}
