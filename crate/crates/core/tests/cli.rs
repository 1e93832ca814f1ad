use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cyclic-momentum"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).env_remove("CYCLIC_MOMENTUM_SEED").output().expect("binary runs")
}

fn stdout_json(o: &Output) -> serde_json::Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| {
        panic!("bad json ({e}): {}", String::from_utf8_lossy(&o.stdout));
    })
}

#[test]
fn tune_prints_two_step_params() {
    let o = run(&["tune", "--spectrum", "1,2;3,4", "-k", "2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v = stdout_json(&o);
    assert_eq!(v["K"], 2);
    let h: Vec<f64> = serde_json::from_value(v["h"].clone()).unwrap();
    assert_eq!(h.len(), 2);
    let m = v["m"].as_f64().unwrap();
    assert!(m > 0.0 && m < 1.0);
    // rate agrees with sqrt(m) up to the robust region boundary
    let rate = v["rate"].as_f64().unwrap();
    assert!((rate - m.sqrt()).abs() < 1e-6, "rate {rate} m {m}");
}

#[test]
fn tune_accepts_json_spectrum() {
    let a = run(&["tune", "--spectrum", "[[1,2],[3,4]]"]);
    let b = run(&["tune", "--spectrum", "1,2;3,4"]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn rate_reports_regime() {
    // Polyak momentum on a single interval is exactly robust
    let o = run(&["rate", "--spectrum", "1,9", "--h", "0.25", "--m", "0.25"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v = stdout_json(&o);
    let text = v.to_string().to_lowercase();
    assert!(text.contains("robust"), "{text}");
}

#[test]
fn bad_spectrum_exits_with_validation_code() {
    let o = run(&["tune", "--spectrum", "2,1"]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["tune", "--spectrum", "1,2,3"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_config_exits_with_io_code() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("absent.json");
    let o = run(&["bench", "--config", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn missing_eigs_csv_exits_with_io_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(
        &cfg,
        r#"{"problem": {"type": "quadratic", "eigs_csv": "nope.csv"}, "methods": ["gd"]}"#,
    )
    .unwrap();
    let o = run(&["bench", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn malformed_config_exits_with_parse_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, "{\"problem\": ").unwrap();
    let o = run(&["bench", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

fn write_config(dir: &Path, extra: &str) -> std::path::PathBuf {
    let cfg = dir.join("cfg.json");
    let out = dir.join("out");
    let text = format!(
        r#"{{
  "problem": {{"type": "quadratic", "spectrum": [[1, 2], [3, 4]], "dim": 60, "seed": 3}},
  "methods": ["gd", "phb", "hb2"],
  "T": 300,
  "burn_in": 20,
  "output_dir": {out:?},
  "heatmap": {{"grid": 12}}{extra}
}}"#
    );
    fs::write(&cfg, text).unwrap();
    cfg
}

#[test]
fn bench_writes_all_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let o = run(&["bench", "--config", cfg.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = dir.path().join("out");
    for f in [
        "trace_gd.csv",
        "trace_phb.csv",
        "trace_hb2.csv",
        "summary.csv",
        "eigenvalues.csv",
        "histogram.csv",
        "spectrum.json",
        "heatmap.csv",
        "failures.json",
    ] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let mut rdr = csv::Reader::from_path(out.join("summary.csv")).unwrap();
    assert_eq!(rdr.records().count(), 3);
    let heat = fs::read_to_string(out.join("heatmap.csv")).unwrap();
    assert_eq!(heat.lines().count(), 1 + 12 * 12);
    let fails: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("failures.json")).unwrap()).unwrap();
    assert_eq!(fails.as_array().unwrap().len(), 0);
}

#[test]
fn config_wins_over_flags_with_warning() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let o = run(&["bench", "--config", cfg.to_str().unwrap(), "--T", "50"]);
    assert!(o.status.success());
    let stderr = String::from_utf8_lossy(&o.stderr);
    assert!(stderr.contains("--T=50 ignored"), "{stderr}");
    let trace = fs::read_to_string(dir.path().join("out/trace_gd.csv")).unwrap();
    // header plus iterations 0..=T
    assert_eq!(trace.lines().count(), 1 + 301);
}

#[test]
fn flags_fill_fields_missing_from_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(
        &cfg,
        r#"{"problem": {"type": "quadratic", "spectrum": [[1, 4]], "dim": 20}, "methods": ["phb"]}"#,
    )
    .unwrap();
    let out = dir.path().join("elsewhere");
    let o = run(&[
        "bench",
        "--config",
        cfg.to_str().unwrap(),
        "--output-dir",
        out.to_str().unwrap(),
        "--T",
        "40",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let trace = fs::read_to_string(out.join("trace_phb.csv")).unwrap();
    assert_eq!(trace.lines().count(), 1 + 41);
}

#[test]
fn sweep_writes_grid() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("h.csv");
    let o = run(&[
        "sweep",
        "--spectrum",
        "1,2;3,4",
        "--grid",
        "8",
        "--jobs",
        "2",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v = stdout_json(&o);
    assert!(v["best"]["rate"].as_f64().unwrap() < 1.0);
    assert_eq!(fs::read_to_string(out).unwrap().lines().count(), 1 + 64);
}

#[test]
fn sigma_scan_picks_a_length() {
    let o = run(&["sigma", "--spectrum", "1,2;3,4", "-k", "1..3", "--lp-points", "400"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v = stdout_json(&o);
    assert_eq!(v["polynomials"].as_array().unwrap().len(), 3);
    // a gapped spectrum with equal intervals favours the two-cycle
    assert_eq!(v["best_K"], 2);
}

#[test]
fn spectrum_fit_from_csv() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("eigs.csv");
    let eigs = [1.0, 1.2, 1.5, 2.0, 8.0, 8.5, 9.0];
    fs::write(&p, eigs.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("\n")).unwrap();
    let o = run(&["spectrum", "--eigs", p.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v = stdout_json(&o);
    assert_eq!(v["count"], 7);
    let s: Vec<(f64, f64)> = serde_json::from_value(v["spectrum"].clone()).unwrap();
    assert_eq!(s, vec![(1.0, 2.0), (8.0, 9.0)]);
}
