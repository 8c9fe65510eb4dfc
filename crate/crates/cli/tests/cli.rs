use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/synthetic")
}

fn bhi(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bhi")).args(args).output().expect("binary runs")
}

fn data_args() -> Vec<String> {
    let fx = fixture();
    ["scores.csv", "benchmarks.json", "models.json", "snapshot.json"]
        .iter()
        .zip(["--scores", "--benchmarks", "--models", "--snapshot"])
        .flat_map(|(f, flag)| [flag.to_string(), fx.join(f).display().to_string()])
        .collect()
}

fn run_ok(args: &[&str]) -> String {
    let mut all: Vec<String> = args.iter().map(|s| s.to_string()).collect();
    all.extend(data_args());
    let refs: Vec<&str> = all.iter().map(String::as_str).collect();
    let out = bhi(&refs);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn json_and_csv_agree() {
    let json: serde_json::Value = serde_json::from_str(&run_ok(&["audit"])).unwrap();
    let csv_text = run_ok(&["audit", "--format", "csv"]);
    let body: String = csv_text.lines().filter(|l| !l.starts_with('#')).map(|l| format!("{l}\n")).collect();
    let mut rdr = csv::Reader::from_reader(body.as_bytes());
    let headers = rdr.headers().unwrap().clone();
    let col = |name: &str| headers.iter().position(|h| h == name).unwrap();
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    let benches = json["benchmarks"].as_array().unwrap();
    assert_eq!(rows.len(), benches.len());
    for (r, b) in rows.iter().zip(benches) {
        assert_eq!(&r[col("benchmark_id")], b["benchmark_id"].as_str().unwrap());
        let bhi: f64 = r[col("bhi")].parse().unwrap();
        assert!((bhi - b["bhi"].as_f64().unwrap()).abs() < 1e-12);
    }
    assert!(json["provenance"]["inputs"]["scores"].as_str().unwrap().len() == 64);
}

#[test]
fn missing_snapshot_is_an_error() {
    let fx = fixture();
    let out = bhi(&[
        "audit",
        "--scores",
        fx.join("scores.csv").to_str().unwrap(),
        "--benchmarks",
        fx.join("benchmarks.json").to_str().unwrap(),
        "--models",
        fx.join("models.json").to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("[impact]") && err.contains("--snapshot"), "{err}");
}

#[test]
fn config_file_matches_flags() {
    let cfg = fixture().join("config.json");
    let out = bhi(&["audit", "--config", cfg.to_str().unwrap(), "--format", "csv"]);
    assert!(out.status.success());
    let strip = |s: &str| s.lines().filter(|l| !l.starts_with('#')).collect::<Vec<_>>().join("\n");
    assert_eq!(strip(&String::from_utf8_lossy(&out.stdout)), strip(&run_ok(&["audit", "--format", "csv"])));
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"delta_frac": 0.02}"#).unwrap();
    let out = bhi(&["audit", "--config", cfg.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("delta_frac"));
}

#[test]
fn out_of_range_delta_is_rejected() {
    let mut args = vec!["audit".to_string(), "--delta".into(), "0.5".into()];
    args.extend(data_args());
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    assert!(!bhi(&refs).status.success());
}

#[test]
fn plot_data_kinds() {
    for kind in ["ranking_bar", "trend_lines", "sensitivity_curve"] {
        let v: serde_json::Value = serde_json::from_str(&run_ok(&["plot-data", "--kind", kind, "--top", "5"])).unwrap();
        assert_eq!(v["kind"], kind);
        assert!(!v["series"].as_array().unwrap().is_empty());
    }
}

#[test]
fn components_markdown_matches_fixture_order() {
    let table = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/published/components.csv");
    let out = bhi(&[
        "audit",
        "--components",
        table.to_str().unwrap(),
        "--weights",
        "0.3298,0.3574,0.3128",
        "--format",
        "markdown",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let md = String::from_utf8(out.stdout).unwrap();
    let first = md.lines().find(|l| l.starts_with("| 1 |")).unwrap();
    assert!(first.contains("Humanity's Last Exam") && first.ends_with("0.6686 |"), "{first}");
}

#[test]
fn weights_need_three_values() {
    let table = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/published/components.csv");
    let out = bhi(&["audit", "--components", table.to_str().unwrap(), "--weights", "0.5,0.5"]);
    assert!(!out.status.success());
}

#[test]
fn committed_fixture_is_regenerable() {
    let dir = tempfile::tempdir().unwrap();
    let out = bhi(&["generate-fixture", "--preset", "robustness", "--out", dir.path().to_str().unwrap()]);
    assert!(out.status.success());
    for f in ["scores.csv", "benchmarks.json", "models.json", "snapshot.json"] {
        assert_eq!(
            std::fs::read(dir.path().join(f)).unwrap(),
            std::fs::read(fixture().join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn loo_and_sweep_run() {
    let loo: serde_json::Value = serde_json::from_str(&run_ok(&["robustness", "--mode", "loo"])).unwrap();
    assert_eq!(loo["scenarios"].as_array().unwrap().len(), 3);
    let sweep: serde_json::Value = serde_json::from_str(&run_ok(&["sweep-delta", "--deltas", "0.01,0.02"])).unwrap();
    let pts = sweep["sweep"].as_array().unwrap();
    assert_eq!(pts.len(), 2);
    assert_eq!(pts[1]["spearman"], 1.0);
}

#[test]
fn different_seeds_differ() {
    let a = run_ok(&["robustness", "--mode", "noise", "--iters", "5", "--seed", "1"]);
    let b = run_ok(&["robustness", "--mode", "noise", "--iters", "5", "--seed", "2"]);
    assert_ne!(a, b);
}
