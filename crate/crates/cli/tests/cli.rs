use std::fs;
use std::path::Path;
use std::process::{Command, Output};
use std::time::Instant;

use tempfile::TempDir;

fn mlt(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mlt"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
}

const QUICK: &str = r#"{"train": {"restarts": 1, "warm_steps": 50, "max_steps": 300}}"#;

fn setup() -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("spec.json"),
        r#"{"n_nodes": 30, "n_layers": 2, "strength": 5.0}"#,
    )
    .unwrap();
    fs::write(dir.path().join("quick.json"), QUICK).unwrap();
    ok(&mlt(
        dir.path(),
        &[
            "sample",
            "--spec",
            "spec.json",
            "--out",
            "net",
            "--seed",
            "3",
        ],
    ));
    dir
}

#[test]
fn bias_fit_writes_params_trace_and_manifest() {
    let dir = setup();
    let t = Instant::now();
    let out = mlt(
        dir.path(),
        &[
            "fit",
            "--edges",
            "net/edges.tsv",
            "--variant",
            "bias",
            "--config",
            "quick.json",
            "--out",
            "fit",
        ],
    );
    ok(&out);
    assert!(t.elapsed().as_secs_f64() < 5.0);
    let mut names: Vec<String> = fs::read_dir(dir.path().join("fit"))
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    assert_eq!(names, ["manifest.json", "params.json", "trace.csv"]);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("fit/manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["command"], "fit");
    assert_eq!(manifest["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn malformed_edge_list_exits_3_without_outputs() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.tsv"), "0 1 1\n1 0 x\n").unwrap();
    let out = mlt(
        dir.path(),
        &["fit", "--edges", "bad.tsv", "--layers", "1", "--out", "fit"],
    );
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
    assert!(!dir.path().join("fit").exists());
}

#[test]
fn layer_out_of_range_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("g.tsv"), "0 1 1\n1 0 4\n").unwrap();
    let out = mlt(
        dir.path(),
        &["fit", "--edges", "g.tsv", "--layers", "2", "--out", "fit"],
    );
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn sampling_is_byte_identical_for_a_seed() {
    let dir = setup();
    ok(&mlt(
        dir.path(),
        &[
            "sample",
            "--spec",
            "spec.json",
            "--out",
            "again",
            "--seed",
            "3",
        ],
    ));
    for f in ["edges.tsv", "edges.tsv.meta.json", "params.json"] {
        assert_eq!(
            fs::read(dir.path().join("net").join(f)).unwrap(),
            fs::read(dir.path().join("again").join(f)).unwrap(),
            "{f}"
        );
    }
    ok(&mlt(
        dir.path(),
        &[
            "sample",
            "--spec",
            "spec.json",
            "--out",
            "other",
            "--seed",
            "4",
        ],
    ));
    assert_ne!(
        fs::read(dir.path().join("net/edges.tsv")).unwrap(),
        fs::read(dir.path().join("other/edges.tsv")).unwrap()
    );
}

#[test]
fn invalid_spec_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("s.json"), r#"{"n_nodes": 1}"#).unwrap();
    let out = mlt(dir.path(), &["sample", "--spec", "s.json", "--out", "o"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!dir.path().join("o").exists());
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = setup();
    fs::write(
        dir.path().join("c.json"),
        r#"{"train": {"learning_rate": 1}}"#,
    )
    .unwrap();
    let out = mlt(
        dir.path(),
        &[
            "fit",
            "--edges",
            "net/edges.tsv",
            "--config",
            "c.json",
            "--out",
            "fit",
        ],
    );
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn fitted_params_can_be_resampled() {
    let dir = setup();
    ok(&mlt(
        dir.path(),
        &[
            "fit",
            "--edges",
            "net/edges.tsv",
            "--config",
            "quick.json",
            "--out",
            "fit",
        ],
    ));
    ok(&mlt(
        dir.path(),
        &[
            "sample",
            "--params",
            "fit/params.json",
            "--out",
            "re",
            "--seed",
            "1",
        ],
    ));
    let tsv = fs::read_to_string(dir.path().join("re/edges.tsv")).unwrap();
    assert!(tsv.lines().filter(|l| !l.starts_with('#')).count() > 0);
}

#[test]
fn eval_reports_both_variants_for_every_layer() {
    let dir = setup();
    ok(&mlt(
        dir.path(),
        &[
            "eval",
            "--edges",
            "net/edges.tsv",
            "--config",
            "quick.json",
            "--folds",
            "3",
            "--neg-sets",
            "4",
            "--out",
            "ev",
            "--curves",
        ],
    ));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("ev/metrics.json")).unwrap())
            .unwrap();
    let layers = report["layers"].as_array().unwrap();
    assert_eq!(layers.len(), 2);
    for l in layers {
        let variants: Vec<&str> = l["variants"]
            .as_array()
            .unwrap()
            .iter()
            .map(|v| v["variant"].as_str().unwrap())
            .collect();
        assert_eq!(variants, ["bias", "full"]);
    }
    let csv = fs::read_to_string(dir.path().join("ev/metrics.csv")).unwrap();
    assert!(csv.starts_with("network,layer,variant,fold,metric,value\n"));
    assert!(dir.path().join("ev/curves.csv").exists());
}

#[test]
fn analyze_with_missing_params_exits_5() {
    let dir = setup();
    let out = mlt(
        dir.path(),
        &[
            "analyze",
            "--edges",
            "net/edges.tsv",
            "--params",
            "missing.json",
            "--out",
            "an",
        ],
    );
    assert_eq!(out.status.code(), Some(5));
    assert!(!dir.path().join("an").exists());
}

#[test]
fn analyze_writes_report() {
    let dir = setup();
    let out = mlt(
        dir.path(),
        &[
            "analyze",
            "--edges",
            "net/edges.tsv",
            "--params",
            "net/params.json",
            "--out",
            "an",
            "--order",
            "2,1",
        ],
    );
    ok(&out);
    let csv = fs::read_to_string(dir.path().join("an/analysis.csv")).unwrap();
    assert!(csv.starts_with("network,layer,statistic,value\n"));
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("an/analysis.json")).unwrap())
            .unwrap();
    assert!(json["networks"].as_array().unwrap().len() == 1);
}

#[test]
fn mismatched_analyze_inputs_exit_2() {
    let dir = setup();
    let out = mlt(
        dir.path(),
        &[
            "analyze",
            "--edges",
            "net/edges.tsv",
            "--edges",
            "net/edges.tsv",
            "--params",
            "net/params.json",
            "--out",
            "an",
        ],
    );
    assert_eq!(out.status.code(), Some(2));
}
