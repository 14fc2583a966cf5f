use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use grdl_core::graph::parse_tudataset;
use grdl_core::train::{evaluate, Checkpoint};
use serde_json::Value;

fn grdl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_grdl"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = grdl(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// `(nodes, edges, label)`.
type GraphSpec<'a> = (usize, &'a [(usize, usize)], i64);

/// Writes a TU dataset with one graph per entry.
fn write_fixture(dir: &Path, name: &str, graphs: &[GraphSpec], attr: Option<f64>) {
    fs::create_dir_all(dir).unwrap();
    let (mut a, mut ind, mut labels, mut attrs) = (String::new(), String::new(), String::new(), String::new());
    let mut offset = 0;
    for (g, (n, edges, y)) in graphs.iter().enumerate() {
        for &(u, v) in edges.iter() {
            a += &format!("{}, {}\n{}, {}\n", u + offset + 1, v + offset + 1, v + offset + 1, u + offset + 1);
        }
        for _ in 0..*n {
            ind += &format!("{}\n", g + 1);
            if let Some(x) = attr {
                attrs += &format!("{x:e}\n");
            }
        }
        labels += &format!("{y}\n");
        offset += n;
    }
    fs::write(dir.join(format!("{name}_A.txt")), a).unwrap();
    fs::write(dir.join(format!("{name}_graph_indicator.txt")), ind).unwrap();
    fs::write(dir.join(format!("{name}_graph_labels.txt")), labels).unwrap();
    if attr.is_some() {
        fs::write(dir.join(format!("{name}_node_attributes.txt")), attrs).unwrap();
    }
}

fn pair_fixture(root: &Path) -> PathBuf {
    let dir = root.join("PAIR");
    write_fixture(&dir, "PAIR", &[(4, &[(0, 1), (1, 2), (2, 3)], 0), (4, &[(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)], 1)], None);
    dir
}

fn triple_fixture(root: &Path) -> PathBuf {
    let dir = root.join("TRI");
    write_fixture(
        &dir,
        "TRI",
        &[(3, &[(0, 1), (1, 2)], -1), (4, &[(0, 1), (1, 2), (2, 3), (3, 0)], 1), (3, &[(0, 1)], -1)],
        None,
    );
    dir
}

fn synthetic(root: &Path, graphs: usize) -> PathBuf {
    let dir = root.join("syn");
    ok(&["gen-synthetic", "--out", s(&dir), "--graphs", &graphs.to_string(), "--nodes", "8", "--seed", "2"]);
    dir
}

const SMALL: &[&str] = &["--layers", "2", "--hidden", "6", "--ref-size", "3", "--batch-size", "4", "--lr", "0.01"];

fn train_into(data: &Path, out: &Path, epochs: &str, seed: &str) {
    let mut args = vec!["train", "--data", s(data), "--out", s(out), "--epochs", epochs, "--seed", seed];
    args.extend_from_slice(SMALL);
    ok(&args);
}

#[test]
fn train_writes_checkpoint_metrics_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let data = pair_fixture(tmp.path());
    let before: Vec<_> = fs::read_dir(&data).unwrap().map(|e| e.unwrap().file_name()).collect();
    let out = tmp.path().join("run");
    train_into(&data, &out, "5", "1");
    assert!(out.join("checkpoint.json").is_file());
    let metrics = fs::read_to_string(out.join("metrics.jsonl")).unwrap();
    assert_eq!(metrics.lines().count(), 5);
    for line in metrics.lines() {
        let v: Value = serde_json::from_str(line).unwrap();
        assert!(v["train_loss"].is_number());
    }
    let manifest: Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "train");
    assert_eq!(manifest["config"]["epochs"], 5);
    assert_eq!(manifest["dataset"]["files"].as_array().unwrap().len(), 3);
    assert_eq!(manifest["dataset"]["sha256"].as_str().unwrap().len(), 64);
    let after: Vec<_> = fs::read_dir(&data).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(before.len(), after.len());
}

#[test]
fn same_seed_gives_identical_metric_stream() {
    let tmp = tempfile::tempdir().unwrap();
    let data = synthetic(tmp.path(), 20);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    train_into(&data, &a, "4", "9");
    train_into(&data, &b, "4", "9");
    let read = |d: &Path, f: &str| fs::read(d.join(f)).unwrap();
    assert_eq!(read(&a, "metrics.jsonl"), read(&b, "metrics.jsonl"));
    assert_eq!(read(&a, "checkpoint.json"), read(&b, "checkpoint.json"));
    let fp = |d: &Path| {
        let m: Value = serde_json::from_slice(&read(d, "manifest.json")).unwrap();
        m["dataset"]["sha256"].clone()
    };
    assert_eq!(fp(&a), fp(&b));
}

#[test]
fn missing_config_key_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let data = pair_fixture(tmp.path());
    let mut cfg: Value = serde_json::to_value(grdl_core::train::TrainConfig::default()).unwrap();
    cfg.as_object_mut().unwrap().remove("lambda");
    let path = tmp.path().join("cfg.json");
    fs::write(&path, cfg.to_string()).unwrap();
    let out = grdl(&["train", "--data", s(&data), "--config", s(&path), "--out", s(&tmp.path().join("o"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("lambda"));
}

#[test]
fn flags_override_the_config_file() {
    let tmp = tempfile::tempdir().unwrap();
    let data = pair_fixture(tmp.path());
    let cfg = grdl_core::train::TrainConfig { epochs: 50, ..Default::default() };
    let path = tmp.path().join("cfg.json");
    fs::write(&path, serde_json::to_string(&cfg).unwrap()).unwrap();
    let out = tmp.path().join("o");
    let mut args = vec!["train", "--data", s(&data), "--config", s(&path), "--out", s(&out), "--epochs", "2"];
    args.extend_from_slice(SMALL);
    ok(&args);
    assert_eq!(fs::read_to_string(out.join("metrics.jsonl")).unwrap().lines().count(), 2);
}

#[test]
fn bad_data_and_numerical_failures_have_their_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = grdl(&["train", "--data", s(&tmp.path().join("nothing")), "--out", s(&tmp.path().join("o"))]);
    assert_eq!(missing.status.code(), Some(2));

    let huge = tmp.path().join("HUGE");
    write_fixture(&huge, "HUGE", &[(3, &[(0, 1), (1, 2)], 0), (3, &[(0, 1), (0, 2)], 1)], Some(1e308));
    let h = tmp.path().join("h");
    let mut args = vec!["train", "--data", s(&huge), "--out", s(&h), "--epochs", "2"];
    args.extend_from_slice(SMALL);
    let out = grdl(&args);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));

    let usage = grdl(&["train", "--no-such-flag"]);
    assert_eq!(usage.status.code(), Some(1));
}

#[test]
fn cv_summary_matches_per_fold_values() {
    let tmp = tempfile::tempdir().unwrap();
    let data = synthetic(tmp.path(), 24);
    for (holdout, metric) in [("0", "validation"), ("0.2", "holdout")] {
        let out = tmp.path().join(format!("cv{holdout}"));
        let mut args = vec!["cv", "--data", s(&data), "--out", s(&out), "--folds", "2", "--holdout", holdout, "--epochs", "3"];
        args.extend_from_slice(SMALL);
        ok(&args);
        let summary: Value = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
        let folds = summary["per_fold"].as_array().unwrap();
        assert_eq!(folds.len(), 2);
        assert_eq!(summary["metric"], metric);
        let mean = folds.iter().map(|f| f["accuracy"].as_f64().unwrap()).sum::<f64>() / 2.0;
        assert!((summary["mean"].as_f64().unwrap() - mean).abs() < 1e-15);
        assert!(out.join("fold_0.json").is_file() && out.join("fold_1.json").is_file());
    }
}

#[test]
fn threshold_and_bound_reports() {
    let out = ok(&["bounds", "--theorem", "threshold", "--m", "100", "--n", "100", "--N", "188", "--delta", "0.05"]);
    let v: Value = serde_json::from_str(&out).unwrap();
    assert!((v["threshold"].as_f64().unwrap() - 3.19).abs() < 0.005);

    let tmp = tempfile::tempdir().unwrap();
    let data = synthetic(tmp.path(), 12);
    let run = tmp.path().join("run");
    train_into(&data, &run, "2", "4");
    let ckpt = run.join("checkpoint.json");
    let report = |theorem: &str, extra: &[&str]| {
        let mut args = vec!["bounds", "--theorem", theorem, "--data", s(&data), "--checkpoint", s(&ckpt)];
        args.extend_from_slice(extra);
        let mut v: Value = serde_json::from_str(&ok(&args)).unwrap();
        v.as_object_mut().unwrap().remove("theorem");
        v
    };
    let grdl_report = report("grdl", &[]);
    assert_eq!(report("multi", &["--P", "1"]), grdl_report);
    for key in ["c", "R_G", "v1", "v2", "v3", "bound", "N", "P", "flags"] {
        assert!(grdl_report.get(key).is_some(), "missing {key}");
    }
    let gin = report("gin", &["--classifier", "3:4,1:1"]);
    for key in ["C1", "C2", "R_G_prime", "comparison"] {
        assert!(!gin[key].is_null(), "missing {key}");
    }
    let mis = report("misclass", &["--zeta", "2"]);
    assert_eq!(mis["mu"], 1.0);
}

#[test]
fn distances_on_three_graphs() {
    let tmp = tempfile::tempdir().unwrap();
    let data = triple_fixture(tmp.path());
    let run = tmp.path().join("run");
    train_into(&data, &run, "2", "1");
    let csv = ok(&["distances", "--data", s(&data), "--checkpoint", s(&run.join("checkpoint.json"))]);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 6);
    assert_eq!(lines[0], "graph_0,graph_1,graph_2,ref_0_0,ref_1_0");
    for (i, row) in lines[1..].iter().enumerate() {
        let vals: Vec<f64> = row.split(',').map(|v| v.parse().unwrap()).collect();
        assert_eq!(vals.len(), 5);
        assert_eq!(vals[i], 0.0);
    }
}

#[test]
fn predict_is_stable_and_agrees_with_evaluate() {
    let tmp = tempfile::tempdir().unwrap();
    let data = synthetic(tmp.path(), 16);
    let run = tmp.path().join("run");
    train_into(&data, &run, "3", "6");
    let ckpt = run.join("checkpoint.json");
    let args = ["predict", "--data", s(&data), "--checkpoint", s(&ckpt)];
    let first = ok(&args);
    assert_eq!(first, ok(&args));
    let predicted: Vec<usize> = first
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();

    let ds = parse_tudataset(&data, "SYN").unwrap();
    let model = Checkpoint::load(&ckpt).unwrap().to_model().unwrap();
    let ev = evaluate(&model, &ds.graphs.iter().collect::<Vec<_>>(), false).unwrap();
    assert_eq!(predicted, ev.predictions);

    let eval: Value = serde_json::from_str(&ok(&["eval", "--data", s(&data), "--checkpoint", s(&ckpt)])).unwrap();
    assert_eq!(eval["accuracy"].as_f64().unwrap(), ev.accuracy);
}

#[test]
fn feature_mismatch_is_a_data_error() {
    let tmp = tempfile::tempdir().unwrap();
    let data = pair_fixture(tmp.path());
    let run = tmp.path().join("run");
    train_into(&data, &run, "1", "1");
    let other = tmp.path().join("ATTR");
    write_fixture(&other, "ATTR", &[(2, &[(0, 1)], 0), (2, &[(0, 1)], 1)], Some(0.5));
    fs::write(other.join("ATTR_node_attributes.txt"), "1, 2\n1, 2\n1, 2\n1, 2\n").unwrap();
    for cmd in ["eval", "predict", "distances"] {
        let out = grdl(&[cmd, "--data", s(&other), "--checkpoint", s(&run.join("checkpoint.json"))]);
        assert_eq!(out.status.code(), Some(2), "{cmd}");
    }
    let out = grdl(&["bounds", "--theorem", "grdl", "--data", s(&other), "--checkpoint", s(&run.join("checkpoint.json"))]);
    assert_eq!(out.status.code(), Some(2));
}
