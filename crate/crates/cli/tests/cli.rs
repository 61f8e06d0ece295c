use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const SAMPLES: &str = "600";

fn bin(out: &Path) -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_shs-threat"));
    c.arg("--out").arg(out);
    c
}

fn run(c: &mut Command) -> Output {
    c.output().expect("binary runs")
}

fn ok(c: &mut Command) -> Output {
    let o = run(c);
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    o
}

fn read_json(path: impl AsRef<Path>) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

/// Writes a small synthetic dataset and returns its CSV path.
fn dataset(dir: &TempDir) -> PathBuf {
    let out = dir.path().join("gen");
    ok(bin(&out).args(["generate", "--samples", SAMPLES]));
    out.join("data.csv")
}

fn has_solver() -> bool {
    let found = Command::new("z3").arg("-version").output().is_ok_and(|o| o.status.success());
    if !found {
        eprintln!("z3 not on PATH; solver-backed CLI checks skipped");
    }
    found
}

#[test]
fn generate_is_deterministic_per_seed() {
    let dir = TempDir::new().unwrap();
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    ok(bin(&a).args(["generate", "--samples", SAMPLES]));
    ok(bin(&b).args(["generate", "--samples", SAMPLES]));
    ok(bin(&c).args(["--seed", "7", "generate", "--samples", SAMPLES]));
    for f in ["data.csv", "data.schema.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    assert_ne!(fs::read(a.join("data.csv")).unwrap(), fs::read(c.join("data.csv")).unwrap());
    let report = read_json(a.join("generate.json"));
    assert_eq!(report["records"], 600);
    assert_eq!(report["sensors"].as_array().unwrap().len(), 8);
    assert_eq!(report["labels"].as_array().unwrap().len(), 6);
    assert_eq!(report["provenance"]["seed"], 42);
}

#[test]
fn train_writes_model_and_metrics() {
    let dir = TempDir::new().unwrap();
    let data = dataset(&dir);
    let out = dir.path().join("train");
    ok(bin(&out).args(["train", "--dcm", "dt", "--data"]).arg(&data));
    let metrics = read_json(out.join("metrics.json"));
    for field in ["accuracy", "precision", "recall", "f1"] {
        let v = metrics["metrics"][field].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&v), "{field} = {v}");
    }
    assert_eq!(metrics["train_records"].as_u64().unwrap() + metrics["evaluated_records"].as_u64().unwrap(), 600);
    let inputs = metrics["provenance"]["inputs"].as_array().unwrap();
    assert_eq!(inputs[0]["sha256"].as_str().unwrap().len(), 64);
    assert!(out.join("model.json").exists());
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = TempDir::new().unwrap();
    let data = dataset(&dir);
    let out = dir.path().join("x");
    let bad_dcm = run(bin(&out).args(["train", "--dcm", "svm", "--data"]).arg(&data));
    assert_eq!(bad_dcm.status.code(), Some(2));
    let unsorted = run(bin(&out)
        .args(["attack", "--backend", "builtin", "--source", "0", "--target", "1", "--ladder", "2:0.1,1:0.1", "--data"])
        .arg(&data));
    assert_eq!(unsorted.status.code(), Some(2), "{}", String::from_utf8_lossy(&unsorted.stderr));
}

#[test]
fn missing_model_file_is_named() {
    let dir = TempDir::new().unwrap();
    let data = dataset(&dir);
    let missing = dir.path().join("nowhere").join("model.json");
    let o = run(bin(&dir.path().join("x"))
        .args(["attack", "--backend", "builtin", "--source", "0", "--target", "1", "--data"])
        .arg(&data)
        .arg("--model")
        .arg(&missing));
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains(&missing.display().to_string()));
}

#[test]
fn missing_solver_exits_with_three() {
    let dir = TempDir::new().unwrap();
    let data = dataset(&dir);
    let o = run(bin(&dir.path().join("x"))
        .args(["attack", "--source", "0", "--target", "1", "--solver-path"])
        .arg(dir.path().join("no-such-solver"))
        .arg("--data")
        .arg(&data));
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn resiliency_refuses_the_builtin_backend() {
    let dir = TempDir::new().unwrap();
    let data = dataset(&dir);
    let o = run(bin(&dir.path().join("x"))
        .args(["resiliency", "--backend", "builtin", "--source", "0", "--target", "1", "--data"])
        .arg(&data));
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn attack_and_matrix_report_validated_witnesses() {
    if !has_solver() {
        return;
    }
    let dir = TempDir::new().unwrap();
    let data = dataset(&dir);
    let models = dir.path().join("models");
    ok(bin(&models).args(["train", "--data"]).arg(&data));
    ok(bin(&models).args(["atlas", "--data"]).arg(&data));
    let reuse = |c: &mut Command| {
        c.arg("--data")
            .arg(&data)
            .arg("--model")
            .arg(models.join("model.json"))
            .arg("--atlas")
            .arg(models.join("atlas.json"));
    };

    let out = dir.path().join("attack");
    let mut c = bin(&out);
    c.args(["attack", "--source", "0", "--target", "1", "--ladder", "8:0.3"]);
    reuse(&mut c);
    ok(&mut c);
    let attack = read_json(out.join("attack.json"));
    let status = attack["status"].as_str().unwrap();
    assert!(["feasible", "infeasible", "unknown"].contains(&status));
    if status == "feasible" {
        assert_eq!(attack["vector"]["validated"], true);
    }

    let out = dir.path().join("matrix");
    let mut c = bin(&out);
    c.args(["matrix", "--ladder", "2:0.3,8:0.3"]);
    reuse(&mut c);
    ok(&mut c);
    let matrix = read_json(out.join("matrix.json"));
    let cells: Vec<&Value> = matrix["cells"].as_array().unwrap().iter().flat_map(|r| r.as_array().unwrap()).collect();
    assert_eq!(cells.len(), 36);
    let feasible: Vec<&&Value> = cells.iter().filter(|c| c["status"] == "feasible").collect();
    assert!(!feasible.is_empty());
    assert!(feasible.iter().all(|c| c["vector"]["validated"] == true));
    let csv = fs::read_to_string(out.join("matrix.csv")).unwrap();
    assert!(csv.starts_with("source,target,status"));
    assert!(out.join("timings.csv").exists());
}
