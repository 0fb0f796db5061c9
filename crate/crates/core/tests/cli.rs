//! End-to-end runs of the `hmmlab` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn hmmlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hmmlab")).args(args).env("RUST_LOG", "warn").output().expect("binary runs")
}

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(format!("{name}.toml"))
}

fn write(dir: &TempDir, name: &str, body: &str) -> PathBuf {
    let path = dir.path().join(name);
    fs::write(&path, body).unwrap();
    path
}

const SMALL: &str = r#"
scenario = "small"
seed = 5
theta0 = [-1.0, 1.0]

[model]
states = 2
dim = 2
emission = { kind = "gaussian-mean", sigma = 1.0 }
transition = { kind = "fixed", matrix = [[0.8, 0.2], [0.3, 0.7]] }
space = { lower = [-2.0, 0.0], upper = [0.0, 2.0] }

[simulate]
n_grid = [50, 100]
"#;

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

#[test]
fn simulate_writes_outputs_and_a_manifest() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "small.toml", SMALL);
    let out = dir.path().join("run");
    let res = hmmlab(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "simulate");
    let outputs = manifest["outputs"].as_array().unwrap();
    assert!(!outputs.is_empty());
    for entry in outputs {
        let name = entry.as_str().or_else(|| entry["path"].as_str()).unwrap();
        assert!(out.join(name).exists(), "missing {name}");
    }
}

#[test]
fn seed_override_changes_the_data() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "small.toml", SMALL);
    let run = |seed: &str, sub: &str| {
        let out = dir.path().join(sub);
        let res =
            hmmlab(&["simulate", "--config", cfg.to_str().unwrap(), "--seed", seed, "--out", out.to_str().unwrap()]);
        assert_eq!(code(&res), 0);
        out
    };
    let (a, b, c) = (run("1", "a"), run("1", "b"), run("2", "c"));
    let files = |d: &Path| {
        let mut v: Vec<_> = fs::read_dir(d)
            .unwrap()
            .map(|e| e.unwrap().path())
            .filter(|p| p.extension().is_some_and(|x| x == "csv"))
            .collect();
        v.sort();
        v.into_iter().map(|p| fs::read(p).unwrap()).collect::<Vec<_>>()
    };
    assert!(!files(&a).is_empty());
    assert_eq!(files(&a), files(&b));
    assert_ne!(files(&a), files(&c));
}

#[test]
fn unknown_keys_are_config_errors() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "bad.toml", &SMALL.replace("seed = 5", "seed = 5\nsede = 6"));
    let res = hmmlab(&["simulate", "--config", cfg.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(code(&res), 2);
    assert!(String::from_utf8_lossy(&res.stderr).contains("sede"));
}

#[test]
fn invalid_values_are_config_errors() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "bad.toml", &SMALL.replace("[0.3, 0.7]", "[0.3, 0.8]"));
    let res = hmmlab(&["simulate", "--config", cfg.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(code(&res), 2);
    let cfg = write(&dir, "outside.toml", &SMALL.replace("theta0 = [-1.0, 1.0]", "theta0 = [1.0, 1.0]"));
    let res = hmmlab(&["simulate", "--config", cfg.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(code(&res), 2);
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(code(&hmmlab(&["simulate"])), 2);
    assert_eq!(code(&hmmlab(&["frobnicate"])), 2);
}

#[test]
fn missing_config_is_an_io_error() {
    let dir = TempDir::new().unwrap();
    let missing = dir.path().join("nope.toml");
    let res =
        hmmlab(&["simulate", "--config", missing.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(code(&res), 1);
}

#[test]
fn periodic_chain_fails_numerically() {
    let dir = TempDir::new().unwrap();
    let body = SMALL.replace("[[0.8, 0.2], [0.3, 0.7]]", "[[0.0, 1.0], [1.0, 0.0]]") + "\n[constants]\nhorizon = 10\n";
    let cfg = write(&dir, "periodic.toml", &body);
    let res =
        hmmlab(&["constants", "--config", cfg.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(code(&res), 3, "{}", String::from_utf8_lossy(&res.stderr));
}

#[test]
fn report_merges_manifests() {
    let dir = TempDir::new().unwrap();
    let runs: Vec<PathBuf> = ["conjugate", "alphabet"]
        .iter()
        .map(|name| {
            let out = dir.path().join(name);
            let res =
                hmmlab(&["simulate", "--config", scenario(name).to_str().unwrap(), "--out", out.to_str().unwrap()]);
            assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
            out
        })
        .collect();
    let summary = dir.path().join("summary.csv");
    let mut args = vec!["report", "--out", summary.to_str().unwrap()];
    args.extend(runs.iter().map(|p| p.to_str().unwrap()));
    let res = hmmlab(&args);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    let text = fs::read_to_string(summary).unwrap();
    assert!(text.contains("conjugate") && text.contains("alphabet"), "{text}");

    let res = hmmlab(&["report", runs[0].to_str().unwrap()]);
    assert_eq!(code(&res), 0);
    assert!(String::from_utf8_lossy(&res.stdout).contains("conjugate"));
}
