use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_impact-game"));
    c.env_remove("IMPACT_GAME_SEED");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("c.json");
    fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

const SMALL: &str = r#"{
  "train_iters": 20, "test_iters": 5, "runs": 2, "baseline_episodes": 50,
  "front_grid_size": 7, "log_every": 10,
  "ddql": {"batch_size": 16, "layer_dims": [4, 8, 1]}
}"#;

#[test]
fn no_arguments_prints_usage() {
    let o = run(&[]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
}

#[test]
fn unknown_subcommand_and_flag() {
    assert_eq!(code(&run(&["fly"])), 1);
    assert_eq!(code(&run(&["analytics", "--bogus"])), 1);
    assert_eq!(code(&run(&["analytics", "--mode", "parallel"])), 1);
    assert_eq!(code(&run(&["--help"])), 0);
}

#[test]
fn analytics_prints_nash_inventory() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "{}");
    let o = run(&["analytics", "--config", &cfg]);
    assert_eq!(code(&o), 0);
    let out = String::from_utf8(o.stdout).unwrap();
    let row = out
        .lines()
        .find(|l| l.split_whitespace().next() == Some("5"))
        .unwrap();
    let cols: Vec<f64> = row
        .split_whitespace()
        .skip(1)
        .take(2)
        .map(|x| x.parse().unwrap())
        .collect();
    assert!(
        (cols[0] - 30.294).abs() < 1e-3 && (cols[1] - 30.294).abs() < 1e-3,
        "{row}"
    );
    assert!(out.contains("Pareto (TWAP) expected IS: 11.500000 11.500000"));
}

#[test]
fn front_writes_non_dominated_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "{}");
    let out = dir.path().join("d");
    let o = run(&["front", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let text = fs::read_to_string(out.join("front.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("w,eis1,eis2"));
    let rows: Vec<(f64, f64)> = lines
        .map(|l| {
            let f: Vec<f64> = l.split(',').map(|x| x.parse().unwrap()).collect();
            (f[1], f[2])
        })
        .collect();
    assert_eq!(rows.len(), 101);
    for a in &rows {
        for b in &rows {
            let dominated = a.0 <= b.0 && a.1 <= b.1 && (a.0 < b.0 || a.1 < b.1);
            assert!(!dominated, "{a:?} dominates {b:?}");
        }
    }
}

#[test]
fn configuration_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"runs": 0}"#);
    let o = run(&["analytics", "--config", &cfg]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("runs"));
    let cfg = write_config(dir.path(), r#"{"unknown_key": 1}"#);
    assert_eq!(code(&run(&["analytics", "--config", &cfg])), 1);
    assert_eq!(
        code(&run(&["analytics", "--config", "/no/such/file.json"])),
        1
    );
}

#[test]
fn report_without_bundle_is_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["report", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 2);
}

#[test]
fn train_test_report_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("w");
    let out = out.to_str().unwrap();
    assert_eq!(code(&run(&["train", "--config", &cfg, "--out", out])), 0);
    for f in ["agent1.json", "agent2.json", "training.csv", "config.json"] {
        assert!(Path::new(out).join(f).is_file(), "{f}");
    }
    assert_eq!(code(&run(&["test", "--config", &cfg, "--out", out])), 0);
    let centroids = fs::read_to_string(Path::new(out).join("centroids.csv")).unwrap();
    assert_eq!(centroids.lines().count(), 2);
    fs::remove_file(Path::new(out).join("scatter.svg")).unwrap();
    assert_eq!(code(&run(&["report", "--out", out])), 0);
    assert!(Path::new(out).join("scatter.svg").is_file());
}

fn scenario_files(args: &[&str], out: &Path, env_seed: Option<&str>) -> Vec<Vec<u8>> {
    let mut c = bin();
    c.args(args).arg("--out").arg(out);
    if let Some(s) = env_seed {
        c.env("IMPACT_GAME_SEED", s);
    }
    let o = c.output().unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    [
        "iterations.csv",
        "strategies.csv",
        "centroids.csv",
        "front.csv",
    ]
    .iter()
    .map(|f| fs::read(out.join(f)).unwrap())
    .collect()
}

#[test]
fn scenario_is_deterministic_and_seed_sensitive() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let args = [
        "scenario",
        "--config",
        &cfg,
        "--scenario",
        "zero",
        "--seed",
        "5",
    ];
    let a = scenario_files(&args, &dir.path().join("a"), None);
    let b = scenario_files(&args, &dir.path().join("b"), None);
    assert_eq!(a, b);
    let c = scenario_files(
        &["scenario", "--config", &cfg, "--scenario", "zero"],
        &dir.path().join("c"),
        Some("5"),
    );
    assert_eq!(a, c, "environment seed is used when no other seed is given");
    let d = scenario_files(
        &[
            "scenario",
            "--config",
            &cfg,
            "--scenario",
            "zero",
            "--seed",
            "6",
        ],
        &dir.path().join("d"),
        Some("5"),
    );
    assert_ne!(a[0], d[0]);
}

#[test]
fn misspec_writes_both_bundles() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("m");
    let o = run(&[
        "misspec",
        "--config",
        &cfg,
        "--out",
        out.to_str().unwrap(),
        "--runs",
        "1",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for sub in ["forward", "switched"] {
        let m: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(out.join(sub).join("manifest.json")).unwrap())
                .unwrap();
        assert_eq!(m["config"]["runs"], 1);
    }
    let fwd: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("forward/manifest.json")).unwrap())
            .unwrap();
    assert_eq!(fwd["config"]["sigma_train"], 1e-9);
    assert_eq!(fwd["config"]["sigma_test"], 1e-2);
}
