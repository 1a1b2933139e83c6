use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const STOKES: &str = r#"{
  "schema_version": 1,
  "scenario": "stokes_decay",
  "grid": { "dim": 2, "n": 8, "viscosity": 0.1 },
  "time": { "horizon": 1.0, "intervals": 8 },
  "initial": { "kind": "taylor_green" }
}"#;

const RANDOM_NS: &str = r#"{
  "schema_version": 1,
  "scenario": "ns2d",
  "grid": { "dim": 2, "n": 8, "viscosity": 0.2 },
  "time": { "horizon": 0.5, "intervals": 8 },
  "initial": { "kind": "random_seeded", "amplitude": 0.5 },
  "oracle": { "enabled": false }
}"#;

fn selfdual(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_selfdual")).args(args).output().expect("spawn selfdual")
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("config.json");
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_owned()
}

fn report(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("run_report.json")).unwrap()).unwrap()
}

#[test]
fn solve_writes_artifacts_and_exits_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), STOKES);
    let out_dir = tmp.path().join("out");
    let out = selfdual(&["solve", &cfg, "--output-dir", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    for name in ["run_report.json", "trace.csv", "path.bin", "path.csv"] {
        assert!(out_dir.join(name).is_file(), "{name} missing");
    }
    let r = report(&out_dir);
    assert_eq!(r["passed"], Value::Bool(true));
    assert_eq!(r["scenario"], "stokes_decay");
    assert!(String::from_utf8_lossy(&out.stdout).contains("pass"));
}

#[test]
fn malformed_config_exits_two_without_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "{\n  \"schema_version\": 1,\n  \"scenario\": \"ns2d\",,\n}");
    let out_dir = tmp.path().join("out");
    let out = selfdual(&["solve", &cfg, "--output-dir", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));
    assert!(!out_dir.exists());

    let missing = tmp.path().join("nope.json");
    let out = selfdual(&["solve", missing.to_str().unwrap(), "--output-dir", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out_dir.exists());
}

#[test]
fn unknown_suite_exits_two() {
    let out = selfdual(&["verify", "everything"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("duality"));
}

#[test]
fn boundary_suite_passes() {
    let out = selfdual(&["verify", "boundary"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    assert!(!String::from_utf8_lossy(&out.stdout).contains("FAIL"));
}

#[test]
fn seed_flag_overrides_config_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), RANDOM_NS);
    let run = |seed: &str, name: &str| {
        let dir = tmp.path().join(name);
        let out = selfdual(&["solve", &cfg, "--seed", seed, "--output-dir", dir.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        (report(&dir), fs::read(dir.join("path.bin")).unwrap())
    };
    let (a, pa) = run("11", "a");
    let (b, pb) = run("12", "b");
    let (_, pc) = run("11", "c");
    assert_eq!(a["seed"], 11);
    assert_eq!(b["seed"], 12);
    assert_ne!(pa, pb);
    assert_eq!(pa, pc);
}

#[test]
fn uncertified_run_exits_one_with_report() {
    let tmp = tempfile::tempdir().unwrap();
    let text = RANDOM_NS.replace("\"oracle\"", "\"solver\": { \"max_iters\": 1 },\n  \"oracle\"");
    let cfg = write_config(tmp.path(), &text);
    let out_dir = tmp.path().join("out");
    let out = selfdual(&["solve", &cfg, "--output-dir", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(report(&out_dir)["passed"], Value::Bool(false));
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAIL"));
}
