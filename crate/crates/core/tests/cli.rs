use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

const SMALL_RUN: &str = r#"
[grid]
dims = [8, 8, 8, 8]
[flow]
beta = 0.5
t_end = 0.02
snapshot_stride = 5
[initial]
kind = "random"
seed = 11
amplitude = 0.03
band = { min = 1, max = 1 }
"#;

fn pluriflow(dir: &Path, config: &str, args: &[&str]) -> Output {
    let path = dir.join("config.toml");
    std::fs::write(&path, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_pluriflow"))
        .arg("--config")
        .arg(&path)
        .arg("--deterministic")
        .args(args)
        .output()
        .expect("pluriflow binary")
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap_or(-1)
}

fn out_arg(dir: &TempDir, name: &str) -> String {
    dir.path().join(name).to_str().unwrap().to_owned()
}

#[test]
fn clean_run_passes_and_reruns_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    let a = pluriflow(dir.path(), SMALL_RUN, &["--out", &out_arg(&dir, "a"), "run"]);
    assert_eq!(code(&a), 0, "{}", String::from_utf8_lossy(&a.stderr));
    let b = pluriflow(dir.path(), SMALL_RUN, &["--out", &out_arg(&dir, "b"), "run"]);
    assert_eq!(code(&b), 0);
    for file in ["timeseries.csv", "summary.json"] {
        let x = std::fs::read(dir.path().join("a").join(file)).unwrap();
        let y = std::fs::read(dir.path().join("b").join(file)).unwrap();
        assert_eq!(x, y, "{file} differs between reruns");
    }
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("a/summary.json")).unwrap()).unwrap();
    assert_eq!(summary["schema_version"], 1);
    assert_eq!(summary["passed"], true);
}

#[test]
fn seed_override_changes_the_data() {
    let dir = TempDir::new().unwrap();
    pluriflow(dir.path(), SMALL_RUN, &["--out", &out_arg(&dir, "a"), "run"]);
    pluriflow(dir.path(), SMALL_RUN, &["--out", &out_arg(&dir, "b"), "--seed", "12", "run"]);
    let x = std::fs::read(dir.path().join("a/timeseries.csv")).unwrap();
    let y = std::fs::read(dir.path().join("b/timeseries.csv")).unwrap();
    assert_ne!(x, y);
}

#[test]
fn zero_data_is_steady_from_the_start() {
    let dir = TempDir::new().unwrap();
    let cfg = "[grid]\ndims = [8, 8, 8, 8]\n[flow]\nbeta = 0.5\n";
    let o = pluriflow(dir.path(), cfg, &["--out", &out_arg(&dir, "z"), "run"]);
    assert_eq!(code(&o), 0);
    let text = std::fs::read_to_string(dir.path().join("z/timeseries.csv")).unwrap();
    assert_eq!(text.lines().count(), 2, "{text}");
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("z/summary.json")).unwrap()).unwrap();
    assert_eq!(summary["termination"]["reason"], "steady");
    assert_eq!(summary["steps"], 0);
}

#[test]
fn unknown_keys_exit_2_with_a_suggestion() {
    let dir = TempDir::new().unwrap();
    let o = pluriflow(dir.path(), "[flow]\nbetta = 0.5\n", &["run"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("did you mean `beta`"));
}

#[test]
fn exponent_above_one_exits_2() {
    let dir = TempDir::new().unwrap();
    let o = pluriflow(dir.path(), "[flow]\nbeta = 1.5\n", &["run"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn sweep_below_threshold_exits_2() {
    let dir = TempDir::new().unwrap();
    let o = pluriflow(dir.path(), "[grid]\ndims = [8, 8, 8, 8]\n", &["beta-sweep", "--betas", "0.1,0.5"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn usage_errors_exit_2() {
    let dir = TempDir::new().unwrap();
    assert_eq!(code(&pluriflow(dir.path(), "", &["no-such-command"])), 2);
    assert_eq!(code(&pluriflow(dir.path(), "", &["run", "--corrupt", "nonsense"])), 2);
}

#[test]
fn oracle_rejects_non_split_data() {
    let dir = TempDir::new().unwrap();
    let cfg = r#"
[grid]
dims = [8, 8, 8, 8]
[flow]
t_end = 0.01
[initial]
kind = "series"
terms = [{ amplitude = 0.01, k = [1, 0, 1, 0] }]
"#;
    let o = pluriflow(dir.path(), cfg, &["--out", &out_arg(&dir, "o"), "oracle-2d"]);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn corrupted_replay_exits_1() {
    let dir = TempDir::new().unwrap();
    let o = pluriflow(dir.path(), SMALL_RUN, &["--out", &out_arg(&dir, "c"), "run", "--corrupt", "prop6"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stdout).lines().any(|l| l.starts_with("prop6") && l.contains("FAIL")));
}

#[test]
fn tampered_identities_exit_1() {
    let dir = TempDir::new().unwrap();
    let cfg = "[identities]\nbetas = [0.5]\ngrids = [8, 16]\n";
    let o = pluriflow(dir.path(), cfg, &["--out", &out_arg(&dir, "i"), "check-identities", "--tamper"]);
    assert_eq!(code(&o), 1);
    let report = std::fs::read_to_string(dir.path().join("i/identities.json")).unwrap();
    assert!(report.contains("A4"));
}
