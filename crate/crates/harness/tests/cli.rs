use std::path::PathBuf;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_unisched"))
}

fn scenario(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(format!("{name}.json"))
}

#[test]
fn run_then_verify_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let sc = scenario("internet_triangle");
    let run = bin().args(["run", "--scenario", sc.to_str().unwrap(), "--out", out]).output().unwrap();
    assert_eq!(run.status.code(), Some(0), "{}", String::from_utf8_lossy(&run.stderr));
    for f in ["trace.csv", "report.json", "series.csv"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let verify = bin().args(["verify", "--scenario", sc.to_str().unwrap(), "--out", out]).output().unwrap();
    assert_eq!(verify.status.code(), Some(0));
    assert!(!String::from_utf8_lossy(&verify.stdout).contains("MISMATCH"));
}

#[test]
fn verify_flags_a_report_from_another_v() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let sc = scenario("on_off_queue");
    let sc = sc.to_str().unwrap();
    assert_eq!(bin().args(["run", "--scenario", sc, "--out", out]).output().unwrap().status.code(), Some(0));
    let verify = bin().args(["verify", "--scenario", sc, "--out", out, "--V", "3"]).output().unwrap();
    assert_eq!(verify.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&verify.stdout).contains("MISMATCH"));
}

#[test]
fn sweep_and_oracle_write_their_tables() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let sc = scenario("on_off_queue");
    let sc = sc.to_str().unwrap();
    let sweep = bin().args(["sweep", "--scenario", sc, "--out", out, "--V", "1,2"]).output().unwrap().status;
    assert_eq!(sweep.code(), Some(0));
    let rows = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert_eq!(rows.lines().count(), 3);
    let oracle = bin().args(["oracle", "--scenario", sc, "--out", out]).output().unwrap().status;
    assert_eq!(oracle.code(), Some(0));
    assert!(dir.path().join("frames.csv").exists());
}

#[test]
fn bad_input_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.json");
    std::fs::write(&p, "{ \"schema_version\": 1, ").unwrap();
    let r = bin().args(["run", "--scenario", p.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]).output().unwrap();
    assert_eq!(r.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&r.stderr).contains("line"));
    let missing = bin().args(["sweep", "--scenario", scenario("idle").to_str().unwrap()]).output().unwrap().status;
    assert_eq!(missing.code(), Some(2));
}
