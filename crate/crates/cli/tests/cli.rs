use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

fn configs() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn zdq(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_zdq")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn oracle_check_on_default_instance() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("two_state.toml");
    let o = zdq(&["oracle-check", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(stdout(&o).trim(), "PASS, |ΔJ| = 0.0e0");
    assert!(dir.path().join("results.json").exists());
    assert!(dir.path().join("timing.json").exists());
}

#[test]
fn schedule_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("schedule.toml");
    let o = zdq(&["schedule", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("schedule.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows[0], "k,T_k,n_k,T_prime_k,N_k,tail_ratio");
    assert_eq!(rows[1], "1,2,1,2,2,");
    assert!(rows[2].starts_with("2,4,4,16,18,"));
    assert!(rows[3].starts_with("3,8,6,48,66,"));
}

#[test]
fn missing_seed_exits_with_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("noseed.toml");
    let text = fs::read_to_string(configs().join("two_state.toml")).unwrap();
    fs::write(&cfg, text.replace("seed = 2024\n", "")).unwrap();
    let o = zdq(&["rollout", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("`seed`"), "{}", stderr(&o));
    let o = zdq(&[
        "rollout",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().join("with").to_str().unwrap(),
        "--seed",
        "3",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
}

#[test]
fn invalid_config_reports_field_and_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "[model]\nkind = \"finite\"\ntransition = [[1.0]]\ninitial = \"uniform\"\ncolour = 3\n").unwrap();
    let o = zdq(&["design", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("colour") && err.contains("line 5"), "{err}");
    let o = zdq(&["explode", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn budget_flag_yields_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("two_state.toml");
    let o = zdq(&[
        "design",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
        "--budget",
        "2",
    ]);
    assert_eq!(o.status.code(), Some(1));
    let results = fs::read_to_string(dir.path().join("results.json")).unwrap();
    assert!(results.contains("\"budget_exceeded\""));
}

#[test]
fn identical_runs_give_identical_results() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = configs().join("stationary_pieced.toml");
    for d in [&a, &b] {
        let o = zdq(&["rollout", "--config", cfg.to_str().unwrap(), "--out", d.path().to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    assert_eq!(
        fs::read(a.path().join("results.json")).unwrap(),
        fs::read(b.path().join("results.json")).unwrap()
    );
}
