use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_quasar-online"));
    cmd.env_remove("QUASAR_SEED");
    cmd
}

fn write_config(dir: &Path, name: &str, json: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, json).unwrap();
    path.to_str().unwrap().to_string()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

const SMALL: &str =
    r#"{"activation": "leaky_relu", "T": 40, "n": 5, "m": 50, "eval_m": 50, "seed": 11}"#;

#[test]
fn run_writes_csv_bounds_and_echo() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "cfg.json", SMALL);
    let out = dir.path().join("out");
    let res = bin()
        .args(["run", "--config", &cfg, "--out", out.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(res.status.success(), "{}", stderr(&res));
    let csv = fs::read_to_string(out.join("regret.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "t,instant_regret,cum_regret,dist_to_opt,path_var_cum,delta_est,in_basin"
    );
    assert_eq!(lines.count(), 40);
    let bounds: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("bounds.json")).unwrap()).unwrap();
    assert_eq!(bounds["status"], "inadmissible");
    let echo: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("config.json")).unwrap()).unwrap();
    assert_eq!(echo["T"], 40);
    assert_eq!(echo["seed"], 11);
}

#[test]
fn single_step_run_has_one_row() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "cfg.json",
        r#"{"T": 1, "n": 3, "m": 10, "eval_m": 10}"#,
    );
    let out = dir.path().join("out");
    let res = bin()
        .args(["run", "--config", &cfg, "--out", out.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(res.status.success(), "{}", stderr(&res));
    assert_eq!(
        fs::read_to_string(out.join("regret.csv"))
            .unwrap()
            .lines()
            .count(),
        2
    );
}

#[test]
fn runs_are_byte_identical_and_seed_overridable() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "cfg.json", SMALL);
    let run = |name: &str, seed: Option<&str>| {
        let out = dir.path().join(name);
        let mut cmd = bin();
        if let Some(s) = seed {
            cmd.env("QUASAR_SEED", s);
        }
        let res = cmd
            .args(["run", "--config", &cfg, "--out", out.to_str().unwrap()])
            .output()
            .unwrap();
        assert!(res.status.success(), "{}", stderr(&res));
        (
            fs::read(out.join("regret.csv")).unwrap(),
            fs::read_to_string(out.join("config.json")).unwrap(),
        )
    };
    let (a, _) = run("a", None);
    let (b, _) = run("b", None);
    assert_eq!(a, b);
    let (c, echo) = run("c", Some("99"));
    assert_ne!(a, c);
    assert!(echo.contains("\"seed\": 99"));
}

#[test]
fn several_trials_write_per_trial_files() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "cfg.json",
        r#"{"T": 10, "n": 3, "m": 20, "eval_m": 20, "trials": 3}"#,
    );
    let out = dir.path().join("out");
    let res = bin()
        .args(["run", "--config", &cfg, "--out", out.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(res.status.success(), "{}", stderr(&res));
    for i in 0..3 {
        assert!(out.join(format!("regret_trial_{i}.csv")).exists());
    }
    assert_eq!(
        fs::read_to_string(out.join("summary.csv"))
            .unwrap()
            .lines()
            .count(),
        11
    );
}

#[test]
fn unknown_key_is_a_usage_error_naming_the_field() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "cfg.json", r#"{"T": 10, "stepsize": 0.1}"#);
    let res = bin()
        .args([
            "run",
            "--config",
            &cfg,
            "--out",
            dir.path().to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(res.status.code(), Some(1));
    assert!(stderr(&res).contains("stepsize"));
}

#[test]
fn missing_subcommand_is_a_usage_error() {
    assert_eq!(bin().output().unwrap().status.code(), Some(1));
}

#[test]
fn divergence_exits_with_three() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "cfg.json",
        r#"{"T": 200, "n": 5, "m": 20, "eval_m": 5, "alpha": 1000.0}"#,
    );
    let res = bin()
        .args([
            "run",
            "--config",
            &cfg,
            "--out",
            dir.path().to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(res.status.code(), Some(3), "{}", stderr(&res));
    assert!(stderr(&res).contains("diverged"));
}

#[test]
fn verify_fd_gradient_on_logistic_passes() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "cfg.json",
        r#"{"activation": "logistic", "n": 10, "m": 200}"#,
    );
    let out = dir.path().join("out");
    let res = bin()
        .args([
            "verify",
            "--config",
            &cfg,
            "--suite",
            "fd_gradient",
            "--out",
            out.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(res.status.success(), "{}", stdout(&res));
    assert!(stdout(&res).starts_with("PASS"));
    let checks = fs::read_to_string(out.join("checks.txt")).unwrap();
    assert!(checks.starts_with("# fd_gradient[logistic] PASS"));
}

#[test]
fn negative_control_is_expected_fail_with_exit_zero() {
    let res = bin()
        .args([
            "verify",
            "--preset",
            "leaky_relu_default",
            "--suite",
            "strong_quasar_negative_control",
        ])
        .output()
        .unwrap();
    assert_eq!(res.status.code(), Some(0), "{}", stderr(&res));
    assert!(stdout(&res).starts_with("EXPECTED-FAIL"));
}

#[test]
fn unknown_suite_is_a_usage_error() {
    let res = bin()
        .args(["verify", "--suite", "nonsense"])
        .output()
        .unwrap();
    assert_eq!(res.status.code(), Some(1));
    assert!(stderr(&res).contains("nonsense"));
}

#[test]
fn bounds_rejects_a_step_above_the_strong_range() {
    let res = bin()
        .args(["bounds", "--preset", "leaky_relu_default"])
        .output()
        .unwrap();
    assert_eq!(res.status.code(), Some(1));
    assert!(stderr(&res).contains("alpha"));
    let json: serde_json::Value = serde_json::from_str(&stdout(&res)).unwrap();
    assert_eq!(json["prior"]["constants"]["rho"], 0.1);
    assert_eq!(json["prior"]["constants"]["mu"], 0.1);
    assert!(json["prior"]["step_size_max"].as_f64().unwrap() < 0.1);
}

#[test]
fn bounds_for_logistic_uses_the_ball_diameter() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "cfg.json",
        r#"{"activation": "logistic", "projection_radius": 1.0, "T": 20, "n": 5, "m": 20, "eval_m": 20}"#,
    );
    let res = bin().args(["bounds", "--config", &cfg]).output().unwrap();
    assert!(res.status.success(), "{}", stderr(&res));
    let json: serde_json::Value = serde_json::from_str(&stdout(&res)).unwrap();
    let rho = json["prior"]["constants"]["rho"].as_f64().unwrap();
    assert!((rho - 2.0 * (-2.0f64).exp()).abs() < 1e-15);
    assert_eq!(json["prior"]["constants"]["gamma_ws"], 0.125);
    assert!(json["run"]["measured"]["final_cum_regret"].is_number());
}
