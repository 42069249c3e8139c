use std::process::{Command, Output};

fn kpzlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kpzlab"))
        .args(args)
        .env_remove("KPZLAB_SEED")
        .output()
        .expect("run kpzlab")
}

fn body(csv: &str) -> String {
    csv.lines()
        .filter(|l| !l.starts_with('#'))
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn chaos_verify_residuals() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("chaos.csv");
    let out = kpzlab(&[
        "chaos-verify",
        "--n",
        "8",
        "--seed",
        "42",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("# kpzlab "));
    assert!(text.contains("# seed: 42"));
    let body = body(&text);
    let mut rows = csv::Reader::from_reader(body.as_bytes());
    let col = rows.headers().unwrap().iter().position(|h| h == "residual").unwrap();
    let mut n = 0;
    for r in rows.records() {
        let residual: f64 = r.unwrap()[col].parse().unwrap();
        assert!(residual <= 1e-12);
        n += 1;
    }
    assert_eq!(n, 100);
}

#[test]
fn bad_config_exits_one_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ldp.csv");
    let out = kpzlab(&["ldp-check", "--t", "-1", "--out", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!path.exists());
    assert!(String::from_utf8_lossy(&out.stderr).contains("`t`"));
    assert_eq!(kpzlab(&["rwre-mc", "--replicas", "0"]).status.code(), Some(1));
    assert_eq!(kpzlab(&["rwre-mc", "--eps", "0.7"]).status.code(), Some(1));
    assert_eq!(kpzlab(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(kpzlab(&["--help"]).status.code(), Some(0));
}

#[test]
fn tolerance_failure_exits_two() {
    let out = kpzlab(&[
        "ldp-check",
        "--v",
        "0.8",
        "--t",
        "2",
        "--x",
        "-0.5",
        "--m1",
        "-1",
        "--m2",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(2));
    // The table is still written so the failure can be inspected.
    assert!(String::from_utf8_lossy(&out.stdout).contains("rel_error"));
    assert_eq!(kpzlab(&["ldp-check"]).status.code(), Some(0));
}

#[test]
fn law_check_passes() {
    let out = kpzlab(&["law-check", "--n", "3"]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn json_schema() {
    let out = kpzlab(&["rwre-mc", "--eps", "0.2", "--replicas", "1", "--format", "json"]);
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let obj = v.as_object().unwrap();
    let mut keys: Vec<&str> = obj.keys().map(String::as_str).collect();
    keys.sort();
    assert_eq!(keys, ["manifest", "rows", "summary"]);
    let m = &v["manifest"];
    for key in ["command", "version", "seed", "config", "derived", "wall_clock_seconds"] {
        assert!(m.get(key).is_some(), "manifest lacks {key}");
    }
    assert_eq!(m["derived"]["snapped"][0]["point"]["i"], 25);
    let row = &v["rows"][0];
    assert!(row["stderr"].is_null());
    assert_eq!(row["mean"], row["min"]);
}

#[test]
fn seed_from_environment_and_threads_do_not_change_output() {
    let run = |threads: &str, seed_env: Option<&str>, extra: &[&str]| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_kpzlab"));
        cmd.args(["--threads", threads, "rwre-mc", "--eps", "0.2", "--replicas", "50"])
            .args(extra);
        match seed_env {
            Some(s) => cmd.env("KPZLAB_SEED", s),
            None => cmd.env_remove("KPZLAB_SEED"),
        };
        let out = cmd.output().unwrap();
        assert_eq!(out.status.code(), Some(0));
        body(&String::from_utf8(out.stdout).unwrap())
    };
    let a = run("1", Some("9"), &[]);
    assert_eq!(a, run("3", Some("9"), &[]));
    assert_eq!(a, run("2", None, &["--seed", "9"]));
    assert_eq!(a, run("1", Some("5"), &["--seed", "9"]));
    assert_ne!(a, run("1", Some("5"), &[]));
}

#[test]
fn moments_and_critical_point_tables() {
    let out = kpzlab(&["moments", "--eps", "0.2,0.1", "--quad-points", "256"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(body(&text).starts_with("epsilon,k,rescaled_beta_moment,she_moment,ratio"));
    let out = kpzlab(&[
        "moments",
        "--k",
        "2",
        "--x",
        "0,0",
        "--eps",
        "0.2",
        "--quad-points",
        "128",
        "--format",
        "json",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let out = kpzlab(&["moments", "--k", "2", "--x", "0,0,0"]);
    assert_eq!(out.status.code(), Some(1));
    let out = kpzlab(&["critical-point", "--eps", "0.05"]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn she_solve_runs() {
    let out = kpzlab(&[
        "she-solve",
        "--replicas",
        "4",
        "--dx",
        "0.05",
        "--half-width",
        "4",
        "--format",
        "json",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["rows"].as_array().unwrap().len(), 4);
    assert!(v["summary"]["second_moment_target"].as_f64().unwrap() > 2.4);
    assert_eq!(kpzlab(&["she-solve", "--half-width", "1"]).status.code(), Some(1));
}
