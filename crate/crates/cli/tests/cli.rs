//! End-to-end checks of the command-line surface: exit codes, output
//! formats, reproducibility.

use std::path::Path;
use std::process::{Command, Output};

fn twoscale(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_twoscale"))
        .args(args)
        .current_dir(dir)
        .env_remove("TWOSCALE_SEED")
        .output()
        .expect("binary runs")
}

#[test]
fn validate_builtin_retrial_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = twoscale(&["validate", "--builtin", "retrial", "--out", "v"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("v/validation.json")).unwrap())
            .unwrap();
    assert_eq!(report["slow_irreducible"], true);
    assert!(dir.path().join("v/run_manifest.json").exists());
}

#[test]
fn validate_one_way_graph_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let config = r#"{
        "slow": {"states": ["a", "b"],
                 "edges": [{"from": "a", "to": "b", "base": 1.0}]},
        "fast": {"states": ["u", "v"],
                 "edges": [{"from": "u", "to": "v", "base": 1.0},
                           {"from": "v", "to": "u", "base": 1.0}]}
    }"#;
    std::fs::write(dir.path().join("oneway.json"), config).unwrap();
    let out = twoscale(
        &["validate", "--model", "oneway.json", "--out", "v"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("v/validation.json")).unwrap())
            .unwrap();
    assert_eq!(report["slow_irreducible"], false);
}

#[test]
fn malformed_model_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.json"), "{ not json").unwrap();
    let out = twoscale(
        &["validate", "--model", "bad.json", "--out", "v"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));

    // schema violation: negative rate
    let config = r#"{
        "slow": {"states": ["a", "b"],
                 "edges": [{"from": "a", "to": "b", "base": -2.0}]},
        "fast": {"states": ["u"], "edges": []}
    }"#;
    std::fs::write(dir.path().join("neg.json"), config).unwrap();
    let out = twoscale(
        &["validate", "--model", "neg.json", "--out", "v"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn simulate_same_seed_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["a", "b"] {
        let out = twoscale(
            &[
                "simulate", "--builtin", "retrial", "--n", "40", "--horizon", "0.5",
                "--seed", "9", "--out", name,
            ],
            dir.path(),
        );
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let a = std::fs::read(dir.path().join("a/path.csv")).unwrap();
    let b = std::fs::read(dir.path().join("b/path.csv")).unwrap();
    assert_eq!(a, b);
    let a = std::fs::read(dir.path().join("a/occupation.csv")).unwrap();
    let b = std::fs::read(dir.path().join("b/occupation.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn seed_env_fallback() {
    let dir = tempfile::tempdir().unwrap();
    let run = |env_seed: Option<&str>, arg_seed: Option<&str>, out: &str| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_twoscale"));
        cmd.args([
            "simulate", "--builtin", "retrial", "--n", "30", "--horizon", "0.4", "--out", out,
        ])
        .current_dir(dir.path())
        .env_remove("TWOSCALE_SEED");
        if let Some(s) = env_seed {
            cmd.env("TWOSCALE_SEED", s);
        }
        if let Some(s) = arg_seed {
            cmd.args(["--seed", s]);
        }
        assert!(cmd.output().unwrap().status.success());
    };
    run(Some("123"), None, "env");
    run(None, Some("123"), "arg");
    run(Some("99"), Some("123"), "both"); // the flag wins
    let env_csv = std::fs::read(dir.path().join("env/path.csv")).unwrap();
    let arg_csv = std::fs::read(dir.path().join("arg/path.csv")).unwrap();
    let both_csv = std::fs::read(dir.path().join("both/path.csv")).unwrap();
    assert_eq!(env_csv, arg_csv);
    assert_eq!(arg_csv, both_csv);
}

#[test]
fn ode_flow_csv_has_labelled_header() {
    let dir = tempfile::tempdir().unwrap();
    let out = twoscale(
        &[
            "ode", "--builtin", "retrial", "--param", "K=2", "--horizon", "0.2", "--step",
            "0.01", "--out", "flow",
        ],
        dir.path(),
    );
    assert!(out.status.success());
    let csv = std::fs::read_to_string(dir.path().join("flow/flow.csv")).unwrap();
    let header = csv.lines().next().unwrap();
    assert_eq!(header, "t,mu_0,mu_1,mu_2,pi_idle,pi_busy");
    // rows: header + horizon/step + 1
    assert_eq!(csv.lines().count(), 1 + 21);
}

#[test]
fn rate_on_typical_flow_is_negligible() {
    let dir = tempfile::tempdir().unwrap();
    let out = twoscale(
        &[
            "rate", "--builtin", "retrial", "--horizon", "0.5", "--step", "0.001", "--out", "r",
        ],
        dir.path(),
    );
    assert!(out.status.success());
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("r/rate.json")).unwrap())
            .unwrap();
    let j = report["J_total"].as_f64().unwrap();
    assert!(j <= 1e-5, "J_total {j}");
    assert_eq!(report["diverged"], false);
    assert!(report["steps"].as_array().unwrap().len() > 100);
}

#[test]
fn martingale_subcommand_passes_and_fails_as_designed() {
    let dir = tempfile::tempdir().unwrap();
    let out = twoscale(
        &[
            "martingale", "--builtin", "retrial", "--n", "15", "--horizon", "0.3", "--tilts",
            "4", "--max-entry", "0.15", "--replicas", "2000", "--seed", "5", "--out", "m",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));

    let out = twoscale(
        &[
            "martingale", "--builtin", "retrial", "--n", "15", "--horizon", "0.3", "--tilts",
            "4", "--max-entry", "0.15", "--replicas", "2000", "--seed", "5",
            "--broken-compensator", "--out", "mb",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1), "negative control must fail");
}

#[test]
fn probe_averaging_smoke() {
    let dir = tempfile::tempdir().unwrap();
    let out = twoscale(
        &[
            "probe", "--kind", "averaging", "--builtin", "retrial", "--ns", "50,200",
            "--horizon", "0.5", "--replicas", "10", "--seed", "2", "--out", "p",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("p/averaging.json")).unwrap())
            .unwrap();
    assert_eq!(report["ns"].as_array().unwrap().len(), 2);
}
