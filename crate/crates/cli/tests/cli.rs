use std::io::Write;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::NamedTempFile;

const POWER_LAW_V: &str = "a*(1-q^alpha)/(1-q)*x^(alpha-1) + a^2*q^alpha*x^(2*alpha)";

fn job(config: &str) -> NamedTempFile {
    let mut f = NamedTempFile::new().unwrap();
    f.write_all(config.as_bytes()).unwrap();
    f
}

fn run(config: &str, args: &[&str]) -> Output {
    let f = job(config);
    Command::new(env!("CARGO_BIN_EXE_qdarboux"))
        .args(args)
        .arg("--config")
        .arg(f.path())
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn json_out(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn column(v: &Value, name: &str) -> Vec<Value> {
    let k = v["columns"]
        .as_array()
        .unwrap()
        .iter()
        .position(|c| c == name)
        .unwrap_or_else(|| panic!("no column {name}"));
    v["rows"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r[k].clone())
        .collect()
}

fn floats(v: &Value, name: &str) -> Vec<f64> {
    column(v, name).iter().map(|c| c.as_f64().unwrap()).collect()
}

fn power_law(extra: &str) -> String {
    format!(
        r#"{{"grid": {{"base": 1, "q": 0.5, "depth": 256}},
            "potentials": {{"V": "{POWER_LAW_V}"}},
            "seed": "a*x^alpha", "params": {{"a": 1, "alpha": 1}}{extra}}}"#
    )
}

#[test]
fn zero_potentials_give_constant_columns() {
    let cfg = r#"{"grid": {"q": 0.5, "depth": 32},
                  "potentials": {"R": "0", "S": "0", "T": "0", "V": "0"},
                  "initial": [1, 0]}"#;
    let out = run(cfg, &["solve-linear"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "index,x,psi,phi,u,res_psi,res_phi,resolved,closed_form_gap"
    );
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 33);
    for r in &rows {
        assert_eq!(r[2], "1.0000000000000000e0");
        assert_eq!(r[3], "0.0000000000000000e0");
        assert_eq!(r[4], "0.0000000000000000e0");
        assert_eq!(r[8], "0.0000000000000000e0");
    }
}

#[test]
fn v_zero_job_reports_closed_form_gap() {
    let cfg = r#"{"grid": {"q": 0.5, "depth": 256},
                  "potentials": {"R": "x", "S": "1 + x", "T": "-0.5"},
                  "initial": [1, 0.3], "format": "json"}"#;
    let out = run(cfg, &["solve-linear"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let v = json_out(&out);
    let gap = v["summary"]["max_closed_form_gap"].as_f64().unwrap();
    assert!(gap < 1e-12, "gap {gap}");
    assert!(v["summary"]["max_residual"].as_f64().unwrap() < 1e-9);
    assert_eq!(floats(&v, "closed_form_gap").len(), 257);
}

#[test]
fn malformed_expression_reports_offset() {
    let out = run(r#"{"grid": {"q": 0.5}, "potentials": {"R": "x + (2"}}"#, &["solve-linear"]);
    assert_eq!(code(&out), 2);
    let msg = stderr(&out);
    assert!(msg.contains("byte 6"), "{msg}");
    assert!(out.stdout.is_empty());
}

#[test]
fn unbound_parameter_is_a_config_error() {
    let out = run(r#"{"grid": {"q": 0.5}, "potentials": {"V": "b*x"}}"#, &["solve-linear"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("unbound parameter(s) b"));
}

#[test]
fn q_one_is_rejected_with_classic_hint() {
    let out = run(&power_law(""), &["verify", "--grid-q", "1"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("--classic"));
}

#[test]
fn command_must_be_given_once() {
    let cfg = power_law(r#", "command": "verify""#);
    assert_eq!(code(&run(&cfg, &["backlund"])), 2);
    assert_eq!(code(&run(&power_law(""), &[])), 2);
    assert_eq!(code(&run(&cfg, &[])), 0);
}

#[test]
fn zero_t_reproduces_seed() {
    let out = run(&power_law(r#", "t": 0"#), &["backlund"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(
        header,
        ["index", "x", "u0", "u", "v_before", "v_after", "residual", "resolved", "pole"]
    );
    for line in lines {
        let r: Vec<&str> = line.split(',').collect();
        assert_eq!(r[2], r[3]);
        assert_eq!(r[8], "0");
    }
}

#[test]
fn plus_transform_certifies_residual() {
    let out = run(&power_law(""), &["backlund", "--t", "0.7", "--format", "json"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let v = json_out(&out);
    assert!(v["summary"]["max_residual"].as_f64().unwrap() < 1e-8);
    let resolved = column(&v, "resolved");
    let residual = column(&v, "residual");
    for (r, ok) in residual.iter().zip(&resolved) {
        if ok.as_bool().unwrap() {
            assert!(r.as_f64().unwrap().abs() < 1e-8);
        }
    }
}

#[test]
fn negative_t_marks_pole_rows() {
    // 1 + t·G(1) vanishes near t = -1.29 for this seed
    let out = run(&power_law(""), &["backlund", "--t", "-1.5", "--format", "json"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let v = json_out(&out);
    let poles = column(&v, "pole");
    assert_eq!(poles[0], Value::Bool(true));
    assert_eq!(v["summary"]["poles"][0], serde_json::json!([0]));
    assert_eq!(poles.len(), 257);
}

#[test]
fn four_t_job_emits_cross_ratio_and_target() {
    let out = run(
        &power_law(""),
        &["backlund", "--t", "0.1,0.2", "--t", "-0.3", "--t", "0.8", "--format", "json"],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let v = json_out(&out);
    let target = (0.8 - -0.3) * (0.1 - 0.2) / ((-0.3 - 0.1) * (0.2 - 0.8));
    for t in floats(&v, "target") {
        assert_eq!(t, target);
    }
    for r in column(&v, "cross_ratio") {
        assert!((r.as_f64().unwrap() - target).abs() < 1e-10);
    }
    assert!(v["summary"]["max_cross_ratio_gap"].as_f64().unwrap() < 1e-10);
    for k in 1..=4 {
        column(&v, &format!("u_{k}"));
    }
}

#[test]
fn chain_residual_matches_companion_potential() {
    let cfg = r#"{"grid": {"base": 0.5, "q": 0.5, "depth": 64},
                  "potentials": {"V": "1 + 0.5*x^2"}, "seed": "x",
                  "t": [0.3, -0.2, 0.4], "transform": "chain", "format": "json"}"#;
    let out = run(cfg, &["backlund"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let v = json_out(&out);
    assert!(v["summary"]["max_residual"].as_f64().unwrap() < 1e-8);
}

#[test]
fn chain_through_a_pole_is_a_numerical_error() {
    let out = run(&power_law(r#", "t": [-1.5], "transform": "chain""#), &["backlund"]);
    assert_eq!(code(&out), 3);
    let msg = stderr(&out);
    assert!(msg.contains("lattice indices 0 and 1"), "{msg}");
}

#[test]
fn rosen_morse_limit() {
    let cfg = r#"{"grid": {"base": 1, "q": 0.9999, "depth": 280000},
                  "potentials": {"V": "a^2"}, "seed": "a", "params": {"a": 1},
                  "t": 1, "transform": "minus", "stride": 1000, "format": "json"}"#;
    let out = run(cfg, &["backlund"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let v = json_out(&out);
    let x = floats(&v, "x");
    let after = column(&v, "v_after");
    let mut checked = 0;
    for (x, va) in x.iter().zip(&after) {
        if (0.1..=1.0).contains(x) {
            let (em, ep) = ((-x).exp(), x.exp());
            let rm = (em * em - 6.0 + ep * ep) / ((em + ep) * (em + ep));
            assert!((va.as_f64().unwrap() - rm).abs() < 1e-2, "x = {x}");
            checked += 1;
        }
    }
    assert!(checked > 20);
}

#[test]
fn classic_mode_runs_differential_transform() {
    let cfg = r#"{"potentials": {"V": "1 + x^2"}, "seed": "x", "t": 0.5,
                  "classic": {"step": 0.001, "x_max": 1}, "format": "json"}"#;
    let out = run(cfg, &["backlund", "--classic"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let v = json_out(&out);
    assert_eq!(floats(&v, "u")[0], 0.5);
    assert!(v["summary"]["max_residual"].as_f64().unwrap() < 1e-5);
    let out = run(cfg, &["verify"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn verify_passes_on_power_law_seed() {
    let out = run(&power_law(""), &["verify"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let v = json_out(&out);
    assert_eq!(v["passed"], Value::Bool(true));
    let checks = v["checks"].as_array().unwrap();
    assert_eq!(checks.len(), 6);
    for c in checks {
        assert_eq!(c["status"], "pass", "{c}");
        assert!(c["max_residual"].as_f64().unwrap() <= c["tolerance"].as_f64().unwrap());
    }
}

#[test]
fn corrupted_potential_fails_seed_validation() {
    let cfg = power_law("").replace("x^(2*alpha)\"", "x^(2*alpha) + 1e-6\"");
    let out = run(&cfg, &["verify"]);
    assert_eq!(code(&out), 4);
    let v = json_out(&out);
    assert_eq!(v["passed"], Value::Bool(false));
    assert_eq!(v["checks"][0]["name"], "seed_validation");
    assert_eq!(v["checks"][0]["status"], "fail");
    assert_eq!(v["checks"][1]["status"], "skipped");
    assert!(stderr(&out).contains("seed_validation"));
}

#[test]
fn tolerance_override_fails_job_after_output() {
    let out = run(&power_law(""), &["backlund", "--t", "0.5", "--tolerance", "1e-300"]);
    assert_eq!(code(&out), 4);
    assert!(!out.stdout.is_empty());
}

#[test]
fn identical_configs_give_identical_output() {
    let cfg = power_law(r#", "t": [0.1, 0.2, 0.4, 0.8]"#);
    let a = run(&cfg, &["backlund"]);
    let b = run(&cfg, &["backlund"]);
    assert_eq!(code(&a), 0);
    assert_eq!(a.stdout, b.stdout);
    let a = run(&cfg, &["verify"]);
    let b = run(&cfg, &["verify"]);
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn shipped_jobs_run() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../jobs");
    let mut seen = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let out = Command::new(env!("CARGO_BIN_EXE_qdarboux"))
            .arg("--config")
            .arg(&path)
            .output()
            .unwrap();
        assert_eq!(code(&out), 0, "{}: {}", path.display(), stderr(&out));
        seen += 1;
    }
    assert!(seen >= 6);
}
