//! End-to-end tests of the command surface: exit codes, reports and traces.

use std::path::{Path, PathBuf};

use clap::Parser;
use hetindex_cli::{config::schema_json, run, Cli, RunResult};
use serde_json::Value;

fn run_args(args: &[&str]) -> RunResult {
    let mut full = vec!["hetindex"];
    full.extend_from_slice(args);
    run(&Cli::parse_from(full))
}

fn out_dir() -> tempfile::TempDir {
    tempfile::tempdir().expect("tempdir")
}

fn report(dir: &Path) -> Value {
    let text = std::fs::read_to_string(dir.join("report.json")).expect("report written");
    serde_json::from_str(&text).expect("report is JSON")
}

fn demo(name: &str, dir: &Path) -> (RunResult, Value) {
    let res = run_args(&["demo", name, "--out", dir.to_str().unwrap()]);
    let rep = report(dir);
    (res, rep)
}

fn config_file(dir: &Path, json: &str) -> PathBuf {
    let p = dir.join("config.json");
    std::fs::write(&p, json).unwrap();
    p
}

fn command_with_config(cmd: &str, json: &str) -> (RunResult, tempfile::TempDir) {
    let dir = out_dir();
    let cfg = config_file(dir.path(), json);
    let out = dir.path().join("out");
    let res = run_args(&[
        cmd,
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    (res, dir)
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let mut r = csv::Reader::from_path(path).expect("trace written");
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| {
            rec.unwrap()
                .iter()
                .map(|x| if x.is_empty() { f64::NAN } else { x.parse().unwrap() })
                .collect()
        })
        .collect();
    (header, rows)
}

#[test]
fn rotating_line_demo_reports_index_one_and_cosine_trace() {
    let dir = out_dir();
    let (res, rep) = demo("rotating-line", dir.path());
    assert_eq!(res.code, 0, "{:?}", res.stderr);
    assert_eq!(rep["status"], "ok");
    assert_eq!(rep["result"]["index"]["value"], 1);
    assert_eq!(rep["result"]["orientability"]["value"], 1);
    // The report embeds the resolved config.
    assert_eq!(rep["config"]["tolerances"]["eps_trans"], 1e-6);
    let (header, rows) = read_csv(&dir.path().join("trace.csv"));
    assert_eq!(header, ["t", "det"]);
    assert!(rows.len() > 10);
    for r in rows {
        assert!((r[1] - r[0].cos()).abs() < 1e-12, "det({}) = {}", r[0], r[1]);
    }
}

#[test]
fn reports_are_deterministic() {
    let (a, b) = (out_dir(), out_dir());
    demo("rotating-line", a.path());
    demo("rotating-line", b.path());
    for f in ["report.json", "trace.csv"] {
        assert_eq!(
            std::fs::read(a.path().join(f)).unwrap(),
            std::fs::read(b.path().join(f)).unwrap()
        );
    }
}

#[test]
fn mobius_demo_is_non_orientable() {
    let dir = out_dir();
    let (res, rep) = demo("mobius", dir.path());
    assert_eq!(res.code, 0);
    assert_eq!(rep["result"]["orientability"]["value"], 1);
    assert_eq!(rep["result"]["index"]["value"], 1);
}

#[test]
fn maslov_demo_agrees_mod_two() {
    let dir = out_dir();
    let (res, rep) = demo("maslov-shear", dir.path());
    assert_eq!(res.code, 0, "{:?}", res.stderr);
    assert_eq!(rep["result"]["maslov"]["value"], -2);
    assert_eq!(rep["result"]["z2"]["value"], 0);
    assert_eq!(rep["result"]["agree_mod_2"], true);
}

#[test]
fn unknown_demo_lists_available_ones() {
    let res = run_args(&["demo", "unknown", "--out", out_dir().path().to_str().unwrap()]);
    assert_eq!(res.code, 2);
    let msg = res.stderr.join("\n");
    assert!(msg.contains("poschl-teller") && msg.contains("mobius"), "{msg}");
}

#[test]
fn malformed_expression_exits_2_with_location() {
    let (res, _d) = command_with_config(
        "index",
        r#"{"kind": "subspace-paths", "n": 2, "k": 1,
            "V": [["tanh("], ["1"]], "W": [["0"], ["1"]]}"#,
    );
    assert_eq!(res.code, 2);
    let msg = res.stderr.join("\n");
    assert!(msg.contains("byte 5") && msg.contains("V"), "{msg}");
}

#[test]
fn endpoint_transversality_failure_exits_3_naming_the_endpoint() {
    let (res, _d) = command_with_config(
        "index",
        r#"{"kind": "subspace-paths", "n": 2, "k": 1,
            "V": [["cos(t)"], ["sin(t)"]], "W": [["0"], ["1"]],
            "domain": {"kind": "interval", "a": 0, "b": 1.5707963267948966}}"#,
    );
    assert_eq!(res.code, 3);
    let msg = res.stderr.join("\n");
    assert!(msg.contains("endpoint t = 1.57"), "{msg}");
}

#[test]
fn unknown_config_fields_and_missing_files_exit_2() {
    let (res, _d) = command_with_config("index", r#"{"kind": "subspace-paths", "n": 2, "bogus": 1}"#);
    assert_eq!(res.code, 2);
    let res = run_args(&["index", "--config", "/nonexistent/config.json"]);
    assert_eq!(res.code, 2);
}

#[test]
fn wrong_kind_for_command_exits_2() {
    let (res, _d) = command_with_config(
        "bifurcate",
        r#"{"kind": "linear-family", "n": 2, "S": [["-1", "0"], ["0", "1"]]}"#,
    );
    assert_eq!(res.code, 2);
}

#[test]
fn poschl_teller_demo_verifies_the_theorem() {
    let dir = out_dir();
    let (res, rep) = demo("poschl-teller", dir.path());
    assert_eq!(res.code, 0, "{:?}", res.stderr);
    let th = &rep["result"]["theorem"];
    assert_eq!(th["lhs"]["value"], 1);
    assert_eq!(th["rhs"]["value"], 1);
    assert_eq!(th["agree"], true);
    let flips = th["lhs"]["flips"].as_array().unwrap();
    assert_eq!(flips.len(), 1);
    assert!((flips[0].as_f64().unwrap() - 0.8).abs() <= 0.002);
    assert_eq!(rep["result"]["stable_under_doubling"], true);
    assert_eq!(rep["result"]["decomposition"]["holds"], true);
    let (header, rows) = read_csv(&dir.path().join("trace.csv"));
    assert_eq!(header, ["lambda", "detsign", "sigma_min"]);
    assert_eq!(rows.len(), 201);
    let (header, _) = read_csv(&dir.path().join("trace-index.csv"));
    assert_eq!(header, ["t", "det"]);
}

#[test]
fn control_demos_give_zero_equals_zero() {
    for name in ["constant-hyperbolic", "negative-control"] {
        let dir = out_dir();
        let (res, rep) = demo(name, dir.path());
        assert_eq!(res.code, 0, "{name}: {:?}", res.stderr);
        let th = &rep["result"]["theorem"];
        assert_eq!(th["lhs"]["value"], 0, "{name}");
        assert_eq!(th["rhs"]["value"], 0, "{name}");
        assert_eq!(th["lhs"]["flips"].as_array().unwrap().len(), 0, "{name}");
    }
}

#[test]
fn non_hyperbolic_limit_exits_2_naming_a1() {
    let (res, _d) = command_with_config(
        "verify-theorem",
        r#"{"kind": "linear-family", "n": 2, "k": 1,
            "S": [["0", "1"], ["lambda*sech(t)^2", "0"]],
            "tolerances": {"n_intervals": 400, "lambda_points": 11}}"#,
    );
    assert_eq!(res.code, 2);
    let msg = res.stderr.join("\n");
    assert!(msg.contains("(A1)"), "{msg}");
}

#[test]
fn geometric_parity_and_inferred_k() {
    let (res, d) = command_with_config(
        "geometric-parity",
        r#"{"kind": "linear-family", "n": 2,
            "S": [["0", "1"], ["1 - 2.5*lambda*sech(t)^2", "0"]]}"#,
    );
    assert_eq!(res.code, 0, "{:?}", res.stderr);
    let rep = report(&d.path().join("out"));
    assert_eq!(rep["config"]["k"], 1);
    let results = rep["result"].as_array().unwrap();
    assert_eq!(results[0]["report"]["value"], 0);
    assert_eq!(results[1]["report"]["value"], 1);
    assert!(d.path().join("out/trace-0.csv").exists());
    assert!(d.path().join("out/trace-1.csv").exists());
}

#[test]
fn cubic_demos_bifurcate_or_are_inconclusive() {
    let dir = out_dir();
    let (res, rep) = demo("cubic-schrodinger", dir.path());
    assert_eq!(res.code, 0, "{:?}", res.stderr);
    assert_eq!(rep["result"]["bifurcates"], true);
    let cands = rep["result"]["lambda_candidates"].as_array().unwrap();
    assert_eq!(cands.len(), 1);
    assert!((cands[0].as_f64().unwrap() - 0.8).abs() <= 0.002);

    let dir = out_dir();
    let (res, rep) = demo("cubic-truncated", dir.path());
    assert_eq!(res.code, 0);
    assert_eq!(rep["result"]["bifurcates"], false);
    assert_eq!(rep["result"]["index"], 0);
    assert_eq!(rep["result"]["verdict"], "inconclusive");
}

#[test]
fn bad_restpoint_exits_2() {
    let (res, d) = command_with_config(
        "bifurcate",
        r#"{"kind": "nonlinear-family", "n": 2,
            "g": ["z2", "z1 - 2.5*lambda*sech(t)^2*z1 + z1^3"],
            "z_minus": [1, 0], "z_plus": [0, 0]}"#,
    );
    assert_eq!(res.code, 2);
    let rep = report(&d.path().join("out"));
    assert_eq!(rep["status"], "error");
    assert_eq!(rep["exit_code"], 2);
}

#[test]
fn selftest_passes_all_suites() {
    let dir = out_dir();
    let res = run_args(&["selftest", "--seed", "0", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(res.code, 0, "{:?}", res.stdout);
    let rep = report(dir.path());
    assert_eq!(rep["seed"], 0);
    let suites = rep["result"].as_array().unwrap();
    assert!(suites.len() >= 8);
    for s in suites {
        assert_eq!(s["passed"], s["cases"], "{s}");
    }
}

#[test]
fn shipped_schema_matches_the_config_type() {
    let shipped = std::fs::read_to_string(
        Path::new(env!("CARGO_MANIFEST_DIR")).join("config.schema.json"),
    )
    .unwrap();
    assert_eq!(shipped, schema_json(), "regenerate with `hetindex schema`");
}

#[test]
fn bundled_demos_validate_against_the_config_type() {
    for (name, _, text) in hetindex_cli::DEMOS {
        hetindex_cli::config::Config::from_json(text).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
}
