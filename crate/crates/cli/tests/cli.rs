use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn parskit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_parskit"))
        .args(args)
        .env_remove("PARSKIT_SEED")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn json(args: &[&str]) -> (i32, Value) {
    let mut all = vec!["--json"];
    all.extend_from_slice(args);
    let o = parskit(&all);
    let v = serde_json::from_slice(&o.stdout).unwrap_or_else(|e| {
        panic!(
            "no JSON from {args:?}: {e}\nstdout: {}\nstderr: {}",
            String::from_utf8_lossy(&o.stdout),
            String::from_utf8_lossy(&o.stderr)
        )
    });
    (code(&o), v)
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn row(v: &Value) -> String {
    v["results"]["decisions"]
        .as_array()
        .unwrap()
        .iter()
        .map(|d| match d["verdict"].as_str().unwrap() {
            "yes" => '+',
            "no" => '-',
            _ => '?',
        })
        .collect()
}

#[test]
fn validate_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let good = write(
        dir.path(),
        "coin.json",
        r#"{"kind": "pars", "states": ["0", "1", "a"], "rules": [
            {"from": "0", "to": "1", "p": "1"}, {"from": "1", "to": "1", "p": "1/2"}, {"from": "1", "to": "a", "p": "0.5"}]}"#,
    );
    assert_eq!(code(&parskit(&["validate", &good])), 0);

    let bad = write(
        dir.path(),
        "bad.json",
        r#"{"states": ["0", "a"], "rules": [{"from": "0", "to": "a", "p": "1/3"}]}"#,
    );
    let (c, v) = json(&["validate", &bad]);
    assert_eq!(c, 2);
    assert!(v["results"]["issues"].to_string().contains("DistributionSum"));

    let missing = dir.path().join("missing.json");
    assert_eq!(code(&parskit(&["validate", missing.to_str().unwrap()])), 1);
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&parskit(&["analyze"])), 1);
    assert_eq!(code(&parskit(&["frobnicate"])), 1);
    assert_eq!(code(&parskit(&["analyze", "corpus:nope"])), 1);
    assert_eq!(code(&parskit(&["--version"])), 0);
}

#[test]
fn analyze_overview_rows() {
    for (name, expected) in [("loop_a", "++----"), ("coin_b", "++-+++"), ("hindley_c", "+----+")] {
        let (c, v) = json(&["analyze", &format!("corpus:{name}")]);
        assert_eq!(c, 0);
        assert_eq!(row(&v), expected, "{name}");
        assert_eq!(v["results"]["expected_agrees"], true);
    }
    let (_, v) = json(&["analyze", "corpus:coin_b", "--properties", "normalization,prob_normalization"]);
    assert_eq!(row(&v), "++");
}

#[test]
fn analyze_refuses_generated_without_depth() {
    let o = parskit(&["analyze", "corpus:ladder_d"]);
    assert_eq!(code(&o), 3);
    let (c, v) = json(&["analyze", "corpus:ladder_dprime", "--depth", "30"]);
    assert_eq!(c, 0);
    assert_eq!(v["results"]["expected_agrees"], true);
}

#[test]
fn prob_reports() {
    let (c, v) = json(&["prob", "corpus:hindley_c", "--from", "0"]);
    assert_eq!(c, 0);
    assert_eq!(v["results"]["reach"]["a"], "2/3");
    assert_eq!(v["results"]["reach"]["b"], "1/3");
    assert_eq!(v["results"]["divergence"], "0");

    let o = parskit(&["prob", "corpus:loop_a", "--from", "0", "--to", "1"]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("reducible"));

    let (c, v) = json(&["prob", "corpus:ladder_d", "--from", "0", "--depth", "80", "--iterate", "60"]);
    assert_eq!(c, 0);
    let lo = parse_decimal(&v["results"]["divergence"]["lo"]);
    let hi = parse_decimal(&v["results"]["divergence"]["hi"]);
    assert!(lo <= 0.688_54 + 1e-5 && hi >= 0.688_54 - 1e-5, "[{lo}, {hi}]");
    assert!(hi - lo < 1e-3);

    let (_, v) = json(&["prob", "corpus:coin_b", "--from", "0", "--iterate", "3"]);
    let trace = v["results"]["trace"].as_array().unwrap();
    assert_eq!(trace.len(), 4);
    assert_eq!(trace[3]["settled"]["a"], "3/4");
}

fn parse_decimal(v: &Value) -> f64 {
    let s = v.as_str().unwrap();
    match s.split_once('/') {
        Some((n, d)) => big_ratio(n, d),
        None => s.parse().unwrap(),
    }
}

/// Ratio of two long decimal integers, via their leading digits.
fn big_ratio(n: &str, d: &str) -> f64 {
    let shift = d.len().saturating_sub(30);
    let keep = |x: &str| -> f64 {
        let cut = x.len().saturating_sub(shift);
        if cut == 0 {
            0.0
        } else {
            x[..cut].parse().unwrap()
        }
    };
    keep(n) / keep(d)
}

#[test]
fn simulate_is_reproducible() {
    let args = ["simulate", "corpus:hindley_c", "--from", "0", "--samples", "100000", "--seed", "7"];
    let (c, v) = json(&args);
    assert_eq!(c, 0);
    let a = v["results"]["absorbed"]["a"].as_u64().unwrap() as f64 / 1e5;
    assert!((a - 2.0 / 3.0).abs() < 0.005, "{a}");
    let first = parskit(&["--json", "simulate", "corpus:hindley_c", "--from", "0", "--seed", "7"]).stdout;
    let second = parskit(&["--json", "simulate", "corpus:hindley_c", "--from", "0", "--seed", "7", "--sequential"]).stdout;
    let strip = |b: &[u8]| -> Value {
        let mut v: Value = serde_json::from_slice(b).unwrap();
        v["arguments"] = Value::Null;
        v
    };
    assert_eq!(strip(&first), strip(&second));

    let env_run = Command::new(env!("CARGO_BIN_EXE_parskit"))
        .args(["--json", "simulate", "corpus:hindley_c", "--from", "0"])
        .env("PARSKIT_SEED", "7")
        .output()
        .unwrap();
    let v: Value = serde_json::from_slice(&env_run.stdout).unwrap();
    assert_eq!(v["results"]["seed"], 7);

    let (_, v) = json(&["simulate", "corpus:hindley_c", "--from", "a", "--samples", "1"]);
    assert_eq!(v["results"]["absorbed"]["a"], 1);
}

#[test]
fn certify_examples() {
    let (c, v) = json(&["certify", "corpus:herman3_pruned", "--certificate", "corpus:herman3_pruned"]);
    assert_eq!(c, 0);
    assert_eq!(v["results"]["verdict"]["status"], "certified");
    assert_eq!(v["results"]["min_margin"]["state"], "[010]");
    assert_eq!(v["results"]["min_margin"]["margin"], "1/2");

    let (_, v) = json(&["certify", "corpus:random_walk", "--certificate", "corpus:random_walk", "--depth", "200"]);
    assert_eq!(v["results"]["verdict"]["status"], "evidence");
    assert_eq!(v["results"]["min_margin"]["state"], "0");
    assert_eq!(v["results"]["min_margin"]["margin"], "1/3");

    let dir = tempfile::tempdir().unwrap();
    let constant = write(
        dir.path(),
        "const.json",
        r#"{"valuation": {"0": "1", "1": "1", "a": "1"}, "epsilon": "1/10"}"#,
    );
    let (c, v) = json(&["certify", "corpus:coin_b", "--certificate", &constant]);
    assert_eq!(c, 0);
    assert_eq!(v["results"]["verdict"]["status"], "violated");

    let partial = write(dir.path(), "partial.json", r#"{"valuation": {"0": "1"}, "epsilon": "1"}"#);
    assert_eq!(code(&parskit(&["certify", "corpus:coin_b", "--certificate", &partial])), 3);
}

#[test]
fn transform_examples() {
    let (c, v) = json(&["transform", "--map", "corpus:sec4_example"]);
    assert_eq!(c, 0);
    assert_eq!(v["results"]["conclusion"], "source_as_convergent");

    let (_, v) = json(&["transform", "--map", "corpus:herman3_pruned"]);
    assert_eq!(v["results"]["conclusion"], "source_as_convergent");

    let (_, v) = json(&[
        "transform",
        "--map",
        "corpus:herman3_pruned",
        "--as-term-cert",
        "corpus:herman3_pruned",
    ]);
    assert_eq!(v["results"]["as_termination_evidence"]["verdict"], "yes");

    let dir = tempfile::tempdir().unwrap();
    let target = write(
        dir.path(),
        "fork.json",
        r#"{"kind": "ars", "states": ["x", "a", "b"], "rules": [{"from": "x", "to": "a"}, {"from": "x", "to": "b"}]}"#,
    );
    let map = write(dir.path(), "map.json", r#"{"G": {"0": "x", "1": "x", "a": "a", "b": "b"}}"#);
    let (c, v) = json(&["transform", "corpus:hindley_c", &target, "--map", &map, "--mode", "Cprime"]);
    assert_eq!(c, 0);
    assert_eq!(v["results"]["conclusion"], "source_not_as_convergent");

    let partial = write(dir.path(), "partial.json", r#"{"G": {"0": "x"}}"#);
    let o = parskit(&["transform", "corpus:hindley_c", &target, "--map", &partial, "--mode", "C"]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("undefined"));
}

#[test]
fn export_dot_graphs() {
    let o = parskit(&["export-dot", "corpus:coin_b"]);
    let dot = String::from_utf8(o.stdout).unwrap();
    assert_eq!(dot.matches(" -> ").count(), 3);
    assert_eq!(dot.matches("[label=").count(), 3);

    let o = parskit(&["export-dot", "corpus:herman3"]);
    let dot = String::from_utf8(o.stdout).unwrap();
    let nodes = dot.lines().filter(|l| l.trim_start().starts_with("\"[") && !l.contains("->")).count();
    assert_eq!(nodes, 8);
    assert!(dot.contains("\"[111]\" -> \"[001]\" [label=\"1/4\"];"));

    let dir = tempfile::tempdir().unwrap();
    let empty = write(dir.path(), "empty.json", r#"{"states": [], "rules": []}"#);
    let o = parskit(&["export-dot", &empty]);
    assert_eq!(String::from_utf8(o.stdout).unwrap(), "digraph \"system\" {\n}\n");
}

#[test]
fn corpus_export_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = parskit(&["corpus", "export", "hindley_c", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let sys = out.join("hindley_c.json");
    assert!(out.join("hindley_c.annotations.json").exists());
    let (c, v) = json(&["analyze", sys.to_str().unwrap()]);
    assert_eq!(c, 0);
    assert_eq!(row(&v), "+----+");

    let (_, v) = json(&["corpus", "list"]);
    assert_eq!(v["results"]["entries"].as_array().unwrap().len(), 10);
}

#[test]
fn reports_are_byte_stable() {
    let a = parskit(&["--json", "analyze", "corpus:hindley_c"]).stdout;
    let b = parskit(&["--json", "analyze", "corpus:hindley_c"]).stdout;
    assert_eq!(a, b);
    let v: Value = serde_json::from_slice(&a).unwrap();
    assert_eq!(v["schema_version"], 1);
    assert!(v["input_digest"].as_str().unwrap().starts_with("sha256:"));
    assert!(v.get("timing_ms").is_none());
    let (_, v) = json(&["--timing", "analyze", "corpus:hindley_c"]);
    assert!(v["timing_ms"].is_number());
}
