use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_subriemann")).args(args).output().expect("run subriemann")
}

fn json_of(out: &Output) -> Value {
    assert!(out.status.success(), "exit {:?}: {}", out.status.code(), String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("single JSON document")
}

#[test]
fn growth_vector_of_engel() {
    let out = run(&["growth", "--model", "engel", "--point", "0,0,0,0", "--quiet-timestamps"]);
    let text = String::from_utf8(out.stdout.clone()).unwrap();
    assert!(text.contains("[2,3,4]"), "{text}");
    assert_eq!(json_of(&out)["result"]["growth_vector"], serde_json::json!([2, 3, 4]));
}

#[test]
fn distance_to_the_vertical_unit() {
    let doc = json_of(&run(&["dist", "--model", "heisenberg-1", "--p", "0,0,0", "--q", "0,0,1", "--ngon", "32", "--quiet-timestamps"]));
    let r = &doc["result"];
    let oracle = r["oracle"].as_f64().unwrap();
    let upper = r["upper"].as_f64().unwrap();
    assert!((oracle - 3.5449077).abs() < 1e-6, "{oracle}");
    assert!(upper >= oracle && upper <= 3.551, "{upper}");
    assert!(r["lower"].as_f64().unwrap() <= upper);
}

#[test]
fn header_records_the_run() {
    let doc = json_of(&run(&["flow", "--model", "heisenberg-1", "--index", "1,2", "--t", "0.1", "--point", "0,0,0", "--seed", "3"]));
    let cfg = &doc["config"];
    assert_eq!(cfg["seed"], 3);
    assert_eq!(cfg["model"], "heisenberg-1");
    assert_eq!(cfg["params"]["command"], "flow");
    assert_eq!(cfg["params"]["index"], "1,2");
    assert!(cfg["timestamp_unix"].is_u64());
    let end: Vec<f64> = serde_json::from_value(doc["result"]["endpoint"].clone()).unwrap();
    assert!(end[0].abs() < 1e-12 && end[1].abs() < 1e-12 && (end[2] + 0.01).abs() < 1e-9, "{end:?}");
}

#[test]
fn seeded_runs_are_byte_identical() {
    let args = ["convexity", "--model", "heisenberg-1", "--f", "x*y", "--samples", "40", "--geodesics", "10", "--seed", "11", "--quiet-timestamps"];
    let a = run(&args);
    let b = run(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    assert!(!String::from_utf8_lossy(&a.stdout).contains("timestamp"));
}

#[test]
fn csv_has_config_line_and_header_row() {
    let out = run(&["geodesic", "--model", "heisenberg-1", "--x0", "0,0,0", "--v0", "1,0", "--t", "0.01", "--format", "csv"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# {"));
    let header = lines.next().unwrap();
    assert!(header.split(',').count() > 2, "{header}");
    assert_eq!(lines.count(), 11);
}

#[test]
fn inline_and_file_together_is_a_usage_error() {
    let path = std::env::temp_dir().join(format!("subriemann-point-{}.txt", std::process::id()));
    std::fs::write(&path, "0 0 0").unwrap();
    let file = path.to_str().unwrap();
    let both = run(&["grad", "--model", "heisenberg-1", "--f", "x", "--point", "0,0,0", "--point-file", file]);
    assert_eq!(both.status.code(), Some(1));
    let from_file = run(&["grad", "--model", "heisenberg-1", "--f", "x", "--point-file", file]);
    assert_eq!(json_of(&from_file)["result"]["gradient_frame"], serde_json::json!([1.0, 0.0]));
    std::fs::remove_file(path).ok();
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(run(&["growth", "--model", "no-such-model", "--point", "0,0,0"]).status.code(), Some(1));
    assert_eq!(run(&["growth", "--point", "0,0,0"]).status.code(), Some(1));
    assert_eq!(run(&["hess", "--model", "heisenberg-1", "--f", "x +", "--point", "0,0,0"]).status.code(), Some(1));
    assert_eq!(run(&["growth", "--model", "heisenberg-1", "--point", "0,zero,0"]).status.code(), Some(1));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
}

#[test]
fn numerical_failure_exits_two_with_diagnostic() {
    let out = run(&["steer", "--model", "engel", "--p", "0,0,0,0", "--q", "0.9,-0.9,0.9,-0.9", "--maxiter", "1", "--tol", "1e-14"]);
    assert_eq!(out.status.code(), Some(2));
    let diag: Value = serde_json::from_slice(&out.stderr).expect("diagnostic JSON on stderr");
    assert_eq!(diag["error"], "no-convergence");
}

#[test]
fn invariant_failure_exits_three() {
    // C below the values of f makes the bound unattainable
    let out = run(&["lower-bound", "--model", "heisenberg-1", "--f", "x^2+y^2+1", "--y0", "0,0,0", "--radius", "0.2", "--c", "0.5", "--samples", "20"]);
    assert_eq!(out.status.code(), Some(3));
    let doc: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(doc["result"]["lower_bound"]["violations"].as_u64().unwrap() > 0);
}

#[test]
fn model_files_are_accepted_and_recorded() {
    let path = std::env::temp_dir().join(format!("subriemann-model-{}.json", std::process::id()));
    std::fs::write(&path, subriemann::models::builtin_document("heisenberg-1").unwrap()).unwrap();
    let doc = json_of(&run(&["sublap", "--model", path.to_str().unwrap(), "--f", "x^2+y^2", "--point", "0.1,0.2,0.3"]));
    assert_eq!(doc["result"]["sublaplacian"], 4.0);
    assert!(doc["config"]["model_document"]["horizontal"].is_array());
    std::fs::remove_file(path).ok();
}

#[test]
fn verify_runs_selected_criteria() {
    let out = run(&["verify", "--model", "heisenberg-1", "--criteria", "1,5", "--quiet-timestamps"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("[PASS]  1 carnot-flatness"));
    assert!(text.contains("[PASS]  5 commutator-flow"));
    let json = json_of(&run(&["verify", "--model", "engel", "--criteria", "2", "--format", "json"]));
    assert_eq!(json["result"]["criteria"][0]["status"], "skipped");
}

#[test]
fn negative_values_are_accepted() {
    let doc = json_of(&run(&["flow", "--model", "heisenberg-1", "--index", "1,2", "--t", "-0.1", "--point", "-0.5,0,0"]));
    let end: Vec<f64> = serde_json::from_value(doc["result"]["endpoint"].clone()).unwrap();
    assert!((end[0] + 0.5).abs() < 1e-12 && (end[2] - 0.01).abs() < 1e-9, "{end:?}");
}
