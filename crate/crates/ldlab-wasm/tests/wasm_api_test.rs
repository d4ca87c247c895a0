//! Native checks of the browser API: every export returns well-formed JSON,
//! is deterministic in the seed, and reports errors as data instead of
//! panicking.

use ldlab_wasm::{check_demo, lln_run, steer_demo};
use serde_json::Value;

fn parse(s: &str) -> Value {
    serde_json::from_str(s).expect("export must return valid JSON")
}

#[test]
fn lln_run_reports_path_occupation_and_distance() {
    let v = parse(&lln_run(0.05, 7));
    assert!(v.get("error").is_none(), "{v}");
    let t = v["path"]["t"].as_array().unwrap();
    let y = v["path"]["y"].as_array().unwrap();
    assert_eq!(t.len(), y.len());
    assert!(t.len() <= 1502);
    assert_eq!(t[0].as_f64().unwrap(), 0.0);
    assert!((t.last().unwrap().as_f64().unwrap() - 1.0).abs() < 1e-12);
    let occ = v["occupation"].as_array().unwrap();
    let mass: f64 = occ.iter().map(|a| a[1].as_f64().unwrap()).sum();
    assert!((mass - 1.0).abs() < 1e-9);
    let d = v["dbl_to_origin"].as_f64().unwrap();
    assert!(d > 0.0 && d < 2.0, "{d}");

    assert_eq!(lln_run(0.05, 7), lln_run(0.05, 7));
    assert_ne!(lln_run(0.05, 7), lln_run(0.05, 8));
}

#[test]
fn steer_demo_reports_measure_cost_and_schedule() {
    let v = parse(&steer_demo(0.05, 3, -1.0, 0.3, 1.0));
    assert!(v.get("error").is_none(), "{v}");
    let measure = v["measure"].as_array().unwrap();
    let mass: f64 = measure.iter().map(|a| a[1].as_f64().unwrap()).sum();
    assert!((mass - 1.0).abs() < 1e-9);
    assert!(v["cost"].as_f64().unwrap() > 0.0);
    assert!(v["dbl_to_target"].as_f64().unwrap() < 2.0);
    let segments = v["segments"].as_array().unwrap();
    // Two atoms: travel + hold each.
    assert_eq!(segments.len(), 4);
    assert_eq!(segments[0]["kind"], "Travel");
    assert_eq!(segments[1]["kind"], "Hold");
    let atoms: Vec<f64> = segments
        .iter()
        .map(|s| s["atom"].as_f64().unwrap())
        .collect();
    assert_eq!(atoms, vec![-1.0, -1.0, 1.0, 1.0]);
}

#[test]
fn check_demo_reports_clauses_and_errors_as_data() {
    let v = parse(&check_demo("quadratic"));
    assert_eq!(v["passed"], true);
    let clauses = v["clauses"].as_array().unwrap();
    assert!(clauses.iter().any(|c| c["name"] == "nondegeneracy"));
    assert!(clauses.iter().all(|c| c["status"] == "Pass" || c["status"] == "NotChecked"));

    let v = parse(&check_demo("tracking"));
    assert_eq!(v["passed"], true);

    let v = parse(&check_demo("no-such-model"));
    assert!(v["error"].as_str().unwrap().contains("unknown builtin"));
}

#[test]
fn bad_parameters_come_back_as_error_json() {
    let v = parse(&lln_run(-1.0, 1));
    assert!(v.get("error").is_some(), "{v}");
    let v = parse(&steer_demo(0.05, 1, -1.0, 1.5, 1.0));
    assert!(v.get("error").is_some(), "{v}");
}
