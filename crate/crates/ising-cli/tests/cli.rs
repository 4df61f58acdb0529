use serde_json::Value;
use std::path::Path;
use std::process::{Command, Output};

fn ising(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ising")).args(args).output().expect("binary runs")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn gen(dir: &Path, name: &str, args: &[&str]) -> String {
    let p = dir.join(name).to_string_lossy().into_owned();
    let mut a = vec!["gen"];
    a.extend_from_slice(args);
    a.extend_from_slice(&["-o", &p]);
    let out = ising(&a);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    p
}

#[test]
fn gen_square_is_valid_graph_json() {
    let dir = tempfile::tempdir().unwrap();
    let g = gen(dir.path(), "g.json", &["square", "--n", "4", "--bc", "wired"]);
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&g).unwrap()).unwrap();
    assert_eq!(v["vertices"].as_array().unwrap().len(), 16);
    assert_eq!(v["edges"].as_array().unwrap().len(), 24);
    let w = v["weights"].as_array().unwrap();
    assert!(w.iter().all(|x| (x.as_f64().unwrap() - (2f64.sqrt() - 1.0)).abs() < 1e-12));
    // same flags, same bytes
    let again = gen(dir.path(), "g2.json", &["square", "--n", "4", "--bc", "wired"]);
    assert_eq!(std::fs::read(&g).unwrap(), std::fs::read(&again).unwrap());
}

#[test]
fn kacward_verify_reports_residuals() {
    let dir = tempfile::tempdir().unwrap();
    let g = gen(dir.path(), "g.json", &["square", "--n", "3"]);
    let out = ising(&["kacward", "verify", "--graph", &g, "--trials", "3"]);
    assert!(out.status.success());
    let v = json(&out);
    assert_eq!(v["pass"], true);
    assert_eq!(v["trials"].as_array().unwrap().len(), 4);
    assert!(v["max_rel_error"].as_f64().unwrap() < 1e-9);
    assert!(v["trials"][0]["z_reference"].as_f64().is_some());
}

#[test]
fn correlate_matches_request_shape() {
    let dir = tempfile::tempdir().unwrap();
    let g = gen(dir.path(), "g.json", &["square", "--n", "3"]);
    let r = dir.path().join("r.json");
    std::fs::write(&r, r#"{"spins": [0, 3]}"#).unwrap();
    let out = ising(&["correlate", "--graph", &g, "--request", r.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&out);
    let value = v["value"].as_f64().unwrap();
    assert!(value > 0.0 && value < 1.0);
    assert!(v["Z"].as_f64().unwrap() > 1.0);
    assert!(v["sheet"].is_string());
}

#[test]
fn sembed_build_writes_svg() {
    let dir = tempfile::tempdir().unwrap();
    let g = gen(dir.path(), "g.json", &["square", "--n", "5", "--delta", "0.25"]);
    let svg = dir.path().join("out.svg");
    let out = ising(&["sembed", "build", "--graph", &g, "--spinors", "dirac", "--svg", svg.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&out);
    assert_eq!(v["proper"]["proper"], true);
    let text = std::fs::read_to_string(&svg).unwrap();
    let quads = v["center"].as_array().unwrap().len();
    assert_eq!(text.matches("<polygon").count(), quads);
    assert_eq!(text.matches("<circle").count(), quads);
}

#[test]
fn sholo_check_on_mixed_boundary() {
    let dir = tempfile::tempdir().unwrap();
    let g = gen(dir.path(), "g.json", &["square", "--n", "4", "--bc", "wfwf"]);
    let r = dir.path().join("r.json");
    std::fs::write(&r, r#"{"disorders": [5], "spins": [2]}"#).unwrap();
    let out = ising(&["sholo-check", "--graph", &g, "--request", r.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&out);
    assert!(v["propagation_residual"].as_f64().unwrap() < 1e-9);
    assert!(v["boundary"]["violations"].as_array().unwrap().is_empty());
}

#[test]
fn iso_check_on_honeycomb() {
    let dir = tempfile::tempdir().unwrap();
    let g = gen(dir.path(), "h.json", &["honeycomb", "--n", "3"]);
    let out = ising(&["iso-check", "--graph", &g, "--trials", "300"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(json(&out)["min_delta_bullet"].as_f64().unwrap() >= -1e-12);
}

#[test]
fn fk_crossing_exact_on_self_dual_quad() {
    let dir = tempfile::tempdir().unwrap();
    let g = gen(dir.path(), "q.json", &["self-dual-quad", "--n", "3"]);
    let out = ising(&["fk", "crossing", "--graph", &g, "--mode", "exact"]);
    assert!(out.status.success());
    let v = json(&out);
    assert!((v["p_loops"].as_f64().unwrap() - 0.5).abs() < 1e-10);
    assert!((v["p_fk"].as_f64().unwrap() - (2f64.sqrt() - 1.0)).abs() < 1e-9);
}

#[test]
fn periodic_harness_finds_kappa() {
    let out = ising(&["periodic"]);
    assert!(out.status.success());
    let v = json(&out);
    assert_eq!(v["kernel"]["dimension"], 2);
    assert!((v["kappa_l"]["kappa"][1].as_f64().unwrap() - 1.0).abs() < 1e-8);
}

#[test]
fn input_errors_exit_one_with_json() {
    let out = ising(&["kacward", "verify", "--graph", "/nonexistent/g.json"]);
    assert_eq!(out.status.code(), Some(1));
    let e: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(e["error"], "io");

    let out = ising(&["gen", "square", "--bc", "wxyz"]);
    assert_eq!(out.status.code(), Some(1));

    let out = ising(&["no-such-command"]);
    assert_eq!(out.status.code(), Some(1));
    let e: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(e["error"], "usage");
}

#[test]
fn tolerance_range_is_enforced() {
    let dir = tempfile::tempdir().unwrap();
    let g = gen(dir.path(), "g.json", &["square", "--n", "3"]);
    let out = ising(&["kacward", "verify", "--graph", &g, "--tol", "0.5"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn failed_check_exits_two_and_still_reports() {
    // rounding leaves ~1e-13 on this quad, so 1e-14 is out of reach
    let dir = tempfile::tempdir().unwrap();
    let g = gen(dir.path(), "q.json", &["square", "--n", "4", "--bc", "crossing", "--x", "0.6"]);
    let out = ising(&["fk", "crossing", "--graph", &g, "--tol", "1e-14"]);
    assert_eq!(out.status.code(), Some(2));
    let r = json(&out)["rho_residual"].as_f64().unwrap();
    assert!(r > 1e-14 && r < 1e-12, "{r}");
    let e: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(e["error"], "check_failed");
}

#[test]
fn verify_all_subset() {
    let out = ising(&["verify-all", "--quick", "--only", "1,8,10"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&out);
    assert_eq!(v["failed"], 0);
    assert_eq!(v["criteria"].as_array().unwrap().len(), 3);
}
