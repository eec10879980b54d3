use std::path::Path;
use std::process::{Command, Output};

use vortexlab::io::{report_from_json, report_to_json, RADIAL_HEADER};

fn vortexlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vortexlab"))
        .args(args)
        .env("VORTEXLAB_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn constants_json_for_rank_two() {
    let out = vortexlab(&["constants", "--N", "2", "--json"]);
    assert_eq!(code(&out), 0);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let f = |k: &str| v[k].as_f64().unwrap();
    assert_eq!((f("alpha"), f("beta")), (1.25, 0.75));
    assert_eq!(v["a"], serde_json::json!([[1.25, 0.75], [0.75, 1.25]]));
    assert_eq!(v["l"], serde_json::json!([[1.0, 0.0], [0.6, 1.0]]));
    assert!((f("lambda0") - 1.0).abs() < 1e-14);
    assert!((f("lambda3") - 2.0).abs() < 1e-14);
    assert!((f("lambda4") - 0.5).abs() < 1e-14);
    assert!((f("m") - 2.0).abs() < 1e-14 && (f("p") - 2.0).abs() < 1e-14 && (f("q") + 2.0).abs() < 1e-14);
}

#[test]
fn radial_csv_layout() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("radial.csv");
    let out = vortexlab(&[
        "solve-radial", "--N", "2", "--n1", "1", "--n2", "1", "--tau", "1", "--rmax", "30", "--nodes", "4000",
        "--tol", "1e-10", "--out", path_str(&csv),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    let meta = lines.next().unwrap();
    assert!(meta.starts_with("# ") && meta.contains("kind=radial") && meta.contains("nodes=4000"));
    assert_eq!(lines.next().unwrap(), RADIAL_HEADER);
    assert_eq!(lines.count(), 4000);
}

#[test]
fn verify_without_the_solution_file() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("absent.csv");
    let out = vortexlab(&["verify", "--N", "2", "--n1", "1", "--n2", "1", "--input", path_str(&missing)]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("does not exist"));
}

#[test]
fn verify_reads_back_a_radial_solution() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("radial.csv");
    assert_eq!(code(&vortexlab(&["solve-radial", "--N", "3", "--n2", "2", "--out", path_str(&csv)])), 0);
    let out = vortexlab(&["verify", "--input", path_str(&csv)]);
    assert_eq!(code(&out), 0);
    let report = report_from_json(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert_eq!((report.params.rank, report.params.n2), (3, 2.0));
    assert!(report.flux.iter().all(|f| f.rel_error < 1e-4));
    // Reconstructed profiles satisfy the first-order system to discretization accuracy.
    assert!(report.residuals.ode_sup.unwrap() < 1e-3);

    let wrong = vortexlab(&["verify", "--N", "2", "--input", path_str(&csv)]);
    assert_eq!(code(&wrong), 2);
}

#[test]
fn outputs_are_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let mut files = Vec::new();
    for k in 0..2 {
        let radial = dir.path().join(format!("radial{k}.csv"));
        let planar = dir.path().join(format!("planar{k}.csv"));
        assert_eq!(code(&vortexlab(&["solve-radial", "--out", path_str(&radial)])), 0);
        assert_eq!(code(&vortexlab(&["solve-planar", "--grid", "48", "--box", "8", "--out", path_str(&planar)])), 0);
        files.push((std::fs::read(&radial).unwrap(), std::fs::read(&planar).unwrap()));
    }
    assert!(files[0] == files[1]);
}

#[test]
fn report_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let json = dir.path().join("report.json");
    let out = vortexlab(&["report", "--grid", "64", "--box", "12", "--uniqueness", "--out", path_str(&json)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&json).unwrap();
    for key in ["params", "constants", "flux", "component_flux", "decay", "residuals", "uniqueness", "cross_validation"] {
        assert!(text.contains(&format!("\"{key}\"")), "missing {key}");
    }
    let report = report_from_json(&text).unwrap();
    assert_eq!(report_to_json(&report), text);
    assert!(report.uniqueness.sup_difference.unwrap() < 1e-6);
    assert!(report.cross_validation.is_some());
}

#[test]
fn profile_solve_writes_profiles() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("profile.csv");
    let out = vortexlab(&["solve-profile", "--N", "2", "--out", path_str(&csv)]);
    assert_eq!(code(&out), 0);
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().nth(1).unwrap(), "r,f,fNA,Q1,Q2");
}

#[test]
fn exit_codes() {
    // Unknown option.
    assert_eq!(code(&vortexlab(&["solve-radial", "--colour", "red"])), 2);
    // Parameter out of range.
    assert_eq!(code(&vortexlab(&["solve-radial", "--N", "1"])), 2);
    assert_eq!(code(&vortexlab(&["solve-radial", "--n1", "0.5"])), 2);
    assert_eq!(code(&vortexlab(&["solve-radial", "--rmax", "10"])), 2);
    // Iteration cap reached.
    assert_eq!(code(&vortexlab(&["solve-radial", "--max-iter", "1"])), 1);
    // Unwritable output.
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("no/such/dir/out.csv");
    assert_eq!(code(&vortexlab(&["solve-radial", "--out", path_str(&bad)])), 3);
}

#[test]
fn thread_count_is_validated() {
    let out = Command::new(env!("CARGO_BIN_EXE_vortexlab"))
        .args(["constants"])
        .env("VORTEXLAB_THREADS", "0")
        .output()
        .unwrap();
    assert_eq!(code(&out), 2);
}
