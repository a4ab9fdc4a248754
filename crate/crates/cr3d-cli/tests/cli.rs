//! End-to-end tests of the `cr3d` binary: command output, JSON schemas,
//! exit codes, and byte-level determinism.

use std::path::PathBuf;
use std::process::{Command, Output};

fn cr3d(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cr3d"))
        .args(args)
        .output()
        .expect("binary should run")
}

fn stdout_json(out: &Output) -> serde_json::Value {
    assert!(
        out.stderr.is_empty(),
        "stderr should be empty, got: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("stdout should be JSON")
}

fn tmp_path(name: &str) -> PathBuf {
    let mut p = std::env::temp_dir();
    p.push(format!("cr3d-cli-test-{}-{name}", std::process::id()));
    p
}

#[test]
fn mesh_generators_have_documented_sizes() {
    for (args, vertices, tets) in [
        (vec!["mesh", "--gen", "reference"], 4, 1),
        (vec!["mesh", "--gen", "inner-critical-patch"], 6, 4),
        (vec!["mesh", "--gen", "outer-critical-patch", "--iota", "2"], 5, 2),
        (vec!["mesh", "--gen", "kuhn", "--n", "2"], 27, 48),
    ] {
        let out = cr3d(&args);
        assert!(out.status.success(), "{args:?}");
        let mesh = stdout_json(&out);
        assert_eq!(mesh["vertices"].as_array().unwrap().len(), vertices, "{args:?}");
        assert_eq!(mesh["tets"].as_array().unwrap().len(), tets, "{args:?}");
    }
}

#[test]
fn mesh_out_flag_writes_a_loadable_file() {
    let path = tmp_path("mesh.json");
    let out = cr3d(&["mesh", "--gen", "kuhn", "--n", "1", "--out", path.to_str().unwrap()]);
    assert!(out.status.success());
    assert!(out.stdout.is_empty());

    // feed the file back through --mesh: the whole kuhn_cube(1) mesh as a
    // macroelement leaves constants plus the three lattice checkerboards
    let out = cr3d(&["nspace", "--mesh", path.to_str().unwrap(), "--k", "2"]);
    assert!(out.status.success());
    let report = stdout_json(&out);
    assert_eq!(report["schema"], "cr3d-report/1");
    assert_eq!(report["divergence_rank"], 20);
    assert_eq!(report["dim"], 4);

    // a single-tet macroelement satisfies the dim-1 condition
    let out = cr3d(&["nspace", "--mesh", path.to_str().unwrap(), "--k", "2", "--macro", "0"]);
    assert!(out.status.success());
    assert_eq!(stdout_json(&out)["dim"], 1);
    std::fs::remove_file(&path).ok();
}

#[test]
fn nspace_on_the_reference_tet_reports_constants_only() {
    let out = cr3d(&["nspace", "--gen", "reference", "--k", "2"]);
    assert!(out.status.success());
    let report = stdout_json(&out);
    assert_eq!(report["n_velocity"], 3);
    assert_eq!(report["n_pressure"], 4);
    assert_eq!(report["divergence_rank"], 3);
    assert_eq!(report["dim"], 1);
}

#[test]
fn infsup_flags_spurious_modes_of_the_conforming_pair() {
    let out = cr3d(&[
        "infsup",
        "--gen",
        "inner-critical-patch",
        "--k",
        "2",
        "--pair",
        "conforming",
    ]);
    assert!(out.status.success());
    let report = stdout_json(&out);
    assert_eq!(report["schema"], "cr3d-report/1");
    assert_eq!(report["pair"], "conforming");
    assert!(report["spurious_modes"].as_u64().unwrap() >= 1);
    assert_eq!(report["gamma_h"].as_f64().unwrap(), 0.0);
}

#[test]
fn infsup_reports_are_byte_identical_across_runs() {
    let args = ["infsup", "--gen", "kuhn", "--n", "1", "--k", "2", "--pair", "cr"];
    let first = cr3d(&args);
    let second = cr3d(&args);
    assert!(first.status.success());
    assert_eq!(first.stdout, second.stdout);
}

#[test]
fn infsup_dumps_matrices_as_csv() {
    let path = tmp_path("divergence.csv");
    let out = cr3d(&[
        "infsup",
        "--gen",
        "inner-critical-patch",
        "--k",
        "2",
        "--matrix-csv",
        "divergence",
        "--matrix-out",
        path.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let report = stdout_json(&out);
    let csv = std::fs::read_to_string(&path).unwrap();
    let rows = csv.lines().count();
    assert_eq!(rows as u64, report["n_pressure"].as_u64().unwrap());
    std::fs::remove_file(&path).ok();
}

#[test]
fn verify_suites_pass_over_their_documented_ranges() {
    for args in [
        vec!["verify", "--suite", "polylib", "--k", "1..6"],
        vec!["verify", "--suite", "quadrature", "--k", "1..6"],
        vec!["verify", "--suite", "cr-orthogonality", "--k", "1..4"],
        vec!["verify", "--suite", "direct-sum", "--k", "1..4"],
        vec!["verify", "--suite", "appendix-a", "--k", "1..5", "--d", "2..4"],
        vec!["verify", "--suite", "appendix-b", "--k", "2..8"],
    ] {
        let out = cr3d(&args);
        assert!(out.status.success(), "{args:?}");
        let report = stdout_json(&out);
        assert_eq!(report["passed"], true, "{args:?}");
        assert!(!report["checks"].as_array().unwrap().is_empty(), "{args:?}");
    }
}

#[test]
fn verify_csv_format_emits_one_line_per_check() {
    let out = cr3d(&["verify", "--suite", "appendix-b", "--k", "2..4", "--format", "csv"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("name,d,k,value,threshold,pass"));
    // three checks per degree: i-p, i-y, iota
    assert_eq!(lines.count(), 9);
}

#[test]
fn critical_emits_one_certificate_per_edge_and_apex() {
    let out = cr3d(&["critical", "--gen", "inner-critical-patch", "--k", "3"]);
    assert!(out.status.success());
    let report = stdout_json(&out);
    assert_eq!(report["passed"], true);
    let certs = report["certificates"].as_array().unwrap();
    assert_eq!(certs.len() as u64, 2 * report["critical_edges"].as_u64().unwrap());
    let central: Vec<_> = certs
        .iter()
        .filter(|c| c["endpoints"] == serde_json::json!([0, 1]))
        .collect();
    assert_eq!(central.len(), 2, "two apexes of the interior critical edge");
    for cert in central {
        assert_eq!(cert["kind"], "inner");
        assert_eq!(cert["spurious_passed"], true);
        // the inner patch has no interior facet pair for odd k
        assert_eq!(cert["elimination_status"], "precondition-unmet");
    }
    for cert in certs {
        let status = cert["elimination_status"].as_str().unwrap();
        assert!(status == "passed" || status == "precondition-unmet", "{status}");
    }
}

#[test]
fn critical_even_degree_certifies_elimination_on_the_inner_patch() {
    let out = cr3d(&["critical", "--gen", "inner-critical-patch", "--k", "2"]);
    assert!(out.status.success());
    let report = stdout_json(&out);
    assert_eq!(report["passed"], true);
    let central: Vec<_> = report["certificates"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|c| c["endpoints"] == serde_json::json!([0, 1]))
        .collect();
    assert_eq!(central.len(), 2);
    for cert in central {
        assert_eq!(cert["elimination_status"], "passed");
        assert_eq!(cert["elimination"]["mechanism"], "cell-bubble");
        assert!(cert["elimination"]["pairing_residual"].as_f64().unwrap() <= 1e-11);
    }
}

#[test]
fn exit_codes_follow_the_contract() {
    // 2: configuration error, JSON object on stderr
    let out = cr3d(&["infsup", "--k", "2"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(out.stdout.is_empty());
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["schema"], "cr3d-report/1");
    assert!(err["error"].as_str().unwrap().contains("--mesh"));

    // 2: clap-level parse failure is also wrapped in JSON
    let out = cr3d(&["infsup", "--gen", "kuhn", "--bogus"]);
    assert_eq!(out.status.code(), Some(2));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert!(err["error"].as_str().unwrap().contains("--bogus"));

    // 2: k outside 1..=6
    let out = cr3d(&["infsup", "--gen", "reference", "--k", "9"]);
    assert_eq!(out.status.code(), Some(2));

    // 1: a failed check still writes the report to stdout
    let out = cr3d(&[
        "critical",
        "--gen",
        "inner-critical-patch",
        "--k",
        "2",
        "--tol-rank",
        "1e-20",
    ]);
    assert_eq!(out.status.code(), Some(1));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["passed"], false);

    // 0: help on stdout, nothing on stderr
    let out = cr3d(&["--help"]);
    assert!(out.status.success());
    assert!(out.stderr.is_empty());
    assert!(String::from_utf8_lossy(&out.stdout).contains("Usage"));
}

#[test]
fn invalid_tolerances_are_rejected() {
    let out = cr3d(&["critical", "--gen", "reference", "--k", "2", "--tol-coplanar", "-1.0"]);
    assert_eq!(out.status.code(), Some(2));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert!(err["error"].as_str().unwrap().contains("tol-coplanar"));
}
