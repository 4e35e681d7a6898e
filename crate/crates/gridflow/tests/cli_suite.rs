//! End-to-end CLI checks: output files, CSV column contracts, exit codes,
//! byte determinism.

use std::path::Path;
use std::process::{Command, Output};

fn fixture(name: &str) -> String {
    format!("{}/fixtures/{name}", env!("CARGO_MANIFEST_DIR"))
}

fn gridflow(args: &[&str], out_dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gridflow"))
        .args(args)
        .env("GRIDFLOW_OUT", out_dir)
        .output()
        .expect("binary runs")
}

#[test]
fn run_writes_traces_with_the_documented_columns() {
    let dir = tempfile::tempdir().unwrap();
    let out = gridflow(
        &[
            "run",
            "--case",
            &fixture("ieee9.case"),
            "--events",
            &fixture("table4.events"),
            "--mode",
            "both",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for mode in ["approx", "exact"] {
        let text = std::fs::read_to_string(dir.path().join(format!("trace_{mode}.csv"))).unwrap();
        let header = text.lines().next().unwrap();
        assert_eq!(
            header,
            "iter,event,f,loss_term,dev_term,cost_term,q_5,q_6,q_7,q_8,q_9,\
             v_1,v_2,v_3,v_4,v_5,v_6,v_7,v_8,v_9,grad_max"
        );
        assert_eq!(text.lines().count(), 127); // header + iterations 0..=125
        // the four scheduled events appear in the event column
        for (k, ev) in [(25, 1), (50, 2), (75, 3), (100, 4)] {
            assert!(
                text.lines().any(|l| l.starts_with(&format!("{k},{ev},"))),
                "{mode}: event {ev} missing at iteration {k}"
            );
        }
    }
}

#[test]
fn zero_horizon_trace_has_a_single_record() {
    let dir = tempfile::tempdir().unwrap();
    let out = gridflow(
        &[
            "run",
            "--case",
            &fixture("ieee9.case"),
            "--mode",
            "exact",
            "--horizon",
            "0",
        ],
        dir.path(),
    );
    assert!(out.status.success());
    let text = std::fs::read_to_string(dir.path().join("trace_exact.csv")).unwrap();
    assert_eq!(text.lines().count(), 2);
}

#[test]
fn missing_case_exits_2_and_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let out = gridflow(&["run", "--case", "/no/such/missing.case"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.case"));
}

#[test]
fn malformed_case_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.case");
    std::fs::write(&bad, "[meta]\nname broken\n[bus]\n1 slack oops\n").unwrap();
    let out = gridflow(&["run", "--case", bad.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn compare_writes_both_report_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = gridflow(&["compare", "--case", &fixture("ieee9.case")], dir.path());
    assert!(out.status.success());
    let csv = std::fs::read_to_string(dir.path().join("comparison.csv")).unwrap();
    assert!(csv.starts_with("metric,approx,exact\n"));
    assert!(csv.contains("power_loss,"));
    assert!(csv.contains("total_q,"));
    let txt = std::fs::read_to_string(dir.path().join("comparison.txt")).unwrap();
    assert!(txt.contains("With approximation"));
    assert!(txt.contains("Without approximation"));
    assert!(txt.contains("Sum Q"));
}

#[test]
fn analyze_writes_line_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let out = gridflow(&["analyze", "--case", &fixture("ieee9.case")], dir.path());
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("of 9 lines exceed 8.0 %"));
    let csv = std::fs::read_to_string(dir.path().join("lines.csv")).unwrap();
    assert_eq!(
        csv.lines().next().unwrap(),
        "from,to,delta_i_deg,delta_j_deg,delta_ij_deg,cos_delta_ij,flow_pu,loss_pu,loss_pct_of_flow,approx_ok"
    );
    assert_eq!(csv.lines().count(), 10); // header + 9 branches
}

#[test]
fn threshold_zero_flags_every_lossy_line() {
    let dir = tempfile::tempdir().unwrap();
    let out = gridflow(
        &[
            "analyze",
            "--case",
            &fixture("ieee9.case"),
            "--threshold-pct",
            "0",
        ],
        dir.path(),
    );
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("9 of 9 lines"));
}

#[test]
fn repeated_runs_are_byte_identical() {
    let d1 = tempfile::tempdir().unwrap();
    let d2 = tempfile::tempdir().unwrap();
    for d in [&d1, &d2] {
        let out = gridflow(
            &[
                "run",
                "--case",
                &fixture("ieee9.case"),
                "--events",
                &fixture("table4.events"),
                "--mode",
                "both",
            ],
            d.path(),
        );
        assert!(out.status.success());
    }
    for name in ["trace_approx.csv", "trace_exact.csv"] {
        let a = std::fs::read(d1.path().join(name)).unwrap();
        let b = std::fs::read(d2.path().join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical runs");
    }
}

#[test]
fn pso_same_seed_twice_is_byte_identical() {
    let d1 = tempfile::tempdir().unwrap();
    let d2 = tempfile::tempdir().unwrap();
    for d in [&d1, &d2] {
        let out = gridflow(
            &[
                "pso",
                "--case",
                &fixture("ieee9.case"),
                "--seed",
                "42",
                "--particles",
                "10",
                "--max-iter",
                "30",
            ],
            d.path(),
        );
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let a = std::fs::read(d1.path().join("pso_trace.csv")).unwrap();
    let b = std::fs::read(d2.path().join("pso_trace.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn dump_pf_emits_ybus_and_mismatch_history() {
    let dir = tempfile::tempdir().unwrap();
    let out = gridflow(
        &[
            "run",
            "--case",
            &fixture("ieee9.case"),
            "--mode",
            "exact",
            "--horizon",
            "0",
            "--dump-pf",
        ],
        dir.path(),
    );
    assert!(out.status.success());
    let ybus = std::fs::read_to_string(dir.path().join("ybus.csv")).unwrap();
    assert!(ybus.starts_with("i,j,g,b\n"));
    // 9 diagonal entries + 2 per branch
    assert_eq!(ybus.lines().count(), 1 + 9 + 18);
    let mm = std::fs::read_to_string(dir.path().join("pf_mismatch.csv")).unwrap();
    assert!(mm.starts_with("iter,max_mismatch\n"));
    assert!(mm.lines().count() >= 3);
}

#[test]
fn svg_flag_renders_plots() {
    let dir = tempfile::tempdir().unwrap();
    let out = gridflow(
        &[
            "run",
            "--case",
            &fixture("ieee9.case"),
            "--mode",
            "exact",
            "--horizon",
            "20",
            "--svg",
        ],
        dir.path(),
    );
    assert!(out.status.success());
    for name in ["objective_exact.svg", "qgen_exact.svg", "voltage_exact.svg"] {
        let svg = std::fs::read_to_string(dir.path().join(name)).unwrap();
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains("<polyline"));
    }
}

#[test]
fn out_flag_overrides_the_env_default() {
    let env_dir = tempfile::tempdir().unwrap();
    let flag_dir = tempfile::tempdir().unwrap();
    let out = gridflow(
        &[
            "run",
            "--case",
            &fixture("ieee9.case"),
            "--mode",
            "exact",
            "--horizon",
            "0",
            "--out",
            flag_dir.path().to_str().unwrap(),
        ],
        env_dir.path(),
    );
    assert!(out.status.success());
    assert!(flag_dir.path().join("trace_exact.csv").is_file());
    assert!(!env_dir.path().join("trace_exact.csv").exists());
}
