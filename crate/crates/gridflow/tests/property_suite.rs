//! Property-based checks: format round-trips, clamp safety, verdict
//! monotonicity, linear-algebra residuals, cost-curve calculus.

use proptest::prelude::*;

use gridflow::controller;
use gridflow::linalg::{LuFactors, Matrix};
use gridflow::netmodel::{self, parse_case, Branch, Bus, BusId, BusKind, Network, Weights};
use gridflow::objective::{CostCurve, GradientMode};
use gridflow::powerflow::{self, SolverOptions};
use gridflow::{analyzer, Network64};

const IEEE9: &str = include_str!("../fixtures/ieee9.case");

/// A random star network: slack in the middle, PQ leaves with random
/// loads and line parameters. Always valid by construction.
fn star_network(params: &[(f64, f64, f64, f64)]) -> Network64 {
    let mut buses = vec![Bus {
        id: BusId(1),
        kind: BusKind::Slack,
        v_init: 1.02,
        delta_init: 0.0,
        p_gen_fixed: 0.0,
        q_gen_fixed: 0.0,
        p_load: 0.0,
        q_load: 0.0,
        v_ref: 1.0,
    }];
    let mut branches = Vec::new();
    for (k, &(pl, ql, r, x)) in params.iter().enumerate() {
        let id = BusId(k + 2);
        buses.push(Bus {
            id,
            kind: BusKind::Pq,
            v_init: 1.0,
            delta_init: 0.0,
            p_gen_fixed: 0.0,
            q_gen_fixed: 0.0,
            p_load: pl,
            q_load: ql,
            v_ref: 1.0,
        });
        branches.push(Branch {
            from: BusId(1),
            to: id,
            r,
            x,
            b_charging: 0.0,
        });
    }
    Network {
        name: "star".to_string(),
        buses,
        branches,
        sources: vec![],
        weights: Weights::default(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn native_format_round_trips(
        params in prop::collection::vec(
            (0.0..0.5f64, 0.0..0.3f64, 0.001..0.05f64, 0.01..0.2f64),
            1..6,
        )
    ) {
        let net = star_network(&params);
        prop_assert!(netmodel::validate(&net).is_empty());
        let text = netmodel::to_case_string(&net);
        let back: Network64 = parse_case(&text).unwrap();
        prop_assert_eq!(back.n_buses(), net.n_buses());
        prop_assert_eq!(back.branches.len(), net.branches.len());
        for (a, b) in net.buses.iter().zip(&back.buses) {
            prop_assert_eq!(a.id, b.id);
            prop_assert_eq!(a.kind, b.kind);
            prop_assert!((a.p_load - b.p_load).abs() < 1e-9);
            prop_assert!((a.q_load - b.q_load).abs() < 1e-9);
            prop_assert!((a.v_init - b.v_init).abs() < 1e-9);
        }
        for (a, b) in net.branches.iter().zip(&back.branches) {
            prop_assert!((a.r - b.r).abs() < 1e-9);
            prop_assert!((a.x - b.x).abs() < 1e-9);
        }
        // a second round trip is byte-stable
        prop_assert_eq!(netmodel::to_case_string(&back), text);
    }

    #[test]
    fn control_updates_never_leave_the_box(dt in 0.1..80.0f64, steps in 1usize..15) {
        let net: Network64 = parse_case(IEEE9).unwrap();
        let trace = controller::run_scenario(
            &net, &[], GradientMode::AngleApprox, 1e-12, dt, steps,
        ).unwrap();
        for r in &trace.records {
            for (q, s) in r.q_ctrl.iter().zip(&net.sources) {
                prop_assert!(*q >= s.q_min && *q <= s.q_max);
            }
        }
    }

    #[test]
    fn raising_the_threshold_never_flips_ok_to_not_ok(
        t1 in 0.0..20.0f64,
        bump in 0.0..20.0f64,
        q5 in -0.5..0.5f64,
        q8 in -0.5..0.5f64,
    ) {
        let net: Network64 = parse_case(IEEE9).unwrap();
        let y = powerflow::build_admittance(&net).unwrap();
        let q = vec![q5, 0.0, 0.0, q8, 0.0];
        let sol = powerflow::solve(&net, &y, &q, None, SolverOptions::default()).unwrap();
        prop_assume!(sol.converged);
        let lo = analyzer::line_diagnostics(&net, &sol, t1);
        let hi = analyzer::line_diagnostics(&net, &sol, t1 + bump);
        for (a, b) in lo.iter().zip(&hi) {
            prop_assert!(!a.approx_ok || b.approx_ok);
            prop_assert!(a.cos_dij.abs() <= 1.0 + 1e-12);
            if let Some(p) = a.loss_pct {
                prop_assert!(p >= 0.0);
            }
        }
    }

    #[test]
    fn lu_solves_diagonally_dominant_systems(
        rows in prop::collection::vec(
            prop::collection::vec(-1.0..1.0f64, 5), 5,
        ),
        b in prop::collection::vec(-10.0..10.0f64, 5),
    ) {
        let n = 5;
        let mut a = Matrix::zeros(n, n);
        for i in 0..n {
            let mut offsum = 0.0;
            for j in 0..n {
                if i != j {
                    a.set(i, j, rows[i][j]);
                    offsum += rows[i][j].abs();
                }
            }
            a.set(i, i, offsum + 1.0);
        }
        let a2 = a.clone();
        let x = LuFactors::factor(a).unwrap().solve(&b);
        for i in 0..n {
            let mut ax = 0.0;
            for j in 0..n {
                ax += a2.get(i, j) * x[j];
            }
            prop_assert!((ax - b[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn cost_derivative_is_the_slope(
        a in 0.0..1.0f64,
        bcoef in 0.0..5.0f64,
        p in 0.0..2.0f64,
        q in -1.5..1.5f64,
    ) {
        let curve = CostCurve { a_p: a, b_p: bcoef, c_p: 100.0, p_gen: p };
        let h = 1e-6;
        let numeric = (curve.eval(q + h) - curve.eval(q - h)) / (2.0 * h);
        prop_assert!((curve.derivative(q) - numeric).abs() < 1e-6);
    }

    #[test]
    fn reactive_cost_monotone_for_pure_source(
        a in 0.0..1.0f64,
        bcoef in 0.0..5.0f64,
        q1 in 0.0..2.0f64,
        dq in 0.0..1.0f64,
    ) {
        let curve = CostCurve { a_p: a, b_p: bcoef, c_p: 50.0, p_gen: 0.0 };
        prop_assert!(curve.eval(q1 + dq) >= curve.eval(q1) - 1e-12);
    }
}
