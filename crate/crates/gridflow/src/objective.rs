//! The weighted objective (real loss + voltage deviation + reactive
//! generation cost) and its gradient with respect to each controllable
//! reactive injection, in exact and zero-angle-approximated form.

use crate::linalg::LuFactors;
use crate::netmodel::Network;
use crate::powerflow::{self, Admittance, Indexing, PowerFlowSolution, SolverOptions};
use crate::scalar::{c, Real};
use crate::Result;

/// Which angle information the loss-gradient term uses.
///
/// `AngleApprox` treats every bus-angle difference as zero inside the
/// gradient (cos d_ji = 1, sin d_ji = 0), so the conductance row sums
/// lose their angle weighting and the angle-sensitivity contribution
/// drops out entirely. `Exact` uses the measured angles of the solved
/// state. The power flow itself is never approximated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradientMode {
    Exact,
    AngleApprox,
}

impl std::fmt::Display for GradientMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            GradientMode::Exact => write!(f, "exact"),
            GradientMode::AngleApprox => write!(f, "approx"),
        }
    }
}

/// Objective value split into its weighted components.
#[derive(Debug, Clone, Copy)]
pub struct ObjectiveBreakdown<T> {
    pub f: T,
    pub loss_term: T,
    pub dev_term: T,
    pub cost_term: T,
    /// Unweighted (P_loss, D_V, C_Q).
    pub raw: (T, T, T),
}

/// Reactive-cost curve of one source, derived from real-power cost
/// coefficients by the triangle method.
#[derive(Debug, Clone, Copy)]
pub struct CostCurve<T> {
    pub a_p: T,
    pub b_p: T,
    pub c_p: T,
    /// Fixed real output of the source bus.
    pub p_gen: T,
}

impl<T: Real> CostCurve<T> {
    /// sin of the voltage-current angle. Defined as 1 for a pure reactive
    /// source (P = 0), the limit along Q -> 0+ with P = 0.
    fn sin_sigma(&self, q: T) -> T {
        if self.p_gen == T::zero() {
            T::one()
        } else {
            let h = (self.p_gen * self.p_gen + q * q).sqrt();
            if h == T::zero() {
                T::one()
            } else {
                q / h
            }
        }
    }

    /// Cost a sin^2(s) Q^2 + b sin(s) Q + c.
    pub fn eval(&self, q: T) -> T {
        let s = self.sin_sigma(q);
        self.a_p * s * s * q * q + self.b_p * s * q + self.c_p
    }

    /// dC/dQ.
    pub fn derivative(&self, q: T) -> T {
        if self.p_gen == T::zero() {
            return c::<T>(2.0) * self.a_p * q + self.b_p;
        }
        let p2 = self.p_gen * self.p_gen;
        let h2 = p2 + q * q;
        let h32 = h2 * h2.sqrt();
        let s = self.sin_sigma(q);
        let two = c::<T>(2.0);
        two * self.a_p * q * (q * s * p2 / h32 + s * s) + self.b_p * (q * p2 / h32 + s)
    }
}

/// System real loss evaluated as the full double sum
/// sum_ij V_i V_j Y_ij cos(theta_ij + d_ji), diagonal included.
pub fn power_loss<T: Real>(y: &Admittance<T>, sol: &PowerFlowSolution<T>) -> T {
    let mut total = T::zero();
    for i in 0..y.n {
        for j in 0..y.n {
            let ym = y.y_mag.get(i, j);
            if ym == T::zero() {
                continue;
            }
            let arg = y.y_ang.get(i, j) + sol.delta[j] - sol.delta[i];
            total += sol.v[i] * sol.v[j] * ym * arg.cos();
        }
    }
    total
}

/// Sum of squared deviations from the per-bus reference magnitudes.
pub fn voltage_deviation<T: Real>(v: &[T], refs: &[T]) -> T {
    v.iter()
        .zip(refs)
        .map(|(&vi, &ri)| (vi - ri) * (vi - ri))
        .sum()
}

/// Total reactive generation cost over (curve, Q) pairs, constants included.
pub fn reactive_cost<T: Real>(sources: &[(CostCurve<T>, T)]) -> T {
    sources.iter().map(|(curve, q)| curve.eval(*q)).sum()
}

/// Reference magnitude for every bus: the source's V_ref where one is
/// attached, the bus's own V_ref column otherwise.
pub fn reference_voltages<T: Real>(net: &Network<T>) -> Vec<T> {
    let mut refs: Vec<T> = net.buses.iter().map(|b| b.v_ref).collect();
    for s in &net.sources {
        if let Some(i) = net.bus_index(s.bus) {
            refs[i] = s.v_ref;
        }
    }
    refs
}

/// Cost curves aligned with `net.sources`.
pub fn cost_curves<T: Real>(net: &Network<T>) -> Vec<CostCurve<T>> {
    net.sources
        .iter()
        .map(|s| CostCurve {
            a_p: s.a_p,
            b_p: s.b_p,
            c_p: s.c_p,
            p_gen: net.bus(s.bus).map(|b| b.p_gen_fixed).unwrap_or(T::zero()),
        })
        .collect()
}

/// Weighted objective with its breakdown at a converged state.
pub fn combined<T: Real>(
    net: &Network<T>,
    y: &Admittance<T>,
    sol: &PowerFlowSolution<T>,
    q_ctrl: &[T],
) -> ObjectiveBreakdown<T> {
    let p_loss = power_loss(y, sol);
    let refs = reference_voltages(net);
    let d_v = voltage_deviation(&sol.v, &refs);
    let curves = cost_curves(net);
    let pairs: Vec<(CostCurve<T>, T)> = curves.into_iter().zip(q_ctrl.iter().copied()).collect();
    let c_q = reactive_cost(&pairs);
    let loss_term = net.weights.w_loss * p_loss;
    let dev_term = net.weights.w_dev * d_v;
    let cost_term = net.weights.w_cost * c_q;
    ObjectiveBreakdown {
        f: loss_term + dev_term + cost_term,
        loss_term,
        dev_term,
        cost_term,
        raw: (p_loss, d_v, c_q),
    }
}

/// Gradient of the objective with respect to every controllable Q at once.
///
/// The loss and deviation parts come from the state partials
/// df/dV_j = 2 (W1 sum_m V_m G_jm cos d_mj + W2 (V_j - V_j*)) and
/// df/dd_j = 2 W1 V_j sum_m V_m G_jm sin d_mj, chained through the
/// power-flow Jacobian (one transposed solve serves all sources). In
/// `AngleApprox` mode the cos factor is 1 and the angle partial is zero.
/// The cost part is the closed-form curve derivative.
pub fn gradient_all<T: Real>(
    net: &Network<T>,
    y: &Admittance<T>,
    sol: &PowerFlowSolution<T>,
    q_ctrl: &[T],
    mode: GradientMode,
) -> Result<Vec<T>> {
    let n = y.n;
    let idx = Indexing::of(net);
    let refs = reference_voltages(net);
    let two = c::<T>(2.0);
    let w1 = net.weights.w_loss;
    let w2 = net.weights.w_dev;

    let mut df_dv = vec![T::zero(); n];
    let mut df_dd = vec![T::zero(); n];
    for j in 0..n {
        let mut sum_cos = T::zero();
        let mut sum_sin = T::zero();
        for m in 0..n {
            let gjm = y.g.get(j, m);
            if gjm == T::zero() {
                continue;
            }
            match mode {
                GradientMode::AngleApprox => {
                    sum_cos += sol.v[m] * gjm;
                }
                GradientMode::Exact => {
                    let dmj = sol.delta[m] - sol.delta[j];
                    let (s, co) = dmj.sin_cos();
                    sum_cos += sol.v[m] * gjm * co;
                    sum_sin += sol.v[m] * gjm * s;
                }
            }
        }
        df_dv[j] = two * (w1 * sum_cos + w2 * (sol.v[j] - refs[j]));
        df_dd[j] = two * w1 * sol.v[j] * sum_sin;
    }

    let mut rhs = vec![T::zero(); idx.dim()];
    for (a, &i) in idx.pvpq.iter().enumerate() {
        rhs[a] = df_dd[i];
    }
    for (a, &i) in idx.pq.iter().enumerate() {
        rhs[idx.pvpq.len() + a] = df_dv[i];
    }
    let jm = powerflow::jacobian(y, &sol.v, &sol.delta, &sol.p_inj, &sol.q_inj, &idx);
    let lambda = LuFactors::factor(jm)?.solve_transposed(&rhs);

    let curves = cost_curves(net);
    let mut grad = Vec::with_capacity(net.sources.len());
    for (k, s) in net.sources.iter().enumerate() {
        let bus = net.bus_index(s.bus).expect("validated source bus");
        let row = idx.q_row(bus).ok_or(crate::Error::SingularSensitivity { bus: s.bus.0 })?;
        grad.push(lambda[row] + net.weights.w_cost * curves[k].derivative(q_ctrl[k]));
    }
    Ok(grad)
}

/// Gradient with respect to the reactive output of source `i` alone.
pub fn gradient<T: Real>(
    i: usize,
    net: &Network<T>,
    y: &Admittance<T>,
    sol: &PowerFlowSolution<T>,
    q_ctrl: &[T],
    mode: GradientMode,
) -> Result<T> {
    Ok(gradient_all(net, y, sol, q_ctrl, mode)?[i])
}

/// Central finite difference of the combined objective through a full
/// power-flow re-solve at each perturbed point. Falls back to a one-sided
/// difference when a bound is closer than the step.
pub fn fd_gradient<T: Real>(
    i: usize,
    net: &Network<T>,
    y: &Admittance<T>,
    q_ctrl: &[T],
    h: T,
) -> Result<T> {
    let s = &net.sources[i];
    let q = q_ctrl[i];
    let (hi, lo) = {
        let up = if q + h <= s.q_max { q + h } else { q };
        let dn = if q - h >= s.q_min { q - h } else { q };
        (up, dn)
    };
    assert!(hi > lo, "finite-difference step collapsed at both bounds");
    let eval = |qi: T| -> Result<T> {
        let mut qv = q_ctrl.to_vec();
        qv[i] = qi;
        let sol = powerflow::solve(net, y, &qv, None, SolverOptions::default())?;
        if !sol.converged {
            return Err(crate::Error::PowerFlowDiverged {
                iterations: sol.iterations,
                max_mismatch: crate::scalar::f(sol.max_mismatch),
            });
        }
        Ok(combined(net, y, &sol, &qv).f)
    };
    Ok((eval(hi)? - eval(lo)?) / (hi - lo))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cost_is_quadratic_for_pure_reactive_source() {
        let curve = CostCurve {
            a_p: 0.082,
            b_p: 2.25,
            c_p: 150.0,
            p_gen: 0.0,
        };
        let q = 0.4_f64;
        assert!((curve.eval(q) - (0.082 * q * q + 2.25 * q + 150.0)).abs() < 1e-12);
        assert!((curve.derivative(q) - (2.0 * 0.082 * q + 2.25)).abs() < 1e-12);
    }

    #[test]
    fn cost_at_zero_output_is_the_constant() {
        let curve = CostCurve {
            a_p: 1.0,
            b_p: 2.0,
            c_p: 3.0,
            p_gen: 0.5,
        };
        assert!((curve.eval(0.0_f64) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn equal_real_and_reactive_output_halves_the_quadratic() {
        // P = Q = 1, a = 1, b = c = 0: sin^2 sigma = 1/2, cost = 0.5
        let curve = CostCurve {
            a_p: 1.0,
            b_p: 0.0,
            c_p: 0.0,
            p_gen: 1.0,
        };
        assert!((curve.eval(1.0_f64) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn cost_derivative_matches_numeric_difference() {
        let curve = CostCurve {
            a_p: 0.7,
            b_p: 1.3,
            c_p: 10.0,
            p_gen: 0.8,
        };
        let h = 1e-6_f64;
        for &q in &[-0.9, -0.2, 0.1, 0.5, 1.4] {
            let numeric = (curve.eval(q + h) - curve.eval(q - h)) / (2.0 * h);
            assert!(
                (curve.derivative(q) - numeric).abs() < 1e-8,
                "q={q}: {} vs {}",
                curve.derivative(q),
                numeric
            );
        }
    }

    #[test]
    fn deviation_of_single_offset_bus() {
        let v = [1.0_f64, 1.1, 1.0];
        let refs = [1.0, 1.0, 1.0];
        assert!((voltage_deviation(&v, &refs) - 0.01).abs() < 1e-14);
    }
}
