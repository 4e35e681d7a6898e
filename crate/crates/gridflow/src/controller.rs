//! Discrete gradient-descent control loop over the reactive sources:
//! step, clamp, re-solve, test tolerance — plus scheduled load-change
//! events and the per-iteration trace.

use crate::netmodel::{BusId, Network};
use crate::objective::{self, GradientMode, ObjectiveBreakdown};
use crate::powerflow::{self, Admittance, PowerFlowSolution, SolverOptions};
use crate::scalar::Real;
use crate::{Error, Result};

/// Controller state between iterations.
#[derive(Debug, Clone)]
pub struct ControlState<T> {
    pub q_ctrl: Vec<T>,
    pub iteration: usize,
    pub mode: GradientMode,
    pub dt: T,
}

impl<T: Real> ControlState<T> {
    /// Flat start: zero output at every source.
    pub fn initial(net: &Network<T>, mode: GradientMode, dt: T) -> Self {
        Self {
            q_ctrl: vec![T::zero(); net.sources.len()],
            iteration: 0,
            mode,
            dt,
        }
    }
}

/// Which load component an event scales.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LoadKind {
    Real,
    Reactive,
}

/// A scheduled multiplicative load change.
#[derive(Debug, Clone)]
pub struct LoadEvent<T> {
    pub at_iteration: usize,
    pub buses: Vec<BusId>,
    pub load_type: LoadKind,
    /// Applied to the current (post-previous-event) load, so multipliers chain.
    pub multiplier: T,
}

/// One controller iteration as recorded in the trace.
#[derive(Debug, Clone)]
pub struct TraceRecord<T> {
    pub k: usize,
    /// Index into the event list of the event applied at this iteration.
    pub event: Option<usize>,
    pub q_ctrl: Vec<T>,
    pub objective: ObjectiveBreakdown<T>,
    pub v: Vec<T>,
    pub grad: Vec<T>,
    /// Max gradient magnitude over sources not pinned at an active bound.
    pub grad_max: T,
    pub clamped: Vec<bool>,
}

/// Full run history plus per-segment convergence bookkeeping.
#[derive(Debug, Clone)]
pub struct SimulationTrace<T> {
    pub mode: GradientMode,
    pub records: Vec<TraceRecord<T>>,
    /// For each inter-event segment, the iteration at which the tolerance
    /// was first met (None if the segment never converged).
    pub convergence_epochs: Vec<Option<usize>>,
    /// Set when a power-flow divergence cut the run short; the records up
    /// to the failure are preserved.
    pub failure: Option<String>,
}

impl<T: Real> SimulationTrace<T> {
    pub fn last(&self) -> Option<&TraceRecord<T>> {
        self.records.last()
    }

    /// Iterations the first segment took to meet tolerance.
    pub fn first_settled(&self) -> Option<usize> {
        self.convergence_epochs.first().copied().flatten()
    }
}

fn clamp<T: Real>(q: T, lo: T, hi: T) -> T {
    if q < lo {
        lo
    } else if q > hi {
        hi
    } else {
        q
    }
}

/// Gradient magnitude for the convergence norm: sources pinned at a bound
/// with the gradient pointing outward are excluded (a boundary optimum
/// must register as converged).
fn effective_grad<T: Real>(net: &Network<T>, q: &[T], grad: &[T]) -> (T, Vec<bool>) {
    let mut gmax = T::zero();
    let mut clamped = vec![false; grad.len()];
    for (i, s) in net.sources.iter().enumerate() {
        let at_hi = q[i] >= s.q_max && grad[i] < T::zero();
        let at_lo = q[i] <= s.q_min && grad[i] > T::zero();
        clamped[i] = at_hi || at_lo;
        if !clamped[i] && grad[i].abs() > gmax {
            gmax = grad[i].abs();
        }
    }
    (gmax, clamped)
}

/// One control update: q <- clamp(q - dt * grad). `sol` must be the
/// converged power flow for `state.q_ctrl`.
pub fn step<T: Real>(
    state: &ControlState<T>,
    net: &Network<T>,
    y: &Admittance<T>,
    sol: &PowerFlowSolution<T>,
) -> Result<ControlState<T>> {
    let grad = objective::gradient_all(net, y, sol, &state.q_ctrl, state.mode)?;
    let mut next = state.clone();
    for (i, s) in net.sources.iter().enumerate() {
        next.q_ctrl[i] = clamp(state.q_ctrl[i] - state.dt * grad[i], s.q_min, s.q_max);
    }
    next.iteration += 1;
    Ok(next)
}

/// Scale the listed loads by the event multiplier; everything else shared.
pub fn apply_event<T: Real>(net: &Network<T>, ev: &LoadEvent<T>) -> Network<T> {
    let mut out = net.clone();
    for b in &mut out.buses {
        if ev.buses.contains(&b.id) {
            match ev.load_type {
                LoadKind::Real => b.p_load *= ev.multiplier,
                LoadKind::Reactive => b.q_load *= ev.multiplier,
            }
        }
    }
    out
}

/// Run the loop on a fixed network until the gradient norm drops under
/// `eps` or `max_iter` iterations pass. Returns the updated state and the
/// trace fragment; the terminal record carries the converged gradient.
pub fn run_segment<T: Real>(
    state: ControlState<T>,
    net: &Network<T>,
    eps: T,
    max_iter: usize,
) -> Result<(ControlState<T>, Vec<TraceRecord<T>>, Option<usize>)> {
    let y = powerflow::build_admittance(net)?;
    let mut st = state;
    let mut records = Vec::new();
    let mut sol = solve_or_fail(net, &y, &st.q_ctrl, None)?;
    let mut epoch = None;
    for _ in 0..=max_iter {
        let grad = objective::gradient_all(net, &y, &sol, &st.q_ctrl, st.mode)?;
        let (gmax, clamped) = effective_grad(net, &st.q_ctrl, &grad);
        records.push(TraceRecord {
            k: st.iteration,
            event: None,
            q_ctrl: st.q_ctrl.clone(),
            objective: objective::combined(net, &y, &sol, &st.q_ctrl),
            v: sol.v.clone(),
            grad: grad.clone(),
            grad_max: gmax,
            clamped,
        });
        if gmax < eps {
            epoch = Some(st.iteration);
            break;
        }
        if records.len() > max_iter {
            break;
        }
        for (i, s) in net.sources.iter().enumerate() {
            st.q_ctrl[i] = clamp(st.q_ctrl[i] - st.dt * grad[i], s.q_min, s.q_max);
        }
        st.iteration += 1;
        sol = solve_or_fail(net, &y, &st.q_ctrl, Some(&sol))?;
    }
    Ok((st, records, epoch))
}

fn solve_or_fail<T: Real>(
    net: &Network<T>,
    y: &Admittance<T>,
    q_ctrl: &[T],
    warm: Option<&PowerFlowSolution<T>>,
) -> Result<PowerFlowSolution<T>> {
    let sol = powerflow::solve(net, y, q_ctrl, warm, SolverOptions::default())?;
    if !sol.converged {
        return Err(Error::PowerFlowDiverged {
            iterations: sol.iterations,
            max_mismatch: crate::scalar::f(sol.max_mismatch),
        });
    }
    Ok(sol)
}

/// Run the control loop across the whole horizon, applying each event at
/// its sample iteration and re-converging in between. Once a segment has
/// met tolerance the sources hold their output until the next event.
///
/// A power-flow divergence ends the run early: the trace up to the failure
/// is returned with `failure` set rather than as an error.
pub fn run_scenario<T: Real>(
    net: &Network<T>,
    events: &[LoadEvent<T>],
    mode: GradientMode,
    eps: T,
    dt: T,
    horizon: usize,
) -> Result<SimulationTrace<T>> {
    debug_assert!(
        events.windows(2).all(|w| w[0].at_iteration <= w[1].at_iteration),
        "events must be sorted by iteration"
    );
    let y = powerflow::build_admittance(net)?;
    let mut cur = net.clone();
    let mut q = vec![T::zero(); net.sources.len()];
    let mut trace = SimulationTrace {
        mode,
        records: Vec::with_capacity(horizon + 1),
        convergence_epochs: Vec::new(),
        failure: None,
    };
    let mut sol = match solve_or_fail(&cur, &y, &q, None) {
        Ok(s) => s,
        Err(e) => {
            trace.failure = Some(e.to_string());
            return Ok(trace);
        }
    };
    let mut next_event = 0usize;
    let mut segment_epoch: Option<usize> = None;

    for k in 0..=horizon {
        let mut applied = None;
        while next_event < events.len() && events[next_event].at_iteration == k {
            cur = apply_event(&cur, &events[next_event]);
            applied = Some(next_event);
            next_event += 1;
        }
        if applied.is_some() {
            trace.convergence_epochs.push(segment_epoch);
            segment_epoch = None;
            sol = match solve_or_fail(&cur, &y, &q, Some(&sol)) {
                Ok(s) => s,
                Err(e) => {
                    trace.failure = Some(format!("iteration {k}: {e}"));
                    return Ok(trace);
                }
            };
        }

        let grad = match objective::gradient_all(&cur, &y, &sol, &q, mode) {
            Ok(g) => g,
            Err(e) => {
                trace.failure = Some(format!("iteration {k}: {e}"));
                return Ok(trace);
            }
        };
        let (gmax, clamped) = effective_grad(&cur, &q, &grad);
        let converged = gmax < eps;
        if converged && segment_epoch.is_none() {
            segment_epoch = Some(k);
        }
        trace.records.push(TraceRecord {
            k,
            event: applied,
            q_ctrl: q.clone(),
            objective: objective::combined(&cur, &y, &sol, &q),
            v: sol.v.clone(),
            grad: grad.clone(),
            grad_max: gmax,
            clamped,
        });

        if !converged && k < horizon {
            for (i, s) in cur.sources.iter().enumerate() {
                q[i] = clamp(q[i] - dt * grad[i], s.q_min, s.q_max);
            }
            sol = match solve_or_fail(&cur, &y, &q, Some(&sol)) {
                Ok(s) => s,
                Err(e) => {
                    trace.failure = Some(format!("iteration {}: {e}", k + 1));
                    return Ok(trace);
                }
            };
        }
    }
    trace.convergence_epochs.push(segment_epoch);
    Ok(trace)
}

/// CSV rendering of a trace: one row per iteration with the objective
/// breakdown, per-source outputs, per-bus voltages, and gradient norm.
pub fn trace_csv<T: Real>(net: &Network<T>, trace: &SimulationTrace<T>) -> String {
    let mut header = String::from("iter,event,f,loss_term,dev_term,cost_term");
    for s in &net.sources {
        header.push_str(&format!(",q_{}", s.bus));
    }
    for b in &net.buses {
        header.push_str(&format!(",v_{}", b.id));
    }
    header.push_str(",grad_max\n");
    let mut out = header;
    for r in &trace.records {
        let ev = r.event.map(|e| (e + 1).to_string()).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{:.9},{:.9},{:.9},{:.9}",
            r.k,
            ev,
            crate::scalar::f(r.objective.f),
            crate::scalar::f(r.objective.loss_term),
            crate::scalar::f(r.objective.dev_term),
            crate::scalar::f(r.objective.cost_term)
        ));
        for q in &r.q_ctrl {
            out.push_str(&format!(",{:.9}", crate::scalar::f(*q)));
        }
        for v in &r.v {
            out.push_str(&format!(",{:.9}", crate::scalar::f(*v)));
        }
        out.push_str(&format!(",{:.9}\n", crate::scalar::f(r.grad_max)));
    }
    out
}

/// Parse an event schedule: one event per line,
/// `at_iteration bus_list load_type multiplier`, with a comma-separated
/// bus list, `real`/`reactive` type, and `#` comments.
pub fn parse_events<T: Real>(text: &str) -> Result<Vec<LoadEvent<T>>> {
    let mut events = Vec::new();
    for (ln, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let syntax = |msg: &str| Error::Syntax {
            line: ln + 1,
            msg: msg.to_string(),
        };
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() != 4 {
            return Err(syntax("expected: at_iteration bus_list load_type multiplier"));
        }
        let at_iteration: usize = parts[0]
            .parse()
            .map_err(|_| syntax("bad iteration number"))?;
        let buses = parts[1]
            .split(',')
            .map(|s| s.trim().parse::<usize>().map(BusId))
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| syntax("bad bus list"))?;
        let load_type = match parts[2].to_ascii_lowercase().as_str() {
            "real" => LoadKind::Real,
            "reactive" => LoadKind::Reactive,
            _ => return Err(syntax("load type must be 'real' or 'reactive'")),
        };
        let multiplier: f64 = parts[3].parse().map_err(|_| syntax("bad multiplier"))?;
        if multiplier <= 0.0 {
            return Err(syntax("multiplier must be positive"));
        }
        events.push(LoadEvent {
            at_iteration,
            buses,
            load_type,
            multiplier: crate::scalar::c(multiplier),
        });
    }
    events.sort_by_key(|e| e.at_iteration);
    Ok(events)
}
