//! Y-bus assembly and full Newton-Raphson AC power flow in polar form.

use crate::linalg::{LuFactors, Matrix};
use crate::netmodel::{BusId, BusKind, Network};
use crate::scalar::{c, Real};
use crate::{Error, Result};

/// Nodal admittance matrix, stored both rectangular (G, B) and polar
/// (magnitude, angle).
#[derive(Debug, Clone)]
pub struct Admittance<T> {
    pub n: usize,
    pub g: Matrix<T>,
    pub b: Matrix<T>,
    pub y_mag: Matrix<T>,
    pub y_ang: Matrix<T>,
}

/// Assemble the Y-bus from the pi model of every branch: series admittance
/// 1/(r+jx) plus half the charging susceptance at each terminal.
pub fn build_admittance<T: Real>(net: &Network<T>) -> Result<Admittance<T>> {
    let n = net.n_buses();
    let mut g = Matrix::zeros(n, n);
    let mut b = Matrix::zeros(n, n);
    for br in &net.branches {
        let fi = net.bus_index(br.from).ok_or(Error::UnknownBus(br.from.0))?;
        let ti = net.bus_index(br.to).ok_or(Error::UnknownBus(br.to.0))?;
        let den = br.r * br.r + br.x * br.x;
        if den == T::zero() {
            return Err(Error::ZeroImpedanceBranch {
                from: br.from.0,
                to: br.to.0,
            });
        }
        let gs = br.r / den;
        let bs = -br.x / den;
        let half = br.b_charging / c(2.0);
        g.add(fi, fi, gs);
        g.add(ti, ti, gs);
        b.add(fi, fi, bs + half);
        b.add(ti, ti, bs + half);
        g.add(fi, ti, -gs);
        g.add(ti, fi, -gs);
        b.add(fi, ti, -bs);
        b.add(ti, fi, -bs);
    }
    let mut y_mag = Matrix::zeros(n, n);
    let mut y_ang = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let (gij, bij) = (g.get(i, j), b.get(i, j));
            y_mag.set(i, j, (gij * gij + bij * bij).sqrt());
            y_ang.set(i, j, bij.atan2(gij));
        }
    }
    Ok(Admittance { n, g, b, y_mag, y_ang })
}

/// Solved operating point at one control iteration.
#[derive(Debug, Clone)]
pub struct PowerFlowSolution<T> {
    pub v: Vec<T>,
    pub delta: Vec<T>,
    pub p_inj: Vec<T>,
    pub q_inj: Vec<T>,
    pub converged: bool,
    pub iterations: usize,
    pub max_mismatch: T,
    /// Worst mismatch at the start of each Newton iteration.
    pub mismatch_history: Vec<T>,
}

#[derive(Debug, Clone, Copy)]
pub struct SolverOptions<T> {
    pub tolerance: T,
    pub max_iterations: usize,
}

impl<T: Real> Default for SolverOptions<T> {
    fn default() -> Self {
        Self {
            tolerance: c(1e-8),
            max_iterations: 30,
        }
    }
}

/// Unknown ordering for the Newton system: angles at all non-slack buses,
/// then magnitudes at PQ buses. Mismatch rows use the same ordering.
#[derive(Debug, Clone)]
pub struct Indexing {
    pub pvpq: Vec<usize>,
    pub pq: Vec<usize>,
}

impl Indexing {
    pub fn of<T: Real>(net: &Network<T>) -> Self {
        let pvpq = net
            .buses
            .iter()
            .enumerate()
            .filter(|(_, b)| b.kind != BusKind::Slack)
            .map(|(i, _)| i)
            .collect();
        let pq = net
            .buses
            .iter()
            .enumerate()
            .filter(|(_, b)| b.kind == BusKind::Pq)
            .map(|(i, _)| i)
            .collect();
        Self { pvpq, pq }
    }

    pub fn dim(&self) -> usize {
        self.pvpq.len() + self.pq.len()
    }

    /// Row of the reactive-power mismatch equation of PQ bus `bus`.
    pub fn q_row(&self, bus: usize) -> Option<usize> {
        self.pq
            .iter()
            .position(|&i| i == bus)
            .map(|p| self.pvpq.len() + p)
    }
}

/// Net scheduled injections given the controllable reactive vector
/// (aligned with `net.sources`).
pub fn scheduled_injections<T: Real>(net: &Network<T>, q_ctrl: &[T]) -> (Vec<T>, Vec<T>) {
    let p: Vec<T> = net.buses.iter().map(|b| b.p_gen_fixed - b.p_load).collect();
    let mut q: Vec<T> = net.buses.iter().map(|b| b.q_gen_fixed - b.q_load).collect();
    for (s, &qc) in net.sources.iter().zip(q_ctrl) {
        let i = net.bus_index(s.bus).expect("validated source bus");
        q[i] += qc;
    }
    (p, q)
}

/// Complex power injection S_i at every bus for voltages (v, delta).
pub fn injections<T: Real>(y: &Admittance<T>, v: &[T], delta: &[T]) -> (Vec<T>, Vec<T>) {
    let n = y.n;
    let mut p = vec![T::zero(); n];
    let mut q = vec![T::zero(); n];
    for i in 0..n {
        let mut pi = T::zero();
        let mut qi = T::zero();
        for j in 0..n {
            let gij = y.g.get(i, j);
            let bij = y.b.get(i, j);
            if gij == T::zero() && bij == T::zero() {
                continue;
            }
            let dij = delta[i] - delta[j];
            let (s, co) = dij.sin_cos();
            let vv = v[i] * v[j];
            pi += vv * (gij * co + bij * s);
            qi += vv * (gij * s - bij * co);
        }
        p[i] = pi;
        q[i] = qi;
    }
    (p, q)
}

/// Standard polar-form power-flow Jacobian at (v, delta), ordered per `idx`.
pub fn jacobian<T: Real>(
    y: &Admittance<T>,
    v: &[T],
    delta: &[T],
    p: &[T],
    q: &[T],
    idx: &Indexing,
) -> Matrix<T> {
    let npp = idx.pvpq.len();
    let npq = idx.pq.len();
    let mut jm = Matrix::zeros(npp + npq, npp + npq);
    for (a, &i) in idx.pvpq.iter().enumerate() {
        for (b, &j) in idx.pvpq.iter().enumerate() {
            let val = if i == j {
                -q[i] - y.b.get(i, i) * v[i] * v[i]
            } else {
                let dij = delta[i] - delta[j];
                let (s, co) = dij.sin_cos();
                v[i] * v[j] * (y.g.get(i, j) * s - y.b.get(i, j) * co)
            };
            jm.set(a, b, val);
        }
        for (b, &j) in idx.pq.iter().enumerate() {
            let val = if i == j {
                p[i] / v[i] + y.g.get(i, i) * v[i]
            } else {
                let dij = delta[i] - delta[j];
                let (s, co) = dij.sin_cos();
                v[i] * (y.g.get(i, j) * co + y.b.get(i, j) * s)
            };
            jm.set(a, npp + b, val);
        }
    }
    for (a, &i) in idx.pq.iter().enumerate() {
        for (b, &j) in idx.pvpq.iter().enumerate() {
            let val = if i == j {
                p[i] - y.g.get(i, i) * v[i] * v[i]
            } else {
                let dij = delta[i] - delta[j];
                let (s, co) = dij.sin_cos();
                -v[i] * v[j] * (y.g.get(i, j) * co + y.b.get(i, j) * s)
            };
            jm.set(npp + a, b, val);
        }
        for (b, &j) in idx.pq.iter().enumerate() {
            let val = if i == j {
                q[i] / v[i] - y.b.get(i, i) * v[i]
            } else {
                let dij = delta[i] - delta[j];
                let (s, co) = dij.sin_cos();
                v[i] * (y.g.get(i, j) * s - y.b.get(i, j) * co)
            };
            jm.set(npp + a, npp + b, val);
        }
    }
    jm
}

/// Solve the AC power flow by full Newton-Raphson.
///
/// Controllable reactive injections enter at the PQ buses carrying sources;
/// slack and PV magnitudes are held at their setpoints. Non-convergence is
/// reported in the returned solution, never silently extrapolated.
pub fn solve<T: Real>(
    net: &Network<T>,
    y: &Admittance<T>,
    q_ctrl: &[T],
    warm_start: Option<&PowerFlowSolution<T>>,
    opts: SolverOptions<T>,
) -> Result<PowerFlowSolution<T>> {
    let n = net.n_buses();
    assert_eq!(q_ctrl.len(), net.sources.len(), "q_ctrl length");
    if let Some(w) = warm_start {
        assert_eq!(w.v.len(), n, "warm start dimension");
    }
    let idx = Indexing::of(net);
    let (p_sched, q_sched) = scheduled_injections(net, q_ctrl);

    let mut v: Vec<T>;
    let mut delta: Vec<T>;
    match warm_start {
        Some(w) => {
            v = w.v.clone();
            delta = w.delta.clone();
        }
        None => {
            // flat start: setpoint magnitudes at slack/PV, 1 p.u. at PQ
            v = net
                .buses
                .iter()
                .map(|b| if b.kind == BusKind::Pq { T::one() } else { b.v_init })
                .collect();
            delta = vec![T::zero(); n];
        }
    }

    let mut history = Vec::new();
    for it in 0..=opts.max_iterations {
        let (p, q) = injections(y, &v, &delta);
        let mut mismatch = vec![T::zero(); idx.dim()];
        let mut worst = T::zero();
        for (a, &i) in idx.pvpq.iter().enumerate() {
            mismatch[a] = p_sched[i] - p[i];
            worst = worst.max(mismatch[a].abs());
        }
        for (a, &i) in idx.pq.iter().enumerate() {
            mismatch[idx.pvpq.len() + a] = q_sched[i] - q[i];
            worst = worst.max(mismatch[idx.pvpq.len() + a].abs());
        }
        history.push(worst);
        if worst <= opts.tolerance {
            return Ok(PowerFlowSolution {
                v,
                delta,
                p_inj: p,
                q_inj: q,
                converged: true,
                iterations: it,
                max_mismatch: worst,
                mismatch_history: history,
            });
        }
        if it == opts.max_iterations || !worst.is_finite() {
            return Ok(PowerFlowSolution {
                v,
                delta,
                p_inj: p,
                q_inj: q,
                converged: false,
                iterations: it,
                max_mismatch: worst,
                mismatch_history: history,
            });
        }
        let jm = jacobian(y, &v, &delta, &p, &q, &idx);
        let dx = LuFactors::factor(jm)?.solve(&mismatch);
        for (a, &i) in idx.pvpq.iter().enumerate() {
            delta[i] += dx[a];
        }
        for (a, &i) in idx.pq.iter().enumerate() {
            v[i] += dx[idx.pvpq.len() + a];
        }
    }
    unreachable!("loop always returns")
}

/// Real power measured into each branch end and the branch series loss.
#[derive(Debug, Clone)]
pub struct BranchFlow<T> {
    pub from: BusId,
    pub to: BusId,
    pub p_from: T,
    pub p_to: T,
    pub loss: T,
}

/// Per-branch sending/receiving real power from a converged solution.
pub fn branch_flows<T: Real>(
    net: &Network<T>,
    sol: &PowerFlowSolution<T>,
) -> Result<Vec<BranchFlow<T>>> {
    let mut out = Vec::with_capacity(net.branches.len());
    for br in &net.branches {
        let fi = net.bus_index(br.from).ok_or(Error::UnknownBus(br.from.0))?;
        let ti = net.bus_index(br.to).ok_or(Error::UnknownBus(br.to.0))?;
        let den = br.r * br.r + br.x * br.x;
        let gs = br.r / den;
        let bs = -br.x / den;
        let p_end = |i: usize, j: usize| {
            // P into the branch at terminal i: series + (real part of) shunt.
            // The charging branch is purely susceptive, so only the series
            // element carries real power.
            let dij = sol.delta[i] - sol.delta[j];
            let (s, co) = dij.sin_cos();
            sol.v[i] * sol.v[i] * gs - sol.v[i] * sol.v[j] * (gs * co + bs * s)
        };
        let p_from = p_end(fi, ti);
        let p_to = p_end(ti, fi);
        out.push(BranchFlow {
            from: br.from,
            to: br.to,
            p_from,
            p_to,
            loss: p_from + p_to,
        });
    }
    Ok(out)
}

/// Net reactive injection at a bus evaluated from the solved voltages:
/// sum over j of V_i V_j (G_ij sin d_ij - B_ij cos d_ij).
pub fn reactive_injection<T: Real>(
    net: &Network<T>,
    bus: BusId,
    y: &Admittance<T>,
    sol: &PowerFlowSolution<T>,
) -> Result<T> {
    let i = net.bus_index(bus).ok_or(Error::UnknownBus(bus.0))?;
    let mut q = T::zero();
    for j in 0..y.n {
        let dij = sol.delta[i] - sol.delta[j];
        let (s, co) = dij.sin_cos();
        q += sol.v[i] * sol.v[j] * (y.g.get(i, j) * s - y.b.get(i, j) * co);
    }
    Ok(q)
}
