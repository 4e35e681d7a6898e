//! Global-best particle swarm over the source reactive-output box, as a
//! baseline against the gradient controller. Fitness is the combined
//! objective through a full power-flow solve.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::netmodel::Network;
use crate::objective::{self, ObjectiveBreakdown};
use crate::powerflow::{self, Admittance, SolverOptions};
use crate::scalar::{c, f, Real};
use crate::Result;

#[derive(Debug, Clone)]
pub struct PsoConfig {
    pub n_particles: usize,
    pub inertia: f64,
    pub cognitive: f64,
    pub social: f64,
    pub max_iter: usize,
    pub seed: u64,
    /// Velocity limit as a fraction of each source's box width.
    pub velocity_clamp: f64,
}

impl Default for PsoConfig {
    fn default() -> Self {
        Self {
            n_particles: 30,
            inertia: 0.7,
            cognitive: 1.5,
            social: 1.5,
            max_iter: 200,
            seed: 0,
            velocity_clamp: 0.5,
        }
    }
}

#[derive(Debug, Clone)]
struct Particle<T> {
    position: Vec<T>,
    velocity: Vec<T>,
    best_position: Vec<T>,
    best_value: T,
}

#[derive(Debug, Clone)]
pub struct PsoOutcome<T> {
    pub best_q: Vec<T>,
    pub best: ObjectiveBreakdown<T>,
    pub iterations: usize,
    /// Global-best objective value after each iteration.
    pub history: Vec<T>,
}

/// Minimize the combined objective over the q_ctrl box with a standard
/// global-best swarm. Deterministic for a fixed seed; stops when the
/// global best improves by less than 1e-6 for 10 consecutive iterations
/// or at `max_iter`. A particle whose power flow diverges scores +inf
/// for that evaluation.
pub fn optimize<T: Real>(
    net: &Network<T>,
    y: &Admittance<T>,
    cfg: &PsoConfig,
) -> Result<PsoOutcome<T>> {
    assert!(cfg.n_particles >= 1, "swarm needs at least one particle");
    assert!(!net.sources.is_empty(), "swarm needs at least one source");
    let dim = net.sources.len();
    let lo: Vec<T> = net.sources.iter().map(|s| s.q_min).collect();
    let hi: Vec<T> = net.sources.iter().map(|s| s.q_max).collect();
    let vmax: Vec<T> = lo
        .iter()
        .zip(&hi)
        .map(|(&l, &h)| (h - l) * c::<T>(cfg.velocity_clamp))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let fitness = |q: &[T]| -> T {
        match powerflow::solve(net, y, q, None, SolverOptions::default()) {
            Ok(sol) if sol.converged => objective::combined(net, y, &sol, q).f,
            _ => T::infinity(),
        }
    };

    let mut swarm: Vec<Particle<T>> = (0..cfg.n_particles)
        .map(|_| {
            let position: Vec<T> = (0..dim)
                .map(|d| lo[d] + (hi[d] - lo[d]) * c::<T>(rng.gen_range(0.0..1.0)))
                .collect();
            let velocity: Vec<T> = (0..dim)
                .map(|d| vmax[d] * c::<T>(rng.gen_range(-1.0..1.0)))
                .collect();
            Particle {
                best_position: position.clone(),
                best_value: T::infinity(),
                position,
                velocity,
            }
        })
        .collect();
    for p in &mut swarm {
        p.best_value = fitness(&p.position);
    }

    // gbest reduction in index order so ties go to the lowest index
    let mut gbest_q = swarm[0].best_position.clone();
    let mut gbest_v = swarm[0].best_value;
    for p in &swarm[1..] {
        if p.best_value < gbest_v {
            gbest_v = p.best_value;
            gbest_q = p.best_position.clone();
        }
    }

    let w = c::<T>(cfg.inertia);
    let c1 = c::<T>(cfg.cognitive);
    let c2 = c::<T>(cfg.social);
    let mut history = Vec::new();
    let mut stall = 0usize;
    let mut iterations = 0usize;

    for _ in 0..cfg.max_iter {
        iterations += 1;
        for p in &mut swarm {
            for d in 0..dim {
                let r1 = c::<T>(rng.gen_range(0.0..1.0));
                let r2 = c::<T>(rng.gen_range(0.0..1.0));
                let mut v = w * p.velocity[d]
                    + c1 * r1 * (p.best_position[d] - p.position[d])
                    + c2 * r2 * (gbest_q[d] - p.position[d]);
                if v > vmax[d] {
                    v = vmax[d];
                } else if v < -vmax[d] {
                    v = -vmax[d];
                }
                let mut x = p.position[d] + v;
                // reflect at the box and kill the offending velocity component
                if x > hi[d] {
                    x = hi[d] + hi[d] - x;
                    v = T::zero();
                }
                if x < lo[d] {
                    x = lo[d] + lo[d] - x;
                    v = T::zero();
                }
                // a reflection overshooting the opposite wall lands on it
                if x > hi[d] {
                    x = hi[d];
                } else if x < lo[d] {
                    x = lo[d];
                }
                p.position[d] = x;
                p.velocity[d] = v;
            }
            let value = fitness(&p.position);
            if value < p.best_value {
                p.best_value = value;
                p.best_position = p.position.clone();
            }
        }
        let prev = gbest_v;
        for p in &swarm {
            if p.best_value < gbest_v {
                gbest_v = p.best_value;
                gbest_q = p.best_position.clone();
            }
        }
        history.push(gbest_v);
        if f(prev - gbest_v) < 1e-6 {
            stall += 1;
            if stall >= 10 {
                break;
            }
        } else {
            stall = 0;
        }
    }

    let sol = powerflow::solve(net, y, &gbest_q, None, SolverOptions::default())?;
    let best = objective::combined(net, y, &sol, &gbest_q);
    Ok(PsoOutcome {
        best_q: gbest_q,
        best,
        iterations,
        history,
    })
}

/// CSV of the global-best value per iteration.
pub fn trace_csv<T: Real>(outcome: &PsoOutcome<T>) -> String {
    let mut out = String::from("iter,gbest_f\n");
    for (k, v) in outcome.history.iter().enumerate() {
        out.push_str(&format!("{},{:.9}\n", k + 1, f(*v)));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::parse_case;

    const TWO_BUS: &str = "\
[meta]\nname two\n[bus]\n1 slack 1.0 0 0 0 0 0 1.0\n2 pq 1.0 0 0 0 0.1 0.05 1.0\n[branch]\n1 2 0.01 0.1 0\n[source]\n2 -0.5 0.5 0.0 0.0 0.0 1.0\n[weights]\n1 1 0.0005\n";

    #[test]
    fn gbest_is_monotone_and_deterministic() {
        let net = parse_case::<f64>(TWO_BUS).unwrap();
        let y = powerflow::build_admittance(&net).unwrap();
        let cfg = PsoConfig {
            n_particles: 8,
            max_iter: 40,
            seed: 7,
            ..Default::default()
        };
        let a = optimize(&net, &y, &cfg).unwrap();
        let b = optimize(&net, &y, &cfg).unwrap();
        assert_eq!(a.best_q, b.best_q);
        assert_eq!(a.history, b.history);
        for w in a.history.windows(2) {
            assert!(w[1] <= w[0]);
        }
        for (q, s) in a.best_q.iter().zip(&net.sources) {
            assert!(*q >= s.q_min && *q <= s.q_max);
        }
    }
}
