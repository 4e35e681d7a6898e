//! Reactive-power dispatch over AC networks.
//!
//! The crate models a transmission network (buses, branches, controllable
//! reactive sources), solves the AC power flow by full Newton-Raphson, and
//! runs a gradient-descent control loop that trims the reactive output of
//! each source to minimise a weighted sum of real power loss, voltage
//! deviation and reactive generation cost. The loss/deviation gradient can
//! be evaluated with measured bus-angle differences or with the common
//! zero-angle approximation; the analyzer reports per-line diagnostics that
//! tell you when that approximation is safe (the 8 % loss rule).
//!
//! All core math is generic over the scalar type via [`scalar::Real`];
//! `f64` is the default used by the CLI and the bundled fixtures.

pub mod analyzer;
pub mod controller;
pub mod linalg;
pub mod netmodel;
pub mod objective;
pub mod powerflow;
pub mod pso;
pub mod scalar;
pub mod svg;

mod error;

pub use error::{Error, Result};
pub use scalar::Real;

/// Concrete aliases for the common double-precision instantiation.
pub type Network64 = netmodel::Network<f64>;
pub type Admittance64 = powerflow::Admittance<f64>;
pub type Solution64 = powerflow::PowerFlowSolution<f64>;
pub type Trace64 = controller::SimulationTrace<f64>;

/// Single-precision aliases; usable for quick studies at relaxed tolerances.
pub type Network32 = netmodel::Network<f32>;
pub type Admittance32 = powerflow::Admittance<f32>;
