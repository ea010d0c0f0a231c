//! Model-predictive scheduling and discrete-time simulation of large EV
//! charging sites behind oversubscribed, unbalanced three-phase
//! infrastructure.
//!
//! The crate is organised bottom-up:
//!
//! * [`infra`]: EVSEs, the phasor constraint matrix and feasibility checks.
//! * [`workload`]: charging sessions, dataset ingestion and synthetic traces.
//! * [`battery`]: pilot-to-current response of ideal and two-stage batteries.
//! * [`solver`]: concave QP with second-order-cone constraints (interior
//!   point inner solver, tangent cutting planes for the cones).
//! * [`scheduler`]: the adaptive MPC scheduler, its objective components,
//!   pilot quantization and rampdown.
//! * [`baselines`]: LLF / EDF / round-robin / uncontrolled reference policies.
//! * [`billing`]: time-of-use tariffs, demand charge and profit accounting.
//! * [`simulator`]: closed-loop runs and the perfect-information benchmark.
//! * [`batch`]: data-parallel execution of many independent runs.

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod batch;
pub mod battery;
pub mod billing;
mod error;
pub mod infra;
pub mod scheduler;
mod serde_complex;
pub mod simulator;
pub mod solver;
pub mod workload;

pub use error::{Error, Result};

/// Default feasibility tolerance for network checks, in amps.
pub const FEASIBILITY_TOL: f64 = 1e-6;
