//! Joint base-station beamforming and reflection/transmission dual-functional
//! active RIS design for multiuser MISO downlinks.
//!
//! The crate provides two solvers over Monte-Carlo channel scenarios:
//!
//! - [`sumrate::run_sum_rate`]: sum-rate maximization under BS, RIS, and
//!   per-element power budgets, via fractional-programming block-coordinate
//!   ascent (closed-form auxiliary updates, interior-point beamformer and
//!   amplification subproblems, Riemannian phase design, cyclic amplitude
//!   updates).
//! - [`powmin::run_power_min`]: weighted BS+RIS transmit-power minimization
//!   under per-user SINR targets, alternating convex subproblems with a
//!   Dinkelbach / log-sum-exp QoS-balancing phase and amplitude design.
//!
//! Supporting machinery: [`scenario`] for reproducible channel generation,
//! [`model`] for the design state and every physical evaluator, [`convex`]
//! for the in-house QCQP/SOCP interior-point solver, [`manifold`] for
//! unit-modulus (complex circle) optimization, and [`cli`] behind the
//! `ris-optim` binary for single solves, parameter sweeps, and convergence
//! studies. See the crate examples for runnable entry points per capability.

pub mod cli;
pub mod convex;
pub mod error;
pub mod linalg;
pub mod manifold;
pub mod model;
pub mod powmin;
pub mod scenario;
pub mod sumrate;
pub mod trace;

pub use error::{Result, RisError};
pub use scenario::{build_scenario, Mode, Scenario, ScenarioConfig};
