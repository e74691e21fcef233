//! Simulation and certification toolkit for discrete-time averaging
//! dynamics `x(t+1) = A(t) x(t)` with time-varying, non-reciprocal,
//! row-stochastic weights.
//!
//! The crate provides:
//!
//! - dense stochastic-matrix arithmetic with directed cut sums and the
//!   product-vs-sum cut inequalities ([`matrix`]);
//! - weight schedules: built-in example systems, seeded generators for
//!   windowed arc-balanced and cut-balanced families, file ingestion, and
//!   the L-step window lift ([`schedule`]);
//! - finite-horizon persistent-graph estimation and the digraph facts the
//!   rate certificates need ([`graph`]);
//! - balance-condition checkers with witnesses and the subset-sequence flow
//!   dynamic programs ([`balance`]);
//! - the averaging iteration with spread tracking and the sorted-state
//!   transform ([`dynamics`]);
//! - the explicit convergence-rate certificates and their verification
//!   against simulated runs ([`bounds`]);
//! - seeded randomized suites for every encoded inequality ([`verify`]).
//!
//! Everything is deterministic given a seed. With the default `parallel`
//! feature, embarrassingly parallel scans fan out via rayon; disabling the
//! feature yields a sequential build with identical results.

pub mod balance;
pub mod bounds;
pub mod dynamics;
pub mod error;
pub mod graph;
pub mod matrix;
pub mod parallel;
pub mod schedule;
pub mod ser;
pub mod verify;

pub use error::{Error, Result};
