//! Stochastic gradient descent with matrix-valued learning rates, estimated
//! stopping criteria, and the probability bounds that govern them.
//!
//! The crate is organised around the pipeline an experiment follows:
//!
//! * [`problems`] — synthetic stochastic objectives with exact gradient
//!   oracles and declared regularity constants,
//! * [`schedule`] — matrix learning-rate schedules and machine-checked
//!   certificates for the step-size conditions P1–P4,
//! * [`sgd`] — the iteration itself, with checkpoint instrumentation,
//! * [`stopping`] — the deterministic criterion SC-0 and the estimated
//!   criteria SC-1 (gradient estimation) and SC-2 (majority vote),
//! * [`bounds`] — closed-form triggering and false-negative bounds,
//! * [`montecarlo`] — replicated experiments validating those bounds,
//! * [`report`] — CSV/JSON serialisation with a fixed column order.
//!
//! All randomness flows from explicit 64-bit seeds through [`rng::stream`];
//! nothing reads wall-clock entropy.

pub mod bounds;
pub mod error;
pub mod montecarlo;
pub mod problems;
pub mod report;
pub mod rng;
pub mod schedule;
pub mod sgd;
pub mod stats;
pub mod stopping;

pub use error::Error;

/// Dense parameter vector (the optimisation variable).
pub type ParamVector = nalgebra::DVector<f64>;
