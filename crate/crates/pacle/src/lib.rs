//! Offline actor-critic policy learning with linear function approximation.
//!
//! The library is organized around a pessimistic least-squares policy
//! evaluation critic (a small second-order cone program per policy) and a
//! mirror-descent softmax actor, together with exact dynamic-programming
//! oracles on finite tabular MDPs used to verify every analytical identity
//! the method relies on:
//!
//! - [`mdp`] — finite-horizon MDPs with per-stage linear features, exact
//!   policy evaluation, occupancy measures, and rollouts;
//! - [`data`] — offline dataset collection under prefix-measurable plans and
//!   cumulative covariance matrices;
//! - [`socp`] — a self-contained small-scale conic solver (linear objective,
//!   affine equality chains, ellipsoid/ball/halfspace constraints);
//! - [`critic`] — the pessimistic least-squares policy-evaluation program;
//! - [`actor`] — the exponentiated-gradient actor and the full driver loop;
//! - [`analysis`] — executable forms of the supporting constructions:
//!   induced MDP, uncertainty functional, sup-norm projection, parameter
//!   error, and closedness measurement;
//! - [`benchmarks`] — generators for the hard-instance families (hypercube
//!   bandit chains for lower-bound experiments, chain MDPs for closedness
//!   fixtures, coverage-gap and well-specified desk instances);
//! - [`experiment`] — batch experiment orchestration behind the CLI.

pub mod actor;
pub mod analysis;
pub mod benchmarks;
pub mod critic;
pub mod data;
pub mod error;
pub mod experiment;
pub mod mdp;
pub mod socp;

pub use error::{Error, Result};
