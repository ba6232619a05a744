//! Analysis of probabilistic abstract reduction systems.
//!
//! A [`Pars`] is a finite set of opaque states with exact-rational
//! probabilities on its reductions; a [`GeneratedPars`] describes a countably
//! infinite system through its successor function and is only ever analyzed
//! through bounded [`explore`] windows.
//!
//! - [`ars`]: termination, normalization, (local) confluence, unique normal
//!   forms, with replayable witnesses.
//! - [`prob`]: path and reaching probabilities, the step-indexed
//!   distribution, divergence brackets, almost-sure property checks and a
//!   Monte Carlo estimator.
//! - [`certify`]: Lyapunov ranking certificates for almost-sure termination.
//! - [`transform`]: the mapping conditions under which (non-)confluence of
//!   a target system transfers back to the source.
//! - [`corpus`]: the reference systems with their expected properties.

pub mod ars;
pub mod certify;
pub mod corpus;
pub mod error;
mod linsolve;
pub mod montecarlo;
pub mod par;
pub mod prob;
pub mod rational;
pub mod system;
pub mod transform;

pub use ars::{Decision, Property, Verdict, Witness};
pub use error::{Error, Result};
pub use rational::{format_prob, parse_prob, Prob};
pub use system::{explore, load_system, Analyzable, ExploredSystem, GeneratedPars, Pars, StateId};
