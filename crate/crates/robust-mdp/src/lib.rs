//! Solvers and certified error bounds for distributionally robust tabular
//! Markov decision problems.
//!
//! The ambiguity about the transition law is modeled per (state, action)
//! pair as a Wasserstein ball of radius epsilon around a reference kernel.
//! The crate computes the nominal value function under a fixed kernel and
//! the robust value function under the worst kernel sequence from the
//! ball, both as fixed points of their one-step dynamic-programming
//! operators, and certifies the gap between them against an explicit upper
//! bound built from the problem's Lipschitz constants. A tabular robust
//! Q-learning routine provides a sample-based alternative solver, and the
//! `robust-mdp` binary exposes the whole pipeline on the command line.

pub mod bellman;
pub mod certify;
pub mod error;
pub mod experiment;
pub mod io;
pub mod mdp;
pub mod qlearn;
pub mod transport;

pub use error::{Error, Result};
