//! Linear stochastic approximation on a single Markovian trajectory.
//!
//! The crate solves fixed-point equations `θ = L̄θ + b̄` where `(L̄, b̄)` are
//! only observed through noisy pairs `(L_t, b_t)` emitted along a Markov
//! chain. It provides
//!
//! - finite-state chain primitives ([`markov`]): stationary distributions,
//!   total-variation mixing times, trajectory sampling and the Green operator;
//! - the constant-stepsize recursion with Polyak–Ruppert averaging and the
//!   associated stepsize schedule and bound calculators ([`engine`]);
//! - observation models ([`model`]): tabular, TD(0), TD(λ) with eligibility
//!   traces, and vector autoregression;
//! - exact and plug-in noise covariances, the local radius and the Green
//!   identity cross-check ([`diagnostics`]);
//! - the TD(λ) model-selection recipe ([`selection`]).
//!
//! The crate is `no_std` and only needs `alloc`.

#![no_std]
#![warn(missing_debug_implementations)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod diagnostics;
pub mod engine;
mod error;
pub mod linalg;
pub mod markov;
pub mod model;
pub mod rng;
pub mod selection;

pub use error::{Error, ErrorCategory, Result};
pub use linalg::{Matrix, Vector};
