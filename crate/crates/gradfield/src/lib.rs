//! Gradient fields and the networks that try to represent them.
//!
//! A vector field ψ: ℝᵈ → ℝᵈ is a gradient field only if its Jacobian is
//! symmetric everywhere. This crate builds the machinery to study that
//! constraint numerically for feedforward networks:
//!
//! * [`autodiff`] — expression graphs whose input gradients materialize as
//!   new forward graphs, so losses over ∇φ can be differentiated with plain
//!   first-order reverse mode (double backpropagation).
//! * [`networks`] — scalar potentials φ, direct fields ψ, the weight-tied
//!   one-hidden-layer field, the shared-direction deep field, and closed-form
//!   gradients of shallow potentials.
//! * [`diagnostics`] — Jacobians, symmetry residuals, weight-direction
//!   statistics, finite-difference oracles.
//! * [`toydata`] — Gaussian mixtures with exact smoothed log-densities and
//!   scores, the oracle for all accuracy measurements.
//! * [`objectives`] — the empirical-Bayes denoising objective (for both the
//!   direct field and the potential's gradient), the plain reconstruction
//!   objective, and a deterministic SGD training loop.
//! * [`verify`] — named property suites behind the CLI.

// Indexed loops over shared indices are the clearest form for the small
// dense kernels and the indexwise closed forms in this crate.
#![allow(clippy::needless_range_loop)]

pub mod activation;
pub mod autodiff;
pub mod config;
pub mod diagnostics;
pub mod linalg;
pub mod networks;
pub mod objectives;
pub mod rng;
pub mod toydata;
pub mod verify;
