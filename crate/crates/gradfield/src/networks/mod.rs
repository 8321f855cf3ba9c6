//! Network families for scalar potentials and vector fields.
//!
//! * [`MlpParams`] — plain fully connected net without biases; scalar output
//!   (φ mode) or d-dimensional output (ψ mode).
//! * [`TiedPsiNet`] — one hidden layer with readout rows tied to input rows
//!   by per-unit scales; its Jacobian is symmetric everywhere by construction.
//! * [`ParallelPsiNet`] — deep field whose input rows and output columns all
//!   share one direction; the Jacobian is rank-1 symmetric everywhere.
//! * [`explicit_grad_l2`] / [`explicit_grad_l3`] — closed forms for ∇φ of
//!   one- and two-hidden-layer potentials, the second being a product of two
//!   derivative-factor networks rather than a conventional feedforward pass.

mod constructions;
mod explicit;
mod mlp;
mod serial;

pub use crate::activation::Activation;
pub use constructions::{build_parallel_psi, tie_weights, ParallelPsiNet, TiedPsiNet};
pub use explicit::{explicit_grad_l2, explicit_grad_l3};
pub use mlp::{phi_forward, psi_forward, MlpParams};
pub use serial::{encode_f64, Network, NetworkFile, NetworkKind};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("input has length {got}, network expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("operation requires {expected}, network has output width {got}")]
    WrongMode { expected: &'static str, got: usize },
    #[error("requires {expected} weight layers, network has {got}")]
    WrongDepth { expected: usize, got: usize },
    #[error("direction vector must be nonzero")]
    ZeroDirection,
    #[error("invalid network: {0}")]
    Invalid(String),
    #[error("cannot parse network file: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, NetworkError>;
