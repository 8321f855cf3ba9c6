//! Expression graphs with reverse-mode differentiation.
//!
//! Two differentiation surfaces:
//!
//! * [`Graph::input_gradient_graph`] / [`Graph::grad_input`] turn the input
//!   gradient of a scalar graph into a *new forward graph* (backprop written
//!   out as primitives using σ′).
//! * [`Graph::grad_params`] / [`Graph::backward_with`] run a plain numeric
//!   reverse sweep over any scalar graph — including graphs that embed a
//!   materialized input gradient, which is where σ″ gets consumed.
//!
//! Keeping the numeric sweep strictly first-order while representing ∇ₓ as a
//! forward computation supports losses built on input gradients without a
//! higher-order tape.

mod backward;
mod graph;
mod materialize;
mod params;

pub use graph::{Graph, GraphError, NodeId, Result, Workspace};
pub use params::{ParamLayout, ParamVector};
