//! Input gradients as graphs: backprop written out in forward primitives.
//!
//! [`Graph::input_gradient_graph`] extends a copy of the source graph with
//! nodes that compute the adjoint of an input slot. The result is an
//! ordinary forward computation — σ′ appears as an activation-derivative
//! node, matrix transposes as `matvec_t` — so the gradient can be embedded
//! inside a loss and differentiated once more with plain first-order
//! reverse mode. That second differentiation consumes σ″; a third level
//! would need σ‴, which is not registered, and the corresponding
//! materialization is refused up front.

use super::graph::{Graph, GraphError, NodeId, Prim, Result};
use super::params::ParamVector;

impl Graph {
    /// Builds a graph whose output is ∇ of this graph's scalar output with
    /// respect to input slot `slot`. Input slots and parameter layout carry
    /// over unchanged.
    pub fn input_gradient_graph(&self, slot: usize) -> Result<Graph> {
        let out = self.output()?;
        if self.nodes[out].len != 1 {
            return Err(GraphError::NonScalarOutput {
                len: self.nodes[out].len,
            });
        }
        assert!(slot < self.slots.len(), "slot {slot} out of range");

        let mut g = self.clone();
        let n = self.nodes.len();
        // adj[i] = node in `g` holding node i's adjoint, once seeded.
        let mut adj: Vec<Option<NodeId>> = vec![None; n];
        adj[out] = Some(g.scalar_const(1.0));

        for i in (0..n).rev() {
            let Some(abar) = adj[i] else { continue };
            // Clone the primitive to release the borrow on g.nodes.
            let prim = g.nodes[i].prim.clone();
            match prim {
                Prim::Input { .. } | Prim::Const { .. } | Prim::ParamVec { .. } => {}
                Prim::MatVec { layer, v } => {
                    let c = g.matvec_t(layer, abar)?;
                    accumulate(&mut g, &mut adj, v, c)?;
                }
                Prim::MatVecT { layer, v } => {
                    let c = g.matvec(layer, abar)?;
                    accumulate(&mut g, &mut adj, v, c)?;
                }
                Prim::Act { f, order, v } => {
                    // d/dx σ⁽ᵏ⁾(x) = σ⁽ᵏ⁺¹⁾(x); needs the next derivative as
                    // a forward primitive. Fails here, at build time, when
                    // that derivative is not registered.
                    let d = g.act_order(f, order + 1, v)?;
                    let c = g.mul(d, abar)?;
                    accumulate(&mut g, &mut adj, v, c)?;
                }
                Prim::Add { a, b } => {
                    accumulate(&mut g, &mut adj, a, abar)?;
                    accumulate(&mut g, &mut adj, b, abar)?;
                }
                Prim::Sub { a, b } => {
                    accumulate(&mut g, &mut adj, a, abar)?;
                    let nb = g.scale(-1.0, abar)?;
                    accumulate(&mut g, &mut adj, b, nb)?;
                }
                Prim::Mul { a, b } => {
                    let ca = g.mul(b, abar)?;
                    accumulate(&mut g, &mut adj, a, ca)?;
                    let cb = g.mul(a, abar)?;
                    accumulate(&mut g, &mut adj, b, cb)?;
                }
                Prim::VecScale { v, s } => {
                    let cv = g.vec_scale(abar, s)?;
                    accumulate(&mut g, &mut adj, v, cv)?;
                    let cs = g.dot(v, abar)?;
                    accumulate(&mut g, &mut adj, s, cs)?;
                }
                Prim::Scale { c, v } => {
                    let cv = g.scale(c, abar)?;
                    accumulate(&mut g, &mut adj, v, cv)?;
                }
                Prim::Dot { a, b } => {
                    let ca = g.vec_scale(b, abar)?;
                    accumulate(&mut g, &mut adj, a, ca)?;
                    let cb = g.vec_scale(a, abar)?;
                    accumulate(&mut g, &mut adj, b, cb)?;
                }
                Prim::SumSquares { v } => {
                    let sv = g.vec_scale(v, abar)?;
                    let c = g.scale(2.0, sv)?;
                    accumulate(&mut g, &mut adj, v, c)?;
                }
                Prim::Exp { v } => {
                    // i is the exp node itself: d exp = exp, reuse it.
                    let c = g.mul(i, abar)?;
                    accumulate(&mut g, &mut adj, v, c)?;
                }
                Prim::Ln { v } => {
                    let r = g.recip(v)?;
                    let c = g.mul(r, abar)?;
                    accumulate(&mut g, &mut adj, v, c)?;
                }
                Prim::Recip { v } => {
                    let yy = g.mul(i, i)?;
                    let c = g.mul(yy, abar)?;
                    let neg = g.scale(-1.0, c)?;
                    accumulate(&mut g, &mut adj, v, neg)?;
                }
            }
        }

        let slot_node = self.slots[slot].node;
        let grad_node = match adj[slot_node] {
            Some(id) => id,
            // Output does not depend on this input: gradient is zero.
            None => g.constant(vec![0.0; self.slots[slot].dim]),
        };
        g.output = Some(grad_node);
        Ok(g)
    }

    /// Convenience for single-input scalar graphs: returns ∇ₓ output at
    /// (x, params) together with the graph that computes it.
    ///
    /// The returned vector IS an evaluation of the returned graph, so
    /// re-evaluating the graph at the same point reproduces it bit for bit.
    pub fn grad_input(&self, x: &[f64], params: &ParamVector) -> Result<(Vec<f64>, Graph)> {
        if self.slots.len() != 1 {
            return Err(GraphError::NotSingleInput {
                slots: self.slots.len(),
            });
        }
        let ggraph = self.input_gradient_graph(0)?;
        let grad = ggraph.eval(&[x], params)?;
        Ok((grad, ggraph))
    }
}

fn accumulate(
    g: &mut Graph,
    adj: &mut [Option<NodeId>],
    target: NodeId,
    contrib: NodeId,
) -> Result<()> {
    adj[target] = Some(match adj[target] {
        None => contrib,
        Some(prev) => g.add(prev, contrib)?,
    });
    Ok(())
}
