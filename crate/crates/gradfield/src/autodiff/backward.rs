//! Numeric reverse sweep: vector-Jacobian products over an evaluated graph.
//!
//! The sweep walks the arena right-to-left, scattering each node's adjoint to
//! its operands. Parameter adjoints accumulate into a flat gradient aligned
//! with the graph's [`ParamLayout`]; input adjoints accumulate per slot.

use super::graph::{Graph, GraphError, Prim, Result, Workspace};
use super::params::ParamVector;

impl Graph {
    /// Reverse sweep from the output node, seeded with `seed` (the adjoint of
    /// the output). `ws` must hold a forward pass of this exact graph.
    ///
    /// After the call, `ws.param_grad()` holds ∂(seedᵀ·output)/∂θ and
    /// `ws.input_grad(slot)` holds the corresponding input gradients.
    pub fn backward_with(
        &self,
        ws: &mut Workspace,
        seed: &[f64],
        params: &ParamVector,
    ) -> Result<()> {
        let out = self.output()?;
        self.backward_capable()?;
        if seed.len() != self.nodes[out].len {
            return Err(GraphError::Shape {
                op: "backward_seed",
                node: out,
                detail: format!(
                    "seed length {} != output length {}",
                    seed.len(),
                    self.nodes[out].len
                ),
            });
        }
        ws.ensure_backward(self);
        ws.adjoints[out].copy_from_slice(seed);

        for i in (0..self.nodes.len()).rev() {
            // Operands strictly precede node i, so taking adjoint i out lets
            // us mutate operand adjoints without aliasing.
            let abar = std::mem::take(&mut ws.adjoints[i]);
            match &self.nodes[i].prim {
                Prim::Input { slot } => {
                    for (g, &a) in ws.input_grads[*slot].iter_mut().zip(abar.iter()) {
                        *g += a;
                    }
                }
                Prim::Const { .. } => {}
                Prim::ParamVec { layer } => {
                    let o = self.layout.offset(*layer);
                    for (g, &a) in ws.param_grad[o..o + abar.len()].iter_mut().zip(abar.iter()) {
                        *g += a;
                    }
                }
                Prim::MatVec { layer, v } => {
                    // y = W x:  x̄ += Wᵀ ȳ,  W̄ += ȳ xᵀ
                    let (r, c) = self.layout.shape(*layer);
                    let w = params.layer(*layer);
                    let o = self.layout.offset(*layer);
                    let x = std::mem::take(&mut ws.values[*v]);
                    {
                        let xbar = &mut ws.adjoints[*v];
                        for row in 0..r {
                            let ar = abar[row];
                            let wr = &w[row * c..(row + 1) * c];
                            for (xb, wv) in xbar.iter_mut().zip(wr.iter()) {
                                *xb += wv * ar;
                            }
                        }
                    }
                    for row in 0..r {
                        let ar = abar[row];
                        let gr = &mut ws.param_grad[o + row * c..o + (row + 1) * c];
                        for (g, &xv) in gr.iter_mut().zip(x.iter()) {
                            *g += ar * xv;
                        }
                    }
                    ws.values[*v] = x;
                }
                Prim::MatVecT { layer, v } => {
                    // y = Wᵀ x:  x̄ += W ȳ,  W̄ += x ȳᵀ
                    let (r, c) = self.layout.shape(*layer);
                    let w = params.layer(*layer);
                    let o = self.layout.offset(*layer);
                    let x = std::mem::take(&mut ws.values[*v]);
                    {
                        let xbar = &mut ws.adjoints[*v];
                        for row in 0..r {
                            let wr = &w[row * c..(row + 1) * c];
                            let mut acc = 0.0;
                            for (wv, &a) in wr.iter().zip(abar.iter()) {
                                acc += wv * a;
                            }
                            xbar[row] += acc;
                        }
                    }
                    for row in 0..r {
                        let xr = x[row];
                        let gr = &mut ws.param_grad[o + row * c..o + (row + 1) * c];
                        for (g, &a) in gr.iter_mut().zip(abar.iter()) {
                            *g += xr * a;
                        }
                    }
                    ws.values[*v] = x;
                }
                Prim::Act { f, order, v } => {
                    // Adjoint needs the next derivative; backward_capable()
                    // guaranteed it is registered.
                    let x = std::mem::take(&mut ws.values[*v]);
                    let xbar = &mut ws.adjoints[*v];
                    match order {
                        0 => {
                            for ((xb, &xi), &a) in xbar.iter_mut().zip(x.iter()).zip(abar.iter()) {
                                *xb += f.deriv(xi) * a;
                            }
                        }
                        _ => {
                            for ((xb, &xi), &a) in xbar.iter_mut().zip(x.iter()).zip(abar.iter()) {
                                *xb += f.deriv2(xi) * a;
                            }
                        }
                    }
                    ws.values[*v] = x;
                }
                Prim::Add { a, b } => {
                    for (xb, &ad) in ws.adjoints[*a].iter_mut().zip(abar.iter()) {
                        *xb += ad;
                    }
                    for (xb, &ad) in ws.adjoints[*b].iter_mut().zip(abar.iter()) {
                        *xb += ad;
                    }
                }
                Prim::Sub { a, b } => {
                    for (xb, &ad) in ws.adjoints[*a].iter_mut().zip(abar.iter()) {
                        *xb += ad;
                    }
                    for (xb, &ad) in ws.adjoints[*b].iter_mut().zip(abar.iter()) {
                        *xb -= ad;
                    }
                }
                Prim::Mul { a, b } => {
                    if a == b {
                        // squared operand: d(x²) = 2x
                        let va = std::mem::take(&mut ws.values[*a]);
                        for ((xb, &u), &ad) in
                            ws.adjoints[*a].iter_mut().zip(va.iter()).zip(abar.iter())
                        {
                            *xb += 2.0 * u * ad;
                        }
                        ws.values[*a] = va;
                    } else {
                        let va = std::mem::take(&mut ws.values[*a]);
                        let vb = std::mem::take(&mut ws.values[*b]);
                        for ((xb, &w), &ad) in
                            ws.adjoints[*a].iter_mut().zip(vb.iter()).zip(abar.iter())
                        {
                            *xb += w * ad;
                        }
                        for ((xb, &u), &ad) in
                            ws.adjoints[*b].iter_mut().zip(va.iter()).zip(abar.iter())
                        {
                            *xb += u * ad;
                        }
                        ws.values[*a] = va;
                        ws.values[*b] = vb;
                    }
                }
                Prim::VecScale { v, s } => {
                    let sv = ws.values[*s][0];
                    let x = std::mem::take(&mut ws.values[*v]);
                    for (xb, &ad) in ws.adjoints[*v].iter_mut().zip(abar.iter()) {
                        *xb += sv * ad;
                    }
                    let mut acc = 0.0;
                    for (&u, &ad) in x.iter().zip(abar.iter()) {
                        acc += u * ad;
                    }
                    ws.adjoints[*s][0] += acc;
                    ws.values[*v] = x;
                }
                Prim::Scale { c, v } => {
                    for (xb, &ad) in ws.adjoints[*v].iter_mut().zip(abar.iter()) {
                        *xb += c * ad;
                    }
                }
                Prim::Dot { a, b } => {
                    let ad = abar[0];
                    if a == b {
                        let va = std::mem::take(&mut ws.values[*a]);
                        for (xb, &u) in ws.adjoints[*a].iter_mut().zip(va.iter()) {
                            *xb += 2.0 * ad * u;
                        }
                        ws.values[*a] = va;
                    } else {
                        let va = std::mem::take(&mut ws.values[*a]);
                        let vb = std::mem::take(&mut ws.values[*b]);
                        for (xb, &w) in ws.adjoints[*a].iter_mut().zip(vb.iter()) {
                            *xb += ad * w;
                        }
                        for (xb, &u) in ws.adjoints[*b].iter_mut().zip(va.iter()) {
                            *xb += ad * u;
                        }
                        ws.values[*a] = va;
                        ws.values[*b] = vb;
                    }
                }
                Prim::SumSquares { v } => {
                    let ad = abar[0];
                    let x = std::mem::take(&mut ws.values[*v]);
                    for (xb, &u) in ws.adjoints[*v].iter_mut().zip(x.iter()) {
                        *xb += 2.0 * ad * u;
                    }
                    ws.values[*v] = x;
                }
                Prim::Exp { v } => {
                    // ȳ·exp(x) = ȳ·y, reuse the stored output value
                    let y = std::mem::take(&mut ws.values[i]);
                    for ((xb, &yv), &ad) in
                        ws.adjoints[*v].iter_mut().zip(y.iter()).zip(abar.iter())
                    {
                        *xb += yv * ad;
                    }
                    ws.values[i] = y;
                }
                Prim::Ln { v } => {
                    let x = std::mem::take(&mut ws.values[*v]);
                    for ((xb, &xv), &ad) in
                        ws.adjoints[*v].iter_mut().zip(x.iter()).zip(abar.iter())
                    {
                        *xb += ad / xv;
                    }
                    ws.values[*v] = x;
                }
                Prim::Recip { v } => {
                    let y = std::mem::take(&mut ws.values[i]);
                    for ((xb, &yv), &ad) in
                        ws.adjoints[*v].iter_mut().zip(y.iter()).zip(abar.iter())
                    {
                        *xb -= yv * yv * ad;
                    }
                    ws.values[i] = y;
                }
            }
            ws.adjoints[i] = abar;
        }
        Ok(())
    }

    /// ∇_θ of a scalar-output graph at (inputs, params).
    ///
    /// Deterministic for fixed arguments. Graphs embedding an input-gradient
    /// sub-graph work as long as the embedded activations carry a registered
    /// second derivative; [`Graph::backward_capable`] enforces that.
    pub fn grad_params(&self, inputs: &[&[f64]], params: &ParamVector) -> Result<Vec<f64>> {
        let mut ws = Workspace::new();
        self.grad_params_with(&mut ws, inputs, params)?;
        Ok(ws.param_grad.clone())
    }

    /// Like [`Graph::grad_params`] but reusing a workspace; returns the
    /// forward (loss) value, with the gradient left in `ws.param_grad()`.
    pub fn grad_params_with(
        &self,
        ws: &mut Workspace,
        inputs: &[&[f64]],
        params: &ParamVector,
    ) -> Result<f64> {
        let out = self.output()?;
        if self.nodes[out].len != 1 {
            return Err(GraphError::NonScalarOutput {
                len: self.nodes[out].len,
            });
        }
        self.forward(ws, inputs, params)?;
        let value = ws.values[out][0];
        self.backward_with(ws, &[1.0], params)?;
        Ok(value)
    }

    /// Jacobian of the (vector) output with respect to input slot `slot`,
    /// by one reverse sweep per output component.
    pub fn jacobian_input_with(
        &self,
        ws: &mut Workspace,
        slot: usize,
        inputs: &[&[f64]],
        params: &ParamVector,
    ) -> Result<crate::linalg::Matrix> {
        let out = self.output()?;
        let out_len = self.nodes[out].len;
        let dim = self.slots[slot].dim;
        self.forward(ws, inputs, params)?;
        let mut jac = crate::linalg::Matrix::zeros(out_len, dim);
        let mut seed = vec![0.0; out_len];
        for i in 0..out_len {
            seed.fill(0.0);
            seed[i] = 1.0;
            self.backward_with(ws, &seed, params)?;
            jac.data[i * dim..(i + 1) * dim].copy_from_slice(&ws.input_grads[slot]);
        }
        Ok(jac)
    }
}
