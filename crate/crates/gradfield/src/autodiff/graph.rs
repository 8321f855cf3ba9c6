//! Expression DAG over vector-valued nodes.
//!
//! A [`Graph`] is an append-only arena of primitive operations. Node operands
//! always precede the node itself, so a single left-to-right pass evaluates
//! the whole graph and a right-to-left pass propagates adjoints. Nodes carry
//! their (static) output length; all shape checking happens while building.
//!
//! Values are plain `Vec<f64>`; scalars are length-1 vectors. Parameters are
//! not stored in the graph — nodes reference layers of a [`ParamVector`]
//! supplied at evaluation time, so one graph serves an entire training run.

use thiserror::Error;

use super::params::{ParamLayout, ParamVector};
use crate::activation::Activation;

pub type NodeId = usize;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("node {node} ({op}): {detail}")]
    Shape {
        op: &'static str,
        node: usize,
        detail: String,
    },
    #[error("unknown parameter layer {layer} (layout has {layers})")]
    UnknownLayer { layer: usize, layers: usize },
    #[error("graph output is not set")]
    OutputNotSet,
    #[error("operation requires a scalar output, got length {len}")]
    NonScalarOutput { len: usize },
    #[error("input slot {slot} ('{name}') expects length {expected}, got {got}")]
    InputDimension {
        slot: usize,
        name: String,
        expected: usize,
        got: usize,
    },
    #[error("expected {expected} input slots, got {got}")]
    InputCount { expected: usize, got: usize },
    #[error("parameter layout mismatch: graph expects {expected} values, got {got}")]
    ParamLayoutMismatch { expected: usize, got: usize },
    #[error(
        "activation '{activation}' has no registered derivative of order {order} \
         (node {node}); the graph cannot be differentiated further"
    )]
    DerivativeUnavailable {
        activation: &'static str,
        order: u8,
        node: usize,
    },
    #[error("graph has {slots} input slots; expected exactly one")]
    NotSingleInput { slots: usize },
}

pub type Result<T> = std::result::Result<T, GraphError>;

/// Primitive operations. `Act { order }` evaluates the `order`-th derivative
/// of the activation elementwise (0 = σ, 1 = σ′, 2 = σ″).
#[derive(Debug, Clone)]
pub(crate) enum Prim {
    Input { slot: usize },
    Const { values: Vec<f64> },
    ParamVec { layer: usize },
    MatVec { layer: usize, v: NodeId },
    MatVecT { layer: usize, v: NodeId },
    Act { f: Activation, order: u8, v: NodeId },
    Add { a: NodeId, b: NodeId },
    Sub { a: NodeId, b: NodeId },
    Mul { a: NodeId, b: NodeId },
    VecScale { v: NodeId, s: NodeId },
    Scale { c: f64, v: NodeId },
    Dot { a: NodeId, b: NodeId },
    SumSquares { v: NodeId },
    Exp { v: NodeId },
    Ln { v: NodeId },
    Recip { v: NodeId },
}

#[derive(Debug, Clone)]
pub(crate) struct Node {
    pub prim: Prim,
    pub len: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct InputSlot {
    pub name: String,
    pub dim: usize,
    pub node: NodeId,
}

/// Immutable-after-construction expression graph.
#[derive(Debug, Clone)]
pub struct Graph {
    pub(crate) nodes: Vec<Node>,
    pub(crate) slots: Vec<InputSlot>,
    pub(crate) layout: ParamLayout,
    pub(crate) output: Option<NodeId>,
}

impl Graph {
    pub fn new(layout: ParamLayout) -> Self {
        Graph {
            nodes: Vec::new(),
            slots: Vec::new(),
            layout,
            output: None,
        }
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_slots(&self) -> usize {
        self.slots.len()
    }

    pub fn slot_dim(&self, slot: usize) -> usize {
        self.slots[slot].dim
    }

    pub fn slot_name(&self, slot: usize) -> &str {
        &self.slots[slot].name
    }

    pub fn slot_node(&self, slot: usize) -> NodeId {
        self.slots[slot].node
    }

    pub fn node_len(&self, id: NodeId) -> usize {
        self.nodes[id].len
    }

    pub fn output(&self) -> Result<NodeId> {
        self.output.ok_or(GraphError::OutputNotSet)
    }

    pub fn output_len(&self) -> Result<usize> {
        Ok(self.nodes[self.output()?].len)
    }

    pub fn set_output(&mut self, id: NodeId) -> Result<()> {
        self.check_node(id, "set_output")?;
        self.output = Some(id);
        Ok(())
    }

    /// Highest activation-derivative order appearing anywhere in the graph.
    pub fn max_act_order(&self) -> u8 {
        self.nodes
            .iter()
            .filter_map(|n| match n.prim {
                Prim::Act { order, .. } => Some(order),
                _ => None,
            })
            .max()
            .unwrap_or(0)
    }

    /// Checks that a reverse sweep over this graph is possible: every
    /// activation node of order k needs the (k+1)-th derivative registered.
    ///
    /// Loss builders call this when a gradient sub-graph is embedded, so a
    /// missing higher derivative surfaces when the loss graph is built, not
    /// when training later tries to differentiate it.
    pub fn backward_capable(&self) -> Result<()> {
        for (i, n) in self.nodes.iter().enumerate() {
            if let Prim::Act { f, order, .. } = n.prim {
                if !f.derivative_available(order + 1) {
                    return Err(GraphError::DerivativeUnavailable {
                        activation: f.name(),
                        order: order + 1,
                        node: i,
                    });
                }
            }
        }
        Ok(())
    }

    // ── builder ──────────────────────────────────────────────────────

    fn check_node(&self, id: NodeId, op: &'static str) -> Result<()> {
        if id >= self.nodes.len() {
            return Err(GraphError::Shape {
                op,
                node: id,
                detail: format!("references node {id}, graph has {}", self.nodes.len()),
            });
        }
        Ok(())
    }

    fn check_layer(&self, layer: usize) -> Result<()> {
        if layer >= self.layout.num_layers() {
            return Err(GraphError::UnknownLayer {
                layer,
                layers: self.layout.num_layers(),
            });
        }
        Ok(())
    }

    fn push(&mut self, prim: Prim, len: usize) -> NodeId {
        let id = self.nodes.len();
        self.nodes.push(Node { prim, len });
        id
    }

    /// Declares a new input slot of dimension `dim` and returns its node.
    pub fn input(&mut self, name: &str, dim: usize) -> NodeId {
        let slot = self.slots.len();
        let node = self.push(Prim::Input { slot }, dim);
        self.slots.push(InputSlot {
            name: name.to_string(),
            dim,
            node,
        });
        node
    }

    pub fn constant(&mut self, values: Vec<f64>) -> NodeId {
        let len = values.len();
        self.push(Prim::Const { values }, len)
    }

    pub fn scalar_const(&mut self, v: f64) -> NodeId {
        self.constant(vec![v])
    }

    /// Parameter layer flattened row-major into a vector node.
    pub fn param_vec(&mut self, layer: usize) -> Result<NodeId> {
        self.check_layer(layer)?;
        let (r, c) = self.layout.shape(layer);
        Ok(self.push(Prim::ParamVec { layer }, r * c))
    }

    pub fn matvec(&mut self, layer: usize, v: NodeId) -> Result<NodeId> {
        self.check_layer(layer)?;
        self.check_node(v, "matvec")?;
        let (r, c) = self.layout.shape(layer);
        let vl = self.nodes[v].len;
        if vl != c {
            return Err(GraphError::Shape {
                op: "matvec",
                node: self.nodes.len(),
                detail: format!("layer {layer} is {r}x{c}, operand has length {vl}"),
            });
        }
        Ok(self.push(Prim::MatVec { layer, v }, r))
    }

    pub fn matvec_t(&mut self, layer: usize, v: NodeId) -> Result<NodeId> {
        self.check_layer(layer)?;
        self.check_node(v, "matvec_t")?;
        let (r, c) = self.layout.shape(layer);
        let vl = self.nodes[v].len;
        if vl != r {
            return Err(GraphError::Shape {
                op: "matvec_t",
                node: self.nodes.len(),
                detail: format!("layer {layer} is {r}x{c} (transposed), operand has length {vl}"),
            });
        }
        Ok(self.push(Prim::MatVecT { layer, v }, c))
    }

    pub fn act(&mut self, f: Activation, v: NodeId) -> Result<NodeId> {
        self.act_order(f, 0, v)
    }

    pub(crate) fn act_order(&mut self, f: Activation, order: u8, v: NodeId) -> Result<NodeId> {
        self.check_node(v, "act")?;
        if !f.derivative_available(order) {
            return Err(GraphError::DerivativeUnavailable {
                activation: f.name(),
                order,
                node: self.nodes.len(),
            });
        }
        let len = self.nodes[v].len;
        Ok(self.push(Prim::Act { f, order, v }, len))
    }

    fn binary_same_len(
        &mut self,
        op: &'static str,
        a: NodeId,
        b: NodeId,
        make: impl FnOnce(NodeId, NodeId) -> Prim,
    ) -> Result<NodeId> {
        self.check_node(a, op)?;
        self.check_node(b, op)?;
        let (la, lb) = (self.nodes[a].len, self.nodes[b].len);
        if la != lb {
            return Err(GraphError::Shape {
                op,
                node: self.nodes.len(),
                detail: format!("operand lengths differ: {la} vs {lb}"),
            });
        }
        Ok(self.push(make(a, b), la))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary_same_len("add", a, b, |a, b| Prim::Add { a, b })
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary_same_len("sub", a, b, |a, b| Prim::Sub { a, b })
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary_same_len("mul", a, b, |a, b| Prim::Mul { a, b })
    }

    /// Vector times scalar node.
    pub fn vec_scale(&mut self, v: NodeId, s: NodeId) -> Result<NodeId> {
        self.check_node(v, "vec_scale")?;
        self.check_node(s, "vec_scale")?;
        if self.nodes[s].len != 1 {
            return Err(GraphError::Shape {
                op: "vec_scale",
                node: self.nodes.len(),
                detail: format!(
                    "scale operand must be scalar, has length {}",
                    self.nodes[s].len
                ),
            });
        }
        let len = self.nodes[v].len;
        Ok(self.push(Prim::VecScale { v, s }, len))
    }

    /// Vector times compile-time constant.
    pub fn scale(&mut self, c: f64, v: NodeId) -> Result<NodeId> {
        self.check_node(v, "scale")?;
        let len = self.nodes[v].len;
        Ok(self.push(Prim::Scale { c, v }, len))
    }

    pub fn dot(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.check_node(a, "dot")?;
        self.check_node(b, "dot")?;
        let (la, lb) = (self.nodes[a].len, self.nodes[b].len);
        if la != lb {
            return Err(GraphError::Shape {
                op: "dot",
                node: self.nodes.len(),
                detail: format!("operand lengths differ: {la} vs {lb}"),
            });
        }
        Ok(self.push(Prim::Dot { a, b }, 1))
    }

    pub fn sum_squares(&mut self, v: NodeId) -> Result<NodeId> {
        self.check_node(v, "sum_squares")?;
        Ok(self.push(Prim::SumSquares { v }, 1))
    }

    pub fn exp(&mut self, v: NodeId) -> Result<NodeId> {
        self.check_node(v, "exp")?;
        let len = self.nodes[v].len;
        Ok(self.push(Prim::Exp { v }, len))
    }

    pub fn ln(&mut self, v: NodeId) -> Result<NodeId> {
        self.check_node(v, "ln")?;
        let len = self.nodes[v].len;
        Ok(self.push(Prim::Ln { v }, len))
    }

    pub fn recip(&mut self, v: NodeId) -> Result<NodeId> {
        self.check_node(v, "recip")?;
        let len = self.nodes[v].len;
        Ok(self.push(Prim::Recip { v }, len))
    }

    // ── evaluation ───────────────────────────────────────────────────

    pub(crate) fn check_eval_args(&self, inputs: &[&[f64]], params: &ParamVector) -> Result<()> {
        if inputs.len() != self.slots.len() {
            return Err(GraphError::InputCount {
                expected: self.slots.len(),
                got: inputs.len(),
            });
        }
        for (i, slot) in self.slots.iter().enumerate() {
            if inputs[i].len() != slot.dim {
                return Err(GraphError::InputDimension {
                    slot: i,
                    name: slot.name.clone(),
                    expected: slot.dim,
                    got: inputs[i].len(),
                });
            }
        }
        if params.layout() != &self.layout {
            return Err(GraphError::ParamLayoutMismatch {
                expected: self.layout.len(),
                got: params.len(),
            });
        }
        Ok(())
    }

    /// Forward pass into the workspace; all node values become available.
    pub(crate) fn forward(
        &self,
        ws: &mut Workspace,
        inputs: &[&[f64]],
        params: &ParamVector,
    ) -> Result<()> {
        self.check_eval_args(inputs, params)?;
        ws.ensure(self);
        for (i, node) in self.nodes.iter().enumerate() {
            // Take the destination buffer out so operand values can be read.
            let mut out = std::mem::take(&mut ws.values[i]);
            match &node.prim {
                Prim::Input { slot } => out.copy_from_slice(inputs[*slot]),
                Prim::Const { values } => out.copy_from_slice(values),
                Prim::ParamVec { layer } => out.copy_from_slice(params.layer(*layer)),
                Prim::MatVec { layer, v } => {
                    let (r, c) = self.layout.shape(*layer);
                    let w = params.layer(*layer);
                    let x = &ws.values[*v];
                    for row in 0..r {
                        let wr = &w[row * c..(row + 1) * c];
                        let mut acc = 0.0;
                        for (a, b) in wr.iter().zip(x.iter()) {
                            acc += a * b;
                        }
                        out[row] = acc;
                    }
                }
                Prim::MatVecT { layer, v } => {
                    let (r, c) = self.layout.shape(*layer);
                    let w = params.layer(*layer);
                    let x = &ws.values[*v];
                    out.fill(0.0);
                    for row in 0..r {
                        let xr = x[row];
                        let wr = &w[row * c..(row + 1) * c];
                        for (o, a) in out.iter_mut().zip(wr.iter()) {
                            *o += a * xr;
                        }
                    }
                }
                Prim::Act { f, order, v } => {
                    let x = &ws.values[*v];
                    match order {
                        0 => {
                            for (o, &xi) in out.iter_mut().zip(x.iter()) {
                                *o = f.value(xi);
                            }
                        }
                        1 => {
                            for (o, &xi) in out.iter_mut().zip(x.iter()) {
                                *o = f.deriv(xi);
                            }
                        }
                        _ => {
                            for (o, &xi) in out.iter_mut().zip(x.iter()) {
                                *o = f.deriv2(xi);
                            }
                        }
                    }
                }
                Prim::Add { a, b } => {
                    let (xa, xb) = (&ws.values[*a], &ws.values[*b]);
                    for ((o, &u), &w) in out.iter_mut().zip(xa.iter()).zip(xb.iter()) {
                        *o = u + w;
                    }
                }
                Prim::Sub { a, b } => {
                    let (xa, xb) = (&ws.values[*a], &ws.values[*b]);
                    for ((o, &u), &w) in out.iter_mut().zip(xa.iter()).zip(xb.iter()) {
                        *o = u - w;
                    }
                }
                Prim::Mul { a, b } => {
                    let (xa, xb) = (&ws.values[*a], &ws.values[*b]);
                    for ((o, &u), &w) in out.iter_mut().zip(xa.iter()).zip(xb.iter()) {
                        *o = u * w;
                    }
                }
                Prim::VecScale { v, s } => {
                    let sv = ws.values[*s][0];
                    for (o, &u) in out.iter_mut().zip(ws.values[*v].iter()) {
                        *o = u * sv;
                    }
                }
                Prim::Scale { c, v } => {
                    for (o, &u) in out.iter_mut().zip(ws.values[*v].iter()) {
                        *o = u * c;
                    }
                }
                Prim::Dot { a, b } => {
                    let (xa, xb) = (&ws.values[*a], &ws.values[*b]);
                    let mut acc = 0.0;
                    for (&u, &w) in xa.iter().zip(xb.iter()) {
                        acc += u * w;
                    }
                    out[0] = acc;
                }
                Prim::SumSquares { v } => {
                    let x = &ws.values[*v];
                    let mut acc = 0.0;
                    for &u in x.iter() {
                        acc += u * u;
                    }
                    out[0] = acc;
                }
                Prim::Exp { v } => {
                    for (o, &u) in out.iter_mut().zip(ws.values[*v].iter()) {
                        *o = u.exp();
                    }
                }
                Prim::Ln { v } => {
                    for (o, &u) in out.iter_mut().zip(ws.values[*v].iter()) {
                        *o = u.ln();
                    }
                }
                Prim::Recip { v } => {
                    for (o, &u) in out.iter_mut().zip(ws.values[*v].iter()) {
                        *o = 1.0 / u;
                    }
                }
            }
            ws.values[i] = out;
        }
        Ok(())
    }

    /// Evaluates the graph and returns the output node's values.
    ///
    /// Pure: identical (inputs, params) give identical results. Allocates a
    /// fresh workspace per call; use [`Graph::eval_with`] in hot loops.
    pub fn eval(&self, inputs: &[&[f64]], params: &ParamVector) -> Result<Vec<f64>> {
        let mut ws = Workspace::new();
        self.eval_with(&mut ws, inputs, params).map(|v| v.to_vec())
    }

    /// Single-input convenience matching the common φ/ψ graph shape.
    pub fn eval1(&self, x: &[f64], params: &ParamVector) -> Result<Vec<f64>> {
        self.eval(&[x], params)
    }

    pub fn eval_with<'w>(
        &self,
        ws: &'w mut Workspace,
        inputs: &[&[f64]],
        params: &ParamVector,
    ) -> Result<&'w [f64]> {
        let out = self.output()?;
        self.forward(ws, inputs, params)?;
        Ok(&ws.values[out])
    }
}

/// Per-call scratch buffers for forward/backward sweeps.
///
/// A workspace adapts itself to whichever graph it is used with, so one can
/// be reused across calls and across graphs; graphs themselves stay immutable
/// and shareable between threads (each thread brings its own workspace).
#[derive(Debug, Default)]
pub struct Workspace {
    pub(crate) values: Vec<Vec<f64>>,
    pub(crate) adjoints: Vec<Vec<f64>>,
    pub(crate) param_grad: Vec<f64>,
    pub(crate) input_grads: Vec<Vec<f64>>,
}

impl Workspace {
    pub fn new() -> Self {
        Workspace::default()
    }

    pub(crate) fn ensure(&mut self, g: &Graph) {
        if self.values.len() != g.nodes.len()
            || self
                .values
                .iter()
                .zip(g.nodes.iter())
                .any(|(v, n)| v.len() != n.len)
        {
            self.values = g.nodes.iter().map(|n| vec![0.0; n.len]).collect();
        }
    }

    pub(crate) fn ensure_backward(&mut self, g: &Graph) {
        self.ensure(g);
        if self.adjoints.len() != g.nodes.len()
            || self
                .adjoints
                .iter()
                .zip(g.nodes.iter())
                .any(|(v, n)| v.len() != n.len)
        {
            self.adjoints = g.nodes.iter().map(|n| vec![0.0; n.len]).collect();
        } else {
            for a in &mut self.adjoints {
                a.fill(0.0);
            }
        }
        self.param_grad.resize(g.layout.len(), 0.0);
        self.param_grad.fill(0.0);
        if self.input_grads.len() != g.slots.len()
            || self
                .input_grads
                .iter()
                .zip(g.slots.iter())
                .any(|(v, s)| v.len() != s.dim)
        {
            self.input_grads = g.slots.iter().map(|s| vec![0.0; s.dim]).collect();
        } else {
            for v in &mut self.input_grads {
                v.fill(0.0);
            }
        }
    }

    pub fn param_grad(&self) -> &[f64] {
        &self.param_grad
    }

    pub fn input_grad(&self, slot: usize) -> &[f64] {
        &self.input_grads[slot]
    }
}
