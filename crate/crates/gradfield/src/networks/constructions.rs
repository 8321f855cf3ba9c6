//! The two families of vector-field networks with symmetric Jacobians.
//!
//! A field ψ is a gradient field only if ∂ⱼψᵢ = ∂ᵢψⱼ everywhere. For one
//! hidden layer the constraint is solved by tying each readout row to its
//! input row with a scalar; for more hidden layers the indexwise constraints
//! force every input row and every output column onto a single shared
//! direction. Both solutions are built here so the constraint can be
//! verified numerically rather than assumed.

use super::{NetworkError, Result};
use crate::activation::Activation;
use crate::autodiff::{Graph, ParamLayout, ParamVector};
use crate::linalg::{norm, Matrix};

/// One-hidden-layer field with tied readout: unit m reads out along its own
/// input row, scaled by `s[m]`. ψ(x) = Σₘ sₘ σ(⟨θ⁽⁰⁾ₘ, x⟩) θ⁽⁰⁾ₘ.
///
/// The output weights are never stored; they are `sₘ·θ⁽⁰⁾ₘ` by definition,
/// which makes the backward-path products match indexwise and the Jacobian
/// symmetric at every point.
#[derive(Debug, Clone, PartialEq)]
pub struct TiedPsiNet {
    pub theta0: Matrix,
    pub s: Vec<f64>,
    pub activation: Activation,
}

/// Ties readout weights to input weights; `theta0` is M×d, `s` has length M.
pub fn tie_weights(theta0: Matrix, s: Vec<f64>, activation: Activation) -> TiedPsiNet {
    assert_eq!(theta0.rows, s.len(), "one scale per hidden unit");
    TiedPsiNet {
        theta0,
        s,
        activation,
    }
}

impl TiedPsiNet {
    pub fn random(hidden: usize, dim: usize, activation: Activation, seed: u64) -> Self {
        use rand::Rng;
        use rand_distr::StandardNormal;
        let mut rng = crate::rng::stream_rng(seed, "tied-init", 0);
        let std = 1.0 / (dim as f64).sqrt();
        let data = (0..hidden * dim)
            .map(|_| std * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let s = (0..hidden)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        tie_weights(
            Matrix {
                rows: hidden,
                cols: dim,
                data,
            },
            s,
            activation,
        )
    }

    pub fn hidden(&self) -> usize {
        self.theta0.rows
    }

    pub fn input_dim(&self) -> usize {
        self.theta0.cols
    }

    /// The implied readout matrix: d×M with column m equal to sₘ·θ⁽⁰⁾ₘ.
    pub fn implied_output_weights(&self) -> Matrix {
        let (m, d) = (self.theta0.rows, self.theta0.cols);
        let mut out = Matrix::zeros(d, m);
        for unit in 0..m {
            for i in 0..d {
                out.set(i, unit, self.s[unit] * self.theta0.get(unit, i));
            }
        }
        out
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(NetworkError::DimensionMismatch {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        let m = self.hidden();
        let mut z = vec![0.0; m];
        self.theta0.matvec(x, &mut z);
        let mut out = vec![0.0; x.len()];
        for unit in 0..m {
            let w = self.s[unit] * self.activation.value(z[unit]);
            for (o, &t) in out.iter_mut().zip(self.theta0.row(unit).iter()) {
                *o += w * t;
            }
        }
        Ok(out)
    }

    pub fn param_layout(&self) -> ParamLayout {
        ParamLayout::new(&[(self.theta0.rows, self.theta0.cols), (self.s.len(), 1)])
    }

    pub fn to_params(&self) -> ParamVector {
        let s_mat = Matrix {
            rows: self.s.len(),
            cols: 1,
            data: self.s.clone(),
        };
        ParamVector::from_matrices(&[self.theta0.clone(), s_mat])
    }

    pub fn from_params(activation: Activation, params: &ParamVector) -> Result<Self> {
        let mats = params.to_matrices();
        if mats.len() != 2 || mats[1].cols != 1 || mats[1].rows != mats[0].rows {
            return Err(NetworkError::Invalid(
                "tied field expects layers [theta0 MxD, s Mx1]".into(),
            ));
        }
        Ok(TiedPsiNet {
            theta0: mats[0].clone(),
            s: mats[1].data.clone(),
            activation,
        })
    }

    /// ψ graph: x ↦ θ⁽⁰⁾ᵀ (s ⊙ σ(θ⁽⁰⁾x)). Both references resolve to the same
    /// parameter layer, so parameter gradients see both paths.
    pub fn graph(&self) -> (Graph, ParamVector) {
        let mut g = Graph::new(self.param_layout());
        let x = g.input("x", self.input_dim());
        let z = g.matvec(0, x).expect("theta0 applies to x");
        let a = g.act(self.activation, z).expect("act");
        let s = g.param_vec(1).expect("s layer");
        let sa = g.mul(a, s).expect("same length M");
        let out = g.matvec_t(0, sa).expect("transpose applies");
        g.set_output(out).expect("node exists");
        (g, self.to_params())
    }

    pub fn input_rows(&self) -> Vec<Vec<f64>> {
        (0..self.theta0.rows)
            .map(|r| self.theta0.row(r).to_vec())
            .collect()
    }

    pub fn output_cols(&self) -> Vec<Vec<f64>> {
        let out = self.implied_output_weights();
        (0..out.cols).map(|c| out.col(c)).collect()
    }
}

/// Deep field (L ≥ 3 weight layers) whose first-layer rows are `aₘ·u` and
/// last-layer columns are `bₙ·u` for one shared unit direction `u`. The whole
/// field is ψ(x) = u·g(⟨u,x⟩) for a scalar function g, so its Jacobian is
/// g′·uuᵀ: rank one and symmetric at every point. Inner layers are free.
#[derive(Debug, Clone, PartialEq)]
pub struct ParallelPsiNet {
    pub u: Vec<f64>,
    pub a: Vec<f64>,
    pub inner: Vec<Matrix>,
    pub b: Vec<f64>,
    pub activation: Activation,
}

/// Builds the shared-direction field. `u` is normalized here; a global scale
/// on `u` is redundant with `a` and `b`, and normalizing makes the stored
/// direction unique.
pub fn build_parallel_psi(
    u: &[f64],
    a: Vec<f64>,
    inner: Vec<Matrix>,
    b: Vec<f64>,
    activation: Activation,
) -> Result<ParallelPsiNet> {
    let n = norm(u);
    if n.is_nan() || n <= 0.0 || !n.is_finite() {
        return Err(NetworkError::ZeroDirection);
    }
    let unit: Vec<f64> = u.iter().map(|v| v / n).collect();
    let net = ParallelPsiNet {
        u: unit,
        a,
        inner,
        b,
        activation,
    };
    net.validate()?;
    Ok(net)
}

impl ParallelPsiNet {
    pub fn random(
        dim: usize,
        hidden: usize,
        depth: usize,
        activation: Activation,
        seed: u64,
    ) -> Result<Self> {
        use rand::Rng;
        use rand_distr::StandardNormal;
        assert!(depth >= 3, "shared-direction construction targets L >= 3");
        let mut rng = crate::rng::stream_rng(seed, "parallel-init", 0);
        let u: Vec<f64> = (0..dim)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        let a: Vec<f64> = (0..hidden)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        let inner: Vec<Matrix> = (0..depth - 2)
            .map(|_| {
                let std = 1.0 / (hidden as f64).sqrt();
                let data = (0..hidden * hidden)
                    .map(|_| std * rng.sample::<f64, _>(StandardNormal))
                    .collect();
                Matrix {
                    rows: hidden,
                    cols: hidden,
                    data,
                }
            })
            .collect();
        let b: Vec<f64> = (0..hidden)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        build_parallel_psi(&u, a, inner, b, activation)
    }

    pub fn validate(&self) -> Result<()> {
        let mut width = self.a.len();
        for (l, w) in self.inner.iter().enumerate() {
            if w.cols != width {
                return Err(NetworkError::Invalid(format!(
                    "inner layer {l} expects width {width}, is {}x{}",
                    w.rows, w.cols
                )));
            }
            width = w.rows;
        }
        if self.b.len() != width {
            return Err(NetworkError::Invalid(format!(
                "readout scales have length {}, last hidden width is {width}",
                self.b.len()
            )));
        }
        if (norm(&self.u) - 1.0).abs() > 1e-9 {
            return Err(NetworkError::Invalid("direction is not unit length".into()));
        }
        Ok(())
    }

    /// Weight layers L (input scales + inner + readout scales).
    pub fn depth(&self) -> usize {
        self.inner.len() + 2
    }

    pub fn input_dim(&self) -> usize {
        self.u.len()
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(NetworkError::DimensionMismatch {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        let t = crate::linalg::dot(&self.u, x);
        let mut h: Vec<f64> = self
            .a
            .iter()
            .map(|&am| self.activation.value(am * t))
            .collect();
        for w in &self.inner {
            let mut z = vec![0.0; w.rows];
            w.matvec(&h, &mut z);
            for v in z.iter_mut() {
                *v = self.activation.value(*v);
            }
            h = z;
        }
        let s = crate::linalg::dot(&self.b, &h);
        Ok(self.u.iter().map(|&ui| ui * s).collect())
    }

    pub fn param_layout(&self) -> ParamLayout {
        let mut shapes = vec![(self.a.len(), 1)];
        shapes.extend(self.inner.iter().map(|w| (w.rows, w.cols)));
        shapes.push((self.b.len(), 1));
        ParamLayout::new(&shapes)
    }

    pub fn to_params(&self) -> ParamVector {
        let mut mats = vec![Matrix {
            rows: self.a.len(),
            cols: 1,
            data: self.a.clone(),
        }];
        mats.extend(self.inner.iter().cloned());
        mats.push(Matrix {
            rows: self.b.len(),
            cols: 1,
            data: self.b.clone(),
        });
        ParamVector::from_matrices(&mats)
    }

    /// ψ graph with u baked in as a constant; a, inner layers, and b are
    /// parameters.
    pub fn graph(&self) -> (Graph, ParamVector) {
        let mut g = Graph::new(self.param_layout());
        let x = g.input("x", self.input_dim());
        let u = g.constant(self.u.clone());
        let t = g.dot(u, x).expect("same dim");
        let a = g.param_vec(0).expect("a layer");
        let z0 = g.vec_scale(a, t).expect("scalar t");
        let mut h = g.act(self.activation, z0).expect("act");
        for l in 0..self.inner.len() {
            let z = g.matvec(l + 1, h).expect("chained widths");
            h = g.act(self.activation, z).expect("act");
        }
        let b = g.param_vec(self.inner.len() + 1).expect("b layer");
        let s = g.dot(b, h).expect("same width");
        let out = g.vec_scale(u, s).expect("scalar s");
        g.set_output(out).expect("node exists");
        (g, self.to_params())
    }

    /// First-layer weight vectors aₘ·u.
    pub fn input_rows(&self) -> Vec<Vec<f64>> {
        self.a
            .iter()
            .map(|&am| self.u.iter().map(|&ui| am * ui).collect())
            .collect()
    }

    /// Readout weight vectors bₙ·u.
    pub fn output_cols(&self) -> Vec<Vec<f64>> {
        self.b
            .iter()
            .map(|&bn| self.u.iter().map(|&ui| bn * ui).collect())
            .collect()
    }

    /// The implied tying matrix entries S₍ₙₘ₎ = bₙ/aₘ relating readout and
    /// input rows, defined where aₘ ≠ 0.
    pub fn tying_ratio(&self, n: usize, m: usize) -> Option<f64> {
        if self.a[m] == 0.0 {
            None
        } else {
            Some(self.b[n] / self.a[m])
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnostics::{
        rank_estimate, standard_normal_points, symmetry_residual, GraphField, JacobianMethod,
    };

    /// Test-local 4th-order finite-difference Jacobian. The plain central
    /// stencil's O(h²) truncation sits right at the 1e-10 bounds checked
    /// below; the five-point stencil leaves an order-of-magnitude margin
    /// while staying independent of the reverse-mode path.
    fn jacobian_fd4(f: impl Fn(&[f64]) -> Vec<f64>, out_dim: usize, x: &[f64]) -> Matrix {
        let h = 3e-4;
        let d = x.len();
        let mut jac = Matrix::zeros(out_dim, d);
        let mut xp = x.to_vec();
        for j in 0..d {
            let mut stencil = Vec::new();
            for s in [-2.0, -1.0, 1.0, 2.0] {
                xp[j] = x[j] + s * h;
                stencil.push(f(&xp));
            }
            xp[j] = x[j];
            for i in 0..out_dim {
                let v = (stencil[0][i] - 8.0 * stencil[1][i] + 8.0 * stencil[2][i] - stencil[3][i])
                    / (12.0 * h);
                jac.set(i, j, v);
            }
        }
        jac
    }

    #[test]
    fn single_unit_tied_field() {
        let act = Activation::default_silu();
        let net = tie_weights(Matrix::from_rows(&[vec![1.0, 0.0]]), vec![2.0], act);
        let out = net.implied_output_weights();
        assert_eq!((out.rows, out.cols), (2, 1));
        assert_eq!(out.col(0), vec![2.0, 0.0]);

        // ψ(x) = 2σ(x₁)e₁, so J = 2σ′(x₁)·e₁e₁ᵀ
        for x in standard_normal_points(5, 2, 3) {
            let (g, p) = net.graph();
            let field = GraphField::new(g, p);
            let j = field.jacobian(&x, JacobianMethod::Autodiff).unwrap();
            let expected = 2.0 * act.deriv(x[0]);
            assert!((j.get(0, 0) - expected).abs() < 1e-14);
            for (r, c) in [(0, 1), (1, 0), (1, 1)] {
                assert_eq!(j.get(r, c), 0.0);
            }
        }
    }

    #[test]
    fn zero_scales_give_zero_field() {
        let net = tie_weights(
            Matrix::from_rows(&[vec![1.0, 2.0], vec![-0.5, 0.3]]),
            vec![0.0, 0.0],
            Activation::Softplus,
        );
        for x in standard_normal_points(5, 2, 4) {
            assert!(net.forward(&x).unwrap().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn random_tied_field_has_symmetric_fd_jacobian() {
        let net = TiedPsiNet::random(8, 4, Activation::default_silu(), 21);
        for x in standard_normal_points(20, 4, 22) {
            let j = jacobian_fd4(|p| net.forward(p).unwrap(), 4, &x);
            let r = symmetry_residual(&j).unwrap();
            assert!(r < 1e-10, "fd residual {r}");
        }
    }

    #[test]
    fn tied_graph_matches_direct_forward() {
        let net = TiedPsiNet::random(6, 3, Activation::Tanh, 31);
        let (g, p) = net.graph();
        for x in standard_normal_points(10, 3, 32) {
            let direct = net.forward(&x).unwrap();
            let via_graph = g.eval(&[&x], &p).unwrap();
            for (a, b) in direct.iter().zip(via_graph.iter()) {
                assert!((a - b).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn zero_readout_scales_give_zero_parallel_field() {
        let net = build_parallel_psi(
            &[1.0, 1.0, 1.0],
            vec![0.5, -0.2],
            vec![Matrix::identity(2)],
            vec![0.0, 0.0],
            Activation::default_silu(),
        )
        .unwrap();
        for x in standard_normal_points(5, 3, 5) {
            assert!(net.forward(&x).unwrap().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn shared_direction_field_is_rank_one_symmetric() {
        let net = build_parallel_psi(
            &[0.0, 1.0, 0.0],
            standard_normal_points(1, 5, 41).remove(0),
            vec![Matrix {
                rows: 5,
                cols: 5,
                data: standard_normal_points(5, 5, 42).concat(),
            }],
            standard_normal_points(1, 5, 43).remove(0),
            Activation::default_silu(),
        )
        .unwrap();
        assert_eq!(net.depth(), 3);
        // Independent route: numerical Jacobian + singular values.
        for x in standard_normal_points(20, 3, 44) {
            let j = jacobian_fd4(|p| net.forward(p).unwrap(), 3, &x);
            assert!(symmetry_residual(&j).unwrap() < 1e-10);
            assert!(rank_estimate(&j, 1e-8) <= 1);
        }
        // And the reverse-mode route agrees with the construction too.
        let (g, p) = net.graph();
        let field = GraphField::new(g, p);
        for x in standard_normal_points(20, 3, 45) {
            let j = field.jacobian(&x, JacobianMethod::Autodiff).unwrap();
            assert!(symmetry_residual(&j).unwrap() < 1e-10);
        }
    }

    #[test]
    fn one_dimensional_inputs_are_trivially_symmetric() {
        let net = build_parallel_psi(
            &[1.0],
            vec![0.7, -1.1],
            vec![Matrix::identity(2)],
            vec![0.4, 0.9],
            Activation::Tanh,
        )
        .unwrap();
        let (g, p) = net.graph();
        let field = GraphField::new(g, p);
        let report = crate::diagnostics::SymmetryReport::for_field(
            &field,
            &standard_normal_points(5, 1, 6),
            JacobianMethod::Autodiff,
            false,
        )
        .unwrap();
        assert!(report.trivially_symmetric);
        assert_eq!(report.max_residual, 0.0);
    }

    #[test]
    fn direction_is_normalized_and_tying_ratio_consistent() {
        let net = build_parallel_psi(
            &[3.0, 4.0],
            vec![2.0, -1.0],
            vec![],
            vec![0.5, 1.5],
            Activation::Tanh,
        )
        .unwrap();
        assert!((crate::linalg::norm(&net.u) - 1.0).abs() < 1e-15);
        // θ⁽ᴸ⁻¹⁾ₙ = S₍ₙₘ₎ · θ⁽⁰⁾ₘ for every pair with aₘ ≠ 0
        let rows = net.input_rows();
        let cols = net.output_cols();
        for n in 0..2 {
            for m in 0..2 {
                let s = net.tying_ratio(n, m).unwrap();
                for i in 0..2 {
                    assert!((cols[n][i] - s * rows[m][i]).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn zero_direction_is_rejected() {
        let err = build_parallel_psi(&[0.0, 0.0], vec![1.0], vec![], vec![1.0], Activation::Tanh)
            .unwrap_err();
        assert!(matches!(err, NetworkError::ZeroDirection));
    }

    #[test]
    fn parallel_graph_matches_direct_forward() {
        let net = ParallelPsiNet::random(4, 6, 4, Activation::default_silu(), 51).unwrap();
        let (g, p) = net.graph();
        for x in standard_normal_points(10, 4, 52) {
            let direct = net.forward(&x).unwrap();
            let via_graph = g.eval(&[&x], &p).unwrap();
            for (a, b) in direct.iter().zip(via_graph.iter()) {
                assert!((a - b).abs() < 1e-15);
            }
        }
    }
}
