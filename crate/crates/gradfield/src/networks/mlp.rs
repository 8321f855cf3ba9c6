//! Bias-free fully connected networks.

use rand::Rng;
use rand_distr::StandardNormal;

use super::{NetworkError, Result};
use crate::activation::Activation;
use crate::autodiff::{Graph, ParamLayout, ParamVector};
use crate::linalg::Matrix;
use crate::rng::stream_rng;

/// Layered weights θ⁽⁰⁾…θ⁽ᴸ⁻¹⁾ plus the activation. No bias terms anywhere;
/// input-derivative behaviour is unaffected by them and the constructions in
/// this crate rely on the layers being pure linear maps.
///
/// `widths = [d, h₁, …, h_{L−1}, out]`; layer l has shape `widths[l+1] × widths[l]`.
/// `out == 1` is φ mode (scalar potential), `out == d` is ψ mode (vector field).
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub widths: Vec<usize>,
    pub weights: Vec<Matrix>,
    pub activation: Activation,
}

impl MlpParams {
    /// Gaussian init, std 1/√fan-in, deterministic per seed.
    pub fn random(widths: &[usize], activation: Activation, seed: u64) -> Self {
        assert!(widths.len() >= 2, "need at least input and output widths");
        let mut rng = stream_rng(seed, "mlp-init", 0);
        let weights = widths
            .windows(2)
            .map(|w| {
                let (rows, cols) = (w[1], w[0]);
                let std = 1.0 / (cols as f64).sqrt();
                let data = (0..rows * cols)
                    .map(|_| std * rng.sample::<f64, _>(StandardNormal))
                    .collect();
                Matrix { rows, cols, data }
            })
            .collect();
        MlpParams {
            widths: widths.to_vec(),
            weights,
            activation,
        }
    }

    pub fn zeros(widths: &[usize], activation: Activation) -> Self {
        let weights = widths
            .windows(2)
            .map(|w| Matrix::zeros(w[1], w[0]))
            .collect();
        MlpParams {
            widths: widths.to_vec(),
            weights,
            activation,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.widths.len() < 2 || self.weights.len() != self.widths.len() - 1 {
            return Err(NetworkError::Invalid(format!(
                "widths {:?} do not chain with {} weight layers",
                self.widths,
                self.weights.len()
            )));
        }
        for (l, w) in self.weights.iter().enumerate() {
            if w.rows != self.widths[l + 1] || w.cols != self.widths[l] {
                return Err(NetworkError::Invalid(format!(
                    "layer {l} is {}x{}, widths require {}x{}",
                    w.rows,
                    w.cols,
                    self.widths[l + 1],
                    self.widths[l]
                )));
            }
        }
        self.activation.validate().map_err(NetworkError::Invalid)?;
        Ok(())
    }

    /// Number of weight layers L.
    pub fn depth(&self) -> usize {
        self.weights.len()
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().unwrap()
    }

    /// Forward pass; activation after every layer except the readout.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(NetworkError::DimensionMismatch {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        let mut h = x.to_vec();
        let last = self.weights.len() - 1;
        for (l, w) in self.weights.iter().enumerate() {
            let mut z = vec![0.0; w.rows];
            w.matvec(&h, &mut z);
            if l < last {
                for v in z.iter_mut() {
                    *v = self.activation.value(*v);
                }
            }
            h = z;
        }
        Ok(h)
    }

    pub fn param_layout(&self) -> ParamLayout {
        let shapes: Vec<(usize, usize)> = self.weights.iter().map(|w| (w.rows, w.cols)).collect();
        ParamLayout::new(&shapes)
    }

    pub fn to_params(&self) -> ParamVector {
        ParamVector::from_matrices(&self.weights)
    }

    pub fn from_params(
        widths: &[usize],
        activation: Activation,
        params: &ParamVector,
    ) -> Result<Self> {
        let net = MlpParams {
            widths: widths.to_vec(),
            weights: params.to_matrices(),
            activation,
        };
        net.validate()?;
        Ok(net)
    }

    /// Expression graph of the forward pass, with one input slot "x".
    pub fn graph(&self) -> (Graph, ParamVector) {
        let layout = self.param_layout();
        let mut g = Graph::new(layout);
        let mut h = g.input("x", self.input_dim());
        let last = self.weights.len() - 1;
        for l in 0..self.weights.len() {
            h = g.matvec(l, h).expect("validated shapes chain");
            if l < last {
                h = g.act(self.activation, h).expect("act on existing node");
            }
        }
        g.set_output(h).expect("node exists");
        (g, self.to_params())
    }

    /// Input weight vectors θ⁽⁰⁾ₘ (rows of the first layer).
    pub fn input_rows(&self) -> Vec<Vec<f64>> {
        let w0 = &self.weights[0];
        (0..w0.rows).map(|r| w0.row(r).to_vec()).collect()
    }

    /// Output weight vectors θ⁽ᴸ⁻¹⁾ₙ (columns of the last layer).
    pub fn output_cols(&self) -> Vec<Vec<f64>> {
        let wl = self.weights.last().unwrap();
        (0..wl.cols).map(|c| wl.col(c)).collect()
    }
}

/// φ(x) for a scalar-output network.
pub fn phi_forward(net: &MlpParams, x: &[f64]) -> Result<f64> {
    if net.output_dim() != 1 {
        return Err(NetworkError::WrongMode {
            expected: "scalar output (phi mode)",
            got: net.output_dim(),
        });
    }
    Ok(net.forward(x)?[0])
}

/// ψ(x) for a vector-output network.
pub fn psi_forward(net: &MlpParams, x: &[f64]) -> Result<Vec<f64>> {
    if net.output_dim() != net.input_dim() {
        return Err(NetworkError::WrongMode {
            expected: "output width d (psi mode)",
            got: net.output_dim(),
        });
    }
    net.forward(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnostics::standard_normal_points;

    #[test]
    fn zero_weights_with_odd_activation_give_zero() {
        let net = MlpParams::zeros(&[3, 5, 5, 1], Activation::Tanh);
        for x in standard_normal_points(5, 3, 1) {
            assert_eq!(phi_forward(&net, &x).unwrap(), 0.0);
        }
    }

    #[test]
    fn hand_computed_two_two_one() {
        // θ⁰ = [[1, 2], [-1, 0.5]], θ¹ = [[0.3, -0.7]], tanh
        let net = MlpParams {
            widths: vec![2, 2, 1],
            weights: vec![
                Matrix::from_rows(&[vec![1.0, 2.0], vec![-1.0, 0.5]]),
                Matrix::from_rows(&[vec![0.3, -0.7]]),
            ],
            activation: Activation::Tanh,
        };
        let got = phi_forward(&net, &[1.0, 1.0]).unwrap();
        let expected = 0.3 * 3.0_f64.tanh() - 0.7 * (-0.5_f64).tanh();
        assert!((got - expected).abs() < 1e-15);
    }

    #[test]
    fn hidden_unit_permutation_leaves_outputs_unchanged() {
        let net = MlpParams::random(&[3, 6, 3], Activation::default_silu(), 5);
        // Swap hidden units 1 and 4: rows of layer 0, columns of layer 1.
        let mut permuted = net.clone();
        for c in 0..3 {
            let a = permuted.weights[0].get(1, c);
            let b = permuted.weights[0].get(4, c);
            permuted.weights[0].set(1, c, b);
            permuted.weights[0].set(4, c, a);
        }
        for r in 0..3 {
            let a = permuted.weights[1].get(r, 1);
            let b = permuted.weights[1].get(r, 4);
            permuted.weights[1].set(r, 1, b);
            permuted.weights[1].set(r, 4, a);
        }
        for x in standard_normal_points(10, 3, 6) {
            let orig = psi_forward(&net, &x).unwrap();
            let perm = psi_forward(&permuted, &x).unwrap();
            for (a, b) in orig.iter().zip(perm.iter()) {
                assert!((a - b).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn zero_readout_gives_zero_field() {
        let mut net = MlpParams::random(&[4, 8, 8, 4], Activation::default_silu(), 2);
        net.weights[2] = Matrix::zeros(4, 8);
        for x in standard_normal_points(5, 4, 3) {
            assert!(psi_forward(&net, &x).unwrap().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn one_hidden_layer_field_matches_direct_summation() {
        let net = MlpParams::random(&[3, 7, 3], Activation::default_silu(), 9);
        let theta0 = &net.weights[0];
        let theta1 = &net.weights[1];
        for x in standard_normal_points(20, 3, 10) {
            let fast = psi_forward(&net, &x).unwrap();
            // ψᵢ = Σₘ θ¹ᵢₘ σ(⟨θ⁰ₘ, x⟩), written out indexwise
            for i in 0..3 {
                let mut acc = 0.0;
                for m in 0..7 {
                    let mut z = 0.0;
                    for j in 0..3 {
                        z += theta0.get(m, j) * x[j];
                    }
                    acc += theta1.get(i, m) * net.activation.value(z);
                }
                assert!((fast[i] - acc).abs() < 1e-13, "{} vs {acc}", fast[i]);
            }
        }
    }

    #[test]
    fn graph_route_matches_direct_forward() {
        let net = MlpParams::random(&[4, 9, 9, 4], Activation::Softplus, 12);
        let (g, p) = net.graph();
        for x in standard_normal_points(10, 4, 13) {
            let direct = net.forward(&x).unwrap();
            let via_graph = g.eval(&[&x], &p).unwrap();
            for (a, b) in direct.iter().zip(via_graph.iter()) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }

    #[test]
    fn mode_errors() {
        let psi_net = MlpParams::random(&[3, 4, 3], Activation::Tanh, 1);
        assert!(matches!(
            phi_forward(&psi_net, &[0.0; 3]),
            Err(NetworkError::WrongMode { .. })
        ));
        let phi_net = MlpParams::random(&[3, 4, 1], Activation::Tanh, 1);
        assert!(matches!(
            psi_forward(&phi_net, &[0.0; 3]),
            Err(NetworkError::WrongMode { .. })
        ));
        assert!(matches!(
            phi_forward(&phi_net, &[0.0; 2]),
            Err(NetworkError::DimensionMismatch {
                expected: 3,
                got: 2
            })
        ));
    }

    #[test]
    fn param_round_trip_is_exact() {
        let net = MlpParams::random(&[5, 6, 2, 5], Activation::default_silu(), 77);
        let params = net.to_params();
        let back = MlpParams::from_params(&net.widths, net.activation, &params).unwrap();
        assert_eq!(net, back);
    }
}
