//! Closed-form input gradients of shallow potentials.
//!
//! For one hidden layer, ∇φ is itself an ordinary one-hidden-layer field:
//! swap σ for σ′ and tie the readout rows to the input rows. For two hidden
//! layers the symbolic gradient multiplies two σ′ factors that share the
//! first-layer pre-activations — a product of derivative-factor networks,
//! not a conventional feedforward pass. Both forms are kept deliberately
//! literal (indexwise sums) so they stand apart from the autodiff route that
//! they are checked against.

use super::{NetworkError, Result};
use crate::networks::MlpParams;

fn require_phi_depth(net: &MlpParams, depth: usize) -> Result<()> {
    if net.output_dim() != 1 {
        return Err(NetworkError::WrongMode {
            expected: "scalar output (phi mode)",
            got: net.output_dim(),
        });
    }
    if net.depth() != depth {
        return Err(NetworkError::WrongDepth {
            expected: depth,
            got: net.depth(),
        });
    }
    Ok(())
}

/// ∇φ for φ with exactly one hidden layer:
/// ψᵢ(x) = Σₘ θ⁽¹⁾ₘ θ⁽⁰⁾ₘᵢ σ′(⟨θ⁽⁰⁾ₘ, x⟩).
pub fn explicit_grad_l2(net: &MlpParams, x: &[f64]) -> Result<Vec<f64>> {
    require_phi_depth(net, 2)?;
    if x.len() != net.input_dim() {
        return Err(NetworkError::DimensionMismatch {
            expected: net.input_dim(),
            got: x.len(),
        });
    }
    let theta0 = &net.weights[0]; // M x d
    let theta1 = &net.weights[1]; // 1 x M
    let act = net.activation;
    let d = net.input_dim();
    let mut out = vec![0.0; d];
    for m in 0..theta0.rows {
        let z = crate::linalg::dot(theta0.row(m), x);
        let w = theta1.get(0, m) * act.deriv(z);
        for i in 0..d {
            out[i] += w * theta0.get(m, i);
        }
    }
    Ok(out)
}

/// ∇φ for φ with exactly two hidden layers:
/// ψᵢ(x) = Σₙₘ θ⁽²⁾ₙ θ⁽¹⁾ₙₘ θ⁽⁰⁾ₘᵢ σ′(zₙ⁽¹⁾) σ′(zₘ⁽⁰⁾),
/// where zₘ⁽⁰⁾ = ⟨θ⁽⁰⁾ₘ, x⟩ and zₙ⁽¹⁾ = Σₘ θ⁽¹⁾ₙₘ σ(zₘ⁽⁰⁾).
///
/// The two σ′ factors are evaluated as separate derivative networks sharing
/// the first-layer pre-activations and multiplied per (n, m) pair.
pub fn explicit_grad_l3(net: &MlpParams, x: &[f64]) -> Result<Vec<f64>> {
    require_phi_depth(net, 3)?;
    if x.len() != net.input_dim() {
        return Err(NetworkError::DimensionMismatch {
            expected: net.input_dim(),
            got: x.len(),
        });
    }
    let theta0 = &net.weights[0]; // M x d
    let theta1 = &net.weights[1]; // N x M
    let theta2 = &net.weights[2]; // 1 x N
    let act = net.activation;
    let d = net.input_dim();
    let (m_units, n_units) = (theta0.rows, theta1.rows);

    // Shared first-layer pre-activations and their two derived factor nets.
    let z0: Vec<f64> = (0..m_units)
        .map(|m| crate::linalg::dot(theta0.row(m), x))
        .collect();
    let sig0: Vec<f64> = z0.iter().map(|&z| act.value(z)).collect();
    let factor0: Vec<f64> = z0.iter().map(|&z| act.deriv(z)).collect();
    let factor1: Vec<f64> = (0..n_units)
        .map(|n| {
            let z1 = crate::linalg::dot(theta1.row(n), &sig0);
            act.deriv(z1)
        })
        .collect();

    let mut out = vec![0.0; d];
    for n in 0..n_units {
        let wn = theta2.get(0, n) * factor1[n];
        for m in 0..m_units {
            let w = wn * theta1.get(n, m) * factor0[m];
            for i in 0..d {
                out[i] += w * theta0.get(m, i);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activation::Activation;
    use crate::diagnostics::{jacobian_fd, standard_normal_points, symmetry_residual};
    use crate::linalg::max_rel_gap;

    #[test]
    fn zero_readout_gives_zero_gradient() {
        let mut l2 = MlpParams::random(&[3, 5, 1], Activation::default_silu(), 1);
        l2.weights[1] = crate::linalg::Matrix::zeros(1, 5);
        assert!(explicit_grad_l2(&l2, &[0.1, 0.2, 0.3])
            .unwrap()
            .iter()
            .all(|&v| v == 0.0));

        let mut l3 = MlpParams::random(&[3, 5, 5, 1], Activation::default_silu(), 2);
        l3.weights[2] = crate::linalg::Matrix::zeros(1, 5);
        assert!(explicit_grad_l3(&l3, &[0.1, 0.2, 0.3])
            .unwrap()
            .iter()
            .all(|&v| v == 0.0));
    }

    #[test]
    fn closed_forms_match_autodiff() {
        for d in [2usize, 4, 8] {
            let l2 = MlpParams::random(&[d, 16, 1], Activation::default_silu(), 10 + d as u64);
            let (g2, p2) = l2.graph();
            let l3 = MlpParams::random(&[d, 16, 16, 1], Activation::default_silu(), 20 + d as u64);
            let (g3, p3) = l3.graph();
            for x in standard_normal_points(100, d, 30 + d as u64) {
                let (auto2, _) = g2.grad_input(&x, &p2).unwrap();
                let closed2 = explicit_grad_l2(&l2, &x).unwrap();
                assert!(max_rel_gap(&closed2, &auto2) < 1e-12);

                let (auto3, _) = g3.grad_input(&x, &p3).unwrap();
                let closed3 = explicit_grad_l3(&l3, &x).unwrap();
                assert!(max_rel_gap(&closed3, &auto3) < 1e-12);
            }
        }
    }

    #[test]
    fn deep_closed_form_jacobian_is_symmetric() {
        let l3 = MlpParams::random(&[4, 10, 10, 1], Activation::default_silu(), 3);
        for x in standard_normal_points(10, 4, 4) {
            let j = jacobian_fd(|p| Ok(explicit_grad_l3(&l3, p).unwrap()), 4, &x, 1e-5).unwrap();
            let r = symmetry_residual(&j).unwrap();
            assert!(r < 1e-8, "residual {r}");
        }
    }

    #[test]
    fn depth_and_mode_checks() {
        let l3 = MlpParams::random(&[3, 4, 4, 1], Activation::Tanh, 5);
        assert!(matches!(
            explicit_grad_l2(&l3, &[0.0; 3]),
            Err(NetworkError::WrongDepth {
                expected: 2,
                got: 3
            })
        ));
        let l2 = MlpParams::random(&[3, 4, 1], Activation::Tanh, 6);
        assert!(matches!(
            explicit_grad_l3(&l2, &[0.0; 3]),
            Err(NetworkError::WrongDepth {
                expected: 3,
                got: 2
            })
        ));
        let psi = MlpParams::random(&[3, 4, 3], Activation::Tanh, 7);
        assert!(matches!(
            explicit_grad_l2(&psi, &[0.0; 3]),
            Err(NetworkError::WrongMode { .. })
        ));
        assert!(matches!(
            explicit_grad_l2(&l2, &[0.0; 2]),
            Err(NetworkError::DimensionMismatch { .. })
        ));
    }
}
