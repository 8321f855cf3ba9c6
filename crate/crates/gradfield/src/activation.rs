//! Smooth scalar activations with closed-form first and second derivatives.
//!
//! Every kind here is twice continuously differentiable on all of ℝ. That is
//! a hard requirement: input-gradient graphs evaluate σ′, and differentiating
//! those graphs again (parameter gradients of losses that embed an input
//! gradient) evaluates σ″.

use serde::{Deserialize, Serialize};

/// Activation function specification.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Activation {
    /// σ(x) = x · logistic(βx). Smooth ramp; approaches a hard ramp as β grows.
    SiluBeta { beta: f64 },
    /// σ(x) = ln(1 + eˣ)
    Softplus,
    /// σ(x) = tanh(x)
    Tanh,
}

/// Numerically stable logistic 1/(1+e⁻ᵗ).
#[inline]
fn logistic(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

impl Activation {
    /// Default used across the crate: β = 4 smooth ramp.
    pub fn default_silu() -> Self {
        Activation::SiluBeta { beta: 4.0 }
    }

    pub fn validate(&self) -> Result<(), String> {
        match self {
            Activation::SiluBeta { beta } => {
                if !(beta.is_finite() && *beta > 0.0) {
                    return Err(format!("silu_beta requires finite beta > 0, got {beta}"));
                }
            }
            Activation::Softplus | Activation::Tanh => {}
        }
        Ok(())
    }

    /// σ(x)
    #[inline]
    pub fn value(&self, x: f64) -> f64 {
        match self {
            Activation::SiluBeta { beta } => x * logistic(beta * x),
            Activation::Softplus => {
                // max(x,0) + ln(1 + e^{-|x|})
                x.max(0.0) + (-x.abs()).exp().ln_1p()
            }
            Activation::Tanh => x.tanh(),
        }
    }

    /// σ′(x)
    #[inline]
    pub fn deriv(&self, x: f64) -> f64 {
        match self {
            Activation::SiluBeta { beta } => {
                let s = logistic(beta * x);
                s + beta * x * s * (1.0 - s)
            }
            Activation::Softplus => logistic(x),
            Activation::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
        }
    }

    /// σ″(x)
    #[inline]
    pub fn deriv2(&self, x: f64) -> f64 {
        match self {
            Activation::SiluBeta { beta } => {
                let s = logistic(beta * x);
                let s1 = s * (1.0 - s);
                let s2 = s1 * (1.0 - 2.0 * s);
                2.0 * beta * s1 + beta * beta * x * s2
            }
            Activation::Softplus => {
                let s = logistic(x);
                s * (1.0 - s)
            }
            Activation::Tanh => {
                let t = x.tanh();
                -2.0 * t * (1.0 - t * t)
            }
        }
    }

    /// Evaluate the `order`-th derivative (0 = σ itself), if registered.
    ///
    /// Orders beyond 2 are not registered; callers that would need them must
    /// refuse the computation up front.
    pub fn derivative(&self, order: u8, x: f64) -> Option<f64> {
        match order {
            0 => Some(self.value(x)),
            1 => Some(self.deriv(x)),
            2 => Some(self.deriv2(x)),
            _ => None,
        }
    }

    pub fn derivative_available(&self, order: u8) -> bool {
        order <= 2
    }

    pub fn name(&self) -> &'static str {
        match self {
            Activation::SiluBeta { .. } => "silu_beta",
            Activation::Softplus => "softplus",
            Activation::Tanh => "tanh",
        }
    }
}
