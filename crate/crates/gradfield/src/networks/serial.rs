//! Self-describing textual network format, value-exact on round-trip.
//!
//! A network file is one JSON document:
//!
//! ```json
//! {
//!   "schema": "gradfield-net/1",
//!   "kind": "phi_mlp" | "psi_mlp" | "tied_psi" | "parallel_psi",
//!   "widths": [2, 64, 64, 1],
//!   "activation": { "kind": "silu_beta", "beta": 4.0 },
//!   "direction": ["..."],            // parallel_psi only: the unit vector u
//!   "layers": [ { "rows": 64, "cols": 2, "data": ["...", "..."] }, ... ]
//! }
//! ```
//!
//! Weights are decimal strings with 17 significant digits (`{:.16e}`), which
//! pins every f64 bit pattern exactly; reloading a file reproduces forward
//! values bit for bit. Layer data is row-major.
//!
//! Layer conventions per kind: MLPs store their weight matrices in order;
//! `tied_psi` stores [theta0 M×d, s M×1]; `parallel_psi` stores
//! [a M×1, inner…, b N×1] plus `direction`.

use serde::{Deserialize, Serialize};

use super::constructions::{ParallelPsiNet, TiedPsiNet};
use super::mlp::MlpParams;
use super::{NetworkError, Result};
use crate::activation::Activation;
use crate::autodiff::{Graph, ParamVector};
use crate::linalg::Matrix;

pub const NET_SCHEMA: &str = "gradfield-net/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NetworkKind {
    PhiMlp,
    PsiMlp,
    TiedPsi,
    ParallelPsi,
}

impl NetworkKind {
    pub fn name(&self) -> &'static str {
        match self {
            NetworkKind::PhiMlp => "phi_mlp",
            NetworkKind::PsiMlp => "psi_mlp",
            NetworkKind::TiedPsi => "tied_psi",
            NetworkKind::ParallelPsi => "parallel_psi",
        }
    }
}

/// Any trainable or constructed network, as stored in checkpoints.
#[derive(Debug, Clone, PartialEq)]
pub enum Network {
    Phi(MlpParams),
    Psi(MlpParams),
    TiedPsi(TiedPsiNet),
    ParallelPsi(ParallelPsiNet),
}

impl Network {
    pub fn kind(&self) -> NetworkKind {
        match self {
            Network::Phi(_) => NetworkKind::PhiMlp,
            Network::Psi(_) => NetworkKind::PsiMlp,
            Network::TiedPsi(_) => NetworkKind::TiedPsi,
            Network::ParallelPsi(_) => NetworkKind::ParallelPsi,
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            Network::Phi(n) | Network::Psi(n) => n.input_dim(),
            Network::TiedPsi(n) => n.input_dim(),
            Network::ParallelPsi(n) => n.input_dim(),
        }
    }

    pub fn activation(&self) -> Activation {
        match self {
            Network::Phi(n) | Network::Psi(n) => n.activation,
            Network::TiedPsi(n) => n.activation,
            Network::ParallelPsi(n) => n.activation,
        }
    }

    /// Graph of the raw network function (scalar for φ, field otherwise).
    pub fn graph(&self) -> (Graph, ParamVector) {
        match self {
            Network::Phi(n) | Network::Psi(n) => n.graph(),
            Network::TiedPsi(n) => n.graph(),
            Network::ParallelPsi(n) => n.graph(),
        }
    }

    /// Graph of the vector field this network represents: ∇φ for potentials
    /// (materialized input gradient), the network itself for direct fields.
    pub fn field_graph(&self) -> crate::autodiff::Result<(Graph, ParamVector)> {
        match self {
            Network::Phi(n) => {
                let (g, p) = n.graph();
                Ok((g.input_gradient_graph(0)?, p))
            }
            _ => {
                let (g, p) = self.graph();
                Ok((g, p))
            }
        }
    }

    /// The scalar potential graph, when this network has one.
    pub fn potential_graph(&self) -> Option<(Graph, ParamVector)> {
        match self {
            Network::Phi(n) => Some(n.graph()),
            _ => None,
        }
    }

    pub fn field_value(&self, x: &[f64]) -> Result<Vec<f64>> {
        match self {
            Network::Phi(n) => {
                let (g, p) = n.graph();
                let (grad, _) = g
                    .grad_input(x, &p)
                    .map_err(|e| NetworkError::Invalid(e.to_string()))?;
                Ok(grad)
            }
            Network::Psi(n) => n.forward(x),
            Network::TiedPsi(n) => n.forward(x),
            Network::ParallelPsi(n) => n.forward(x),
        }
    }

    pub fn input_rows(&self) -> Vec<Vec<f64>> {
        match self {
            Network::Phi(n) | Network::Psi(n) => n.input_rows(),
            Network::TiedPsi(n) => n.input_rows(),
            Network::ParallelPsi(n) => n.input_rows(),
        }
    }

    pub fn output_cols(&self) -> Vec<Vec<f64>> {
        match self {
            Network::Phi(n) | Network::Psi(n) => n.output_cols(),
            Network::TiedPsi(n) => n.output_cols(),
            Network::ParallelPsi(n) => n.output_cols(),
        }
    }

    /// Rebuilds the same network shape around a new parameter vector.
    pub fn with_params(&self, params: &ParamVector) -> Result<Network> {
        match self {
            Network::Phi(n) => Ok(Network::Phi(MlpParams::from_params(
                &n.widths,
                n.activation,
                params,
            )?)),
            Network::Psi(n) => Ok(Network::Psi(MlpParams::from_params(
                &n.widths,
                n.activation,
                params,
            )?)),
            Network::TiedPsi(n) => Ok(Network::TiedPsi(TiedPsiNet::from_params(
                n.activation,
                params,
            )?)),
            Network::ParallelPsi(n) => {
                let mats = params.to_matrices();
                if mats.len() != n.inner.len() + 2 {
                    return Err(NetworkError::Invalid("layer count changed".into()));
                }
                let mut net = n.clone();
                net.a = mats[0].data.clone();
                net.inner = mats[1..mats.len() - 1].to_vec();
                net.b = mats[mats.len() - 1].data.clone();
                net.validate()?;
                Ok(Network::ParallelPsi(net))
            }
        }
    }

    pub fn all_finite(&self) -> bool {
        self.to_file().layers.iter().all(|l| {
            l.data
                .iter()
                .all(|s| s.parse::<f64>().map(|v| v.is_finite()).unwrap_or(false))
        })
    }

    // ── wire format ──────────────────────────────────────────────────

    pub fn to_file(&self) -> NetworkFile {
        let (widths, direction, mats): (Option<Vec<usize>>, Option<Vec<String>>, Vec<Matrix>) =
            match self {
                Network::Phi(n) | Network::Psi(n) => {
                    (Some(n.widths.clone()), None, n.weights.clone())
                }
                Network::TiedPsi(n) => {
                    let s_mat = Matrix {
                        rows: n.s.len(),
                        cols: 1,
                        data: n.s.clone(),
                    };
                    (None, None, vec![n.theta0.clone(), s_mat])
                }
                Network::ParallelPsi(n) => {
                    let mut mats = vec![Matrix {
                        rows: n.a.len(),
                        cols: 1,
                        data: n.a.clone(),
                    }];
                    mats.extend(n.inner.iter().cloned());
                    mats.push(Matrix {
                        rows: n.b.len(),
                        cols: 1,
                        data: n.b.clone(),
                    });
                    (
                        None,
                        Some(n.u.iter().map(|&v| encode_f64(v)).collect()),
                        mats,
                    )
                }
            };
        NetworkFile {
            schema: NET_SCHEMA.to_string(),
            kind: self.kind(),
            activation: self.activation(),
            widths,
            direction,
            layers: mats
                .iter()
                .map(|m| LayerFile {
                    rows: m.rows,
                    cols: m.cols,
                    data: m.data.iter().map(|&v| encode_f64(v)).collect(),
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("network file serializes")
    }

    pub fn from_json(text: &str) -> Result<Network> {
        let file: NetworkFile =
            serde_json::from_str(text).map_err(|e| NetworkError::Parse(e.to_string()))?;
        Network::from_file(&file)
    }

    pub fn from_file(file: &NetworkFile) -> Result<Network> {
        if file.schema != NET_SCHEMA {
            return Err(NetworkError::Parse(format!(
                "unsupported schema '{}', expected '{NET_SCHEMA}'",
                file.schema
            )));
        }
        let mats: Vec<Matrix> = file
            .layers
            .iter()
            .map(|l| {
                if l.data.len() != l.rows * l.cols {
                    return Err(NetworkError::Parse(format!(
                        "layer declared {}x{} but has {} values",
                        l.rows,
                        l.cols,
                        l.data.len()
                    )));
                }
                let data = l
                    .data
                    .iter()
                    .map(|s| decode_f64(s))
                    .collect::<Result<Vec<f64>>>()?;
                Ok(Matrix {
                    rows: l.rows,
                    cols: l.cols,
                    data,
                })
            })
            .collect::<Result<Vec<Matrix>>>()?;

        let net = match file.kind {
            NetworkKind::PhiMlp | NetworkKind::PsiMlp => {
                let widths = file
                    .widths
                    .clone()
                    .ok_or_else(|| NetworkError::Parse("mlp kinds require widths".into()))?;
                let mlp = MlpParams {
                    widths,
                    weights: mats,
                    activation: file.activation,
                };
                mlp.validate()?;
                if file.kind == NetworkKind::PhiMlp {
                    if mlp.output_dim() != 1 {
                        return Err(NetworkError::Parse(
                            "phi_mlp must have output width 1".into(),
                        ));
                    }
                    Network::Phi(mlp)
                } else {
                    if mlp.output_dim() != mlp.input_dim() {
                        return Err(NetworkError::Parse(
                            "psi_mlp must have output width equal to input width".into(),
                        ));
                    }
                    Network::Psi(mlp)
                }
            }
            NetworkKind::TiedPsi => {
                if mats.len() != 2 || mats[1].cols != 1 || mats[1].rows != mats[0].rows {
                    return Err(NetworkError::Parse(
                        "tied_psi expects layers [theta0 MxD, s Mx1]".into(),
                    ));
                }
                Network::TiedPsi(TiedPsiNet {
                    theta0: mats[0].clone(),
                    s: mats[1].data.clone(),
                    activation: file.activation,
                })
            }
            NetworkKind::ParallelPsi => {
                let u = file
                    .direction
                    .as_ref()
                    .ok_or_else(|| NetworkError::Parse("parallel_psi requires direction".into()))?
                    .iter()
                    .map(|s| decode_f64(s))
                    .collect::<Result<Vec<f64>>>()?;
                if mats.len() < 2 {
                    return Err(NetworkError::Parse(
                        "parallel_psi expects at least [a, b] layers".into(),
                    ));
                }
                let net = ParallelPsiNet {
                    u,
                    a: mats[0].data.clone(),
                    inner: mats[1..mats.len() - 1].to_vec(),
                    b: mats[mats.len() - 1].data.clone(),
                    activation: file.activation,
                };
                net.validate()?;
                Network::ParallelPsi(net)
            }
        };
        Ok(net)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkFile {
    pub schema: String,
    pub kind: NetworkKind,
    pub activation: Activation,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub widths: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub direction: Option<Vec<String>>,
    pub layers: Vec<LayerFile>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerFile {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<String>,
}

/// 17 significant decimal digits: enough to pin any f64 exactly.
pub fn encode_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn decode_f64(s: &str) -> Result<f64> {
    s.parse::<f64>()
        .map_err(|e| NetworkError::Parse(format!("bad number '{s}': {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn encode_decode_is_bit_exact() {
        let vals = [0.1, -0.0, 1.0 / 3.0, std::f64::consts::PI, 1e-300, -2.5e305];
        for &v in &vals {
            let s = encode_f64(v);
            let back = decode_f64(&s).unwrap();
            assert_eq!(v.to_bits(), back.to_bits(), "{s}");
        }
    }

    #[test]
    fn round_trip_reproduces_forward_values_exactly() {
        use crate::diagnostics::standard_normal_points;
        use crate::networks::{MlpParams, ParallelPsiNet, TiedPsiNet};
        let act = Activation::SiluBeta { beta: 4.0 };
        let nets = vec![
            Network::Phi(MlpParams::random(&[3, 8, 8, 1], act, 1)),
            Network::Psi(MlpParams::random(&[3, 8, 3], act, 2)),
            Network::TiedPsi(TiedPsiNet::random(6, 3, act, 3)),
            Network::ParallelPsi(ParallelPsiNet::random(3, 5, 3, act, 4).unwrap()),
        ];
        for net in nets {
            let text = net.to_json();
            let back = Network::from_json(&text).unwrap();
            assert_eq!(net, back, "structural equality after round trip");
            for x in standard_normal_points(5, 3, 9) {
                let a = net.field_value(&x).unwrap();
                let b = back.field_value(&x).unwrap();
                for (u, v) in a.iter().zip(b.iter()) {
                    assert_eq!(u.to_bits(), v.to_bits());
                }
            }
        }
    }

    #[test]
    fn parse_rejects_bad_documents() {
        use crate::networks::MlpParams;
        let net = Network::Phi(MlpParams::random(&[2, 4, 1], Activation::Tanh, 1));
        let good = net.to_json();

        let wrong_schema = good.replace("gradfield-net/1", "gradfield-net/0");
        assert!(Network::from_json(&wrong_schema).is_err());

        let unknown_field = good.replace("\"kind\"", "\"mystery\": 1, \"kind\"");
        assert!(Network::from_json(&unknown_field).is_err());

        let bad_number = good.replacen("e0\"", "e0oops\"", 1);
        if bad_number != good {
            assert!(Network::from_json(&bad_number).is_err());
        }
    }
}
