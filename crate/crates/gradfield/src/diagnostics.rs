//! Numerical verification machinery.
//!
//! Everything a gradient-field claim gets checked with lives here: Jacobians
//! (reverse-mode or central differences), the relative asymmetry residual
//! ‖J−Jᵀ‖_F / ‖J‖_F, pairwise weight-direction statistics, and the central
//! finite-difference gradient used as the independent oracle throughout the
//! test suites.

use serde::Serialize;
use thiserror::Error;

use crate::autodiff::{Graph, ParamVector, Workspace};
use crate::linalg::Matrix;

#[derive(Debug, Error)]
pub enum DiagnosticsError {
    #[error("field produced a non-finite value at coordinate {coord} of point {point:?}")]
    NonFiniteField { point: Vec<f64>, coord: usize },
    #[error("function produced a non-finite value at stencil point {point:?}")]
    NonFiniteScalar { point: Vec<f64> },
    #[error("symmetry residual requires a square matrix, got {rows}x{cols}")]
    NonSquare { rows: usize, cols: usize },
    #[error("finite-difference step must be positive, got {0}")]
    BadStep(f64),
    #[error("all weight vectors are (numerically) zero")]
    AllRowsZero,
    #[error("{0}")]
    Graph(#[from] crate::autodiff::GraphError),
}

pub type Result<T> = std::result::Result<T, DiagnosticsError>;

/// How to compute a Jacobian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum JacobianMethod {
    /// Reverse sweeps over the field's expression graph, one per component.
    Autodiff,
    /// Central differences with step h.
    CentralFd { h: f64 },
}

/// Default central-difference step: near the rounding/truncation optimum for
/// unit-scale functions in double precision.
pub const DEFAULT_FD_STEP: f64 = 1e-5;

/// A vector field backed by an expression graph (single input slot).
#[derive(Debug, Clone)]
pub struct GraphField {
    pub graph: Graph,
    pub params: ParamVector,
}

impl GraphField {
    pub fn new(graph: Graph, params: ParamVector) -> Self {
        GraphField { graph, params }
    }

    pub fn dim(&self) -> usize {
        self.graph.slot_dim(0)
    }

    pub fn output_dim(&self) -> usize {
        self.graph.output_len().expect("field graph has output")
    }

    pub fn value(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.graph.eval(&[x], &self.params)?)
    }

    /// Jᵢⱼ = ∂ψᵢ/∂xⱼ at x.
    pub fn jacobian(&self, x: &[f64], method: JacobianMethod) -> Result<Matrix> {
        match method {
            JacobianMethod::Autodiff => {
                let mut ws = Workspace::new();
                let j = self
                    .graph
                    .jacobian_input_with(&mut ws, 0, &[x], &self.params)?;
                check_finite_jacobian(&j, x)?;
                Ok(j)
            }
            JacobianMethod::CentralFd { h } => {
                jacobian_fd(|p| self.value(p), self.output_dim(), x, h)
            }
        }
    }
}

fn check_finite_jacobian(j: &Matrix, x: &[f64]) -> Result<()> {
    if let Some(pos) = j.data.iter().position(|v| !v.is_finite()) {
        return Err(DiagnosticsError::NonFiniteField {
            point: x.to_vec(),
            coord: pos % j.cols,
        });
    }
    Ok(())
}

/// Central-difference Jacobian of an arbitrary field callable.
pub fn jacobian_fd<F>(field: F, out_dim: usize, x: &[f64], h: f64) -> Result<Matrix>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    if h <= 0.0 || h.is_nan() {
        return Err(DiagnosticsError::BadStep(h));
    }
    let d = x.len();
    let mut jac = Matrix::zeros(out_dim, d);
    let mut xp = x.to_vec();
    for j in 0..d {
        xp[j] = x[j] + h;
        let fp = field(&xp)?;
        xp[j] = x[j] - h;
        let fm = field(&xp)?;
        xp[j] = x[j];
        for i in 0..out_dim {
            let v = (fp[i] - fm[i]) / (2.0 * h);
            if !v.is_finite() {
                return Err(DiagnosticsError::NonFiniteField {
                    point: x.to_vec(),
                    coord: i,
                });
            }
            jac.set(i, j, v);
        }
    }
    Ok(jac)
}

/// Relative asymmetry ‖J − Jᵀ‖_F / max(‖J‖_F, 1e−12).
///
/// Zero iff J is symmetric (up to the floor); invariant under J ↦ Jᵀ and
/// under nonzero scaling of J. The floor makes the identically-zero field
/// report 0 rather than 0/0.
pub fn symmetry_residual(j: &Matrix) -> Result<f64> {
    if j.rows != j.cols {
        return Err(DiagnosticsError::NonSquare {
            rows: j.rows,
            cols: j.cols,
        });
    }
    let mut asym = 0.0;
    for r in 0..j.rows {
        for c in 0..j.cols {
            let d = j.get(r, c) - j.get(c, r);
            asym += d * d;
        }
    }
    Ok(asym.sqrt() / j.frobenius_norm().max(1e-12))
}

/// Central-difference gradient of a scalar function.
pub fn fd_gradient<F>(f: F, x: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> f64,
{
    if h <= 0.0 || h.is_nan() {
        return Err(DiagnosticsError::BadStep(h));
    }
    let mut g = vec![0.0; x.len()];
    let mut xp = x.to_vec();
    for i in 0..x.len() {
        xp[i] = x[i] + h;
        let fp = f(&xp);
        xp[i] = x[i] - h;
        let fm = f(&xp);
        if !fp.is_finite() || !fm.is_finite() {
            return Err(DiagnosticsError::NonFiniteScalar { point: xp });
        }
        xp[i] = x[i];
        g[i] = (fp - fm) / (2.0 * h);
    }
    Ok(g)
}

/// Pairwise direction statistics across weight vectors.
#[derive(Debug, Clone, Serialize)]
pub struct ParallelismStats {
    /// Smallest pairwise |cos| across input rows (1.0 when < 2 usable rows).
    pub min_input_cos: f64,
    /// Smallest pairwise |cos| across output columns.
    pub min_output_cos: f64,
    /// Rows/columns skipped because their norm was ≤ 1e-12.
    pub zero_input_rows: usize,
    pub zero_output_cols: usize,
}

fn min_pairwise_abs_cos(vecs: &[Vec<f64>]) -> Result<(f64, usize)> {
    let usable: Vec<&Vec<f64>> = vecs
        .iter()
        .filter(|v| crate::linalg::norm(v) > 1e-12)
        .collect();
    let zeros = vecs.len() - usable.len();
    if usable.is_empty() {
        return Err(DiagnosticsError::AllRowsZero);
    }
    let mut min_cos = 1.0_f64;
    for i in 0..usable.len() {
        for j in i + 1..usable.len() {
            let c = crate::linalg::dot(usable[i], usable[j]).abs()
                / (crate::linalg::norm(usable[i]) * crate::linalg::norm(usable[j]));
            min_cos = min_cos.min(c);
        }
    }
    Ok((min_cos, zeros))
}

/// Minimum pairwise |cosine| over input rows and over output columns.
///
/// Values near 1 mean the vectors share a single direction (the collapse that
/// deep direct fields are forced into); small values mean genuinely distinct
/// features.
pub fn weight_parallelism(
    input_rows: &[Vec<f64>],
    output_cols: &[Vec<f64>],
) -> Result<ParallelismStats> {
    let (min_input_cos, zero_input_rows) = min_pairwise_abs_cos(input_rows)?;
    let (min_output_cos, zero_output_cols) = min_pairwise_abs_cos(output_cols)?;
    Ok(ParallelismStats {
        min_input_cos,
        min_output_cos,
        zero_input_rows,
        zero_output_cols,
    })
}

/// Singular values by one-sided Jacobi (Hestenes) rotations: columns are
/// orthogonalized in place and the singular values are their final norms.
/// Working on J itself rather than JᵀJ keeps small singular values accurate
/// to machine precision instead of √ε.
pub fn singular_values(j: &Matrix) -> Vec<f64> {
    let (m, n) = (j.rows, j.cols);
    let mut a = j.data.clone(); // row-major m x n
    let col_dot = |a: &[f64], p: usize, q: usize| -> f64 {
        let mut acc = 0.0;
        for r in 0..m {
            acc += a[r * n + p] * a[r * n + q];
        }
        acc
    };
    for _ in 0..60 {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let app = col_dot(&a, p, p);
                let aqq = col_dot(&a, q, q);
                let apq = col_dot(&a, p, q);
                if apq.abs() <= 1e-30 + 1e-16 * (app * aqq).sqrt() {
                    continue;
                }
                let zeta = (aqq - app) / (2.0 * apq);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for r in 0..m {
                    let arp = a[r * n + p];
                    let arq = a[r * n + q];
                    a[r * n + p] = c * arp - s * arq;
                    a[r * n + q] = s * arp + c * arq;
                }
                rotated = true;
            }
        }
        if !rotated {
            break;
        }
    }
    let mut sv: Vec<f64> = (0..n).map(|p| col_dot(&a, p, p).sqrt()).collect();
    sv.sort_by(|x, y| y.partial_cmp(x).unwrap());
    sv
}

/// Number of singular values above `rel_tol · σ_max`, with a 1e-12 absolute
/// floor so a numerically-zero matrix reports rank 0 instead of counting
/// roundoff noise.
pub fn rank_estimate(j: &Matrix, rel_tol: f64) -> usize {
    let sv = singular_values(j);
    let smax = sv.first().copied().unwrap_or(0.0);
    if smax <= 1e-12 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * smax).count()
}

pub const SYMMETRY_REPORT_SCHEMA: &str = "gradfield-symmetry/1";

/// Symmetry survey of a field over a set of probe points.
#[derive(Debug, Clone, Serialize)]
pub struct SymmetryReport {
    pub schema: String,
    pub points: Vec<Vec<f64>>,
    pub residuals: Vec<f64>,
    pub max_residual: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub jacobian_rank_estimates: Option<Vec<usize>>,
    /// d < 2 leaves no off-diagonal pairs to constrain.
    pub trivially_symmetric: bool,
}

impl SymmetryReport {
    pub fn for_field(
        field: &GraphField,
        points: &[Vec<f64>],
        method: JacobianMethod,
        with_ranks: bool,
    ) -> Result<SymmetryReport> {
        let mut residuals = Vec::with_capacity(points.len());
        let mut ranks = Vec::with_capacity(points.len());
        for p in points {
            let j = field.jacobian(p, method)?;
            residuals.push(symmetry_residual(&j)?);
            if with_ranks {
                ranks.push(rank_estimate(&j, 1e-8));
            }
        }
        let max_residual = residuals.iter().cloned().fold(0.0, f64::max);
        Ok(SymmetryReport {
            schema: SYMMETRY_REPORT_SCHEMA.to_string(),
            points: points.to_vec(),
            residuals,
            max_residual,
            jacobian_rank_estimates: if with_ranks { Some(ranks) } else { None },
            trivially_symmetric: field.dim() < 2,
        })
    }

    /// One row per probe point: `x1,..,xd,residual[,rank]`.
    pub fn to_csv(&self) -> String {
        let d = self.points.first().map(|p| p.len()).unwrap_or(0);
        let mut out = String::new();
        for i in 1..=d {
            out.push_str(&format!("x{i},"));
        }
        out.push_str("residual");
        if self.jacobian_rank_estimates.is_some() {
            out.push_str(",rank");
        }
        out.push('\n');
        for (i, p) in self.points.iter().enumerate() {
            for v in p {
                out.push_str(&format!("{v},"));
            }
            out.push_str(&format!("{}", self.residuals[i]));
            if let Some(ranks) = &self.jacobian_rank_estimates {
                out.push_str(&format!(",{}", ranks[i]));
            }
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Standard-normal probe points, deterministic per seed.
pub fn standard_normal_points(count: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
    use rand::Rng;
    use rand_distr::StandardNormal;
    let mut rng = crate::rng::stream_rng(seed, "probe-points", 0);
    (0..count)
        .map(|_| {
            (0..dim)
                .map(|_| rng.sample::<f64, _>(StandardNormal))
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activation::Activation;
    use crate::linalg::max_rel_gap;
    use crate::networks::{tie_weights, MlpParams, TiedPsiNet};

    #[test]
    fn fd_jacobian_of_linear_field_is_exact_to_truncation() {
        let a = Matrix::from_rows(&[vec![1.0, -2.0], vec![0.5, 3.0]]);
        let field = |x: &[f64]| -> Result<Vec<f64>> {
            let mut y = vec![0.0; 2];
            a.matvec(x, &mut y);
            Ok(y)
        };
        let j = jacobian_fd(field, 2, &[0.3, -0.7], 1e-5).unwrap();
        for i in 0..4 {
            assert!((j.data[i] - a.data[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn identity_field_jacobian() {
        let field = |x: &[f64]| -> Result<Vec<f64>> { Ok(x.to_vec()) };
        let j = jacobian_fd(field, 3, &[1.0, 2.0, 3.0], 1e-5).unwrap();
        let id = Matrix::identity(3);
        assert!(max_rel_gap(&j.data, &id.data) < 1e-9);
    }

    #[test]
    fn tied_field_autodiff_vs_fd() {
        let net = TiedPsiNet::random(8, 4, Activation::default_silu(), 11);
        let (g, p) = net.graph();
        let field = GraphField::new(g, p);
        for point in standard_normal_points(10, 4, 5) {
            let ja = field.jacobian(&point, JacobianMethod::Autodiff).unwrap();
            let jf = field
                .jacobian(&point, JacobianMethod::CentralFd { h: DEFAULT_FD_STEP })
                .unwrap();
            assert!(max_rel_gap(&ja.data, &jf.data) < 1e-4);
        }
    }

    #[test]
    fn symmetry_residual_basics() {
        assert_eq!(symmetry_residual(&Matrix::identity(4)).unwrap(), 0.0);
        let j = Matrix::from_rows(&[vec![0.0, 1.0], vec![0.0, 0.0]]);
        let r = symmetry_residual(&j).unwrap();
        assert!((r - std::f64::consts::SQRT_2).abs() < 1e-15);
        let sym = Matrix::from_rows(&[vec![2.0, -1.0], vec![-1.0, 5.0]]);
        assert_eq!(symmetry_residual(&sym).unwrap(), 0.0);
        assert!(matches!(
            symmetry_residual(&Matrix::zeros(2, 3)),
            Err(DiagnosticsError::NonSquare { .. })
        ));
        // zero matrix: floor keeps it defined
        assert_eq!(symmetry_residual(&Matrix::zeros(3, 3)).unwrap(), 0.0);
    }

    #[test]
    fn fd_gradient_examples() {
        let w = [0.2, -1.5, 4.0];
        let g = fd_gradient(|x| crate::linalg::dot(&w, x), &[1.0, 1.0, 1.0], 1e-5).unwrap();
        assert!(max_rel_gap(&g, &w) < 1e-10);

        let g = fd_gradient(|x| x.iter().map(|v| v * v).sum(), &[1.0, 2.0], 1e-5).unwrap();
        assert!((g[0] - 2.0).abs() < 1e-9 && (g[1] - 4.0).abs() < 1e-9);

        assert!(matches!(
            fd_gradient(|x| x[0], &[1.0], 0.0),
            Err(DiagnosticsError::BadStep(_))
        ));
    }

    #[test]
    fn fd_gradient_matches_autodiff_on_random_phi() {
        let net = MlpParams::random(&[5, 8, 8, 1], Activation::default_silu(), 3);
        let (g, p) = net.graph();
        for x in standard_normal_points(10, 5, 77) {
            let (grad, _) = g.grad_input(&x, &p).unwrap();
            let fd = fd_gradient(|v| g.eval(&[v], &p).unwrap()[0], &x, DEFAULT_FD_STEP).unwrap();
            assert!(max_rel_gap(&fd, &grad) < 1e-4);
        }
    }

    #[test]
    fn fd_gradient_rejects_non_finite() {
        let err = fd_gradient(|x| (x[0] - 1.0).ln(), &[1.0], 1e-5).unwrap_err();
        assert!(matches!(err, DiagnosticsError::NonFiniteScalar { .. }));
    }

    #[test]
    fn jacobian_fd_reports_non_finite_coordinate() {
        let field = |x: &[f64]| -> Result<Vec<f64>> { Ok(vec![x[0], 1.0 / (x[1] - 1.0)]) };
        let err = jacobian_fd(field, 2, &[0.0, 1.0], 1e-5).unwrap_err();
        match err {
            DiagnosticsError::NonFiniteField { coord, .. } => assert_eq!(coord, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn parallelism_stats() {
        // orthogonal rows
        let rows = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let stats = weight_parallelism(&rows, &rows).unwrap();
        assert!(stats.min_input_cos.abs() < 1e-15);

        // zero rows are excluded and counted
        let rows = vec![vec![0.0, 0.0], vec![1.0, 1.0], vec![2.0, 2.0]];
        let stats = weight_parallelism(&rows, &rows).unwrap();
        assert_eq!(stats.zero_input_rows, 1);
        assert!((stats.min_input_cos - 1.0).abs() < 1e-12);

        let zeros = vec![vec![0.0, 0.0]];
        assert!(matches!(
            weight_parallelism(&zeros, &zeros),
            Err(DiagnosticsError::AllRowsZero)
        ));
    }

    #[test]
    fn random_rows_are_far_from_parallel() {
        // Monte-Carlo check backing the frozen 0.9 threshold: 100 seeds,
        // 16 standard-normal rows in R^8.
        let mut hits = 0;
        for seed in 0..100 {
            let rows: Vec<Vec<f64>> = standard_normal_points(16, 8, 9000 + seed);
            let stats = weight_parallelism(&rows, &rows).unwrap();
            if stats.min_input_cos < 0.9 {
                hits += 1;
            }
        }
        assert!(hits >= 99, "only {hits}/100 seeds below 0.9");
    }

    #[test]
    fn rank_and_singular_values() {
        let j = Matrix::from_rows(&[vec![2.0, 0.0], vec![0.0, 1.0]]);
        let sv = singular_values(&j);
        assert!((sv[0] - 2.0).abs() < 1e-12 && (sv[1] - 1.0).abs() < 1e-12);
        assert_eq!(rank_estimate(&j, 1e-8), 2);

        // rank-1 outer product
        let u = [1.0, 2.0, -1.0];
        let mut r1 = Matrix::zeros(3, 3);
        for a in 0..3 {
            for b in 0..3 {
                r1.set(a, b, u[a] * u[b]);
            }
        }
        assert_eq!(rank_estimate(&r1, 1e-8), 1);
        assert_eq!(rank_estimate(&Matrix::identity(5), 1e-8), 5);
    }

    #[test]
    fn report_csv_shape() {
        let net = tie_weights(
            Matrix::from_rows(&[vec![1.0, 0.0]]),
            vec![2.0],
            Activation::Tanh,
        );
        let (g, p) = net.graph();
        let field = GraphField::new(g, p);
        let pts = standard_normal_points(3, 2, 1);
        let rep = SymmetryReport::for_field(&field, &pts, JacobianMethod::Autodiff, true).unwrap();
        assert_eq!(rep.residuals.len(), 3);
        assert!(rep.max_residual < 1e-12);
        let csv = rep.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "x1,x2,residual,rank");
        assert_eq!(lines.count(), 3);
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            /// residual(J) == residual(Jᵀ) and residual(cJ) == residual(J).
            #[test]
            fn residual_invariances(
                vals in proptest::collection::vec(-10.0_f64..10.0, 9),
                c in prop_oneof![(-100.0_f64..-0.01), (0.01_f64..100.0)],
            ) {
                let j = Matrix { rows: 3, cols: 3, data: vals };
                let r = symmetry_residual(&j).unwrap();
                let rt = symmetry_residual(&j.transpose()).unwrap();
                prop_assert!((r - rt).abs() <= 1e-12 * r.max(1.0));
                if j.frobenius_norm() > 1e-9 {
                    let scaled = Matrix { rows: 3, cols: 3, data: j.data.iter().map(|v| c * v).collect() };
                    let rs = symmetry_residual(&scaled).unwrap();
                    prop_assert!((r - rs).abs() <= 1e-10 * r.max(1.0), "r={r} rs={rs}");
                }
            }

            /// residual is zero exactly on symmetric matrices (above the floor).
            #[test]
            fn residual_zero_iff_symmetric(vals in proptest::collection::vec(-10.0_f64..10.0, 9)) {
                let j = Matrix { rows: 3, cols: 3, data: vals };
                let r = symmetry_residual(&j).unwrap();
                let mut sym = true;
                for a in 0..3 {
                    for b in 0..3 {
                        if j.get(a, b) != j.get(b, a) {
                            sym = false;
                        }
                    }
                }
                if sym {
                    prop_assert_eq!(r, 0.0);
                } else if j.frobenius_norm() > 1e-6 {
                    prop_assert!(r > 0.0);
                }
            }
        }
    }
}
