//! Learning objectives and the deterministic SGD loop.
//!
//! The empirical-Bayes denoising objective is mean ‖x − y − σ²·s(y)‖² over
//! matched clean/noisy pairs; its minimizer over score functions s is the
//! score of the noisy variable. The score network can be a direct field ψ or
//! the materialized gradient ∇φ of a scalar potential — in the latter case
//! the loss graph embeds an input-gradient sub-graph, and the parameter
//! gradient is a second, ordinary reverse sweep over it (double
//! backpropagation).
//!
//! Loss graphs are built once per run, per sample (two input slots: the
//! noisy point and the clean target); batches are averaged outside the graph
//! in a fixed sequential order, which keeps graph size independent of batch
//! size and metric histories bit-reproducible.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::activation::Activation;
use crate::autodiff::{Graph, GraphError, ParamVector, Workspace};
use crate::diagnostics::{symmetry_residual, DiagnosticsError};
use crate::linalg::Matrix;
use crate::networks::{MlpParams, Network, NetworkError, TiedPsiNet};
use crate::rng::derive_seed;
use crate::toydata::{Batch, DataError, GmmSpec};

/// Residual asymmetry above this marks a field as non-conservative. Frozen
/// after Monte-Carlo calibration: randomly initialized deep direct fields sit
/// orders of magnitude above it, gradient fields orders below.
pub const ASYMMETRY_SIGNATURE_THRESHOLD: f64 = 1e-2;

/// Minimum pairwise |cos| above this marks first-layer feature collapse
/// (all input rows share one direction).
pub const COLLAPSE_COS_THRESHOLD: f64 = 0.99;

/// Training aborts when the minibatch loss exceeds this or goes non-finite.
pub const DIVERGENCE_LOSS_LIMIT: f64 = 1e6;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("gradient has non-finite entries at indices {indices:?}")]
    NonFiniteGradient { indices: Vec<usize> },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Diagnostics(#[from] DiagnosticsError),
}

pub type Result<T> = std::result::Result<T, TrainError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parametrization {
    /// Scalar potential φ; the trained field is its input gradient.
    ImplicitPhi,
    /// Direct field ψ trained on the denoising-score objective.
    ExplicitPsi,
    /// One-hidden-layer tied field (symmetric Jacobian by construction).
    TiedPsi,
    /// Direct field ψ trained on plain reconstruction (autoencoder-style).
    DaePsi,
}

impl Parametrization {
    pub fn name(&self) -> &'static str {
        match self {
            Parametrization::ImplicitPhi => "implicit_phi",
            Parametrization::ExplicitPsi => "explicit_psi",
            Parametrization::TiedPsi => "tied_psi",
            Parametrization::DaePsi => "dae_psi",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub seed: u64,
    pub noise_sigma: f64,
    pub lr: f64,
    #[serde(default)]
    pub momentum: f64,
    pub steps: usize,
    pub batch_size: usize,
    pub eval_every: usize,
    pub parametrization: Parametrization,
    /// Hidden layer widths (excludes input and output widths).
    pub hidden_widths: Vec<usize>,
    #[serde(default = "Activation::default_silu")]
    pub activation: Activation,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.noise_sigma.is_nan() || self.noise_sigma <= 0.0 || !self.noise_sigma.is_finite() {
            return Err(TrainError::Config(format!(
                "noise_sigma must be positive, got {}",
                self.noise_sigma
            )));
        }
        if self.lr.is_nan() || self.lr < 0.0 || !self.lr.is_finite() {
            return Err(TrainError::Config(format!(
                "lr must be finite and non-negative, got {}",
                self.lr
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(TrainError::Config(format!(
                "momentum must be in [0, 1), got {}",
                self.momentum
            )));
        }
        if self.batch_size == 0 {
            return Err(TrainError::Config("batch_size must be at least 1".into()));
        }
        if self.eval_every == 0 {
            return Err(TrainError::Config("eval_every must be at least 1".into()));
        }
        if self.hidden_widths.is_empty() || self.hidden_widths.contains(&0) {
            return Err(TrainError::Config(
                "hidden_widths must be non-empty positive integers".into(),
            ));
        }
        if self.parametrization == Parametrization::TiedPsi && self.hidden_widths.len() != 1 {
            return Err(TrainError::Config(
                "tied_psi has exactly one hidden layer".into(),
            ));
        }
        self.activation.validate().map_err(TrainError::Config)?;
        Ok(())
    }
}

// ── losses ───────────────────────────────────────────────────────────

/// A per-sample scalar loss graph with slots [noisy point, clean target].
#[derive(Debug, Clone)]
pub struct LossGraph {
    pub graph: Graph,
}

pub const LOSS_SLOT_NOISY: usize = 0;
pub const LOSS_SLOT_CLEAN: usize = 1;

fn check_score_graph(score: &Graph) -> Result<usize> {
    if score.num_slots() != 1 {
        return Err(TrainError::Config(format!(
            "score graph must have exactly one input slot, has {}",
            score.num_slots()
        )));
    }
    let d = score.slot_dim(0);
    let out = score.output_len()?;
    if out != d {
        return Err(TrainError::Config(format!(
            "score graph maps R^{d} to R^{out}; a score field must map to R^{d}"
        )));
    }
    Ok(d)
}

impl LossGraph {
    /// ‖x − y − σ²·s(y)‖² around a score graph s (which may embed an input
    /// gradient). Validates differentiability of the embedded graph now, at
    /// build time: a score graph whose activations lack the derivative order
    /// the reverse sweep will need is rejected here.
    pub fn neb(score: &Graph, noise_sigma: f64) -> Result<LossGraph> {
        let d = check_score_graph(score)?;
        score.backward_capable()?;
        let mut g = score.clone();
        let score_out = g.output()?;
        let y = g.slot_node(LOSS_SLOT_NOISY);
        let x = g.input("x_clean", d);
        let scaled = g.scale(noise_sigma * noise_sigma, score_out)?;
        let xy = g.sub(x, y)?;
        let r = g.sub(xy, scaled)?;
        let loss = g.sum_squares(r)?;
        g.set_output(loss)?;
        Ok(LossGraph { graph: g })
    }

    /// ‖x − ψ(y)‖²: plain reconstruction of the clean sample.
    pub fn dae(psi: &Graph) -> Result<LossGraph> {
        let d = check_score_graph(psi)?;
        psi.backward_capable()?;
        let mut g = psi.clone();
        let psi_out = g.output()?;
        let x = g.input("x_clean", d);
        let r = g.sub(x, psi_out)?;
        let loss = g.sum_squares(r)?;
        g.set_output(loss)?;
        Ok(LossGraph { graph: g })
    }

    pub fn sample_loss(
        &self,
        ws: &mut Workspace,
        y: &[f64],
        x: &[f64],
        params: &ParamVector,
    ) -> Result<f64> {
        Ok(self.graph.eval_with(ws, &[y, x], params)?[0])
    }

    /// Mean loss over the batch, fixed sequential order.
    pub fn batch_loss(&self, batch: &Batch, params: &ParamVector) -> Result<f64> {
        let mut ws = Workspace::new();
        let mut acc = 0.0;
        for r in 0..batch.len() {
            acc += self.sample_loss(&mut ws, batch.y_noisy.row(r), batch.x_clean.row(r), params)?;
        }
        Ok(acc / batch.len() as f64)
    }

    /// Mean loss and mean parameter gradient over the batch.
    pub fn batch_loss_and_grad(
        &self,
        ws: &mut Workspace,
        batch: &Batch,
        params: &ParamVector,
    ) -> Result<(f64, Vec<f64>)> {
        let mut loss_acc = 0.0;
        let mut grad_acc = vec![0.0; params.len()];
        for r in 0..batch.len() {
            loss_acc += self.graph.grad_params_with(
                ws,
                &[batch.y_noisy.row(r), batch.x_clean.row(r)],
                params,
            )?;
            for (g, &s) in grad_acc.iter_mut().zip(ws.param_grad().iter()) {
                *g += s;
            }
        }
        let n = batch.len() as f64;
        for g in grad_acc.iter_mut() {
            *g /= n;
        }
        Ok((loss_acc / n, grad_acc))
    }
}

/// Batch-mean empirical-Bayes denoising loss of a score graph.
pub fn neb_loss(
    score: &Graph,
    batch: &Batch,
    noise_sigma: f64,
    params: &ParamVector,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(TrainError::Config("batch must be non-empty".into()));
    }
    LossGraph::neb(score, noise_sigma)?.batch_loss(batch, params)
}

/// Batch-mean reconstruction loss of a field graph.
pub fn dae_loss(psi: &Graph, batch: &Batch, params: &ParamVector) -> Result<f64> {
    if batch.is_empty() {
        return Err(TrainError::Config("batch must be non-empty".into()));
    }
    LossGraph::dae(psi)?.batch_loss(batch, params)
}

/// One plain SGD update: θ − ε·g. Rejects non-finite gradient entries,
/// naming the offending indices.
pub fn sgd_step(params: &ParamVector, grad: &[f64], lr: f64) -> Result<ParamVector> {
    if grad.len() != params.len() {
        return Err(TrainError::Config(format!(
            "gradient length {} != parameter count {}",
            grad.len(),
            params.len()
        )));
    }
    let bad: Vec<usize> = grad
        .iter()
        .enumerate()
        .filter(|(_, v)| !v.is_finite())
        .map(|(i, _)| i)
        .take(8)
        .collect();
    if !bad.is_empty() {
        return Err(TrainError::NonFiniteGradient { indices: bad });
    }
    let mut next = params.clone();
    for (p, &g) in next.values_mut().iter_mut().zip(grad.iter()) {
        *p -= lr * g;
    }
    Ok(next)
}

// ── training loop ────────────────────────────────────────────────────

/// One metrics record: minibatch loss plus oracle-referenced evaluation of
/// the current field at fixed points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub step: usize,
    pub loss: f64,
    pub score_rmse: f64,
    pub max_symmetry_residual: f64,
    pub min_input_cos: f64,
}

impl MetricsRow {
    pub const CSV_HEADER: &'static str = "step,loss,score_rmse,max_symmetry_residual,min_input_cos";

    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.step, self.loss, self.score_rmse, self.max_symmetry_residual, self.min_input_cos
        )
    }
}

pub fn metrics_to_csv(rows: &[MetricsRow]) -> String {
    let mut out = String::from(MetricsRow::CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.to_csv_row());
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Termination {
    Completed,
    Diverged { step: usize, loss: f64 },
}

/// Trained parameters plus provenance; reloading the serialized network
/// reproduces forward values exactly.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub network: Network,
    pub step: usize,
    pub config_hash: String,
    pub metrics: Vec<MetricsRow>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointFile {
    pub schema: String,
    pub step: usize,
    pub config_hash: String,
    pub metrics: Vec<MetricsRow>,
    pub network: crate::networks::NetworkFile,
}

pub const CHECKPOINT_SCHEMA: &str = "gradfield-checkpoint/1";

impl Checkpoint {
    pub fn to_json(&self) -> String {
        let file = CheckpointFile {
            schema: CHECKPOINT_SCHEMA.to_string(),
            step: self.step,
            config_hash: self.config_hash.clone(),
            metrics: self.metrics.clone(),
            network: self.network.to_file(),
        };
        serde_json::to_string_pretty(&file).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Checkpoint> {
        let file: CheckpointFile = serde_json::from_str(text)
            .map_err(|e| TrainError::Config(format!("cannot parse checkpoint: {e}")))?;
        if file.schema != CHECKPOINT_SCHEMA {
            return Err(TrainError::Config(format!(
                "unsupported checkpoint schema '{}'",
                file.schema
            )));
        }
        Ok(Checkpoint {
            network: Network::from_file(&file.network)?,
            step: file.step,
            config_hash: file.config_hash,
            metrics: file.metrics,
        })
    }
}

/// End-of-run aggregates, including which failure signature (if any) the
/// trained field exhibits: residual asymmetry or first-layer collapse.
#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub schema: String,
    pub config_hash: String,
    pub parametrization: String,
    pub steps_completed: usize,
    pub termination: Termination,
    /// d·σ², the loss of the zero score.
    pub baseline_loss: f64,
    pub initial_eval_loss: f64,
    pub final_eval_loss: f64,
    pub initial_score_rmse: f64,
    pub final_score_rmse: f64,
    pub final_max_symmetry_residual: f64,
    pub final_min_input_cos: f64,
    pub nonconservative_field: bool,
    pub feature_collapse: bool,
}

pub const SUMMARY_SCHEMA: &str = "gradfield-summary/1";

#[derive(Debug, Clone)]
pub struct RunResult {
    pub checkpoint: Checkpoint,
    pub summary: RunSummary,
    pub termination: Termination,
}

fn build_network(config: &TrainConfig, dim: usize) -> Result<Network> {
    let init_seed = derive_seed(config.seed, "net-init", 0);
    Ok(match config.parametrization {
        Parametrization::ImplicitPhi => {
            let mut widths = vec![dim];
            widths.extend(&config.hidden_widths);
            widths.push(1);
            Network::Phi(MlpParams::random(&widths, config.activation, init_seed))
        }
        Parametrization::ExplicitPsi | Parametrization::DaePsi => {
            let mut widths = vec![dim];
            widths.extend(&config.hidden_widths);
            widths.push(dim);
            Network::Psi(MlpParams::random(&widths, config.activation, init_seed))
        }
        Parametrization::TiedPsi => Network::TiedPsi(TiedPsiNet::random(
            config.hidden_widths[0],
            dim,
            config.activation,
            init_seed,
        )),
    })
}

/// Fixed evaluation context: oracle-scored eval set and symmetry probes.
struct EvalContext {
    field: Graph,
    eval_batch: Batch,
    oracle_scores: Matrix,
    probes: Vec<Vec<f64>>,
    loss_graph: LossGraph,
}

impl EvalContext {
    fn score_rmse(&self, params: &ParamVector) -> Result<f64> {
        let mut ws = Workspace::new();
        let n = self.eval_batch.len();
        let d = self.eval_batch.dim();
        let mut acc = 0.0;
        for r in 0..n {
            let est = self
                .field
                .eval_with(&mut ws, &[self.eval_batch.y_noisy.row(r)], params)?;
            for i in 0..d {
                let diff = est[i] - self.oracle_scores.get(r, i);
                acc += diff * diff;
            }
        }
        Ok((acc / (n * d) as f64).sqrt())
    }

    fn max_probe_residual(&self, params: &ParamVector) -> Result<f64> {
        let mut ws = Workspace::new();
        let mut max_res = 0.0_f64;
        for p in &self.probes {
            let j = self.field.jacobian_input_with(&mut ws, 0, &[p], params)?;
            max_res = max_res.max(symmetry_residual(&j)?);
        }
        Ok(max_res)
    }

    fn eval_loss(&self, params: &ParamVector) -> Result<f64> {
        self.loss_graph.batch_loss(&self.eval_batch, params)
    }
}

fn min_input_cos_from(params: &ParamVector) -> f64 {
    let mats = params.to_matrices();
    let w0 = &mats[0];
    let rows: Vec<Vec<f64>> = (0..w0.rows).map(|r| w0.row(r).to_vec()).collect();
    match crate::diagnostics::weight_parallelism(&rows, &rows) {
        Ok(stats) => stats.min_input_cos,
        Err(_) => 1.0, // all-zero first layer: direction undefined, report collapse
    }
}

/// Runs the SGD loop. `eval_samples` and `probe_points` control the fixed
/// oracle evaluation; both are drawn once from the run seed.
pub fn train(
    config: &TrainConfig,
    gmm: &GmmSpec,
    eval_samples: usize,
    probe_points: usize,
) -> Result<RunResult> {
    config.validate()?;
    gmm.validate()?;
    let dim = gmm.dim();
    let network = build_network(config, dim)?;
    let (field_graph, init_params) = network.field_graph()?;
    let loss_graph = match config.parametrization {
        Parametrization::DaePsi => LossGraph::dae(&field_graph)?,
        _ => LossGraph::neb(&field_graph, config.noise_sigma)?,
    };

    // Fixed eval set in the noisy space, scored by the analytic oracle.
    let eval_batch = Batch::draw(
        gmm,
        eval_samples.max(1),
        config.noise_sigma,
        derive_seed(config.seed, "eval-clean", 0),
        derive_seed(config.seed, "eval-noise", 0),
    )?;
    let mut oracle_scores = Matrix::zeros(eval_batch.len(), dim);
    for r in 0..eval_batch.len() {
        let s = gmm.smoothed_score(config.noise_sigma, eval_batch.y_noisy.row(r));
        oracle_scores.data[r * dim..(r + 1) * dim].copy_from_slice(&s);
    }
    let probe_batch = Batch::draw(
        gmm,
        probe_points.max(1),
        config.noise_sigma,
        derive_seed(config.seed, "probe-clean", 0),
        derive_seed(config.seed, "probe-noise", 0),
    )?;
    let probes: Vec<Vec<f64>> = (0..probe_batch.len())
        .map(|r| probe_batch.y_noisy.row(r).to_vec())
        .collect();

    let ctx = EvalContext {
        field: field_graph,
        eval_batch,
        oracle_scores,
        probes,
        loss_graph: loss_graph.clone(),
    };

    let config_hash = config_hash_of(config, gmm);
    let mut params = init_params;
    let mut velocity = vec![0.0; params.len()];
    let mut ws = Workspace::new();
    let mut metrics: Vec<MetricsRow> = Vec::new();
    let mut termination = Termination::Completed;
    let mut steps_done = 0;
    let initial_eval_loss = ctx.eval_loss(&params)?;

    let record = |step: usize,
                  loss: f64,
                  params: &ParamVector,
                  metrics: &mut Vec<MetricsRow>|
     -> Result<()> {
        metrics.push(MetricsRow {
            step,
            loss,
            score_rmse: ctx.score_rmse(params)?,
            max_symmetry_residual: ctx.max_probe_residual(params)?,
            min_input_cos: min_input_cos_from(params),
        });
        Ok(())
    };

    // Parameters with a verified-finite loss, for rollback on divergence.
    let mut last_finite = params.clone();
    let mut last_finite_step = 0;

    for step in 0..config.steps {
        let batch = Batch::draw(
            gmm,
            config.batch_size,
            config.noise_sigma,
            derive_seed(config.seed, "batch-clean", step as u64),
            derive_seed(config.seed, "batch-noise", step as u64),
        )?;
        let (loss, grad) = loss_graph.batch_loss_and_grad(&mut ws, &batch, &params)?;
        if !loss.is_finite() || loss > DIVERGENCE_LOSS_LIMIT {
            termination = Termination::Diverged { step, loss };
            break;
        }
        last_finite.clone_from(&params);
        last_finite_step = step;
        if step % config.eval_every == 0 {
            record(step, loss, &params, &mut metrics)?;
        }
        // θ ← θ − ε·(momentum-filtered) gradient; plain SGD when momentum=0.
        let update = if config.momentum > 0.0 {
            for (v, &g) in velocity.iter_mut().zip(grad.iter()) {
                *v = config.momentum * *v + g;
            }
            velocity.clone()
        } else {
            grad
        };
        match sgd_step(&params, &update, config.lr) {
            Ok(next) => params = next,
            Err(TrainError::NonFiniteGradient { .. }) => {
                termination = Termination::Diverged {
                    step,
                    loss: f64::NAN,
                };
                break;
            }
            Err(e) => return Err(e),
        }
        steps_done = step + 1;
    }

    if let Termination::Diverged { .. } = termination {
        // The aborting step's parameters produced the bad loss; the artifact
        // keeps the newest parameters whose loss was still finite.
        params = last_finite;
        steps_done = last_finite_step;
    }

    if termination == Termination::Completed {
        // Closing metrics row on a fresh batch, no update.
        let batch = Batch::draw(
            gmm,
            config.batch_size,
            config.noise_sigma,
            derive_seed(config.seed, "batch-clean", config.steps as u64),
            derive_seed(config.seed, "batch-noise", config.steps as u64),
        )?;
        let loss = loss_graph.batch_loss(&batch, &params)?;
        record(config.steps, loss, &params, &mut metrics)?;
    }

    let final_eval_loss = ctx.eval_loss(&params)?;
    let first = metrics.first().cloned();
    let last = metrics.last().cloned();
    let (initial_score_rmse, final_row) = match (first, last) {
        (Some(f), Some(l)) => (f.score_rmse, l),
        _ => {
            // Diverged before the first eval: synthesize a final row.
            let row = MetricsRow {
                step: steps_done,
                loss: f64::NAN,
                score_rmse: ctx.score_rmse(&params)?,
                max_symmetry_residual: ctx.max_probe_residual(&params)?,
                min_input_cos: min_input_cos_from(&params),
            };
            (row.score_rmse, row)
        }
    };

    let summary = RunSummary {
        schema: SUMMARY_SCHEMA.to_string(),
        config_hash: config_hash.clone(),
        parametrization: config.parametrization.name().to_string(),
        steps_completed: steps_done,
        termination: termination.clone(),
        baseline_loss: dim as f64 * config.noise_sigma * config.noise_sigma,
        initial_eval_loss,
        final_eval_loss,
        initial_score_rmse,
        final_score_rmse: final_row.score_rmse,
        final_max_symmetry_residual: final_row.max_symmetry_residual,
        final_min_input_cos: final_row.min_input_cos,
        nonconservative_field: final_row.max_symmetry_residual > ASYMMETRY_SIGNATURE_THRESHOLD,
        feature_collapse: final_row.min_input_cos > COLLAPSE_COS_THRESHOLD,
    };

    let checkpoint = Checkpoint {
        network: network.with_params(&params)?,
        step: steps_done,
        config_hash,
        metrics,
    };

    Ok(RunResult {
        checkpoint,
        summary,
        termination,
    })
}

/// FNV-1a hash of the canonical JSON of (train config, mixture).
pub fn config_hash_of(config: &TrainConfig, gmm: &GmmSpec) -> String {
    let canonical = serde_json::to_string(&(config, gmm)).expect("config serializes");
    format!("{:016x}", crate::rng::fnv1a(canonical.as_bytes()))
}
