//! Command-line entry point: property suites, training runs, field export,
//! and symmetry reports over serialized networks.
//!
//! Exit codes: 0 success, 1 property violation, 2 usage/config error,
//! 3 numerical divergence.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use gradfield::config::RunConfig;
use gradfield::diagnostics::{standard_normal_points, GraphField, JacobianMethod, SymmetryReport};
use gradfield::networks::Network;
use gradfield::objectives::{train, Checkpoint, Termination};
use gradfield::verify::{run_suite, Suite};

const EXIT_OK: i32 = 0;
const EXIT_VIOLATION: i32 = 1;
const EXIT_USAGE: i32 = 2;
const EXIT_DIVERGED: i32 = 3;

const USAGE: &str = "\
gradfield - gradient-field networks: verification, training, export

USAGE:
  gradfield verify --suite NAME [--seed N] [--out DIR]
  gradfield train --config PATH [--out DIR] [--seed N]
  gradfield export-field --checkpoint PATH --grid MIN,MAX,N [--out PATH]
  gradfield export-field --oracle --config PATH --grid MIN,MAX,N [--out PATH]
  gradfield symmetry-report --network PATH [--points N] [--seed N] [--out PATH]

SUBCOMMANDS:
  verify           Run a named property suite with fixed seeds
                   (autodiff | symmetry | closed_form | oracle | all)
  train            Run a training job from a JSON config; writes metrics.csv,
                   run_summary.json, checkpoint.json, config.resolved.json
  export-field     Evaluate a d=2 checkpoint's field on a square grid
                   (columns x1,x2,psi1,psi2[,phi]); --oracle exports the
                   analytic smoothed score of the config's mixture instead
  symmetry-report  Jacobian symmetry residuals of a serialized network at
                   random probe points (JSON report + CSV table)

FLAGS:
  --suite NAME       property suite to run
  --config PATH      run config (JSON, schema gradfield-run/1)
  --checkpoint PATH  checkpoint or network file
  --network PATH     network or checkpoint file
  --grid MIN,MAX,N   square grid: N points per axis spanning [MIN, MAX]
  --seed N           override the config/report seed
  --out PATH         output directory (train, verify) or file (exports)
  --points N         number of probe points (symmetry-report)
  --oracle           export the analytic oracle instead of a checkpoint
  --help             show this message

EXIT CODES:
  0 success   1 property violation   2 usage/config error   3 divergence
";

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    std::process::exit(run(&args));
}

fn run(args: &[String]) -> i32 {
    match args.first().map(String::as_str) {
        Some("verify") => cmd_verify(&args[1..]),
        Some("train") => cmd_train(&args[1..]),
        Some("export-field") => cmd_export_field(&args[1..]),
        Some("symmetry-report") => cmd_symmetry_report(&args[1..]),
        Some("--help") | Some("-h") | Some("help") => {
            print!("{USAGE}");
            EXIT_OK
        }
        Some(other) => {
            eprintln!("unknown subcommand '{other}'\n\n{USAGE}");
            EXIT_USAGE
        }
        None => {
            eprint!("{USAGE}");
            EXIT_USAGE
        }
    }
}

/// Parses --key value pairs and bare switches; rejects unknown keys.
fn parse_flags(
    args: &[String],
    valued: &[&str],
    switches: &[&str],
) -> Result<HashMap<String, String>, String> {
    let mut out = HashMap::new();
    let mut i = 0;
    while i < args.len() {
        let arg = &args[i];
        if switches.contains(&arg.as_str()) {
            out.insert(arg.trim_start_matches("--").to_string(), "true".to_string());
            i += 1;
        } else if valued.contains(&arg.as_str()) {
            let Some(value) = args.get(i + 1) else {
                return Err(format!("flag {arg} expects a value"));
            };
            out.insert(arg.trim_start_matches("--").to_string(), value.clone());
            i += 2;
        } else {
            return Err(format!("unknown argument '{arg}'"));
        }
    }
    Ok(out)
}

fn usage_error(msg: &str) -> i32 {
    eprintln!("error: {msg}\n\nrun 'gradfield --help' for usage");
    EXIT_USAGE
}

fn write_file(path: &Path, contents: &str) -> Result<(), String> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| format!("cannot create {parent:?}: {e}"))?;
        }
    }
    fs::write(path, contents).map_err(|e| format!("cannot write {path:?}: {e}"))
}

// ── verify ───────────────────────────────────────────────────────────

fn cmd_verify(args: &[String]) -> i32 {
    let flags = match parse_flags(args, &["--suite", "--seed", "--out"], &[]) {
        Ok(f) => f,
        Err(e) => return usage_error(&e),
    };
    let Some(suite_name) = flags.get("suite") else {
        return usage_error("verify requires --suite NAME");
    };
    let seed: u64 = match flags.get("seed").map(|s| s.parse()).transpose() {
        Ok(s) => s.unwrap_or(0),
        Err(_) => return usage_error("--seed expects an unsigned integer"),
    };
    let out_dir = PathBuf::from(
        flags
            .get("out")
            .cloned()
            .unwrap_or_else(|| "verify-reports".into()),
    );

    let suites: Vec<Suite> = if suite_name == "all" {
        Suite::ALL.to_vec()
    } else {
        match Suite::from_name(suite_name) {
            Some(s) => vec![s],
            None => {
                return usage_error(&format!(
                    "unknown suite '{suite_name}' (expected autodiff, symmetry, closed_form, oracle or all)"
                ))
            }
        }
    };

    let mut all_passed = true;
    for suite in suites {
        let start = Instant::now();
        let report = run_suite(suite, seed);
        for c in &report.checks {
            println!(
                "[{}] {} {}: {}",
                report.suite,
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                c.detail
            );
        }
        println!(
            "[{}] suite {} in {:.2}s",
            report.suite,
            if report.passed { "passed" } else { "FAILED" },
            start.elapsed().as_secs_f64()
        );
        let path = out_dir.join(format!("verify_{}.json", report.suite));
        if let Err(e) = write_file(&path, &report.to_json()) {
            return usage_error(&e);
        }
        all_passed &= report.passed;
    }
    if all_passed {
        EXIT_OK
    } else {
        EXIT_VIOLATION
    }
}

// ── train ────────────────────────────────────────────────────────────

fn cmd_train(args: &[String]) -> i32 {
    let flags = match parse_flags(args, &["--config", "--out", "--seed"], &[]) {
        Ok(f) => f,
        Err(e) => return usage_error(&e),
    };
    let Some(config_path) = flags.get("config") else {
        return usage_error("train requires --config PATH");
    };
    let text = match fs::read_to_string(config_path) {
        Ok(t) => t,
        Err(e) => return usage_error(&format!("cannot read {config_path}: {e}")),
    };
    let mut config = match RunConfig::parse(&text) {
        Ok(c) => c,
        Err(e) => return usage_error(&e.to_string()),
    };
    if let Some(seed) = flags.get("seed") {
        match seed.parse::<u64>() {
            Ok(s) => config.train.seed = s,
            Err(_) => return usage_error("--seed expects an unsigned integer"),
        }
    }
    let stem = Path::new(config_path)
        .file_stem()
        .map(|s| s.to_string_lossy().to_string())
        .unwrap_or_else(|| "run".into());
    let out_dir = PathBuf::from(
        flags
            .get("out")
            .cloned()
            .unwrap_or_else(|| format!("runs/{stem}-seed{}", config.train.seed)),
    );

    println!(
        "training {} (seed {}) -> {}",
        config.train.parametrization.name(),
        config.train.seed,
        out_dir.display()
    );
    let start = Instant::now();
    let result = match train(
        &config.train,
        &config.gmm,
        config.diagnostics.eval_samples,
        config.diagnostics.probe_points,
    ) {
        Ok(r) => r,
        Err(e) => return usage_error(&e.to_string()),
    };
    let elapsed = start.elapsed().as_secs_f64();

    let metrics_csv = gradfield::objectives::metrics_to_csv(&result.checkpoint.metrics);
    let summary_json = serde_json::to_string_pretty(&result.summary).expect("summary serializes");
    let writes = [
        (
            out_dir.join("config.resolved.json"),
            config.canonical_json(),
        ),
        (out_dir.join("metrics.csv"), metrics_csv),
        (out_dir.join("run_summary.json"), summary_json),
        (out_dir.join("checkpoint.json"), result.checkpoint.to_json()),
    ];
    for (path, contents) in &writes {
        if let Err(e) = write_file(path, contents) {
            return usage_error(&e);
        }
    }

    match result.termination {
        Termination::Completed => {
            println!(
                "completed {} steps in {elapsed:.1}s: eval loss {:.6} (baseline {:.6}), score rmse {:.4} -> {:.4}",
                result.summary.steps_completed,
                result.summary.final_eval_loss,
                result.summary.baseline_loss,
                result.summary.initial_score_rmse,
                result.summary.final_score_rmse,
            );
            EXIT_OK
        }
        Termination::Diverged { step, loss } => {
            eprintln!("diverged at step {step} (loss {loss}); partial artifacts written");
            EXIT_DIVERGED
        }
    }
}

// ── export-field ─────────────────────────────────────────────────────

fn parse_grid(spec: &str) -> Result<(f64, f64, usize), String> {
    let parts: Vec<&str> = spec.split(',').collect();
    if parts.len() != 3 {
        return Err("grid spec must be MIN,MAX,N".into());
    }
    let min: f64 = parts[0].trim().parse().map_err(|_| "bad grid MIN")?;
    let max: f64 = parts[1].trim().parse().map_err(|_| "bad grid MAX")?;
    let n: usize = parts[2].trim().parse().map_err(|_| "bad grid N")?;
    if n == 0 {
        return Err("grid N must be at least 1".into());
    }
    if !min.is_finite() || !max.is_finite() {
        return Err("grid bounds must be finite".into());
    }
    if n > 1 && max <= min {
        return Err("grid MAX must exceed MIN when N > 1".into());
    }
    Ok((min, max, n))
}

fn grid_coords(min: f64, max: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![min];
    }
    (0..n)
        .map(|i| min + (max - min) * i as f64 / (n - 1) as f64)
        .collect()
}

/// Loads a network from either a checkpoint document or a bare network file.
fn load_network(path: &str) -> Result<Network, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("cannot read {path}: {e}"))?;
    if let Ok(ckpt) = Checkpoint::from_json(&text) {
        return Ok(ckpt.network);
    }
    Network::from_json(&text).map_err(|e| format!("{path}: {e}"))
}

fn cmd_export_field(args: &[String]) -> i32 {
    let flags = match parse_flags(
        args,
        &["--checkpoint", "--config", "--grid", "--out"],
        &["--oracle"],
    ) {
        Ok(f) => f,
        Err(e) => return usage_error(&e),
    };
    let Some(grid_spec) = flags.get("grid") else {
        return usage_error("export-field requires --grid MIN,MAX,N");
    };
    let (min, max, n) = match parse_grid(grid_spec) {
        Ok(g) => g,
        Err(e) => return usage_error(&e),
    };
    let coords = grid_coords(min, max, n);
    let oracle = flags.contains_key("oracle");

    let mut rows: Vec<String> = Vec::with_capacity(n * n + 1);
    if oracle {
        let Some(config_path) = flags.get("config") else {
            return usage_error("--oracle requires --config PATH for the mixture and noise level");
        };
        let text = match fs::read_to_string(config_path) {
            Ok(t) => t,
            Err(e) => return usage_error(&format!("cannot read {config_path}: {e}")),
        };
        let config = match RunConfig::parse(&text) {
            Ok(c) => c,
            Err(e) => return usage_error(&e.to_string()),
        };
        if config.gmm.dim() != 2 {
            return usage_error(&format!(
                "field export supports d=2 only, config mixture has d={}",
                config.gmm.dim()
            ));
        }
        let sigma = config.train.noise_sigma;
        rows.push("x1,x2,psi1,psi2,phi".into());
        for &x1 in &coords {
            for &x2 in &coords {
                let y = [x1, x2];
                let s = config.gmm.smoothed_score(sigma, &y);
                let lp = config.gmm.smoothed_logpdf(sigma, &y);
                rows.push(format!("{x1},{x2},{},{},{lp}", s[0], s[1]));
            }
        }
    } else {
        let Some(ckpt_path) = flags.get("checkpoint") else {
            return usage_error(
                "export-field requires --checkpoint PATH (or --oracle --config PATH)",
            );
        };
        let network = match load_network(ckpt_path) {
            Ok(n) => n,
            Err(e) => return usage_error(&e),
        };
        if network.input_dim() != 2 {
            return usage_error(&format!(
                "field export supports d=2 only, network has d={}",
                network.input_dim()
            ));
        }
        let (field_graph, params) = match network.field_graph() {
            Ok(fp) => fp,
            Err(e) => return usage_error(&e.to_string()),
        };
        let potential = network.potential_graph();
        rows.push(if potential.is_some() {
            "x1,x2,psi1,psi2,phi".into()
        } else {
            "x1,x2,psi1,psi2".into()
        });
        for &x1 in &coords {
            for &x2 in &coords {
                let y = [x1, x2];
                let v = match field_graph.eval(&[&y], &params) {
                    Ok(v) => v,
                    Err(e) => return usage_error(&e.to_string()),
                };
                match &potential {
                    Some((pg, pp)) => {
                        let phi = match pg.eval(&[&y], pp) {
                            Ok(p) => p[0],
                            Err(e) => return usage_error(&e.to_string()),
                        };
                        rows.push(format!("{x1},{x2},{},{},{phi}", v[0], v[1]));
                    }
                    None => rows.push(format!("{x1},{x2},{},{}", v[0], v[1])),
                }
            }
        }
    }

    let out = flags.get("out").cloned().unwrap_or_else(|| {
        if oracle {
            "oracle_field.csv".into()
        } else {
            "field.csv".into()
        }
    });
    let mut contents = rows.join("\n");
    contents.push('\n');
    if let Err(e) = write_file(Path::new(&out), &contents) {
        return usage_error(&e);
    }
    println!("wrote {} rows to {out}", n * n);
    EXIT_OK
}

// ── symmetry-report ──────────────────────────────────────────────────

fn cmd_symmetry_report(args: &[String]) -> i32 {
    let flags = match parse_flags(args, &["--network", "--points", "--seed", "--out"], &[]) {
        Ok(f) => f,
        Err(e) => return usage_error(&e),
    };
    let Some(net_path) = flags.get("network") else {
        return usage_error("symmetry-report requires --network PATH");
    };
    let points: usize = match flags.get("points").map(|s| s.parse()).transpose() {
        Ok(p) => p.unwrap_or(20),
        Err(_) => return usage_error("--points expects an unsigned integer"),
    };
    let seed: u64 = match flags.get("seed").map(|s| s.parse()).transpose() {
        Ok(s) => s.unwrap_or(0),
        Err(_) => return usage_error("--seed expects an unsigned integer"),
    };
    let network = match load_network(net_path) {
        Ok(n) => n,
        Err(e) => return usage_error(&e),
    };
    let (graph, params) = match network.field_graph() {
        Ok(fp) => fp,
        Err(e) => return usage_error(&e.to_string()),
    };
    let field = GraphField::new(graph, params);
    let probes = standard_normal_points(points, field.dim(), seed);
    let report = match SymmetryReport::for_field(&field, &probes, JacobianMethod::Autodiff, true) {
        Ok(r) => r,
        Err(e) => return usage_error(&e.to_string()),
    };
    println!(
        "{}: max symmetry residual {:.3e} over {} points{}",
        network.kind().name(),
        report.max_residual,
        points,
        if report.trivially_symmetric {
            " (d < 2: trivially symmetric)"
        } else {
            ""
        }
    );
    let out = flags
        .get("out")
        .cloned()
        .unwrap_or_else(|| "symmetry_report.json".into());
    if let Err(e) = write_file(Path::new(&out), &report.to_json()) {
        return usage_error(&e);
    }
    let csv_path = Path::new(&out).with_extension("csv");
    if let Err(e) = write_file(&csv_path, &report.to_csv()) {
        return usage_error(&e);
    }
    EXIT_OK
}
