//! Command-line front end.
//!
//! Machine-readable output goes to stdout, diagnostics to stderr. Exit codes:
//! 0 success, 1 usage error, 2 runtime error, 3 failed acceptance rules.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use thiserror::Error;

use crate::ballsbins::{max_load_exact, max_load_sample, BallsError, LoadDistribution};
use crate::cliques::{exact_max_clique, greedy_clique, mono_clique, CliqueError, DEFAULT_EXACT_BUDGET};
use crate::distributions::SetSizeLaw;
use crate::harness::{emit, load_config, run as run_experiment, Format, HarnessError};
use crate::instance::{
    build_graph, generate, read_instance, write_edge_list, write_instance, InstanceError, IntersectionInstance,
};
use crate::theory::{self, PowerLawRegime, TheoryError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;
pub const EXIT_FAILED_ACCEPTANCE: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Instance(#[from] InstanceError),
    #[error(transparent)]
    Clique(#[from] CliqueError),
    #[error(transparent)]
    Theory(#[from] TheoryError),
    #[error(transparent)]
    Balls(#[from] BallsError),
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("{path}: {source}")]
    File { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            _ => EXIT_RUNTIME,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "rigclique",
    version,
    about = "Random intersection graphs, clique algorithms and Monte Carlo checks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample an instance and write it in the plain-text instance format.
    Gen {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        m: usize,
        /// Set-size law as JSON, e.g. '{"kind":"Deterministic","x_fixed":3}'
        #[arg(long)]
        law: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the intersection graph of an instance file as an edge list.
    Graph {
        instance: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a clique algorithm on an instance file and print the result as JSON.
    Clique {
        instance: PathBuf,
        #[arg(long, value_enum)]
        algo: AlgoArg,
        /// Node-expansion limit for the exact search.
        #[arg(long, default_value_t = DEFAULT_EXACT_BUDGET)]
        budget: u64,
    },
    /// Evaluate a closed-form prediction and print it as JSON.
    Predict {
        #[arg(value_enum)]
        formula: Formula,
        #[arg(long)]
        n: Option<u64>,
        #[arg(long)]
        m: Option<u64>,
        #[arg(long, default_value_t = 1.5)]
        alpha: f64,
        #[arg(long, default_value_t = 0.0)]
        gamma: f64,
        #[arg(long, default_value_t = 1.0)]
        beta: f64,
        #[arg(long, default_value_t = 0.2)]
        eps0: f64,
        #[arg(long, default_value_t = 0.1)]
        eps1: f64,
        #[arg(long, allow_hyphen_values = true)]
        a: Option<f64>,
        #[arg(long)]
        b: Option<f64>,
        #[arg(long)]
        k: Option<u64>,
        #[arg(long)]
        p: Option<u64>,
        #[arg(long, default_value_t = 1.0)]
        c: f64,
        /// Comma-separated set sizes.
        #[arg(long, value_delimiter = ',')]
        sizes: Vec<u64>,
        #[arg(long)]
        x1: Option<u64>,
        #[arg(long)]
        x2: Option<u64>,
        /// Set-size law as JSON (degree-moments).
        #[arg(long)]
        law: Option<String>,
    },
    /// Distribution of the maximum load of N balls in M bins.
    Maxload {
        #[arg(value_name = "N")]
        balls: u64,
        #[arg(value_name = "M")]
        bins: u64,
        /// Exact law (N, M <= 200).
        #[arg(long, conflicts_with = "trials")]
        exact: bool,
        /// Number of Monte Carlo samples.
        #[arg(long, required_unless_present = "exact")]
        trials: Option<u64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run an experiment config and print its report.
    Experiment {
        config: PathBuf,
        #[arg(long, default_value = "json")]
        format: String,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the worker count of the config.
        #[arg(long)]
        workers: Option<usize>,
        /// Override the master seed of the config.
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum AlgoArg {
    Greedy,
    Mono,
    Exact,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Formula {
    PowerlawClique,
    FiniteVariance,
    Thresholds,
    LambertRoot,
    H,
    T,
    RainbowBound,
    DegreeMoments,
    EdgeProb,
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let sink: &mut dyn Write = if e.use_stderr() { stderr } else { stdout };
            let _ = sink.write_all(text.as_bytes());
            return code;
        }
    };
    match execute(cli.command, stdout, stderr) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}

fn execute(command: Command, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<i32, CliError> {
    match command {
        Command::Gen { n, m, law, seed, out } => {
            if n < 1 || m < 1 {
                return Err(CliError::Usage("--n and --m must be at least 1".into()));
            }
            let law = parse_law(&law)?;
            let inst = generate(n, m, &law, seed)?;
            with_output(out.as_deref(), stdout, |w| write_instance(&inst, w))?;
        }
        Command::Graph { instance, out } => {
            let g = build_graph(&load_instance(&instance)?)?;
            with_output(out.as_deref(), stdout, |w| write_edge_list(&g, w))?;
        }
        Command::Clique { instance, algo, budget } => {
            let g = build_graph(&load_instance(&instance)?)?;
            let result = match algo {
                AlgoArg::Greedy => greedy_clique(&g),
                AlgoArg::Mono => mono_clique(&g),
                AlgoArg::Exact => exact_max_clique(&g, budget)?,
            };
            writeln!(stdout, "{}", serde_json::to_string(&result)?)?;
        }
        Command::Predict {
            formula,
            n,
            m,
            alpha,
            gamma,
            beta,
            eps0,
            eps1,
            a,
            b,
            k,
            p,
            c,
            sizes,
            x1,
            x2,
            law,
        } => {
            let regime = PowerLawRegime {
                alpha,
                beta,
                eps0,
                eps1,
                sv_gamma: gamma,
            };
            let need = |v: Option<u64>, flag: &str| v.ok_or_else(|| CliError::Usage(format!("{flag} is required")));
            let needf = |v: Option<f64>, flag: &str| v.ok_or_else(|| CliError::Usage(format!("{flag} is required")));
            let (name, value) = match formula {
                Formula::PowerlawClique => (
                    "powerlaw-clique",
                    json!(theory::predicted_clique_powerlaw(need(n, "--n")?, &regime)?),
                ),
                Formula::FiniteVariance => (
                    "finite-variance",
                    json!(theory::predicted_clique_finite_variance(need(n, "--n")?)?),
                ),
                Formula::Thresholds => {
                    let n = need(n, "--n")?;
                    ("thresholds", json!(theory::thresholds(n, m.unwrap_or(n), &regime)?))
                }
                Formula::LambertRoot => (
                    "lambert-root",
                    json!(theory::lambert_root(needf(a, "--a")?, needf(b, "--b")?)?),
                ),
                Formula::H => ("h", json!(theory::h_of_k(need(k, "--k")?)?)),
                Formula::T => ("t", json!(theory::t_of_kp(need(k, "--k")?, need(p, "--p")?, c)?)),
                Formula::RainbowBound => (
                    "rainbow-bound",
                    json!(theory::rainbow_kk_prob_bound(&sizes, need(m, "--m")?)?),
                ),
                Formula::DegreeMoments => {
                    let law = parse_law(
                        law.as_deref()
                            .ok_or_else(|| CliError::Usage("--law is required".into()))?,
                    )?;
                    let n = need(n, "--n")?;
                    (
                        "degree-moments",
                        json!(theory::degree_moment_predictions(&law, n, m.unwrap_or(n))?),
                    )
                }
                Formula::EdgeProb => (
                    "edge-prob",
                    json!(theory::edge_prob_bounds(
                        need(x1, "--x1")?,
                        need(x2, "--x2")?,
                        need(m, "--m")?
                    )?),
                ),
            };
            writeln!(stdout, "{}", json!({ "formula": name, "value": value }))?;
        }
        Command::Maxload {
            balls,
            bins,
            exact,
            trials,
            seed,
        } => {
            if bins < 1 {
                return Err(CliError::Usage("M must be at least 1".into()));
            }
            let dist = if exact {
                max_load_exact(balls, bins)?
            } else {
                let trials = trials.ok_or_else(|| CliError::Usage("--trials or --exact is required".into()))?;
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let samples: Vec<u64> = (0..trials).map(|_| max_load_sample(balls, bins, &mut rng)).collect();
                LoadDistribution::from_samples(&samples)
            };
            writeln!(stdout, "{}", serde_json::to_string(&dist)?)?;
        }
        Command::Experiment {
            config,
            format,
            out,
            workers,
            seed,
        } => {
            let format: Format = format
                .parse()
                .map_err(|e: HarnessError| CliError::Usage(e.to_string()))?;
            let mut cfg = load_config(&config).map_err(|e| match e {
                HarnessError::Io(source) => CliError::File {
                    path: config.clone(),
                    source,
                },
                other => other.into(),
            })?;
            if let Some(w) = workers {
                cfg.worker_count = w;
            }
            if let Some(s) = seed {
                cfg.master_seed = s;
            }
            let report = run_experiment(&cfg)?;
            let bytes = emit(&report, format)?;
            with_output(out.as_deref(), stdout, |w| w.write_all(&bytes))?;
            for rule in &report.rules {
                let value = rule.value.map_or("undefined".to_string(), |v| format!("{v}"));
                writeln!(
                    stderr,
                    "[{}] {}: {} {} {}",
                    if rule.passed { "PASS" } else { "FAIL" },
                    rule.name,
                    value,
                    rule.comparison,
                    rule.threshold
                )?;
            }
            if !report.passed {
                return Ok(EXIT_FAILED_ACCEPTANCE);
            }
        }
    }
    Ok(EXIT_OK)
}

fn parse_law(text: &str) -> Result<SetSizeLaw, CliError> {
    let law: SetSizeLaw =
        serde_json::from_str(text).map_err(|e| CliError::Usage(format!("cannot parse law {text:?}: {e}")))?;
    law.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(law)
}

fn load_instance(path: &Path) -> Result<IntersectionInstance, CliError> {
    let file = File::open(path).map_err(|source| CliError::File {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(read_instance(BufReader::new(file))?)
}

fn with_output<F>(path: Option<&Path>, stdout: &mut dyn Write, f: F) -> Result<(), CliError>
where
    F: FnOnce(&mut dyn Write) -> std::io::Result<()>,
{
    match path {
        Some(p) => {
            let file = File::create(p).map_err(|source| CliError::File {
                path: p.to_path_buf(),
                source,
            })?;
            let mut w = BufWriter::new(file);
            f(&mut w)?;
            w.flush()?;
        }
        None => f(stdout)?,
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::Value;

    fn call(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = run(
            std::iter::once("rigclique").chain(args.iter().copied()),
            &mut out,
            &mut err,
        );
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn usage_errors() {
        assert_eq!(call(&[]).0, EXIT_USAGE);
        assert_eq!(call(&["bogus"]).0, EXIT_USAGE);
        assert_eq!(call(&["predict", "h", "--frobnicate"]).0, EXIT_USAGE);
        let (code, _, err) = call(&["predict", "h"]);
        assert_eq!(code, EXIT_USAGE);
        assert!(err.contains("--k"));
        let (code, out, _) = call(&["--help"]);
        assert_eq!(code, EXIT_OK);
        assert!(out.contains("Usage"));
    }

    #[test]
    fn predict_finite_variance() {
        let (code, out, _) = call(&["predict", "finite-variance", "--n", "1000000"]);
        assert_eq!(code, EXIT_OK);
        let v: Value = serde_json::from_str(&out).unwrap();
        assert!((v["value"].as_f64().unwrap() - 5.261).abs() < 1e-3);
        assert_eq!(call(&["predict", "finite-variance", "--n", "10"]).0, EXIT_RUNTIME);
    }

    #[test]
    fn predict_other_formulas() {
        let value = |args: &[&str]| -> Value {
            let (code, out, err) = call(args);
            assert_eq!(code, EXIT_OK, "{err}");
            serde_json::from_str::<Value>(&out).unwrap()["value"].clone()
        };
        assert_eq!(value(&["predict", "h", "--k", "6"]), json!(6));
        let th = value(&["predict", "thresholds", "--n", "10000"]);
        assert!((th["theta2"].as_f64().unwrap() - 151.74).abs() < 0.01);
        let root = value(&["predict", "lambert-root", "--a", "1", "--b", "1"]);
        assert!((root["z"].as_f64().unwrap() - 1.0).abs() < 1e-12);
        let neg = value(&["predict", "lambert-root", "--a", "-3", "--b", "2"]);
        assert!(neg["z"].as_f64().unwrap() > 0.0);
        assert!((value(&["predict", "t", "--k", "1", "--p", "1"]).as_f64().unwrap() - 388.5).abs() < 0.05);
        assert!(
            (value(&["predict", "rainbow-bound", "--sizes", "1,1", "--m", "2"])
                .as_f64()
                .unwrap()
                - 0.5)
                .abs()
                < 1e-15
        );
        let d = value(&[
            "predict",
            "degree-moments",
            "--n",
            "100",
            "--law",
            r#"{"kind":"Deterministic","x_fixed":3}"#,
        ]);
        assert_eq!(d["mean_d"], json!(9.0));
        let e = value(&["predict", "edge-prob", "--x1", "1", "--x2", "1", "--m", "2"]);
        assert_eq!(e["lower"], json!(0.25));
        assert!(
            (value(&["predict", "powerlaw-clique", "--n", "1000000"])
                .as_f64()
                .unwrap()
                - 12.4816)
                .abs()
                < 1e-3
        );
    }

    #[test]
    fn maxload_modes() {
        let (code, out, _) = call(&["maxload", "2", "2", "--exact"]);
        assert_eq!(code, EXIT_OK);
        let v: Value = serde_json::from_str(&out).unwrap();
        assert_eq!(v["pmf"]["1"], json!(0.5));
        let (code, out, _) = call(&["maxload", "5", "3", "--trials", "100", "--seed", "9"]);
        assert_eq!(code, EXIT_OK);
        assert_eq!(serde_json::from_str::<Value>(&out).unwrap()["trials"], json!(100));
        assert_eq!(call(&["maxload", "5", "3"]).0, EXIT_USAGE);
        assert_eq!(call(&["maxload", "500", "3", "--exact"]).0, EXIT_RUNTIME);
    }

    #[test]
    fn missing_file_is_a_runtime_error() {
        let (code, _, err) = call(&["graph", "/nonexistent/instance.txt"]);
        assert_eq!(code, EXIT_RUNTIME);
        assert!(err.contains("/nonexistent/instance.txt"));
    }

    #[test]
    fn bad_law_is_a_usage_error() {
        assert_eq!(call(&["gen", "--n", "3", "--m", "3", "--law", "{}"]).0, EXIT_USAGE);
        assert_eq!(
            call(&["gen", "--n", "3", "--m", "3", "--law", r#"{"kind":"Binomial","p":3}"#]).0,
            EXIT_USAGE
        );
    }
}
