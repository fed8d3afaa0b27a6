//! `saco`: command-line front end for the faithfulness evaluation engine.

use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use saco_core::predictor::server::{serve_stdio, HttpServer};
use saco_core::predictor::{PredictorSpec, RemoteOptions};
use saco_core::run::{
    config_schema, emit_curve_data, run_correlate, run_evaluate, run_random_baseline,
    validate_adapter, write_synthetic_dataset, Overrides, RemoteConfig, RunConfig, SynthOptions,
    K_SWEEP,
};
use saco_core::Error;

const EXIT_CONFIG: u8 = 1;
const EXIT_PARTIAL: u8 = 2;
const EXIT_UNREACHABLE: u8 = 3;

#[derive(Parser)]
#[command(
    name = "saco",
    version,
    about = "Salience-guided faithfulness evaluation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Score every salience map in a dataset with SaCo and the four
    /// cumulative metrics.
    Evaluate {
        #[command(flatten)]
        run: RunArgs,
        /// Repeat the run for each K in 5, 10 and 20, writing to
        /// <out-dir>/k<K>.
        #[arg(long)]
        k_sweep: bool,
    },
    /// Score uniform random maps to estimate the metrics' chance level.
    RandomBaseline {
        #[command(flatten)]
        run: RunArgs,
        /// Random maps per image.
        #[arg(long, default_value_t = 1000)]
        n: usize,
    },
    /// Rank correlations between SaCo and the other metrics.
    Correlate {
        /// Run manifests to combine.
        #[arg(required = true)]
        manifests: Vec<PathBuf>,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Export per-subset and cumulative curve series for one sample.
    Curve {
        /// Run manifest.
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        sample: String,
        #[arg(long)]
        method: Option<String>,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check that a predictor speaks the prediction protocol correctly.
    ValidateAdapter {
        #[arg(long)]
        predictor: String,
        #[arg(long, default_value_t = 30)]
        timeout_secs: u64,
    },
    /// Expose a builtin predictor over the prediction protocol.
    Serve {
        #[arg(long)]
        predictor: String,
        /// Listen address for HTTP, e.g. 127.0.0.1:8080.
        #[arg(long, conflicts_with = "stdio", required_unless_present = "stdio")]
        http: Option<String>,
        /// Newline-delimited JSON on stdin/stdout.
        #[arg(long)]
        stdio: bool,
    },
    /// Write a synthetic dataset with a linear model and reference maps.
    Synth {
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 10)]
        samples: usize,
        #[arg(long, default_value_t = 8)]
        height: usize,
        #[arg(long, default_value_t = 8)]
        width: usize,
        #[arg(long, default_value_t = 3)]
        channels: usize,
        #[arg(long, default_value_t = 2)]
        classes: usize,
        #[arg(long, default_value_t = 10)]
        k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Print the JSON Schema for run configs.
    Schema,
}

#[derive(Args)]
struct RunArgs {
    /// JSON run config.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset manifest.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// builtin:<spec>, http:<url> or stdio:<command>.
    #[arg(long)]
    predictor: Option<String>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

impl RunArgs {
    fn resolve(&self) -> Result<RunConfig, Error> {
        let overrides = Overrides {
            dataset: self.dataset.clone(),
            predictor: self.predictor.clone(),
            k: self.k,
            seed: self.seed,
            workers: self.workers,
            out_dir: self.out_dir.clone(),
        };
        RunConfig::resolve(self.config.as_deref(), &overrides)
    }
}

fn exit_for(err: &Error) -> u8 {
    if err.is_transport() {
        EXIT_UNREACHABLE
    } else {
        EXIT_CONFIG
    }
}

fn print_json<T: Serialize>(value: &T) -> Result<(), Error> {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value).map_err(|e| Error::Validation(e.to_string()))?;
    writeln!(out).map_err(|e| Error::Validation(e.to_string()))
}

fn evaluate_once(config: &RunConfig) -> Result<u8, Error> {
    let outcome = run_evaluate(config)?;
    let m = &outcome.manifest;
    println!(
        "{} maps evaluated, {} failed; manifest {}",
        m.results.len(),
        m.failures.len(),
        outcome.manifest_path.display()
    );
    Ok(if outcome.predictor_unreachable() {
        EXIT_UNREACHABLE
    } else if outcome.has_failures() {
        EXIT_PARTIAL
    } else {
        0
    })
}

fn run(cli: Cli) -> Result<u8, Error> {
    match cli.command {
        Command::Evaluate { run, k_sweep } => {
            let config = run.resolve()?;
            if !k_sweep {
                return evaluate_once(&config);
            }
            let mut code = 0;
            for k in K_SWEEP {
                let swept = RunConfig {
                    k,
                    out_dir: config.out_dir.join(format!("k{k}")),
                    ..config.clone()
                };
                code = code.max(evaluate_once(&swept)?);
            }
            Ok(code)
        }
        Command::RandomBaseline { run, n } => {
            let config = run.resolve()?;
            let summary = run_random_baseline(&config, n)?;
            print_json(&summary)?;
            Ok(if summary.failures.iter().any(|f| f.transport) {
                EXIT_UNREACHABLE
            } else if summary.failures.is_empty() {
                0
            } else {
                EXIT_PARTIAL
            })
        }
        Command::Correlate { manifests, out_dir } => {
            let output = run_correlate(&manifests, &out_dir)?;
            println!(
                "{:<10} {:<10} {:>9} {:>9}",
                "metric", "vs", "spearman", "kendall"
            );
            let cell = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"));
            for p in &output.average.pairs {
                println!(
                    "{:<10} {:<10} {:>9} {:>9}",
                    p.metric_a,
                    p.metric_b,
                    cell(p.spearman),
                    cell(p.kendall)
                );
            }
            println!(
                "{:<10} {:<10} {:>9} {:>9}",
                "incumbents",
                "mean",
                cell(output.average.intra_incumbent_spearman),
                cell(output.average.intra_incumbent_kendall)
            );
            Ok(0)
        }
        Command::Curve {
            run,
            sample,
            method,
            out,
        } => {
            let data = emit_curve_data(&run, &sample, method.as_deref())?;
            match out {
                Some(path) => write_file(&path, &data)?,
                None => print_json(&data)?,
            }
            Ok(0)
        }
        Command::ValidateAdapter {
            predictor,
            timeout_secs,
        } => {
            let spec: PredictorSpec = predictor.parse()?;
            let options = RemoteOptions {
                timeout: std::time::Duration::from_secs(timeout_secs),
                ..RemoteConfig::default().options()
            };
            let report = validate_adapter(&spec, &options)?;
            for c in &report.checks {
                println!(
                    "{} {}: {}",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.name,
                    c.detail
                );
            }
            Ok(if report.passed() { 0 } else { EXIT_PARTIAL })
        }
        Command::Serve {
            predictor,
            http,
            stdio,
        } => {
            let spec: PredictorSpec = predictor.parse()?;
            if spec.is_remote() {
                return Err(Error::Config(
                    "serve only exposes builtin predictors".into(),
                ));
            }
            let p = spec.connect(&RemoteOptions::default())?;
            if stdio {
                serve_stdio(
                    p.as_ref(),
                    BufReader::new(io::stdin().lock()),
                    io::stdout().lock(),
                )?;
            } else if let Some(addr) = http {
                let server = HttpServer::spawn(Arc::from(p), &addr)?;
                eprintln!("listening on {}", server.url());
                server.join();
            }
            Ok(0)
        }
        Command::Synth {
            out_dir,
            samples,
            height,
            width,
            channels,
            classes,
            k,
            seed,
        } => {
            let opts = SynthOptions {
                samples,
                height,
                width,
                channels,
                classes,
                k,
                seed,
            };
            let config = write_synthetic_dataset(&out_dir, &opts)?;
            println!("{}", config.display());
            Ok(0)
        }
        Command::Schema => {
            print_json(&config_schema())?;
            Ok(0)
        }
    }
}

fn write_file<T: Serialize>(path: &Path, value: &T) -> Result<(), Error> {
    let mut bytes =
        serde_json::to_vec_pretty(value).map_err(|e| Error::Validation(e.to_string()))?;
    bytes.push(b'\n');
    std::fs::write(path, bytes).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(0) => ExitCode::SUCCESS,
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_for(&e))
        }
    }
}
