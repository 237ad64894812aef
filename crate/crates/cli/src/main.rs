//! `aloo`: fits, estimator comparisons, tuning runs and timing benchmarks for
//! approximate leave-one-out cross validation.

mod commands;
mod config;
mod error;
mod report;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use aloocv::models::ModelFamily;
use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;

use crate::config::{Algorithm, Config, LambdaSpec, Source};
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "aloo", version, about = "Approximate leave-one-out cross validation")]
struct Cli {
    /// Worker threads for per-sample computations (0 = one per core).
    #[arg(long, env = "ALOOCV_THREADS", global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit one model and report θ̂ with convergence diagnostics.
    Fit(Common),
    /// Compare exact LOOCV, the approximation and the influence baseline over a λ grid.
    Compare {
        #[command(flatten)]
        common: Common,
        /// Skip exact leave-one-out refits.
        #[arg(long)]
        no_exact: bool,
        #[arg(long)]
        no_influence: bool,
        /// Uniform weights to sweep, comma separated.
        #[arg(long, value_delimiter = ',')]
        lambda_grid: Option<Vec<f64>>,
    },
    /// Tune λ by descending the approximate leave-one-out loss.
    Tune {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_parser = parse_enum::<Algorithm>)]
        algorithm: Option<Algorithm>,
        #[arg(long)]
        epochs: Option<usize>,
        /// Initial step size of the default step rule.
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        lower_bound: Option<f64>,
    },
    /// Time exact LOOCV against the approximation across sample sizes.
    Bench {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',')]
        n_grid: Option<Vec<usize>>,
        #[arg(long)]
        repeats: Option<usize>,
    },
    /// Write a synthetic dataset (and its θ*) to CSV.
    Synth(Common),
}

/// Options shared by every subcommand; flags override the config file.
#[derive(Debug, Args)]
struct Common {
    /// JSON configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory for reports.
    #[arg(long, default_value = "aloo-out")]
    out_dir: PathBuf,
    /// synth_ridge, synth_elastic, synth_logistic or csv.
    #[arg(long, value_parser = parse_enum::<Source>)]
    source: Option<Source>,
    /// CSV input (implies --source csv).
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    label: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// ridge, ridge_diagonal, logistic or elastic_net.
    #[arg(long, value_parser = parse_enum::<ModelFamily>)]
    family: Option<ModelFamily>,
    /// One weight for every regularizer, or a comma-separated list.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    lambda: Option<Vec<f64>>,
    #[arg(long)]
    tolerance: Option<f64>,
    #[arg(long)]
    max_iterations: Option<usize>,
}

/// Parses snake_case names through the types' own serde definitions.
fn parse_enum<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

impl Common {
    fn apply(&self, c: &mut Config) {
        let d = &mut c.dataset;
        if let Some(s) = self.source {
            d.source = s;
        }
        if let Some(path) = &self.data {
            d.source = Source::Csv;
            d.path = Some(path.clone());
        }
        if let Some(l) = &self.label {
            d.label_column = l.clone();
        }
        if let Some(n) = self.n {
            d.n = n;
        }
        if let Some(p) = self.p {
            d.p = p;
        }
        if let Some(seed) = self.seed {
            d.seed = seed;
        }
        if let Some(f) = self.family {
            c.model.family = f;
        }
        if let Some(l) = &self.lambda {
            c.model.lambda = match l.as_slice() {
                [v] => LambdaSpec::Uniform(*v),
                _ => LambdaSpec::PerTerm(l.clone()),
            };
        }
        if let Some(t) = self.tolerance {
            c.solver.gradient_tolerance = t;
        }
        if let Some(m) = self.max_iterations {
            c.solver.max_iterations = m;
        }
    }
}

fn resolve(common: &Common, extra: impl FnOnce(&mut Config)) -> Result<(Config, &Path), CliError> {
    let mut config = Config::load(common.config.as_deref())?;
    common.apply(&mut config);
    extra(&mut config);
    config.validate()?;
    std::fs::create_dir_all(&common.out_dir)?;
    Ok((config, &common.out_dir))
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::Validation(format!("thread pool: {e}")))?;
    }
    match &cli.command {
        Command::Fit(common) => {
            let (config, out) = resolve(common, |_| {})?;
            commands::cmd_fit(&config, out)
        }
        Command::Compare {
            common,
            no_exact,
            no_influence,
            lambda_grid,
        } => {
            let (config, out) = resolve(common, |c| {
                c.estimator.exact &= !no_exact;
                c.estimator.influence &= !no_influence;
                if let Some(g) = lambda_grid {
                    c.estimator.lambda_grid = g.iter().map(|&l| LambdaSpec::Uniform(l)).collect();
                }
            })?;
            commands::cmd_compare(&config, out)
        }
        Command::Tune {
            common,
            algorithm,
            epochs,
            alpha,
            lower_bound,
        } => {
            let (config, out) = resolve(common, |c| {
                if let Some(a) = algorithm {
                    c.tuner.algorithm = *a;
                }
                if let Some(e) = epochs {
                    c.tuner.max_epochs = *e;
                }
                if let Some(a) = alpha {
                    c.tuner.alpha0 = *a;
                }
                if let Some(b) = lower_bound {
                    c.tuner.lower_bound = *b;
                }
            })?;
            commands::cmd_tune(&config, out)
        }
        Command::Bench { common, n_grid, repeats } => {
            let (config, out) = resolve(common, |c| {
                if let Some(g) = n_grid {
                    c.bench.n_grid = g.clone();
                }
                if let Some(r) = repeats {
                    c.bench.repeats = *r;
                }
            })?;
            commands::cmd_bench(&config, out)
        }
        Command::Synth(common) => {
            let (config, out) = resolve(common, |_| {})?;
            commands::cmd_synth(&config, out)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let err = CliError::Validation(e.to_string());
            eprintln!("{}", serde_json::to_string(&err.record()).expect("record serializes"));
            return ExitCode::from(err.exit_code());
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("{}", serde_json::to_string(&err.record()).expect("record serializes"));
            ExitCode::from(err.exit_code())
        }
    }
}
