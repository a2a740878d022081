//! `otgp`: simulate benchmark data, fit models, run benchmarks and emit
//! band certificates.
//!
//! Exit codes: 0 on success, 1 on any error, 3 when a benchmark finished
//! but at least one cell failed (failures are recorded in the results).

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::Overrides;

#[derive(Parser)]
#[command(name = "otgp", version, about = "Gaussian processes on probability-measure inputs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Base random seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Sectioned `key = value` config file; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory for output files (created if missing).
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// Miscoverage level of the predictive intervals.
    #[arg(long)]
    alpha: Option<f64>,
    /// Write zero wall times so repeated runs are byte-identical.
    #[arg(long)]
    no_timing: bool,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            alpha: self.alpha,
            seed: self.seed,
            no_timing: self.no_timing,
            ..Overrides::default()
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write train.csv, test.csv and latent.csv for one scenario.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        scenario: String,
        /// Samples per cloud.
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Fit one method on a dataset CSV and write its summary.
    Fit {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        method: String,
        /// Training dataset CSV.
        #[arg(long)]
        train: PathBuf,
        /// Summary file name inside the output directory.
        #[arg(long, default_value = "model.txt")]
        out: String,
    },
    /// Simulate, fit, predict and score every (scenario, method, seed) cell.
    Benchmark {
        #[command(flatten)]
        common: Common,
        /// Comma-separated scenario tags or `all`.
        #[arg(long)]
        scenario: String,
        /// Comma-separated method tags or `all`.
        #[arg(long, default_value = "all")]
        method: String,
        /// Number of consecutive seeds starting at `--seed`.
        #[arg(long)]
        seeds: Option<usize>,
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Fit a 1D `p = 1` WGP and certify its credible intervals.
    Certify {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        train: PathBuf,
        /// Inputs at which to evaluate the conservative condition.
        #[arg(long)]
        test: PathBuf,
        /// Lower end of the support interval of the measure class.
        #[arg(long, allow_hyphen_values = true)]
        class_a: f64,
        /// Upper end of the support interval.
        #[arg(long, allow_hyphen_values = true)]
        class_b: f64,
        /// Lipschitz constant of the class quantile functions.
        #[arg(long)]
        class_lipschitz: f64,
        /// Net resolution.
        #[arg(long)]
        tau: f64,
        #[arg(long, default_value_t = 0.05)]
        delta: f64,
        /// Lipschitz constant of the target in W1.
        #[arg(long)]
        lf: f64,
    },
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    let threads = std::env::var("OTGP_THREADS").ok();
    let pool = commands::thread_pool(threads.as_deref())?;
    pool.install(|| match cli.command {
        Command::Simulate { common, scenario, samples } => {
            let o = Overrides {
                samples_per_cloud: samples,
                ..common.overrides()
            };
            commands::simulate(&common.out_dir, common.config.as_deref(), &o, &scenario)
        }
        Command::Fit { common, method, train, out } => {
            commands::fit(&common.out_dir, common.config.as_deref(), &common.overrides(), &method, &train, &out)
        }
        Command::Benchmark {
            common,
            scenario,
            method,
            seeds,
            samples,
        } => {
            let o = Overrides {
                seeds,
                samples_per_cloud: samples,
                ..common.overrides()
            };
            commands::benchmark(&common.out_dir, common.config.as_deref(), &o, &scenario, &method)
        }
        Command::Certify {
            common,
            train,
            test,
            class_a,
            class_b,
            class_lipschitz,
            tau,
            delta,
            lf,
        } => {
            let class = otgp::bounds::MeasureClassSpec::new(class_a, class_b, class_lipschitz)?;
            let req = commands::CertifyRequest {
                train,
                test,
                class,
                tau,
                delta,
                l_f: lf,
            };
            commands::certify(&common.out_dir, common.config.as_deref(), &common.overrides(), &req)
        }
    })
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
