use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

mod commands;
mod config;
mod output;

use config::{Overrides, RunConfig};

#[derive(Parser)]
#[command(name = "dynsparse", version, about = "Dynamic variable selection for time-varying-parameter regressions")]
struct Cli {
    /// TOML config; command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the variational model and write coefficient, inclusion and volatility paths.
    Fit {
        #[command(flatten)]
        over: Overrides,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate synthetic datasets from a pattern spec.
    Simulate {
        #[command(flatten)]
        over: Overrides,
        /// TOML simulation spec (n, noise_var, predictors).
        #[arg(long)]
        pattern: Option<PathBuf>,
        #[arg(long)]
        replicates: Option<usize>,
        /// Also fit every replicate and score the selection against the truth.
        #[arg(long)]
        evaluate: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare variational marginals against Gibbs draws on the same data (homoskedastic, no pruning).
    CompareMcmc {
        #[command(flatten)]
        over: Overrides,
        /// Kept draws (after burn-in).
        #[arg(long)]
        draws: Option<usize>,
        #[arg(long)]
        burnin: Option<usize>,
        /// Write every kept draw to draws.csv.
        #[arg(long)]
        export_draws: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Out-of-sample forecasts against a recursive-mean benchmark.
    Forecast {
        #[command(flatten)]
        over: Overrides,
        /// `expanding:N` or `rolling:N`.
        #[arg(long)]
        scheme: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Summarise an output directory.
    Report { dir: PathBuf },
}

fn init_threads() -> Result<()> {
    if let Ok(v) = std::env::var("DYNSPARSE_THREADS") {
        let n: usize = v.parse().with_context(|| format!("DYNSPARSE_THREADS='{v}' is not a positive integer"))?;
        rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global()?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    init_threads()?;
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::Fit { over, out } => {
            over.apply(&mut cfg);
            commands::cmd_fit(&cfg, &out)
        }
        Command::Simulate {
            over,
            pattern,
            replicates,
            evaluate,
            out,
        } => {
            over.apply(&mut cfg);
            if pattern.is_some() {
                cfg.pattern = pattern;
            }
            if let Some(r) = replicates {
                cfg.replicates = r;
            }
            commands::cmd_simulate(&cfg, &out, evaluate)
        }
        Command::CompareMcmc {
            over,
            draws,
            burnin,
            export_draws,
            out,
        } => {
            over.apply(&mut cfg);
            if let Some(d) = draws {
                cfg.draws = d;
            }
            if let Some(b) = burnin {
                cfg.burnin = b;
            }
            commands::cmd_compare_mcmc(&cfg, &out, export_draws)
        }
        Command::Forecast { over, scheme, out } => {
            over.apply(&mut cfg);
            if scheme.is_some() {
                cfg.scheme = scheme;
            }
            commands::cmd_forecast(&cfg, &out)
        }
        Command::Report { dir } => {
            print!("{}", commands::cmd_report(&dir)?);
            Ok(())
        }
    }
}

fn main() {
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
