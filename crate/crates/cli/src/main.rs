use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use cqns_cli::commands::{self, print_json, SbmArgs};
use cqns_cli::manifest::Manifest;
use cqns_cli::CliError;
use cqns_core::market_data::PriceFormat;

#[derive(Parser)]
#[command(name = "cqns", version, about = "Portfolio selection with the Chicago Quantum Net Score")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a price file and summarize each series.
    Ingest {
        #[arg(long)]
        prices: PathBuf,
        #[arg(long, default_value = "long")]
        format: PriceFormat,
        /// Also write a run manifest to this path.
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Apply the data-quality rules and print the validation report.
    Validate {
        #[arg(long)]
        prices: PathBuf,
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        days: usize,
        #[arg(long, default_value_t = 0.0)]
        beta_min: f64,
        #[arg(long, default_value_t = f64::INFINITY)]
        beta_max: f64,
        #[arg(long, default_value = "long")]
        format: PriceFormat,
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Run the two-step search and write a run directory.
    Optimize {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compile the scaled QUBO for a target size and write it to a file.
    ExportQubo {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Minimize an exported QUBO with the simulated bifurcation machine.
    SbmRun {
        #[arg(long)]
        qubo: PathBuf,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        xi0: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        trajectory: Option<PathBuf>,
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Re-verify every score of a finished run directory.
    Report {
        #[arg(long = "in")]
        dir: PathBuf,
    },
}

fn run(cli: Cli, argv: &[String]) -> Result<serde_json::Value, CliError> {
    let stdout_manifest = |name: &str, path: &Option<PathBuf>, inputs: &[(&str, &PathBuf)]| -> Result<(), CliError> {
        if let Some(p) = path {
            let mut m = Manifest::new(name, argv);
            for (k, v) in inputs {
                m = m.with_input(k, v)?;
            }
            m.write(p)?;
        }
        Ok(())
    };
    match cli.command {
        Command::Ingest { prices, format, manifest } => {
            let v = commands::ingest(&prices, format)?;
            stdout_manifest("ingest", &manifest, &[("prices", &prices)])?;
            Ok(v)
        }
        Command::Validate { prices, index, days, beta_min, beta_max, format, manifest } => {
            let v = commands::validate(&prices, &index, days, beta_min, beta_max, format)?;
            stdout_manifest("validate", &manifest, &[("prices", &prices), ("index", &index)])?;
            Ok(v)
        }
        Command::Optimize { config, seed, out } => commands::optimize(&config, seed, out, argv),
        Command::ExportQubo { config, k, out } => commands::export(&config, k, &out, argv),
        Command::SbmRun { qubo, iterations, epsilon, xi0, seed, trajectory, manifest } => {
            let v =
                commands::sbm_run(&SbmArgs { qubo: qubo.clone(), iterations, epsilon, xi0, seed, trajectory }, argv)?;
            stdout_manifest("sbm-run", &manifest, &[("qubo", &qubo)])?;
            Ok(v)
        }
        Command::Report { dir } => commands::report(&dir),
    }
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.render().to_string();
            eprintln!("{}", CliError::usage(msg.trim()).to_json());
            return ExitCode::from(2);
        }
    };
    match run(cli, &argv).and_then(|v| print_json(&v)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code as u8)
        }
    }
}
