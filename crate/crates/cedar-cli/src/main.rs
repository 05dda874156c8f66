use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

use cedar_cli::config::{FigureId, RunConfig};
use cedar_cli::{figures, pipeline, verify};

/// Optimal excess-of-loss reinsurance and investment with a defaultable
/// bond: solver, figure-data and verification pipeline.
#[derive(Parser)]
#[command(name = "cedar", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the post- and pre-default field equations and write the CSV
    /// artifacts plus a checksummed manifest.
    Solve {
        #[arg(long)]
        config: PathBuf,
    },
    /// Emit figure data CSVs (fig1..fig7).
    Figures {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated subset, e.g. `fig1,fig5`; defaults to the
        /// config's `figures` list, or all figures when that is empty.
        #[arg(long, value_delimiter = ',')]
        which: Option<Vec<FigureId>>,
    },
    /// Run the wealth Monte Carlo under the solved optimal strategy.
    Simulate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run the verification suite and write a machine-readable report.
    Verify {
        #[arg(long)]
        config: PathBuf,
        /// Reduced grid and path counts; qualitative reruns of every check.
        #[arg(long)]
        quick: bool,
    },
}

fn run() -> Result<bool> {
    match Cli::parse().command {
        Command::Solve { config } => {
            let cfg = RunConfig::load(&config)?;
            let artifacts = pipeline::run_solve(&cfg, &cfg.outputs)?;
            println!(
                "solved {}x{} grid; sandwich {}; artifacts in {}",
                artifacts.spec.n_space,
                artifacts.spec.n_time,
                if artifacts.manifest.sandwich.pass { "pass" } else { "FAIL" },
                cfg.outputs.display()
            );
            Ok(artifacts.manifest.sandwich.pass
                && artifacts.manifest.hp_zero_reduction.map_or(true, |r| r.pass))
        }
        Command::Figures { config, which } => {
            let cfg = RunConfig::load(&config)?;
            let list = match which {
                Some(w) if !w.is_empty() => w,
                _ if !cfg.figures.is_empty() => cfg.figures.clone(),
                _ => FigureId::ALL.to_vec(),
            };
            figures::run_figures(&cfg, &list, &cfg.outputs)?;
            println!(
                "wrote {} figure file(s) to {}",
                list.len(),
                cfg.outputs.display()
            );
            Ok(true)
        }
        Command::Simulate { config } => {
            let cfg = RunConfig::load(&config)?;
            pipeline::run_simulate(&cfg, &cfg.outputs)?;
            println!("simulation artifacts in {}", cfg.outputs.display());
            Ok(true)
        }
        Command::Verify { config, quick } => {
            let cfg = RunConfig::load(&config)?;
            let report = verify::run_verify(&cfg, quick)?;
            report.print_lines();
            println!(
                "verification {}",
                if report.all_pass { "passed" } else { "FAILED" }
            );
            Ok(report.all_pass)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
