use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use switchsched::cli::{cmd_lp, cmd_run, cmd_validate, load, CliError, Overrides};

#[derive(Parser)]
#[command(name = "switchsched", version, about = "Base-station activation and scheduling simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Scenario file (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Comma-separated seeds, replacing `run.seeds`.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Slot count, replacing `run.horizon`.
    #[arg(long)]
    horizon: Option<u64>,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            seeds: self.seeds.clone(),
            horizon: self.horizon,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Simulate every seed and write traces, summary and manifest.
    Run {
        #[command(flatten)]
        common: Common,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve the reference LP and print a JSON report.
    Lp {
        #[command(flatten)]
        common: Common,
        /// Capacity gap, replacing `policy.eps_g`.
        #[arg(long)]
        eps_g: Option<f64>,
    },
    /// Check a scenario file and print a short description.
    Validate {
        #[command(flatten)]
        common: Common,
    },
}

fn print_json(value: &impl serde::Serialize) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Runtime(e.to_string()))?;
    match writeln!(std::io::stdout().lock(), "{text}") {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(CliError::Runtime(e.to_string())),
        _ => Ok(()),
    }
}

fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run { common, out } => {
            let loaded = load(&common.config, &common.overrides())?;
            let summary = cmd_run(&loaded, &out)?;
            for r in &summary.runs {
                eprintln!(
                    "seed {}: average cost {:.4}, stability fraction {:.4}",
                    r.seed, r.average_cost, r.stability_fraction
                );
            }
            eprintln!("wrote {}", out.display());
            Ok(())
        }
        Command::Lp { common, eps_g } => {
            let loaded = load(&common.config, &common.overrides())?;
            let report = cmd_lp(&loaded.config, eps_g)?;
            print_json(&report)?;
            if report.status == "optimal" {
                Ok(())
            } else {
                Err(CliError::Infeasible(format!("eps_g = {}", report.eps_g)))
            }
        }
        Command::Validate { common } => {
            let loaded = load(&common.config, &common.overrides())?;
            print_json(&cmd_validate(&loaded.config))
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
