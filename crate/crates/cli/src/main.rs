use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use qheom_cli::commands::{self, CliError};
use qheom_cli::Config;

#[derive(Parser)]
#[command(name = "qheom", version, about = "Two driven qubits in a Lorentzian bath (HEOM)")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Configuration file; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output file (overrides output.path).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads for sweeps.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Accepted for compatibility; nothing is random.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Trajectory CSV of matrix elements, purity and concurrence.
    Run,
    /// Geometric phase per cycle.
    Gp,
    /// Heatmaps over two parameters, one file per requested cycle.
    Sweep,
    /// Oracle checks; exits with 4 if any bound fails.
    Validate,
    /// Checks the configuration and prints it with all defaults filled in.
    Config,
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = match &cli.config {
        Some(path) => commands::load_config(path)?,
        None => Config::default(),
    };
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from(&cfg.output));
    match cli.command {
        Command::Run => {
            let traj = commands::cmd_run(&cfg, &out)?;
            eprintln!("wrote {} samples to {}", traj.len(), out.display());
        }
        Command::Gp => {
            let series = commands::cmd_gp(&cfg, &out)?;
            if !series.degenerate_branches.is_empty() {
                eprintln!(
                    "note: branches {:?} degenerate at tau = 0, resolved arbitrarily",
                    series.degenerate_branches
                );
            }
            eprintln!("wrote {} cycles to {}", series.points.len(), out.display());
        }
        Command::Sweep => {
            let (result, paths) = commands::cmd_sweep(&cfg, &out, cli.threads)?;
            if result.failed() > 0 {
                eprintln!("{} cells failed; see the status column", result.failed());
            }
            for p in paths {
                eprintln!("wrote {}", p.display());
            }
        }
        Command::Validate => {
            let checks = commands::cmd_validate(&cfg, &out)?;
            for c in &checks {
                println!("{}", commands::report_line(c));
            }
        }
        Command::Config => {
            cfg.validate()?;
            print!("{}", cfg.serialize());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("qheom: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
