use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use simtrans_core::cli::{self, CliError};

#[derive(Parser)]
#[command(
    name = "simtrans",
    version,
    about = "Spin-boson TEBD under a similarity transformation"
)]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one trajectory and write <prefix>.csv
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<String>,
    },
    /// Run one trajectory per β and write per-β CSVs plus <prefix>_summary.json
    SweepBeta {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<String>,
    },
    /// S_eff of a GHZ state with e^{βσz} on its first k spins, k = 0..n
    GhzBench {
        #[arg(long, default_value_t = 10)]
        n_spins: usize,
        #[arg(long, default_value_t = 0.1, allow_negative_numbers = true)]
        beta: f64,
        #[arg(long, default_value = "ghz")]
        out: String,
    },
    /// Compare the MPS trajectory against exact dense propagation
    OracleCheck {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<String>,
        #[arg(long)]
        tolerance: Option<f64>,
    },
}

fn dispatch(command: Command) -> Result<String, CliError> {
    match command {
        Command::Run { config, out } => {
            let path = cli::cmd_run(&config, out.as_deref())?;
            Ok(format!("wrote {}", path.display()))
        }
        Command::SweepBeta { config, out } => {
            let outcome = cli::cmd_sweep_beta(&config, out.as_deref())?;
            Ok(format!(
                "wrote {} trajectories and {}",
                outcome.csv_paths.len(),
                outcome.summary_path.display()
            ))
        }
        Command::GhzBench { n_spins, beta, out } => {
            let (path, rows) = cli::cmd_ghz_bench(n_spins, beta, &out)?;
            Ok(format!("wrote {} rows to {}", rows.len(), path.display()))
        }
        Command::OracleCheck { config, out, tolerance } => {
            let (path, cmp) = cli::cmd_oracle_check(&config, out.as_deref(), tolerance)?;
            Ok(format!(
                "max deviation {:.3e}; wrote {}",
                cmp.max_deviation,
                path.display()
            ))
        }
    }
}

fn main() -> ExitCode {
    let args = Args::parse();
    match dispatch(args.command) {
        Ok(msg) => {
            println!("{msg}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
