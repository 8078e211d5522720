use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ptcfem::cli::{self, RunConfig};

#[derive(Parser)]
#[command(name = "ptcfem", version, about = "Adaptive FEM with regularized pseudo-transient continuation")]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the adaptive loop described by a `key = value` config file.
    Run {
        config: PathBuf,
        /// Output directory; overrides `output_dir` in the config.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Levels whose mesh and solution are dumped, e.g. `0,5,12`.
        #[arg(long, value_name = "K1,K2,...")]
        levels_dump: Option<String>,
    },
    /// Print the per-level summary table of a `levels.csv`.
    Table { levels: PathBuf },
    /// Print `elements,h1_error,eta_total` rows of a `levels.csv`.
    Curve { levels: PathBuf },
}

fn read(path: &PathBuf) -> Result<String, String> {
    std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn execute(command: Command) -> Result<(), String> {
    match command {
        Command::Run { config, out, levels_dump } => {
            let mut cfg = RunConfig::parse(&read(&config)?).map_err(|e| format!("{}: {e}", config.display()))?;
            if let Some(list) = levels_dump {
                cfg.levels_dump = cli::parse_level_list("levels-dump", &list).map_err(|e| e.to_string())?;
            }
            let out_dir = out.or_else(|| cfg.output_dir.clone()).unwrap_or_else(|| PathBuf::from("out"));
            let reports = cli::run(&cfg, &out_dir).map_err(|e| e.to_string())?;
            if let Some(last) = reports.last() {
                eprintln!(
                    "{} levels, last: {} elements, {} with residual {:.3e}; reports in {}",
                    reports.len(),
                    last.elements,
                    last.exit_code,
                    last.final_residual,
                    out_dir.display()
                );
            }
            Ok(())
        }
        Command::Table { levels } => {
            print!("{}", cli::table_report(&read(&levels)?).map_err(|e| e.to_string())?);
            Ok(())
        }
        Command::Curve { levels } => {
            print!("{}", cli::error_curve(&read(&levels)?).map_err(|e| e.to_string())?);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match execute(Args::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
