use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use h1bmo_cli::{
    gen_space, run_checks, write_report, ExperimentConfig, Family, HarnessError, ALL_CHECKS,
};

#[derive(Parser)]
#[command(name = "h1bmo", about = "Verification harness for local h1/bmo theory on finite metric measure spaces", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a space document for one of the built-in families.
    GenSpace {
        #[arg(long)]
        family: Family2,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run checks from a config file or a single named check.
    Run {
        /// JSON experiment configuration; exclusive with --check.
        #[arg(long, conflicts_with_all = ["check", "space", "trials", "seed", "out"])]
        config: Option<PathBuf>,
        /// A single check name (see --list).
        #[arg(long)]
        check: Option<String>,
        /// Space document to run the single check against.
        #[arg(long, requires = "check")]
        space: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List the available check names.
    ListChecks,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum Family2 {
    Cycle,
    Path,
    RandomGeometric,
    Grid,
}

impl From<Family2> for Family {
    fn from(f: Family2) -> Family {
        match f {
            Family2::Cycle => Family::Cycle,
            Family2::Path => Family::Path,
            Family2::RandomGeometric => Family::RandomGeometric,
            Family2::Grid => Family::Grid,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(violations) => {
            if violations == 0 {
                ExitCode::from(0)
            } else {
                eprintln!("{violations} exact check row(s) failed");
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cli: Cli) -> Result<usize, HarnessError> {
    match cli.command {
        Command::GenSpace {
            family,
            n,
            seed,
            out,
        } => {
            let space = gen_space(family.into(), n, seed)?;
            h1bmo_cli::save_space(&space, &out)?;
            println!("wrote {} ({} points)", out.display(), space.n());
            Ok(0)
        }
        Command::ListChecks => {
            for c in ALL_CHECKS {
                println!("{c}");
            }
            Ok(0)
        }
        Command::Run {
            config,
            check,
            space,
            trials,
            seed,
            out,
        } => {
            let config = if let Some(path) = config {
                let text = std::fs::read_to_string(&path)
                    .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
                serde_json::from_str::<ExperimentConfig>(&text)
                    .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?
            } else if let Some(name) = check {
                ExperimentConfig {
                    seed,
                    family: if space.is_some() {
                        Family::File
                    } else {
                        Family::Cycle
                    },
                    sizes: vec![8],
                    trials,
                    checks: vec![name],
                    tolerance: 1e-9,
                    p: 2.0,
                    space_file: space,
                    output: out.unwrap_or_else(|| PathBuf::from("report.csv")),
                }
            } else {
                return Err(HarnessError::Config(
                    "run needs either --config or --check".into(),
                ));
            };
            let start = Instant::now();
            let outcome = run_checks(&config)?;
            write_report(&config, &outcome, start.elapsed().as_millis())?;
            for row in &outcome.rows {
                println!(
                    "{} {} lhs={:.6e} rhs={:.6e} holds={}",
                    row.check, row.instance_id, row.lhs, row.rhs, row.holds
                );
            }
            Ok(outcome.exact_failures)
        }
    }
}
