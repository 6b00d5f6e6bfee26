use clap::{Parser, Subcommand};
use efree_cli::{CliError, Experiment, RunOptions};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

#[derive(Parser)]
#[command(name = "efree", version, about = "Run and validate equation-free lifting experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write its tables and manifest.
    Run {
        experiment: Experiment,
        /// Config file (`key = value` with dotted sections) or a manifest.json.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Parameter override, repeatable.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        sets: Vec<String>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Re-run the checks of a manifest against its written tables.
    Validate { manifest: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { experiment, config, sets, out, seed } => {
            let start = Instant::now();
            let r = efree_cli::run(experiment, &RunOptions { config, sets, out: out.clone(), seed });
            if r.is_ok() {
                eprintln!("{} finished in {:.2} s, outputs in {}", experiment.name(), start.elapsed().as_secs_f64(), out.display());
            }
            r
        }
        Command::Validate { manifest } => efree_cli::validate(&manifest),
    };
    match result {
        Ok(m) => {
            print!("{}", m.report());
            if m.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if matches!(e, CliError::Usage(_) | CliError::Param { .. }) { 2 } else { 1 })
        }
    }
}
