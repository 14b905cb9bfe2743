use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use skinsim::runner::{self, RunOptions};
use skinsim::{analyze, CliError, RunConfig};

#[derive(Parser)]
#[command(name = "skinsim", version, about = "Monitored free-fermion chain with feedback")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a JSON config.
    Run {
        config: PathBuf,
        /// Worker threads (default: SKINSIM_WORKERS or all cores).
        #[arg(long)]
        workers: Option<usize>,
        /// Output directory (default: `output` or runs/<label>, under SKINSIM_OUT).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit every series.csv in a run or sweep directory; writes fits.json there.
    Analyze { dir: PathBuf },
}

fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run { config, workers, out } => {
            let cfg = RunConfig::from_path(&config)?;
            let opts = RunOptions {
                workers: runner::resolve_workers(workers),
                out_dir: runner::resolve_out_dir(out.as_deref(), &cfg),
            };
            runner::run(&cfg, &opts)?;
            println!("{}", opts.out_dir.display());
            Ok(())
        }
        Command::Analyze { dir } => {
            let fits = analyze::analyze_dir(&dir, &dir)?;
            println!("{} series analyzed, fits in {}", fits.entries.len(), dir.join("fits.json").display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("skinsim: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
