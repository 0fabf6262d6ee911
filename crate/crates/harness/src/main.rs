use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use remdyna_harness::report::{ratio_table, ratio_table_csv, write_aggregates, AGGREGATE_DIR, SUMMARY_FILE, TABLE_FILE};
use remdyna_harness::{run_experiment, worker_count, ExperimentSpec};

#[derive(Parser)]
#[command(name = "remdyna", version, about = "Run and summarize REM-Dyna / ER experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute every job of a spec file.
    Run {
        spec: PathBuf,
        /// Worker threads (default: REMDYNA_WORKERS or all cores).
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Mean and standard-error curves for each configuration.
    Aggregate { dir: PathBuf },
    /// Steps-to-ratio table of a riverswim experiment, as CSV.
    Table { dir: PathBuf },
    /// Parse and validate a spec file without running it.
    Validate { spec: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Run { spec, workers } => {
            let spec = ExperimentSpec::load(&spec)?;
            let workers = workers.unwrap_or_else(worker_count);
            let manifest = run_experiment(&spec, workers)?;
            let failed = manifest.failed().count();
            println!(
                "{} jobs, {} failed; results in {}",
                manifest.jobs.len(),
                failed,
                spec.output_dir.display()
            );
            for job in manifest.failed() {
                eprintln!("job {}: {}", job.id, job.error.as_deref().unwrap_or("unknown error"));
            }
            anyhow::ensure!(failed == 0, "{failed} job(s) failed");
        }
        Command::Aggregate { dir } => {
            let summaries = write_aggregates(&dir)?;
            let summary = dir.join(AGGREGATE_DIR).join(SUMMARY_FILE);
            print!("{}", read(&summary)?);
            eprintln!("{} configurations aggregated", summaries.len());
        }
        Command::Table { dir } => {
            let csv = ratio_table_csv(&ratio_table(&dir)?);
            let path = dir.join(TABLE_FILE);
            fs::write(&path, &csv).with_context(|| format!("cannot write {}", path.display()))?;
            print!("{csv}");
        }
        Command::Validate { spec } => {
            let s = ExperimentSpec::load(&spec)?;
            println!("{}: ok ({} jobs)", spec.display(), s.jobs().len());
        }
    }
    Ok(())
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}
