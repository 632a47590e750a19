//! Command-line driver for the propinquity experiments.
//!
//! Subcommands map one to one onto the library pipelines: `verify-lemmas`,
//! `propinquity` (the per-cell certification table), `circle-demo` (the full
//! continuity pipeline) and `report` (aggregation of finished runs). Every
//! flag can also be set through a `PROPINQUITY_*` environment variable. The
//! exit status is zero exactly when every contracted inequality of the run
//! certified.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use propinquity::experiment::{execute, run_report, write_run, ExperimentManifest, RunKind};

#[derive(Parser)]
#[command(
    name = "propinquity",
    version,
    about = "Certified propinquity bounds for Dirac operator families on the circle"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Verify the quantitative lemma battery for the manifest's scenario.
    VerifyLemmas(RunArgs),
    /// Certify every (epsilon, t) cell of the manifest.
    Propinquity(RunArgs),
    /// Run the full circle continuity pipeline.
    CircleDemo(RunArgs),
    /// Aggregate finished run directories into plot-ready tables.
    Report(ReportArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Experiment manifest (JSON).
    #[arg(long, env = "PROPINQUITY_MANIFEST")]
    manifest: PathBuf,
    /// Output directory for summary.json, table.csv and lemma_checks.csv.
    #[arg(long, env = "PROPINQUITY_OUT", default_value = "propinquity-out")]
    out: PathBuf,
    /// Override the manifest's master seed.
    #[arg(long, env = "PROPINQUITY_SEED")]
    seed: Option<u64>,
    /// Override the manifest's worker-thread count.
    #[arg(long, env = "PROPINQUITY_THREADS")]
    threads: Option<usize>,
    /// Override the certification tolerance.
    #[arg(long, env = "PROPINQUITY_TOLERANCE")]
    tolerance: Option<f64>,
}

#[derive(Args)]
struct ReportArgs {
    /// Finished run directories to aggregate.
    #[arg(required = true)]
    runs: Vec<String>,
    #[arg(long, env = "PROPINQUITY_OUT", default_value = "propinquity-report")]
    out: PathBuf,
}

fn load_manifest(args: &RunArgs) -> Result<ExperimentManifest> {
    let text = std::fs::read_to_string(&args.manifest)
        .with_context(|| format!("reading manifest {}", args.manifest.display()))?;
    let mut manifest = ExperimentManifest::from_json(&text)?;
    if let Some(seed) = args.seed {
        manifest.seeds.master = seed;
    }
    if let Some(threads) = args.threads {
        manifest.threads = threads;
    }
    if let Some(tolerance) = args.tolerance {
        manifest.tolerances.cert = tolerance;
    }
    manifest.validate()?;
    Ok(manifest)
}

fn run(kind: RunKind, args: &RunArgs) -> Result<bool> {
    let manifest = load_manifest(args)?;
    let output = execute(kind, &manifest)?;
    write_run(&args.out, &output)?;
    println!(
        "{}: scenario '{}' -> {} ({})",
        match kind {
            RunKind::VerifyLemmas => "verify-lemmas",
            RunKind::Propinquity => "propinquity",
            RunKind::CircleDemo => "circle-demo",
        },
        manifest.scenario,
        if output.ok {
            "all checks certified"
        } else {
            "CHECK FAILURES"
        },
        args.out.display()
    );
    Ok(output.ok)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::VerifyLemmas(args) => run(RunKind::VerifyLemmas, args),
        Command::Propinquity(args) => run(RunKind::Propinquity, args),
        Command::CircleDemo(args) => run(RunKind::CircleDemo, args),
        Command::Report(args) => run_report(&args.runs, &args.out)
            .map(|_| true)
            .map_err(Into::into),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}
