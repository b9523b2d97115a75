//! Command-line front end: run experiments, tune schedules, exercise the
//! exact-kernel checks, and summarize run artifacts.
//!
//! Exit codes: 0 on success, 2 on configuration or validation errors, 3 on
//! runtime failures.

use clap::{Args, Parser, Subcommand};
use ptdlp::error::Error;
use ptdlp::harness::{
    rerun_from_manifest, run_experiment, ExperimentConfig, ExperimentKind, Manifest,
};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "ptdlp",
    version,
    about = "Parallel-tempered discrete Langevin samplers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Experiment configuration (TOML).
    #[arg(long, conflicts_with = "manifest")]
    config: Option<PathBuf>,
    /// Re-run a previously written manifest.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Override the config's seed list with a single master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (defaults to the config's `output.directory`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (defaults to the number of cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured experiment.
    Run(CommonArgs),
    /// Run only the schedule-tuning phase and write the tuner report.
    Tune(CommonArgs),
    /// Run the exact-kernel verification suite.
    Oracle(CommonArgs),
    /// Summarize the artifacts in an output directory.
    Report {
        /// Directory holding manifest.json and the run outputs.
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(cause) = source {
                eprintln!("  caused by: {cause}");
                source = cause.source();
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn configure_threads(threads: Option<usize>) -> Result<(), Error> {
    if let Some(n) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Run(args) => execute(args, None),
        Command::Tune(args) => execute(args, Some(ExperimentKind::TuneOnly)),
        Command::Oracle(args) => execute(args, Some(ExperimentKind::OracleSuite)),
        Command::Report { out } => report(&out),
    }
}

fn execute(args: CommonArgs, force_kind: Option<ExperimentKind>) -> Result<(), Error> {
    configure_threads(args.threads)?;
    if let Some(manifest) = &args.manifest {
        let out = args
            .out
            .clone()
            .ok_or_else(|| Error::Config("--out is required with --manifest".to_string()))?;
        let artifacts = rerun_from_manifest(manifest, &out)?;
        println!("re-ran manifest into {}", artifacts.out_dir.display());
        return Ok(());
    }
    let config_path = args
        .config
        .ok_or_else(|| Error::Config("--config is required".to_string()))?;
    let mut config = ExperimentConfig::load(&config_path)?;
    if let Some(kind) = force_kind {
        config.kind = kind;
        config.validate()?;
    }
    if let Some(seed) = args.seed {
        config.run.seeds = vec![seed];
    }
    let out = args
        .out
        .unwrap_or_else(|| PathBuf::from(&config.output.directory));
    let artifacts = run_experiment(&config, &out)?;
    println!("wrote artifacts to {}", artifacts.out_dir.display());
    if let Some(path) = &artifacts.metrics_path {
        println!("metrics: {}", path.display());
    }
    if let Some(path) = &artifacts.tuner_report_path {
        println!("tuner report: {}", path.display());
    }
    if let Some(path) = &artifacts.oracle_report_path {
        println!("oracle report: {}", path.display());
    }
    Ok(())
}

fn report(out: &PathBuf) -> Result<(), Error> {
    let manifest_path = out.join("manifest.json");
    let text = std::fs::read_to_string(&manifest_path).map_err(|source| Error::Io {
        path: manifest_path.display().to_string(),
        source,
    })?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: manifest_path.display().to_string(),
        message: e.to_string(),
    })?;
    let config_ok =
        ptdlp::harness::hex_sha256(manifest.config_toml.as_bytes()) == manifest.config_sha256;
    println!("kind:            {}", manifest.kind);
    println!("crate version:   {}", manifest.crate_version);
    println!("csv schema:      {}", manifest.csv_schema_version);
    println!(
        "config sha256:   {} ({})",
        manifest.config_sha256,
        if config_ok { "verified" } else { "MISMATCH" }
    );
    if !config_ok {
        return Err(Error::Config(
            "manifest config hash does not match its embedded config".to_string(),
        ));
    }
    for name in [
        "metrics.csv",
        "tuner_report.json",
        "oracle_report.csv",
        "training_log.csv",
        "checkpoint.json",
    ] {
        let path = out.join(name);
        if path.exists() {
            println!("artifact:        {name}");
        }
    }
    let metrics = out.join("metrics.csv");
    if metrics.exists() {
        let text = std::fs::read_to_string(&metrics).map_err(|source| Error::Io {
            path: metrics.display().to_string(),
            source,
        })?;
        println!("--- metrics.csv ---");
        print!("{text}");
    }
    Ok(())
}
