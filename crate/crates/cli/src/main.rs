use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::Parser;
use cpafdm_cli::{run, validate, CliError, Experiment, ExperimentConfig, OutputFormat, Severity};

#[derive(Parser, Debug)]
#[command(
    name = "cpafdm",
    version,
    about = "Seeded CP-AFDM link-level experiments"
)]
struct Args {
    #[arg(value_enum)]
    experiment: Experiment,

    /// TOML config, or JSON when the extension is .json
    #[arg(long)]
    config: PathBuf,

    /// Overrides the master seed from the config.
    #[arg(long)]
    seed: Option<u64>,

    /// Output directory; defaults to the config's `out`, then `results/<experiment>`.
    #[arg(long)]
    out: Option<PathBuf>,

    #[arg(long, value_enum)]
    format: Option<OutputFormat>,

    /// Worker threads; 0 uses every core.
    #[arg(long, env = "CPAFDM_THREADS", default_value_t = 0)]
    threads: usize,

    /// Print diagnostics and exit without running.
    #[arg(long)]
    check: bool,
}

fn main() -> ExitCode {
    let args = Args::parse();
    match execute(&args) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            match e.downcast_ref::<CliError>() {
                Some(CliError::Parse { .. } | CliError::Invalid(_)) => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}

fn execute(args: &Args) -> anyhow::Result<ExitCode> {
    let mut config = ExperimentConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(format) = args.format {
        config.format = format;
    }
    let diags = validate(&config, args.experiment);
    for d in &diags {
        eprintln!("{d}");
    }
    if args.check {
        let failed = diags.iter().any(|d| d.severity == Severity::Error);
        return Ok(if failed {
            ExitCode::from(2)
        } else {
            ExitCode::SUCCESS
        });
    }
    let out = args
        .out
        .clone()
        .or_else(|| config.out.clone())
        .unwrap_or_else(|| PathBuf::from("results").join(args.experiment.name()));
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.threads)
        .build()
        .context("thread pool")?;
    let summary = pool.install(|| run(&config, args.experiment, &out))?;
    for name in &summary.manifest.outputs {
        println!("{}", summary.out_dir.join(name).display());
    }
    println!("{}", summary.out_dir.join("manifest.json").display());
    Ok(ExitCode::SUCCESS)
}
