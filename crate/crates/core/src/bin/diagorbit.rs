use clap::Parser;
use diagorbit::config::{parse_stage_list, ExperimentConfig, Overrides};
use diagorbit::error::Error;
use diagorbit::pipeline::run_experiment;
use std::path::PathBuf;
use std::process::ExitCode;

/// Diagonal-orbit measures, ergodic sums, and coboundary certificates.
#[derive(Parser)]
#[command(name = "diagorbit", version)]
struct Cli {
    /// Experiment config file (JSON)
    #[arg(long)]
    config: PathBuf,
    /// Output directory for report.json and CSV artifacts
    #[arg(long)]
    out: Option<PathBuf>,
    /// RNG seed override
    #[arg(long)]
    seed: Option<u64>,
    /// Max sum length override
    #[arg(long = "n-max")]
    n_max: Option<usize>,
    /// Window horizon override
    #[arg(long)]
    horizon: Option<usize>,
    /// Norm exponent override (1, 2, or inf)
    #[arg(long)]
    p: Option<String>,
    /// Float tolerance override
    #[arg(long)]
    tolerance: Option<f64>,
    /// Comma-separated stage list override
    #[arg(long)]
    stages: Option<String>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(match err {
                Error::Io(_) | Error::State(_) => 1,
                _ => 2,
            })
        }
    }
}

fn run(cli: &Cli) -> diagorbit::Result<bool> {
    let mut config = ExperimentConfig::from_path(&cli.config)?;
    let overrides = Overrides {
        seed: cli.seed,
        n_max: cli.n_max,
        horizon: cli.horizon,
        p: cli.p.clone(),
        tolerance: cli.tolerance,
        stages: cli.stages.as_deref().map(parse_stage_list).transpose()?,
        out: cli.out.as_ref().map(|p| p.display().to_string()),
    };
    config.apply_overrides(&overrides)?;
    config.validate()?;

    let out_dir = PathBuf::from(config.out.clone().unwrap_or_else(|| "out".into()));
    let outcome = run_experiment(&config, &out_dir)?;

    for stage in &outcome.report.stages {
        match &stage.reason {
            Some(reason) => println!("{:<14} {:<8} {reason}", stage.name, stage.status),
            None => println!("{:<14} {}", stage.name, stage.status),
        }
    }
    println!("verdict: {}", outcome.report.verdict);
    println!("report: {}", out_dir.join("report.json").display());
    Ok(outcome.all_passed)
}
