use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use spectral_lab::lab::{self, Command, ExperimentConfig, LabError, EXIT_OK};

#[derive(Parser)]
#[command(name = "spectral-lab", version, about = "Classical deviations and damped quantum cat map spectra")]
struct Cli {
    /// Flat JSON experiment config; defaults apply to missing keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (results do not depend on this).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Output directory (overrides OUTPUT_DIR and the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand, Clone, Copy)]
enum Sub {
    /// Exact and Monte-Carlo asymptotic variance, and the constant c.
    Variance,
    /// Moderate-deviation probabilities and the extrapolated rate.
    Mdp,
    /// Transfer-operator pressure curve and its Legendre transform.
    Pressure,
    /// Eigenvalues of the damped propagator for every N.
    Spectrum,
    /// Decay-rate concentration reports (fixed and shrinking windows).
    Concentration,
    /// Every stage, with the classical c feeding the quantum bound.
    Full,
    /// Check the config against every precondition and print its hash.
    Validate,
}

fn config(cli: &Cli) -> Result<ExperimentConfig, LabError> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.resolve_output_dir(cli.out.clone());
    Ok(cfg)
}

fn fail(e: &LabError) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(e.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match config(&cli) {
        Ok(cfg) => cfg,
        Err(e) => return fail(&e),
    };
    let command = match cli.command {
        Sub::Validate => {
            return match cfg.validate(Command::Full) {
                Ok(exp) => {
                    println!("ok {}", exp.hash);
                    ExitCode::from(EXIT_OK as u8)
                }
                Err(e) => fail(&e.into()),
            };
        }
        Sub::Variance => Command::Variance,
        Sub::Mdp => Command::Mdp,
        Sub::Pressure => Command::Pressure,
        Sub::Spectrum => Command::Spectrum,
        Sub::Concentration => Command::Concentration,
        Sub::Full => Command::Full,
    };
    let outcome = lab::with_jobs(cli.jobs, || lab::run(&cfg, command));
    let (manifest, err) = match outcome {
        Ok(m) => (Some(m), None),
        Err((m, e)) => (m, Some(e)),
    };
    if let Some(m) = &manifest {
        for s in &m.stages {
            println!("{:<26} {:?} {:>8.2}s", s.stage, s.status, s.wall_seconds);
        }
        for w in &m.warnings {
            println!("warning: {w}");
        }
        println!("artifacts: {}", cfg.output_dir.join(&m.cache_dir).display());
    }
    match err {
        Some(e) => fail(&e),
        None => ExitCode::from(EXIT_OK as u8),
    }
}
