//! End-to-end run: classical stages, the constant c, damped spectra and the
//! concentration reports, all cached under one config hash.
//!
//! ```text
//! cargo run --release --example full_pipeline -- [output_dir]
//! ```
//!
//! Running it twice serves every stage from the cache.

use spectral_lab::concentration::ConcentrationReport;
use spectral_lab::lab::{load_stage, run_full, ExperimentConfig};
use spectral_lab::SpectralConstant;

fn main() {
    let out = std::env::args().nth(1).unwrap_or_else(|| "spectral-lab-out".into());
    let config = ExperimentConfig { samples: 200_000, output_dir: out.clone().into(), ..Default::default() };

    let manifest = match run_full(&config) {
        Ok(m) => m,
        Err((_, e)) => {
            eprintln!("{e}");
            std::process::exit(e.exit_code());
        }
    };
    println!("config {}", manifest.config_hash);
    for s in &manifest.stages {
        println!("  {:<26} {:?}", s.stage, s.status);
    }
    manifest.verify(out.as_ref()).expect("artifacts match their recorded hashes");

    let c: SpectralConstant = load_stage(out.as_ref(), &manifest, "constant").unwrap();
    println!("c = 1/(2 Λ₀ σ²) = {:.9}  (Λ₀ = {:.9}, σ² = {})", c.c, c.lambda0, c.sigma_sq);

    let report: ConcentrationReport = load_stage(out.as_ref(), &manifest, "concentration_fixed").unwrap();
    println!("fixed window ε = {:?}: {:?}", report.epsilon_fixed, report.fit_status);
    for row in &report.rows {
        println!("  N = {:>5}  outside {:>4}  bound {:.4}", row.n, row.count_outside, row.bound_value.unwrap_or(f64::NAN));
    }
    for w in &manifest.warnings {
        println!("warning: {w}");
    }
}
