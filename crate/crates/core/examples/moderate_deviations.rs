//! Moderate-deviation probabilities of symmetric Birkhoff averages under the
//! Arnold cat map, and the extrapolated rate against `−ε²/(2σ²)`.
//!
//! ```text
//! cargo run --release --example moderate_deviations -- [samples] [seed]
//! ```

use std::time::Instant;

use spectral_lab::deviation::{exact_variance_auto, mdp_probability, mdp_rate_fit};
use spectral_lab::{Mode, ToralAutomorphism, TorusObservable};

fn main() {
    let mut args = std::env::args().skip(1);
    let samples: u64 = args.next().map(|s| s.parse().expect("samples")).unwrap_or(1_000_000);
    let seed: u64 = args.next().map(|s| s.parse().expect("seed")).unwrap_or(2024);

    let map = ToralAutomorphism::arnold();
    let q = TorusObservable::cosine(Mode(1, 0), 1.0);
    let sigma_sq = exact_variance_auto(&map, &q).unwrap().sigma_sq;
    let (gamma, epsilon) = (0.25, 1.0);

    println!("{:>5} {:>10} {:>12} {:>10} {:>10}", "T", "hits", "p", "rate", "secs");
    let mut estimates = Vec::new();
    for t in [50, 100, 200] {
        let start = Instant::now();
        let e = mdp_probability(&map, &q, t, gamma, epsilon, samples, seed).unwrap();
        println!(
            "{:>5} {:>10} {:>12.4e} {:>10.4}{} {:>9.1}",
            t,
            e.hits,
            e.probability,
            e.rate,
            if e.rate_is_bound { "*" } else { " " },
            start.elapsed().as_secs_f64()
        );
        estimates.push(e);
    }
    match mdp_rate_fit(&estimates, sigma_sq) {
        Ok(fit) => println!(
            "extrapolated rate {:.4}, predicted {:.4}, relative error {:.1}%",
            fit.measured_rate,
            fit.predicted_rate,
            100.0 * fit.relative_error
        ),
        Err(e) => println!("rate fit unavailable: {e}"),
    }
}
