//! Spectrum of a damped quantum cat map `Op_N(e^{−g}) U_N(κ)`.
//!
//! ```text
//! cargo run --release --example quantum_spectrum -- [N]
//! ```

use std::time::Instant;

use spectral_lab::concentration::decay_rates;
use spectral_lab::quantum::{damped_propagator, egorov_overlap, spectrum, unitarity_defect};
use spectral_lab::{Mode, ToralAutomorphism, TorusObservable};

fn main() {
    let n: usize = std::env::args().nth(1).map(|s| s.parse().expect("N")).unwrap_or(256);
    let map = ToralAutomorphism::arnold();
    let g = TorusObservable::constant(0.3).add(&TorusObservable::cosine(Mode(1, 0), 0.3));

    let start = Instant::now();
    let sys = damped_propagator(&map, &g, n).unwrap();
    println!("N = {n}: built in {:.2}s, unitarity defect {:.2e}", start.elapsed().as_secs_f64(), unitarity_defect(sys.propagator.as_ref()));
    for m in [Mode(1, 0), Mode(0, 1), Mode(2, -3)] {
        println!("  Egorov overlap at {m:?}: {:.15}", egorov_overlap(&map, sys.propagator.as_ref(), m).unwrap());
    }

    let start = Instant::now();
    let ev = spectrum(&sys).unwrap();
    let rates = decay_rates(&ev, &g, 0.5).unwrap();
    println!("eigenvalues in {:.2}s", start.elapsed().as_secs_f64());
    println!(
        "decay rates: min {:.4}, mean {:.6}, max {:.4}  (ḡ = {})",
        rates.rates[0],
        rates.mean_rate(),
        rates.rates[n - 1],
        g.mean()
    );
    println!("largest moduli:");
    for z in ev.iter().take(5) {
        println!("  {:+.6} {:+.6}i  |λ| = {:.6}", z.re, z.im, z.norm());
    }
}
