//! Pressure of `ξ q` from the truncated weighted transfer operator, its
//! Legendre–Fenchel conjugate, and the quadratic rate `η²/(2σ²)` it approaches.
//!
//! ```text
//! cargo run --release --example pressure -- [box_radius]
//! ```

use spectral_lab::transfer::{legendre_fenchel, pressure_curve, symmetric_grid};
use spectral_lab::{Mode, ToralAutomorphism, TorusObservable};

fn main() {
    let box_radius: i64 = std::env::args().nth(1).map(|s| s.parse().expect("box radius")).unwrap_or(32);
    let map = ToralAutomorphism::arnold();
    let q = TorusObservable::cosine(Mode(1, 0), 1.0);

    let curve = pressure_curve(&map, &q, &symmetric_grid(1.0, 0.05), box_radius, 1e-12).unwrap();
    println!("K = {box_radius}: F''(0) = {:.6}, F'(0) = {:.2e}", curve.sigma_sq_from_pressure, curve.mean_from_pressure);
    println!("{:>6} {:>12} {:>10}", "xi", "F", "gap");
    for ((x, f), g) in curve.xi.iter().zip(&curve.f).zip(&curve.gap_ratio).step_by(4) {
        println!("{x:>6.2} {f:>12.8} {g:>10.4}");
    }

    let eta = symmetric_grid(0.3, 0.05);
    let rate = legendre_fenchel(&curve, &eta).unwrap();
    println!("\n{:>6} {:>12} {:>12}", "eta", "I", "eta^2/2σ^2");
    for (e, i) in rate.eta.iter().zip(&rate.i_values) {
        println!("{e:>6.2} {i:>12.8} {:>12.8}", e * e / (2.0 * 0.5));
    }
}
