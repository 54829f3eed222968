//! Fraction of decay rates outside fixed and shrinking windows around `ḡ` as N grows.
//!
//! ```text
//! cargo run --release --example concentration -- [epsilon]
//! ```

use spectral_lab::concentration::{concentration_report, damped_spectra, decay_rates, Window};
use spectral_lab::deviation::concentration_constant;
use spectral_lab::{Mode, ToralAutomorphism, TorusObservable};

fn main() {
    let epsilon: f64 = std::env::args().nth(1).map(|s| s.parse().expect("epsilon")).unwrap_or(0.1);
    let map = ToralAutomorphism::arnold();
    let fluct = TorusObservable::cosine(Mode(1, 0), 0.3);
    let g = TorusObservable::constant(0.3).add(&fluct);
    let c = concentration_constant(&map, &fluct).unwrap();
    let n_list = [128, 256, 512, 1024];

    let samples: Vec<_> = damped_spectra(&map, &g, &n_list)
        .unwrap()
        .iter()
        .map(|(_, ev)| decay_rates(ev, &g, 0.5).unwrap())
        .collect();
    for window in [Window::Fixed(epsilon), Window::Shrinking] {
        let r = concentration_report(&samples, window, Some(&c)).unwrap();
        println!("{window:?}: fit {:?}, exponent {:?}, non-increasing {}", r.fit_status, r.fitted_exponent, r.non_increasing);
        println!("{:>6} {:>8} {:>8} {:>10} {:>10} {:>12}", "N", "width", "outside", "fraction", "drift", "max |r-ḡ|");
        for (row, s) in r.rows.iter().zip(&samples) {
            let spread = s.rates.iter().map(|x| (x - s.center).abs()).fold(0.0, f64::max);
            println!(
                "{:>6} {:>8.4} {:>8} {:>10.4} {:>10.2e} {:>12.4}",
                row.n, row.width, row.count_outside, row.fraction_outside, row.center_drift, spread
            );
        }
    }
}
