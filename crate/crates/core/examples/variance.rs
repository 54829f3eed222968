//! Asymptotic variance of Birkhoff sums: the exact lattice sum against a
//! Monte-Carlo estimate, for a few observables under the Arnold cat map.
//!
//! ```text
//! cargo run --release --example variance
//! ```

use spectral_lab::deviation::{concentration_constant, exact_variance_auto, mc_variance};
use spectral_lab::{Mode, ToralAutomorphism, TorusObservable};

fn main() {
    let map = ToralAutomorphism::arnold();
    let cos_x = TorusObservable::cosine(Mode(1, 0), 1.0);
    let mixed = cos_x.add(&TorusObservable::sine(Mode(1, 1), 0.5));
    let cob = TorusObservable::coboundary(&TorusObservable::cosine(Mode(0, 1), 1.0), &map);

    for (name, q) in [("cos(2πx)", &cos_x), ("cos(2πx) + ½sin(2π(x+p))", &mixed), ("coboundary", &cob)] {
        let exact = exact_variance_auto(&map, q).unwrap();
        let mc = mc_variance(&map, q, 100, 200_000, 7).unwrap();
        let c = concentration_constant(&map, q).unwrap();
        println!("{name}");
        println!("  exact σ² = {:.12}  ({} correlation terms)", exact.sigma_sq, exact.terms.len());
        println!("  MC    σ² = {:.6} ± {:.6}  (T = 100)", mc.sigma_sq, mc.stderr);
        if c.is_infinite() {
            println!("  c = +∞");
        } else {
            println!("  c = {:.8}", c.c);
        }
    }
}
