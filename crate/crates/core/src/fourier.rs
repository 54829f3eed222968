//! Fourier coefficients of `f(q)` for a trigonometric observable `q`, computed
//! by evaluating on a uniform grid and transforming with a 2-D FFT.

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::torus::{Mode, TorusObservable, TorusPoint};

/// Coefficients of `f∘q` with `|nᵢ| ≤ keep_radius` and modulus at least `cutoff`.
///
/// `grid` is the number of points per axis; it must exceed `2 · keep_radius`.
/// The table is symmetrised so that the result is exactly real.
pub fn compose_coefficients(
    q: &TorusObservable,
    f: impl Fn(f64) -> f64,
    grid: usize,
    keep_radius: i64,
    cutoff: f64,
) -> TorusObservable {
    assert!(grid as i64 > 2 * keep_radius, "grid too coarse for the kept radius");
    let mut data: Vec<Complex64> = Vec::with_capacity(grid * grid);
    // Row-major: data[j * grid + k] = f(q(j / grid, k / grid)).
    for j in 0..grid {
        for k in 0..grid {
            let rho = TorusPoint { x: j as f64 / grid as f64, p: k as f64 / grid as f64 };
            data.push(Complex64::new(f(q.eval_complex(rho).re), 0.0));
        }
    }
    fft_2d(&mut data, grid);
    let norm = 1.0 / (grid * grid) as f64;
    let at = |n1: i64, n2: i64| {
        let r = n1.rem_euclid(grid as i64) as usize;
        let c = n2.rem_euclid(grid as i64) as usize;
        data[r * grid + c] * norm
    };
    let mut coefficients = Vec::new();
    for n1 in -keep_radius..=keep_radius {
        for n2 in -keep_radius..=keep_radius {
            let c = 0.5 * (at(n1, n2) + at(-n1, -n2).conj());
            if c.norm() >= cutoff {
                coefficients.push((Mode(n1, n2), c));
            }
        }
    }
    // c(-n) = conj(c(n)) exactly, so the cutoff keeps or drops both.
    TorusObservable::from_coefficients(coefficients).expect("symmetrised table is real")
}

fn fft_2d(data: &mut [Complex64], grid: usize) {
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(grid);
    for row in data.chunks_mut(grid) {
        fft.process(row);
    }
    let mut column = vec![Complex64::default(); grid];
    for c in 0..grid {
        for r in 0..grid {
            column[r] = data[r * grid + c];
        }
        fft.process(&mut column);
        for r in 0..grid {
            data[r * grid + c] = column[r];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    /// Composite Simpson quadrature of `(1/2π) ∫ e^{ξ cos θ} cos(nθ) dθ`.
    fn bessel_quadrature(n: i64, xi: f64) -> f64 {
        let steps = 20_000;
        let h = std::f64::consts::TAU / steps as f64;
        let g = |t: f64| (xi * t.cos()).exp() * (n as f64 * t).cos();
        let mut s = g(0.0) + g(std::f64::consts::TAU);
        for i in 1..steps {
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * g(i as f64 * h);
        }
        s * h / 3.0 / std::f64::consts::TAU
    }

    #[test]
    fn exponential_of_cosine_gives_bessel_coefficients() {
        let q = TorusObservable::cosine(Mode(1, 0), 1.0);
        let e = compose_coefficients(&q, f64::exp, 64, 20, 1e-15);
        for n in 0..8 {
            let c = e.coefficient(Mode(n, 0));
            assert_abs_diff_eq!(c.re, bessel_quadrature(n, 1.0), epsilon = 1e-13);
            assert_abs_diff_eq!(c.im, 0.0, epsilon = 1e-15);
            assert_eq!(e.coefficient(Mode(n, 1)), Complex64::default());
        }
    }

    #[test]
    fn constant_maps_to_constant() {
        let q = TorusObservable::constant(0.25);
        let e = compose_coefficients(&q, |v| (-v).exp(), 16, 4, 1e-15);
        assert_abs_diff_eq!(e.mean(), (-0.25f64).exp(), epsilon = 1e-15);
        assert!(e.is_constant());
    }
}
