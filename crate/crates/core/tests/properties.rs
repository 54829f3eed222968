use num_complex::Complex64;
use proptest::prelude::*;

use spectral_lab::concentration::{count_outside, window_width, DecayRateSample, Window};
use spectral_lab::deviation::exact_variance_auto;
use spectral_lab::quantum::{hermiticity_defect, trace, translation_operator, unitarity_defect, weyl_quantize};
use spectral_lab::torus::{birkhoff_symmetric, LatticePoint};
use spectral_lab::{Mode, ToralAutomorphism, TorusObservable, TorusPoint};

fn maps() -> impl Strategy<Value = ToralAutomorphism> {
    prop_oneof![
        Just([2, 1, 1, 1]),
        Just([2, 1, 3, 2]),
        Just([1, 2, 1, 3]),
        Just([3, 1, 2, 1]),
        Just([0, 1, -1, 3]),
        Just([-2, 1, 1, -1]),
    ]
    .prop_map(|[a, b, c, d]| ToralAutomorphism::new(a, b, c, d).unwrap())
}

fn observables(radius: i64) -> impl Strategy<Value = TorusObservable> {
    let mode = (-radius..=radius, -radius..=radius).prop_map(|(a, b)| Mode(a, b));
    prop::collection::vec((mode, -1.0f64..1.0, -1.0f64..1.0), 1..5).prop_map(|terms| {
        terms.into_iter().fold(TorusObservable::zero(), |q, (m, re, im)| {
            if m.is_zero() {
                q.add(&TorusObservable::constant(re))
            } else {
                q.with_mode(m, Complex64::new(re, im))
            }
        })
    })
}

fn lattice_points() -> impl Strategy<Value = LatticePoint> {
    (any::<u64>(), any::<u64>()).prop_map(|(x, p)| LatticePoint { x, p })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn variance_scales_quadratically(map in maps(), q in observables(2), s in -3.0f64..3.0) {
        let v = exact_variance_auto(&map, &q).unwrap().sigma_sq;
        let vs = exact_variance_auto(&map, &q.scale(s)).unwrap().sigma_sq;
        prop_assert!((vs - s * s * v).abs() <= 1e-12 * (1.0 + vs.abs()));
        prop_assert!(v >= 0.0);
    }

    #[test]
    fn flow_property_is_exact(map in maps(), pt in lattice_points(), s in -20i64..20, t in -20i64..20) {
        prop_assert_eq!(map.apply_lattice(map.apply_lattice(pt, s), t), map.apply_lattice(pt, s + t));
        prop_assert_eq!(map.apply_lattice(map.apply_lattice(pt, t), -t), pt);
    }

    #[test]
    fn compositions_preserve_area(m1 in maps(), m2 in maps(), n in 0i64..6) {
        if let Ok(c) = m1.compose(&m2) {
            let [a, b, cc, d] = c.entries();
            prop_assert_eq!(a * d - b * cc, 1);
        }
        let [a, b, c, d] = m1.matrix_power(n).unwrap();
        prop_assert_eq!(a * d - b * c, 1);
    }

    #[test]
    fn observables_are_real(q in observables(3), x in 0.0f64..1.0, p in 0.0f64..1.0) {
        let v = q.eval_complex(TorusPoint::new(x, p));
        prop_assert!(v.im.abs() <= 1e-12 * (1.0 + v.re.abs()));
        let back = TorusObservable::from_json(&q.to_json()).unwrap();
        prop_assert_eq!(back, q);
    }

    #[test]
    fn composition_matches_pointwise(map in maps(), q in observables(2), pt in lattice_points()) {
        let rho = TorusPoint::from(pt);
        let lhs = q.compose(&map).eval(rho);
        let rhs = q.eval(map.apply(rho, 1));
        prop_assert!((lhs - rhs).abs() < 1e-9);
    }

    #[test]
    fn coboundary_averages_are_bounded(map in maps(), h in observables(2), pt in lattice_points(), half in 1usize..40) {
        let q = TorusObservable::coboundary(&h, &map);
        let window = 2 * half;
        let avg = birkhoff_symmetric(&map, &q, TorusPoint::from(pt), window).unwrap();
        prop_assert!((avg - q.mean()).abs() <= 2.0 * h.sup_norm_bound() / window as f64 + 1e-9);
    }

    #[test]
    fn translations_are_unitary(m1 in -6i64..6, m2 in -6i64..6, n in 2usize..40) {
        let t = translation_operator(Mode(m1, m2), n).unwrap().to_matrix();
        prop_assert!(unitarity_defect(t.as_ref()) < 1e-12);
    }

    #[test]
    fn weyl_quantization_is_hermitian_with_exact_trace(q in observables(2), n in 5usize..24) {
        let op = weyl_quantize(&q, n).unwrap();
        prop_assert!(hermiticity_defect(op.as_ref()) < 1e-12);
        let tr = trace(op.as_ref());
        prop_assert!((tr.re - n as f64 * q.mean()).abs() < 1e-10 * n as f64);
        prop_assert!(tr.im.abs() < 1e-10 * n as f64);
    }

    #[test]
    fn window_is_admissible(alpha in 0.01f64..0.99, k in 2u32..20) {
        let n = 1usize << k;
        let (w, w2) = (window_width(n, alpha), window_width(2 * n, alpha));
        prop_assert!(w2 < w);
        let s = |n: usize, w: f64| w * w * (n as f64).ln();
        prop_assert!(s(2 * n, w2) > s(n, w));
        // w² ln N = (ln N)^α exactly.
        prop_assert!((s(n, w) - (n as f64).ln().powf(alpha)).abs() < 1e-12 * s(n, w));
    }

    #[test]
    fn counts_monotone_in_epsilon(rates in prop::collection::vec(0.0f64..1.0, 1..60), e1 in 0.001f64..0.5, e2 in 0.001f64..0.5) {
        let s = DecayRateSample::from_rates(rates.len(), rates, 0.5, 0.5).unwrap();
        let (lo, hi) = if e1 < e2 { (e1, e2) } else { (e2, e1) };
        prop_assert!(count_outside(&s, Window::Fixed(hi)).count <= count_outside(&s, Window::Fixed(lo)).count);
    }

    #[test]
    fn counts_invariant_under_shift(ks in prop::collection::vec(0u32..1024, 1..60), j in 0u32..2048, e in 1u32..512) {
        // Dyadic rates, shift and width keep every comparison exact.
        let rates: Vec<f64> = ks.iter().map(|&k| k as f64 / 1024.0).collect();
        let (g0, eps) = (j as f64 / 1024.0, e as f64 / 1024.0);
        let s = DecayRateSample::from_rates(rates.len(), rates, 0.5, 0.5).unwrap();
        let shifted = s.shifted(g0);
        prop_assert_eq!(count_outside(&shifted, Window::Fixed(eps)), count_outside(&s, Window::Fixed(eps)));
        prop_assert_eq!(count_outside(&shifted, Window::Shrinking), count_outside(&s, Window::Shrinking));
    }

    #[test]
    fn counts_are_two_sided(ks in prop::collection::vec(0u32..1024, 1..60), e in 1u32..512) {
        let center = 0.5;
        let rates: Vec<f64> = ks.iter().map(|&k| k as f64 / 1024.0).collect();
        let eps = e as f64 / 1024.0;
        let s = DecayRateSample::from_rates(rates.len(), rates.clone(), center, 0.5).unwrap();
        let reflected: Vec<f64> = rates.iter().map(|r| 2.0 * center - r).collect();
        let r = DecayRateSample::from_rates(reflected.len(), reflected, center, 0.5).unwrap();
        let (a, b) = (count_outside(&s, Window::Fixed(eps)), count_outside(&r, Window::Fixed(eps)));
        prop_assert_eq!(a.count, b.count);
        prop_assert_eq!(a.above, b.below);
    }
}
