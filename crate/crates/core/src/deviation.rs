//! Statistics of Birkhoff sums: the asymptotic variance, moderate-deviation
//! probabilities and the spectral concentration constant `c = 1/(2 Λ₀ σ²)`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng;
use crate::torus::{forward_fluctuation_sum, LatticeStep, Mode, ToralAutomorphism, TorusObservable};

/// Hard cap on the number of steps a mode may take to leave the box of `q`.
pub const ESCAPE_CAP: usize = 200;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DeviationError {
    #[error("max_lag {given} does not certify mode escape (needs {needed})")]
    LagTooSmall { given: usize, needed: usize },
    #[error("mode {0:?} did not leave the observable box within {ESCAPE_CAP} steps")]
    EscapeCapExceeded(Mode),
    #[error("scaling exponent gamma = {0} is outside (0, 1/2)")]
    BadScaling(f64),
    #[error("epsilon must be positive, got {0}")]
    BadEpsilon(f64),
    #[error("window T = {0} is too short (need T >= 2)")]
    BadWindow(usize),
    #[error("need at least {min} samples, got {got}")]
    TooFewSamples { min: u64, got: u64 },
    #[error("insufficient data: {0}")]
    InsufficientData(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VarianceMethod {
    ExactLattice,
    MonteCarlo,
}

/// σ² of the Birkhoff sums, per step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceResult {
    pub sigma_sq: f64,
    /// Monte-Carlo standard error; zero for the exact method.
    pub stderr: f64,
    /// `(lag, C(lag))` for the exact method, empty otherwise.
    pub terms: Vec<(i64, f64)>,
    pub method: VarianceMethod,
}

/// Number of steps after which every nonzero mode of `q` has left `[-K, K]²`
/// under `m ↦ κᵀ m` (and, by time reversal, under `κ⁻ᵀ`).
pub fn escape_time(map: &ToralAutomorphism, q: &TorusObservable) -> Result<usize, DeviationError> {
    let k = q.radius();
    let inv = map.inverse();
    let mut worst = 0;
    for (m, _) in q.fluctuating_modes() {
        for dir in [map, &inv] {
            let mut cur = m;
            let mut steps = 0;
            while cur.radius() <= k {
                if steps == ESCAPE_CAP {
                    return Err(DeviationError::EscapeCapExceeded(m));
                }
                cur = dir.pushforward_mode(cur);
                steps += 1;
            }
            worst = worst.max(steps);
        }
    }
    Ok(worst)
}

/// Correlation `C(t) = ∫ (q∘κᵗ − q̄)(q − q̄)` by exact lattice matching: the
/// integral of `e((κᵀ)ᵗ m + n)` is 1 iff `(κᵀ)ᵗ m = −n`.
fn lattice_correlation(map: &ToralAutomorphism, q: &TorusObservable, lag: usize) -> f64 {
    let mut acc = 0.0;
    for (m, cm) in q.fluctuating_modes() {
        let mut image = m;
        for _ in 0..lag {
            image = map.pushforward_mode(image);
        }
        let cn = q.coefficient(-image);
        acc += (cm * cn).re;
    }
    acc
}

/// Exact σ² = C(0) + 2 Σ_{t≥1} C(t) for a trigonometric observable.
///
/// Values within `1e-13 · (Σ|c_m|)²` of zero are reported as exactly zero.
pub fn exact_variance(
    map: &ToralAutomorphism,
    q: &TorusObservable,
    max_lag: usize,
) -> Result<VarianceResult, DeviationError> {
    let needed = escape_time(map, q)?;
    if max_lag < needed {
        return Err(DeviationError::LagTooSmall { given: max_lag, needed });
    }
    let terms: Vec<(i64, f64)> =
        (0..=max_lag).map(|t| (t as i64, lattice_correlation(map, q, t))).collect();
    let mut sigma_sq = terms[0].1 + 2.0 * terms[1..].iter().map(|(_, c)| c).sum::<f64>();
    let scale = q.sup_norm_bound().powi(2);
    if sigma_sq.abs() <= 1e-13 * scale {
        sigma_sq = 0.0;
    }
    Ok(VarianceResult { sigma_sq, stderr: 0.0, terms, method: VarianceMethod::ExactLattice })
}

/// Exact variance with the lag chosen as the certified escape time.
pub fn exact_variance_auto(map: &ToralAutomorphism, q: &TorusObservable) -> Result<VarianceResult, DeviationError> {
    exact_variance(map, q, escape_time(map, q)?)
}

/// Monte-Carlo estimate of `(1/T) E[(Σ_{t<T} q∘κᵗ − T q̄)²]`.
pub fn mc_variance(
    map: &ToralAutomorphism,
    q: &TorusObservable,
    window: usize,
    samples: u64,
    seed: u64,
) -> Result<VarianceResult, DeviationError> {
    if window < 2 {
        return Err(DeviationError::BadWindow(window));
    }
    if samples < 1000 {
        return Err(DeviationError::TooFewSamples { min: 1000, got: samples });
    }
    let compiled = q.compile();
    let step = LatticeStep::new(map);
    let stage = format!("variance/T={window}");
    let (s1, s2) = rng::chunked(
        samples,
        seed,
        &stage,
        |r, n| {
            let mut acc = (0.0, 0.0);
            for _ in 0..n {
                let s = forward_fluctuation_sum(&step, &compiled, rng::lattice_point(r), window);
                let sq = s * s;
                acc.0 += sq;
                acc.1 += sq * sq;
            }
            acc
        },
        (0.0, 0.0),
        |a, b| (a.0 + b.0, a.1 + b.1),
    );
    let n = samples as f64;
    let t = window as f64;
    let mean = s1 / n;
    let var = (s2 / n - mean * mean).max(0.0);
    Ok(VarianceResult {
        sigma_sq: mean / t,
        stderr: (var / n).sqrt() / t,
        terms: Vec::new(),
        method: VarianceMethod::MonteCarlo,
    })
}

/// Empirical measure of `{⟨q⟩_T − q̄ ≥ ε / a(T)}` with `a(T) = T^γ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationEstimate {
    #[serde(rename = "T")]
    pub t: usize,
    pub a_t: f64,
    pub gamma: f64,
    pub epsilon: f64,
    pub probability: f64,
    /// Binomial standard error `sqrt(p (1 − p) / samples)`.
    pub stderr: f64,
    /// `(a(T)² / T) log p`.
    pub rate: f64,
    /// Set when no sample hit the event; `rate` then uses `1/(samples + 1)` and is an upper bound.
    pub rate_is_bound: bool,
    pub hits: u64,
    pub samples: u64,
    pub seed: u64,
}

impl DeviationEstimate {
    /// Builds the record from a hit count.
    pub fn from_hits(t: usize, gamma: f64, epsilon: f64, hits: u64, samples: u64, seed: u64) -> Self {
        let n = samples as f64;
        let a_t = (t as f64).powf(gamma);
        let probability = hits as f64 / n;
        let stderr = (probability * (1.0 - probability) / n).sqrt();
        let rate_is_bound = hits == 0;
        let p_for_rate = if rate_is_bound { 1.0 / (n + 1.0) } else { probability };
        let rate = a_t * a_t / t as f64 * p_for_rate.ln();
        DeviationEstimate { t, a_t, gamma, epsilon, probability, stderr, rate, rate_is_bound, hits, samples, seed }
    }

    /// `T / a(T)²`, the speed of the moderate deviation principle.
    pub fn speed(&self) -> f64 {
        self.t as f64 / (self.a_t * self.a_t)
    }
}

pub fn check_scaling(gamma: f64) -> Result<(), DeviationError> {
    if gamma > 0.0 && gamma < 0.5 {
        Ok(())
    } else {
        Err(DeviationError::BadScaling(gamma))
    }
}

/// Estimates `μ{ρ : ⟨q⟩_T(ρ) − q̄ ≥ ε / T^γ}`.
///
/// κ is a bijection of the dyadic grid, so `κ^{-T/2} ρ` is uniform when `ρ` is;
/// the symmetric window is sampled by drawing that start point directly.
pub fn mdp_probability(
    map: &ToralAutomorphism,
    q: &TorusObservable,
    window: usize,
    gamma: f64,
    epsilon: f64,
    samples: u64,
    seed: u64,
) -> Result<DeviationEstimate, DeviationError> {
    check_scaling(gamma)?;
    if !(epsilon > 0.0) {
        return Err(DeviationError::BadEpsilon(epsilon));
    }
    if window < 2 || window % 2 != 0 {
        return Err(DeviationError::BadWindow(window));
    }
    if samples == 0 {
        return Err(DeviationError::TooFewSamples { min: 1, got: 0 });
    }
    let compiled = q.compile();
    let step = LatticeStep::new(map);
    let threshold = epsilon / (window as f64).powf(gamma);
    let stage = format!("mdp/T={window}");
    let hits = rng::chunked(
        samples,
        seed,
        &stage,
        |r, n| {
            let mut hits = 0u64;
            for _ in 0..n {
                let s = forward_fluctuation_sum(&step, &compiled, rng::lattice_point(r), window);
                if s / window as f64 >= threshold {
                    hits += 1;
                }
            }
            hits
        },
        0,
        |a, b| a + b,
    );
    Ok(DeviationEstimate::from_hits(window, gamma, epsilon, hits, samples, seed))
}

/// Extrapolated moderate-deviation rate compared against `−ε² / (2σ²)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub measured_rate: f64,
    pub predicted_rate: f64,
    pub relative_error: f64,
    /// Coefficient of `1 / speed` in the fitted finite-T correction.
    pub correction_slope: f64,
}

/// Shared input checks for rate fits: ≥ 3 estimates, increasing T, common (γ, ε),
/// strictly positive probabilities.
pub(crate) fn check_estimate_family(estimates: &[DeviationEstimate]) -> Result<(), DeviationError> {
    if estimates.len() < 3 {
        return Err(DeviationError::InsufficientData(format!("{} estimates, need 3", estimates.len())));
    }
    let first = &estimates[0];
    for pair in estimates.windows(2) {
        if pair[1].t <= pair[0].t {
            return Err(DeviationError::InsufficientData("T must increase".into()));
        }
    }
    for e in estimates {
        if e.gamma != first.gamma || e.epsilon != first.epsilon {
            return Err(DeviationError::InsufficientData("mixed (gamma, epsilon) family".into()));
        }
        if e.hits == 0 || !(e.probability > 0.0) {
            return Err(DeviationError::InsufficientData(format!("zero probability at T = {}", e.t)));
        }
    }
    Ok(())
}

/// Least-squares extrapolation `rate(T) ≈ r∞ + β / speed(T)`, returning `(r∞, β)`.
pub(crate) fn extrapolate_rate(estimates: &[DeviationEstimate]) -> (f64, f64) {
    let xs: Vec<f64> = estimates.iter().map(|e| 1.0 / e.speed()).collect();
    let ys: Vec<f64> = estimates.iter().map(|e| e.rate).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (my - slope * mx, slope)
}

/// Fits the limit of the empirical rates and compares with the Gaussian rate `−ε²/(2σ²)`.
pub fn mdp_rate_fit(estimates: &[DeviationEstimate], sigma_sq: f64) -> Result<RateFit, DeviationError> {
    check_estimate_family(estimates)?;
    if !(sigma_sq > 0.0) {
        return Err(DeviationError::InsufficientData("sigma^2 must be positive".into()));
    }
    let eps = estimates[0].epsilon;
    let predicted_rate = -eps * eps / (2.0 * sigma_sq);
    let (measured_rate, correction_slope) = extrapolate_rate(estimates);
    let relative_error = ((measured_rate - predicted_rate) / predicted_rate).abs();
    Ok(RateFit { measured_rate, predicted_rate, relative_error, correction_slope })
}

/// `c(q, κ) = 1 / (2 Λ₀ σ²)`, infinite when σ² = 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralConstant {
    pub lambda0: f64,
    pub sigma_sq: f64,
    pub c: f64,
}

impl SpectralConstant {
    pub fn new(lambda0: f64, sigma_sq: f64) -> Self {
        let c = if sigma_sq > 0.0 { 1.0 / (2.0 * lambda0 * sigma_sq) } else { f64::INFINITY };
        SpectralConstant { lambda0, sigma_sq, c }
    }

    pub fn is_infinite(&self) -> bool {
        self.c.is_infinite()
    }
}

#[derive(Serialize, Deserialize)]
struct SpectralConstantRecord {
    lambda0: f64,
    sigma_sq: f64,
    c: Option<f64>,
    c_is_infinite: bool,
}

impl Serialize for SpectralConstant {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        SpectralConstantRecord {
            lambda0: self.lambda0,
            sigma_sq: self.sigma_sq,
            c: (!self.is_infinite()).then_some(self.c),
            c_is_infinite: self.is_infinite(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for SpectralConstant {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let r = SpectralConstantRecord::deserialize(d)?;
        Ok(SpectralConstant { lambda0: r.lambda0, sigma_sq: r.sigma_sq, c: r.c.unwrap_or(f64::INFINITY) })
    }
}

pub fn concentration_constant(map: &ToralAutomorphism, q: &TorusObservable) -> Result<SpectralConstant, DeviationError> {
    let var = exact_variance_auto(map, q)?;
    Ok(SpectralConstant::new(map.expansion_rate, var.sigma_sq))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn cos_x() -> TorusObservable {
        TorusObservable::cosine(Mode(1, 0), 1.0)
    }

    #[test]
    fn exact_variance_of_cosine() {
        let arnold = ToralAutomorphism::arnold();
        let v = exact_variance_auto(&arnold, &cos_x()).unwrap();
        assert_eq!(v.sigma_sq, 0.5);
        assert_eq!(v.terms[0], (0, 0.5));
        assert!(v.terms[1..].iter().all(|&(_, c)| c == 0.0));
    }

    #[test]
    fn exact_variance_constant_and_coboundary() {
        let arnold = ToralAutomorphism::arnold();
        assert_eq!(exact_variance_auto(&arnold, &TorusObservable::constant(2.0)).unwrap().sigma_sq, 0.0);
        let q = TorusObservable::coboundary(&cos_x(), &arnold);
        let v = exact_variance_auto(&arnold, &q).unwrap();
        assert_eq!(v.sigma_sq, 0.0);
        // C(0) = 1 and C(1) = -1/2 cancel in C(0) + 2 C(1).
        assert_eq!(v.terms[0].1, 1.0);
        assert_eq!(v.terms[1].1, -0.5);
    }

    #[test]
    fn lag_too_small() {
        let arnold = ToralAutomorphism::arnold();
        let q = TorusObservable::cosine(Mode(1, -1), 1.0);
        let needed = escape_time(&arnold, &q).unwrap();
        assert!(needed >= 2);
        assert_eq!(
            exact_variance(&arnold, &q, needed - 1),
            Err(DeviationError::LagTooSmall { given: needed - 1, needed })
        );
    }

    #[test]
    fn mc_variance_constant_is_zero() {
        let arnold = ToralAutomorphism::arnold();
        let v = mc_variance(&arnold, &TorusObservable::constant(0.4), 10, 2000, 1).unwrap();
        assert_eq!(v.sigma_sq, 0.0);
        assert!(mc_variance(&arnold, &cos_x(), 10, 999, 1).is_err());
    }

    #[test]
    fn mdp_constant_has_zero_probability() {
        let arnold = ToralAutomorphism::arnold();
        let e = mdp_probability(&arnold, &TorusObservable::constant(0.4), 20, 0.25, 0.01, 5000, 3).unwrap();
        assert_eq!(e.probability, 0.0);
        assert!(e.rate_is_bound);
        assert_abs_diff_eq!(e.rate, e.a_t * e.a_t / 20.0 * (1.0 / 5001.0f64).ln(), epsilon = 1e-12);
    }

    #[test]
    fn mdp_rejects_bad_scaling() {
        let arnold = ToralAutomorphism::arnold();
        for g in [0.0, 0.5, 0.6, -0.1] {
            assert_eq!(mdp_probability(&arnold, &cos_x(), 10, g, 1.0, 1000, 0), Err(DeviationError::BadScaling(g)));
        }
    }

    fn manufactured(t: usize, gamma: f64, eps: f64, sigma_sq: f64) -> DeviationEstimate {
        let a = (t as f64).powf(gamma);
        let p = (-(t as f64) / (a * a) * eps * eps / (2.0 * sigma_sq)).exp();
        let samples = 1_000_000_000u64;
        let mut e = DeviationEstimate::from_hits(t, gamma, eps, (p * samples as f64) as u64, samples, 0);
        e.probability = p;
        e.rate = a * a / t as f64 * p.ln();
        e
    }

    #[test]
    fn rate_fit_on_manufactured_estimates_is_exact() {
        let est: Vec<_> = [50, 100, 200].iter().map(|&t| manufactured(t, 0.25, 1.0, 0.5)).collect();
        let fit = mdp_rate_fit(&est, 0.5).unwrap();
        assert_abs_diff_eq!(fit.relative_error, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.predicted_rate, -1.0, epsilon = 1e-15);
    }

    #[test]
    fn rate_fit_rejects_zero_probability_and_short_lists() {
        let mut est: Vec<_> = [50, 100, 200].iter().map(|&t| manufactured(t, 0.25, 1.0, 0.5)).collect();
        assert!(matches!(mdp_rate_fit(&est[..2], 0.5), Err(DeviationError::InsufficientData(_))));
        est[2] = DeviationEstimate::from_hits(200, 0.25, 1.0, 0, 1000, 0);
        assert!(matches!(mdp_rate_fit(&est, 0.5), Err(DeviationError::InsufficientData(_))));
    }

    #[test]
    fn concentration_constant_examples() {
        let arnold = ToralAutomorphism::arnold();
        let c = concentration_constant(&arnold, &cos_x()).unwrap();
        assert_abs_diff_eq!(c.c, 1.0 / (2.0 * arnold.expansion_rate * 0.5), epsilon = 1e-15);
        assert_abs_diff_eq!(c.c, 1.0390435, epsilon = 1e-6);
        let c2 = concentration_constant(&arnold, &cos_x().scale(2.0)).unwrap();
        assert_abs_diff_eq!(c2.c, c.c / 4.0, epsilon = 1e-15);
        let inf = concentration_constant(&arnold, &TorusObservable::constant(1.0)).unwrap();
        assert!(inf.is_infinite());
        let json = serde_json::to_value(inf).unwrap();
        assert_eq!(json["c_is_infinite"], true);
        assert!(json["c"].is_null());
        let back: SpectralConstant = serde_json::from_value(json).unwrap();
        assert!(back.is_infinite());
    }
}
