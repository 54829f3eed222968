//! Hyperbolic toral automorphisms and trigonometric observables on T².
//!
//! A map `κ = (a b; c d)` acts on `(x, p)` by `(a x + b p, c x + d p) mod 1`.
//! Lebesgue measure is invariant. Observables are finite Fourier series
//! `q(x, p) = Σ c_m e(m₁ x + m₂ p)` with `e(θ) = exp(2πiθ)`, and the map acts on
//! them by relabelling modes, `q∘κ` has coefficient `c_m` at `κᵀ m`.
//!
//! For a linear map the two expansion rates distinguished on a flow (energy
//! shell versus cosphere) coincide, so a single `expansion_rate` is stored.

use std::collections::BTreeMap;
use std::f64::consts::TAU;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TorusError {
    #[error("matrix ({a} {b}; {c} {d}) is not unimodular: det = {det}")]
    NotUnimodular { a: i64, b: i64, c: i64, d: i64, det: i64 },
    #[error("matrix with trace {trace} is not hyperbolic (|trace| must exceed 2)")]
    NotHyperbolic { trace: i64 },
    #[error("symmetric Birkhoff window must be even and >= 2, got {0}")]
    OddWindow(usize),
    #[error("observable is not real: c(-m) != conj(c(m)) at mode {0:?}")]
    NotReal(Mode),
    #[error("malformed observable json: {0}")]
    Json(String),
}

/// A point of the integer lattice Z², used as a Fourier mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Mode(pub i64, pub i64);

impl Mode {
    pub const ZERO: Mode = Mode(0, 0);

    pub fn is_zero(self) -> bool {
        self == Mode::ZERO
    }

    /// Sup-norm radius `max(|m₁|, |m₂|)`.
    pub fn radius(self) -> i64 {
        self.0.abs().max(self.1.abs())
    }

    /// Strictly positive in the lexicographic order: `m₁ > 0`, or `m₁ = 0` and `m₂ > 0`.
    pub fn is_positive(self) -> bool {
        self.0 > 0 || (self.0 == 0 && self.1 > 0)
    }
}

impl std::ops::Neg for Mode {
    type Output = Mode;
    fn neg(self) -> Mode {
        Mode(-self.0, -self.1)
    }
}

impl std::ops::Add for Mode {
    type Output = Mode;
    fn add(self, o: Mode) -> Mode {
        Mode(self.0 + o.0, self.1 + o.1)
    }
}

impl std::ops::Sub for Mode {
    type Output = Mode;
    fn sub(self, o: Mode) -> Mode {
        Mode(self.0 - o.0, self.1 - o.1)
    }
}

/// A hyperbolic element of SL(2, Z) acting on the torus.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToralAutomorphism {
    pub a: i64,
    pub b: i64,
    pub c: i64,
    pub d: i64,
    /// Λ₀: log of the unstable eigenvalue, per map step.
    pub expansion_rate: f64,
}

impl ToralAutomorphism {
    pub fn new(a: i64, b: i64, c: i64, d: i64) -> Result<Self, TorusError> {
        let det = a * d - b * c;
        if det != 1 {
            return Err(TorusError::NotUnimodular { a, b, c, d, det });
        }
        let trace = a + d;
        if trace.abs() <= 2 {
            return Err(TorusError::NotHyperbolic { trace });
        }
        let t = trace.abs() as f64;
        let expansion_rate = ((t + (t * t - 4.0).sqrt()) / 2.0).ln();
        Ok(ToralAutomorphism { a, b, c, d, expansion_rate })
    }

    /// Arnold's cat map `(2 1; 1 1)`.
    pub fn arnold() -> Self {
        Self::new(2, 1, 1, 1).expect("arnold map is hyperbolic")
    }

    pub fn trace(&self) -> i64 {
        self.a + self.d
    }

    pub fn entries(&self) -> [i64; 4] {
        [self.a, self.b, self.c, self.d]
    }

    pub fn inverse(&self) -> Self {
        Self::new(self.d, -self.b, -self.c, self.a).expect("inverse of a hyperbolic map")
    }

    /// Composition `self ∘ other` (apply `other` first); fails if the product is not hyperbolic.
    pub fn compose(&self, other: &Self) -> Result<Self, TorusError> {
        let [a, b, c, d] = self.entries();
        let [e, f, g, h] = other.entries();
        Self::new(a * e + b * g, a * f + b * h, c * e + d * g, c * f + d * h)
    }

    /// Integer matrix power `κⁿ` (negative `n` uses the inverse). `None` on overflow.
    pub fn matrix_power(&self, n: i64) -> Option<[i64; 4]> {
        let base = if n < 0 { self.inverse() } else { *self };
        let mut acc = [1i64, 0, 0, 1];
        for _ in 0..n.unsigned_abs() {
            let [a, b, c, d] = acc;
            acc = [
                base.a.checked_mul(a)?.checked_add(base.b.checked_mul(c)?)?,
                base.a.checked_mul(b)?.checked_add(base.b.checked_mul(d)?)?,
                base.c.checked_mul(a)?.checked_add(base.d.checked_mul(c)?)?,
                base.c.checked_mul(b)?.checked_add(base.d.checked_mul(d)?)?,
            ];
        }
        Some(acc)
    }

    /// `(1/t) log ‖κᵗ‖₂`, the finite-time growth rate of the (constant) differential.
    ///
    /// Equals `expansion_rate` at every `t` for symmetric κ; otherwise it converges
    /// at rate O(1/t) because κ is not a normal matrix.
    pub fn tangent_growth_rate(&self, t: u32) -> f64 {
        let m = self.matrix_power(t as i64).expect("power overflow");
        let [a, b, c, d] = m.map(|v| v as f64);
        // Largest singular value of a 2×2 matrix.
        let s = a * a + b * b + c * c + d * d;
        let det = a * d - b * c;
        let sigma_sq = 0.5 * (s + (s * s - 4.0 * det * det).max(0.0).sqrt());
        0.5 * sigma_sq.ln() / t as f64
    }

    /// Koopman action on Fourier modes, `m ↦ κᵀ m`.
    pub fn pushforward_mode(&self, m: Mode) -> Mode {
        Mode(self.a * m.0 + self.c * m.1, self.b * m.0 + self.d * m.1)
    }

    /// `κ^steps ρ` on the torus.
    ///
    /// The point is rounded to the dyadic grid `2⁻⁶⁴ Z²` and iterated exactly there.
    pub fn apply(&self, rho: TorusPoint, steps: i64) -> TorusPoint {
        self.apply_lattice(LatticePoint::from(rho), steps).into()
    }

    /// Exact iteration on the dyadic grid (wrapping arithmetic is reduction mod 1).
    pub fn apply_lattice(&self, mut pt: LatticePoint, steps: i64) -> LatticePoint {
        let map = if steps < 0 { self.inverse() } else { *self };
        let step = LatticeStep::new(&map);
        for _ in 0..steps.unsigned_abs() {
            pt = step.apply(pt);
        }
        pt
    }
}

/// One step of κ on the dyadic grid, with entries pre-cast to wrapping u64.
#[derive(Debug, Clone, Copy)]
pub struct LatticeStep {
    a: u64,
    b: u64,
    c: u64,
    d: u64,
}

impl LatticeStep {
    pub fn new(map: &ToralAutomorphism) -> Self {
        LatticeStep { a: map.a as u64, b: map.b as u64, c: map.c as u64, d: map.d as u64 }
    }

    #[inline]
    pub fn apply(&self, pt: LatticePoint) -> LatticePoint {
        LatticePoint {
            x: self.a.wrapping_mul(pt.x).wrapping_add(self.b.wrapping_mul(pt.p)),
            p: self.c.wrapping_mul(pt.x).wrapping_add(self.d.wrapping_mul(pt.p)),
        }
    }
}

/// A point of T² with both coordinates in `[0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TorusPoint {
    pub x: f64,
    pub p: f64,
}

fn reduce_unit(v: f64) -> f64 {
    let r = v.rem_euclid(1.0);
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

impl TorusPoint {
    pub fn new(x: f64, p: f64) -> Self {
        TorusPoint { x: reduce_unit(x), p: reduce_unit(p) }
    }

    /// Distance on the torus in the sup metric.
    pub fn distance(&self, other: &TorusPoint) -> f64 {
        let dx = (self.x - other.x).abs();
        let dp = (self.p - other.p).abs();
        dx.min(1.0 - dx).max(dp.min(1.0 - dp))
    }
}

const TWO_POW_64: f64 = 18_446_744_073_709_551_616.0;

/// A point of the dyadic grid, `(x / 2⁶⁴, p / 2⁶⁴)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LatticePoint {
    pub x: u64,
    pub p: u64,
}

impl From<TorusPoint> for LatticePoint {
    fn from(rho: TorusPoint) -> Self {
        let to_fixed = |v: f64| {
            let scaled = (reduce_unit(v) * TWO_POW_64).round();
            if scaled >= TWO_POW_64 {
                0
            } else {
                scaled as u64
            }
        };
        LatticePoint { x: to_fixed(rho.x), p: to_fixed(rho.p) }
    }
}

impl From<LatticePoint> for TorusPoint {
    fn from(pt: LatticePoint) -> Self {
        TorusPoint::new(pt.x as f64 / TWO_POW_64, pt.p as f64 / TWO_POW_64)
    }
}

/// A real trigonometric polynomial on T².
///
/// Both `m` and `-m` are stored, with `c(-m) = conj(c(m))`.
#[derive(Debug, Clone, PartialEq)]
pub struct TorusObservable {
    coefficients: BTreeMap<Mode, Complex64>,
}

impl TorusObservable {
    pub fn zero() -> Self {
        TorusObservable { coefficients: BTreeMap::new() }
    }

    pub fn constant(value: f64) -> Self {
        Self::zero().with_mode(Mode::ZERO, Complex64::new(value, 0.0))
    }

    /// `amplitude · cos(2π (m₁ x + m₂ p))`.
    pub fn cosine(m: Mode, amplitude: f64) -> Self {
        if m.is_zero() {
            return Self::constant(amplitude);
        }
        Self::zero().with_mode(m, Complex64::new(amplitude / 2.0, 0.0))
    }

    /// `amplitude · sin(2π (m₁ x + m₂ p))`.
    pub fn sine(m: Mode, amplitude: f64) -> Self {
        if m.is_zero() {
            return Self::zero();
        }
        Self::zero().with_mode(m, Complex64::new(0.0, -amplitude / 2.0))
    }

    /// Adds `c` at `m` and `conj(c)` at `-m`; the imaginary part of a zero-mode
    /// coefficient is discarded.
    pub fn with_mode(mut self, m: Mode, c: Complex64) -> Self {
        if m.is_zero() {
            *self.coefficients.entry(m).or_default() += Complex64::new(c.re, 0.0);
        } else {
            *self.coefficients.entry(m).or_default() += c;
            *self.coefficients.entry(-m).or_default() += c.conj();
        }
        self
    }

    /// Builds from a full coefficient table, rejecting tables that are not real.
    pub fn from_coefficients<I>(coefficients: I) -> Result<Self, TorusError>
    where
        I: IntoIterator<Item = (Mode, Complex64)>,
    {
        let coefficients: BTreeMap<Mode, Complex64> = coefficients.into_iter().collect();
        for (&m, &c) in &coefficients {
            let partner = coefficients.get(&-m).copied().unwrap_or_default();
            if (partner - c.conj()).norm() > 1e-12 * (1.0 + c.norm()) {
                return Err(TorusError::NotReal(m));
            }
        }
        Ok(TorusObservable { coefficients })
    }

    pub fn coefficient(&self, m: Mode) -> Complex64 {
        self.coefficients.get(&m).copied().unwrap_or_default()
    }

    /// All stored modes with their coefficients, in lexicographic order.
    pub fn modes(&self) -> impl Iterator<Item = (Mode, Complex64)> + '_ {
        self.coefficients.iter().map(|(&m, &c)| (m, c))
    }

    /// Nonzero modes only.
    pub fn fluctuating_modes(&self) -> impl Iterator<Item = (Mode, Complex64)> + '_ {
        self.modes().filter(|(m, c)| !m.is_zero() && *c != Complex64::default())
    }

    /// Truncation radius K: the largest `max|mᵢ|` among stored nonzero coefficients.
    pub fn radius(&self) -> i64 {
        self.modes()
            .filter(|(_, c)| *c != Complex64::default())
            .map(|(m, _)| m.radius())
            .max()
            .unwrap_or(0)
    }

    /// q̄ = ∫ q, the zero-mode coefficient.
    pub fn mean(&self) -> f64 {
        self.coefficient(Mode::ZERO).re
    }

    /// `Σ |c_m|`, an upper bound for the sup norm.
    pub fn sup_norm_bound(&self) -> f64 {
        self.coefficients.values().map(|c| c.norm()).sum()
    }

    pub fn is_constant(&self) -> bool {
        self.fluctuating_modes().next().is_none()
    }

    pub fn scale(&self, s: f64) -> Self {
        TorusObservable {
            coefficients: self.coefficients.iter().map(|(&m, &c)| (m, c * s)).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut coefficients = self.coefficients.clone();
        for (&m, &c) in &other.coefficients {
            *coefficients.entry(m).or_default() += c;
        }
        TorusObservable { coefficients }
    }

    /// `self ∘ κ`.
    pub fn compose(&self, map: &ToralAutomorphism) -> Self {
        TorusObservable {
            coefficients: self.modes().map(|(m, c)| (map.pushforward_mode(m), c)).collect(),
        }
    }

    /// The coboundary `h∘κ − h`.
    pub fn coboundary(h: &Self, map: &ToralAutomorphism) -> Self {
        h.compose(map).add(&h.scale(-1.0))
    }

    /// Complex evaluation; the imaginary part vanishes up to rounding.
    pub fn eval_complex(&self, rho: TorusPoint) -> Complex64 {
        self.modes()
            .map(|(m, c)| c * Complex64::cis(TAU * (m.0 as f64 * rho.x + m.1 as f64 * rho.p)))
            .sum()
    }

    pub fn eval(&self, rho: TorusPoint) -> f64 {
        self.compile().eval_lattice(LatticePoint::from(rho))
    }

    /// Precomputes the positive half of the spectrum for fast repeated evaluation.
    pub fn compile(&self) -> CompiledObservable {
        let terms = self
            .modes()
            .filter(|(m, c)| m.is_positive() && *c != Complex64::default())
            .map(|(m, c)| CompiledTerm {
                m1: m.0 as u64,
                m2: m.1 as u64,
                re2: 2.0 * c.re,
                im2: 2.0 * c.im,
            })
            .collect();
        CompiledObservable { mean: self.mean(), terms }
    }

    /// JSON form storing the zero mode and the lexicographically positive half.
    pub fn to_json(&self) -> serde_json::Value {
        let modes: Vec<ModeRecord> = self
            .modes()
            .filter(|(m, _)| m.is_zero() || m.is_positive())
            .map(|(m, c)| ModeRecord { m: [m.0, m.1], re: c.re, im: c.im })
            .collect();
        serde_json::to_value(ObservableRecord { k: self.radius(), modes })
            .expect("observable serialization")
    }

    pub fn from_json(value: &serde_json::Value) -> Result<Self, TorusError> {
        let record: ObservableRecord = serde_json::from_value(value.clone())
            .map_err(|e| TorusError::Json(e.to_string()))?;
        let mut q = Self::zero();
        for rec in record.modes {
            let m = Mode(rec.m[0], rec.m[1]);
            if !(m.is_zero() || m.is_positive()) {
                return Err(TorusError::Json(format!("mode {m:?} is not in the stored half")));
            }
            if m.radius() > record.k {
                return Err(TorusError::Json(format!("mode {m:?} exceeds K = {}", record.k)));
            }
            q = q.with_mode(m, Complex64::new(rec.re, rec.im));
        }
        Ok(q)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ModeRecord {
    m: [i64; 2],
    re: f64,
    im: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct ObservableRecord {
    #[serde(rename = "K")]
    k: i64,
    modes: Vec<ModeRecord>,
}

#[derive(Debug, Clone, Copy)]
struct CompiledTerm {
    m1: u64,
    m2: u64,
    re2: f64,
    im2: f64,
}

/// Evaluator for a real observable on dyadic grid points.
#[derive(Debug, Clone)]
pub struct CompiledObservable {
    mean: f64,
    terms: Vec<CompiledTerm>,
}

impl CompiledObservable {
    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// `q(pt)`. The phase `m·pt mod 1` is formed exactly in wrapping arithmetic.
    #[inline]
    pub fn eval_lattice(&self, pt: LatticePoint) -> f64 {
        self.mean + self.fluctuation(pt)
    }

    /// `q(pt) − q̄`, exactly zero for constant observables.
    #[inline]
    pub fn fluctuation(&self, pt: LatticePoint) -> f64 {
        let mut acc = 0.0;
        for t in &self.terms {
            let phase = t.m1.wrapping_mul(pt.x).wrapping_add(t.m2.wrapping_mul(pt.p));
            // Centre the phase in [-1/2, 1/2) before converting.
            let theta = TAU * (phase as i64) as f64 / TWO_POW_64;
            let (s, c) = theta.sin_cos();
            acc += t.re2 * c - t.im2 * s;
        }
        acc
    }
}

/// `⟨q⟩_T(ρ) = (1/T) Σ_{t=-T/2}^{T/2-1} q(κᵗ ρ)`.
pub fn birkhoff_symmetric(
    map: &ToralAutomorphism,
    q: &TorusObservable,
    rho: TorusPoint,
    window: usize,
) -> Result<f64, TorusError> {
    if window < 2 || window % 2 != 0 {
        return Err(TorusError::OddWindow(window));
    }
    let compiled = q.compile();
    let sum = symmetric_fluctuation_sum(map, &compiled, LatticePoint::from(rho), window);
    Ok(compiled.mean() + sum / window as f64)
}

/// `Σ_{t=-T/2}^{T/2-1} (q(κᵗ pt) − q̄)` on the dyadic grid. `window` must be even.
pub(crate) fn symmetric_fluctuation_sum(
    map: &ToralAutomorphism,
    q: &CompiledObservable,
    pt: LatticePoint,
    window: usize,
) -> f64 {
    let start = map.apply_lattice(pt, -((window / 2) as i64));
    forward_fluctuation_sum(&LatticeStep::new(map), q, start, window)
}

/// `Σ_{t=0}^{T-1} (q(κᵗ pt) − q̄)`.
#[inline]
pub(crate) fn forward_fluctuation_sum(
    step: &LatticeStep,
    q: &CompiledObservable,
    mut pt: LatticePoint,
    window: usize,
) -> f64 {
    let mut sum = 0.0;
    for _ in 0..window {
        sum += q.fluctuation(pt);
        pt = step.apply(pt);
    }
    sum
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn make_map_examples() {
        let arnold = ToralAutomorphism::new(2, 1, 1, 1).unwrap();
        assert_abs_diff_eq!(arnold.expansion_rate, ((3.0 + 5f64.sqrt()) / 2.0).ln(), epsilon = 1e-15);
        assert_abs_diff_eq!(arnold.expansion_rate, 0.962424, epsilon = 1e-6);
        let other = ToralAutomorphism::new(2, 1, 3, 2).unwrap();
        assert_abs_diff_eq!(other.expansion_rate, (2.0 + 3f64.sqrt()).ln(), epsilon = 1e-15);
        assert_abs_diff_eq!(other.expansion_rate, 1.316958, epsilon = 1e-6);
        assert_eq!(ToralAutomorphism::new(1, 0, 0, 1), Err(TorusError::NotHyperbolic { trace: 2 }));
        assert!(matches!(ToralAutomorphism::new(2, 1, 1, 2), Err(TorusError::NotUnimodular { det: 3, .. })));
        // Negative trace is hyperbolic too.
        assert!(ToralAutomorphism::new(-2, 1, 1, -1).is_ok());
    }

    #[test]
    fn apply_map_examples() {
        let arnold = ToralAutomorphism::arnold();
        assert_eq!(arnold.apply(TorusPoint::new(0.0, 0.0), 5), TorusPoint::new(0.0, 0.0));
        assert_eq!(arnold.apply(TorusPoint::new(0.5, 0.5), 1), TorusPoint::new(0.5, 0.0));
        let rho = TorusPoint::new(0.123, 0.77);
        assert_eq!(arnold.apply(rho, 0), rho);
    }

    #[test]
    fn pushforward_examples() {
        let arnold = ToralAutomorphism::arnold();
        assert_eq!(arnold.pushforward_mode(Mode(1, 0)), Mode(2, 1));
        assert_eq!(arnold.pushforward_mode(Mode::ZERO), Mode::ZERO);
        assert_eq!(arnold.pushforward_mode(Mode(1, -1)), Mode(1, 0));
    }

    #[test]
    fn birkhoff_constant_and_window_errors() {
        let arnold = ToralAutomorphism::arnold();
        let q = TorusObservable::constant(0.7);
        for t in [2, 4, 10] {
            assert_eq!(birkhoff_symmetric(&arnold, &q, TorusPoint::new(0.3, 0.9), t).unwrap(), 0.7);
        }
        assert_eq!(birkhoff_symmetric(&arnold, &q, TorusPoint::new(0.3, 0.9), 3), Err(TorusError::OddWindow(3)));
        assert_eq!(birkhoff_symmetric(&arnold, &q, TorusPoint::new(0.3, 0.9), 0), Err(TorusError::OddWindow(0)));
    }

    #[test]
    fn birkhoff_matches_direct_orbit_sum() {
        let arnold = ToralAutomorphism::arnold();
        let q = TorusObservable::cosine(Mode(1, 0), 1.0);
        let rho = TorusPoint::new(0.1, 0.2);
        let direct: f64 = (-2..2)
            .map(|t| {
                let pt = arnold.apply(rho, t);
                (TAU * pt.x).cos()
            })
            .sum::<f64>()
            / 4.0;
        let avg = birkhoff_symmetric(&arnold, &q, rho, 4).unwrap();
        assert_abs_diff_eq!(avg, direct, epsilon = 1e-12);
    }

    #[test]
    fn coboundary_telescopes() {
        let arnold = ToralAutomorphism::arnold();
        let h = TorusObservable::cosine(Mode(1, 0), 1.0);
        let q = TorusObservable::coboundary(&h, &arnold);
        assert_eq!(q.mean(), 0.0);
        let bound = 2.0 * h.sup_norm_bound();
        for (i, t) in [2usize, 6, 20, 100].into_iter().enumerate() {
            let rho = TorusPoint::new(0.137 * i as f64 + 0.01, 0.291 + 0.05 * i as f64);
            let avg = birkhoff_symmetric(&arnold, &q, rho, t).unwrap();
            assert!(avg.abs() <= bound / t as f64 + 1e-12, "T={t}: {avg}");
        }
    }

    #[test]
    fn observable_json_round_trip() {
        let q = TorusObservable::constant(0.3)
            .add(&TorusObservable::cosine(Mode(1, 0), 0.3))
            .add(&TorusObservable::sine(Mode(0, 2), -0.1));
        let json = q.to_json();
        assert_eq!(json["K"], 2);
        // zero mode + two positive modes
        assert_eq!(json["modes"].as_array().unwrap().len(), 3);
        assert_eq!(TorusObservable::from_json(&json).unwrap(), q);
        let bad = serde_json::json!({"K": 1, "modes": [{"m": [-1, 0], "re": 1.0, "im": 0.0}]});
        assert!(TorusObservable::from_json(&bad).is_err());
    }

    #[test]
    fn non_real_table_rejected() {
        let res = TorusObservable::from_coefficients([(Mode(1, 0), Complex64::new(1.0, 0.0))]);
        assert!(matches!(res, Err(TorusError::NotReal(_))));
    }

    #[test]
    fn symmetric_growth_rate_is_exact() {
        let arnold = ToralAutomorphism::arnold();
        for t in 1..=10 {
            assert_abs_diff_eq!(arnold.tangent_growth_rate(t), arnold.expansion_rate, epsilon = 1e-12);
        }
    }
}
