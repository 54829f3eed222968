//! Weighted transfer operators on a truncated Fourier lattice, the pressure
//! curve `F(ξ) = log λ(ξ)`, and its Legendre–Fenchel transform.
//!
//! The operator `L_ξ f = e^{ξ q} · (f∘κ)` acts on the coefficient vector of `f`
//! over the box `[-K, K]²`: modes are relabelled by `m ↦ κᵀ m`, then convolved with
//! the coefficients of `e^{ξ q}`. Anything leaving the box is dropped, which turns
//! the (unitary) relabelling into a nilpotent map off the constant mode and
//! isolates the leading eigenvalue. Isolation is certified per run by the ratio
//! of the subdominant modulus to λ(ξ).

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::deviation::{check_estimate_family, extrapolate_rate, DeviationEstimate};
use crate::fourier::compose_coefficients;
use crate::rng;
use crate::torus::{forward_fluctuation_sum, LatticeStep, Mode, ToralAutomorphism, TorusObservable};

/// Largest admissible `|ξ| · Σ|c_m|`.
pub const WEIGHT_LIMIT: f64 = 30.0;
/// Largest admissible `|ξ| · T · Σ|c_m|` for sampled cumulants.
pub const CUMULANT_LIMIT: f64 = 600.0;
/// Gap ratios above this are rejected.
pub const GAP_LIMIT: f64 = 0.95;
/// Kernel coefficients below this modulus are dropped.
pub const KERNEL_CUTOFF: f64 = 1e-15;

const MAX_POWER_ITERATIONS: usize = 20_000;
const GAP_ITERATIONS: usize = 160;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TransferError {
    #[error("box radius {box_radius} is below twice the observable radius {radius}")]
    BoxTooSmall { box_radius: i64, radius: i64 },
    #[error("|xi| * sup-norm bound = {0} exceeds {WEIGHT_LIMIT}")]
    WeightOverflow(f64),
    #[error("|xi| * T * sup-norm bound = {0} exceeds {CUMULANT_LIMIT}")]
    CumulantOverflow(f64),
    #[error("leading eigenvalue not isolated at xi = {xi}: gap ratio {gap_ratio}")]
    NoGap { xi: f64, gap_ratio: f64 },
    #[error("power iteration did not converge at xi = {0}")]
    NotConverged(f64),
    #[error("tolerance {0} outside (1e-14, 1e-4)")]
    BadTolerance(f64),
    #[error("xi grid must be sorted, symmetric about 0 and contain 0")]
    BadGrid,
    #[error("eta = {0} lies outside the slope range of the grid")]
    EtaOutOfRange(f64),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
}

/// The truncated operator `L_ξ` for one weight.
#[derive(Debug, Clone)]
pub struct TransferModel {
    pub map: ToralAutomorphism,
    pub observable: TorusObservable,
    pub box_radius: i64,
    pub xi: f64,
    kernel: Vec<(Mode, Complex64)>,
    /// `relabel[i]` is the index of `κᵀ m_i`, if it stays in the box.
    relabel: Vec<Option<usize>>,
}

impl TransferModel {
    fn side(&self) -> usize {
        (2 * self.box_radius + 1) as usize
    }

    pub fn dimension(&self) -> usize {
        self.side() * self.side()
    }

    fn index(&self, m: Mode) -> Option<usize> {
        let k = self.box_radius;
        if m.radius() > k {
            return None;
        }
        Some(((m.0 + k) as usize) * self.side() + (m.1 + k) as usize)
    }

    fn mode(&self, i: usize) -> Mode {
        let side = self.side();
        Mode((i / side) as i64 - self.box_radius, (i % side) as i64 - self.box_radius)
    }

    /// Coefficients of `e^{ξ q}` kept in the operator.
    pub fn kernel(&self) -> &[(Mode, Complex64)] {
        &self.kernel
    }

    fn convolve(&self, g: &[Complex64], conj: bool) -> Vec<Complex64> {
        let mut out = vec![Complex64::default(); g.len()];
        for (i, &gi) in g.iter().enumerate() {
            if gi == Complex64::default() {
                continue;
            }
            let m = self.mode(i);
            for &(n, c) in &self.kernel {
                // Forward: out[m + n] += c_n g[m]. Adjoint: out[m − n] += conj(c_n) g[m].
                let (target, w) = if conj { (m - n, c.conj()) } else { (m + n, c) };
                if let Some(j) = self.index(target) {
                    out[j] += w * gi;
                }
            }
        }
        out
    }

    /// `L_ξ v`.
    pub fn apply(&self, v: &[Complex64]) -> Vec<Complex64> {
        let mut g = vec![Complex64::default(); v.len()];
        for (i, &vi) in v.iter().enumerate() {
            if let Some(j) = self.relabel[i] {
                g[j] += vi;
            }
        }
        self.convolve(&g, false)
    }

    /// `L_ξ† v`.
    pub fn apply_adjoint(&self, v: &[Complex64]) -> Vec<Complex64> {
        let h = self.convolve(v, true);
        self.relabel.iter().map(|t| t.map(|j| h[j]).unwrap_or_default()).collect()
    }

    fn constant_vector(&self) -> Vec<Complex64> {
        let mut v = vec![Complex64::default(); self.dimension()];
        v[self.index(Mode::ZERO).expect("zero mode")] = Complex64::new(1.0, 0.0);
        v
    }
}

pub fn build_weighted_transfer(
    map: &ToralAutomorphism,
    q: &TorusObservable,
    xi: f64,
    box_radius: i64,
) -> Result<TransferModel, TransferError> {
    let radius = q.radius();
    if box_radius < 2 * radius || box_radius < 1 {
        return Err(TransferError::BoxTooSmall { box_radius, radius });
    }
    let weight = xi.abs() * q.sup_norm_bound();
    if weight > WEIGHT_LIMIT {
        return Err(TransferError::WeightOverflow(weight));
    }
    let kernel: Vec<(Mode, Complex64)> = if xi == 0.0 {
        vec![(Mode::ZERO, Complex64::new(1.0, 0.0))]
    } else {
        let grid = 4 * box_radius as usize;
        compose_coefficients(q, |v| (xi * v).exp(), grid, 2 * box_radius - 1, KERNEL_CUTOFF)
            .modes()
            .collect()
    };
    let mut model = TransferModel {
        map: *map,
        observable: q.clone(),
        box_radius,
        xi,
        kernel,
        relabel: Vec::new(),
    };
    model.relabel = (0..model.dimension())
        .map(|i| model.index(map.pushforward_mode(model.mode(i))))
        .collect();
    Ok(model)
}

fn norm(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn dot(u: &[Complex64], v: &[Complex64]) -> Complex64 {
    u.iter().zip(v).map(|(a, b)| a.conj() * b).sum()
}

fn scale(v: &mut [Complex64], s: f64) {
    v.iter_mut().for_each(|z| *z *= s);
}

/// Power iteration from `start`; returns (eigenvalue, unit eigenvector).
fn power_iterate(
    start: Vec<Complex64>,
    apply: impl Fn(&[Complex64]) -> Vec<Complex64>,
    tol: f64,
) -> Option<(Complex64, Vec<Complex64>)> {
    let mut x = start;
    let n0 = norm(&x);
    scale(&mut x, 1.0 / n0);
    let mut prev: Option<Complex64> = None;
    for _ in 0..MAX_POWER_ITERATIONS {
        let y = apply(&x);
        // Rayleigh quotient with ‖x‖ = 1.
        let rq = dot(&x, &y);
        let ny = norm(&y);
        if ny == 0.0 {
            return None;
        }
        x = y;
        scale(&mut x, 1.0 / ny);
        if let Some(p) = prev {
            if (rq - p).norm() < tol {
                return Some((rq, x));
            }
        }
        prev = Some(rq);
    }
    None
}

/// Leading eigenvalue λ(ξ) and the ratio `|λ₂| / λ` of the subdominant modulus.
pub fn leading_eigenvalue(model: &TransferModel, tol: f64) -> Result<(f64, f64), TransferError> {
    if !(tol > 1e-14 && tol < 1e-4) {
        return Err(TransferError::BadTolerance(tol));
    }
    let (lambda, right) = power_iterate(model.constant_vector(), |v| model.apply(v), tol)
        .ok_or(TransferError::NotConverged(model.xi))?;
    let (lambda_adj, left) = power_iterate(model.constant_vector(), |v| model.apply_adjoint(v), tol)
        .ok_or(TransferError::NotConverged(model.xi))?;
    if (lambda_adj.conj() - lambda).norm() > 1e3 * tol.max(1e-12) * lambda.norm() {
        return Err(TransferError::NotConverged(model.xi));
    }
    let gap_ratio = subdominant_modulus(model, lambda, &right, &left) / lambda.re;
    if gap_ratio > GAP_LIMIT {
        return Err(TransferError::NoGap { xi: model.xi, gap_ratio });
    }
    Ok((lambda.re, gap_ratio))
}

/// Growth rate of `L − λ v wᴴ / (wᴴ v)` from a fixed deterministic start.
fn subdominant_modulus(model: &TransferModel, lambda: Complex64, right: &[Complex64], left: &[Complex64]) -> f64 {
    let denom = dot(left, right);
    let deflated = |x: &[Complex64]| {
        let mut y = model.apply(x);
        let coef = lambda * dot(left, x) / denom;
        for (yi, ri) in y.iter_mut().zip(right) {
            *yi -= coef * ri;
        }
        y
    };
    // Fixed pseudo-random start so every mode participates.
    let mut state = 0x9e37_79b9_7f4a_7c15u64;
    let mut x: Vec<Complex64> = (0..model.dimension())
        .map(|_| {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            Complex64::new((state >> 11) as f64 / (1u64 << 53) as f64 - 0.5, 0.0)
        })
        .collect();
    let n0 = norm(&x);
    scale(&mut x, 1.0 / n0);
    let burn_in = GAP_ITERATIONS / 2;
    let mut log_growth = 0.0;
    for it in 0..GAP_ITERATIONS {
        x = deflated(&x);
        let n = norm(&x);
        if n < 1e-250 {
            return 0.0;
        }
        if it >= burn_in {
            log_growth += n.ln();
        }
        scale(&mut x, 1.0 / n);
    }
    (log_growth / (GAP_ITERATIONS - burn_in) as f64).exp()
}

/// `F(ξ) = log λ(ξ)` sampled on a symmetric grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PressureCurve {
    pub xi: Vec<f64>,
    pub f: Vec<f64>,
    pub lambda: Vec<f64>,
    pub gap_ratio: Vec<f64>,
    /// Central second difference at ξ = 0.
    pub sigma_sq_from_pressure: f64,
    /// Central first difference at ξ = 0 (the mean q̄).
    pub mean_from_pressure: f64,
}

impl PressureCurve {
    fn zero_index(&self) -> usize {
        self.xi.iter().position(|&x| x == 0.0).expect("grid contains 0")
    }

    /// Divided second differences are all ≥ `-tol`.
    pub fn is_convex(&self, tol: f64) -> bool {
        second_differences(&self.xi, &self.f).iter().all(|&d| d >= -tol)
    }

    /// `F(ξ) ≥ ξ q̄` at every grid point.
    pub fn satisfies_jensen(&self, mean: f64, tol: f64) -> bool {
        self.xi.iter().zip(&self.f).all(|(x, f)| *f >= x * mean - tol)
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["xi", "F", "lambda", "gap_ratio"]).expect("csv");
        for i in 0..self.xi.len() {
            w.write_record([
                self.xi[i].to_string(),
                self.f[i].to_string(),
                self.lambda[i].to_string(),
                self.gap_ratio[i].to_string(),
            ])
            .expect("csv");
        }
        String::from_utf8(w.into_inner().expect("csv")).expect("utf8")
    }
}

/// Divided second differences `2 [x₀, x₁, x₂] f` of a sampled function.
pub fn second_differences(xs: &[f64], fs: &[f64]) -> Vec<f64> {
    (1..xs.len().saturating_sub(1))
        .map(|i| {
            let s1 = (fs[i] - fs[i - 1]) / (xs[i] - xs[i - 1]);
            let s2 = (fs[i + 1] - fs[i]) / (xs[i + 1] - xs[i]);
            2.0 * (s2 - s1) / (xs[i + 1] - xs[i - 1])
        })
        .collect()
}

/// Uniform grid `{-n h, …, 0, …, n h}`, built from integers so it is exactly symmetric.
pub fn symmetric_grid(half_width: f64, step: f64) -> Vec<f64> {
    let n = (half_width / step).round() as i64;
    (-n..=n).map(|i| i as f64 * step).collect()
}

pub fn check_grid(grid: &[f64]) -> Result<usize, TransferError> {
    let zero = grid.iter().position(|&x| x == 0.0).ok_or(TransferError::BadGrid)?;
    let sorted = grid.windows(2).all(|w| w[0] < w[1]);
    let n = grid.len();
    let symmetric = (0..n).all(|i| grid[i] == -grid[n - 1 - i]);
    if !sorted || !symmetric || grid.len() < 3 {
        return Err(TransferError::BadGrid);
    }
    Ok(zero)
}

pub fn pressure_curve(
    map: &ToralAutomorphism,
    q: &TorusObservable,
    xi_grid: &[f64],
    box_radius: i64,
    tol: f64,
) -> Result<PressureCurve, TransferError> {
    let zero = check_grid(xi_grid)?;
    let points: Vec<(f64, f64)> = xi_grid
        .par_iter()
        .map(|&xi| {
            let model = build_weighted_transfer(map, q, xi, box_radius)?;
            leading_eigenvalue(&model, tol)
        })
        .collect::<Result<_, _>>()?;
    let lambda: Vec<f64> = points.iter().map(|p| p.0).collect();
    let gap_ratio: Vec<f64> = points.iter().map(|p| p.1).collect();
    let f: Vec<f64> = lambda.iter().map(|l| l.ln()).collect();
    let h_minus = xi_grid[zero] - xi_grid[zero - 1];
    let h_plus = xi_grid[zero + 1] - xi_grid[zero];
    let sigma_sq_from_pressure =
        2.0 * ((f[zero + 1] - f[zero]) / h_plus - (f[zero] - f[zero - 1]) / h_minus) / (h_plus + h_minus);
    let mean_from_pressure = (f[zero + 1] - f[zero - 1]) / (h_plus + h_minus);
    let curve = PressureCurve { xi: xi_grid.to_vec(), f, lambda, gap_ratio, sigma_sq_from_pressure, mean_from_pressure };
    debug_assert_eq!(curve.zero_index(), zero);
    Ok(curve)
}

/// Sampled `(1/T) log E[exp(ξ (Σ_{t<T} q∘κᵗ − T q̄))]` with its delta-method standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CumulantEstimate {
    pub value: f64,
    pub stderr: f64,
}

pub fn monte_carlo_cumulant(
    map: &ToralAutomorphism,
    q: &TorusObservable,
    xi: f64,
    window: usize,
    samples: u64,
    seed: u64,
) -> Result<CumulantEstimate, TransferError> {
    let weight = xi.abs() * window as f64 * q.sup_norm_bound();
    if weight > CUMULANT_LIMIT {
        return Err(TransferError::CumulantOverflow(weight));
    }
    if window == 0 || samples == 0 {
        return Err(TransferError::InsufficientData("empty window or sample".into()));
    }
    let compiled = q.compile();
    let step = LatticeStep::new(map);
    let stage = format!("cumulant/T={window}");
    // Per chunk: (max exponent, Σ e^{v − max}, Σ e^{2(v − max)}).
    let (m, s1, s2) = rng::chunked(
        samples,
        seed,
        &stage,
        |r, n| {
            let vals: Vec<f64> = (0..n)
                .map(|_| xi * forward_fluctuation_sum(&step, &compiled, rng::lattice_point(r), window))
                .collect();
            let m = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut s1 = 0.0;
            let mut s2 = 0.0;
            for v in vals {
                let e = (v - m).exp();
                s1 += e;
                s2 += e * e;
            }
            (m, s1, s2)
        },
        (f64::NEG_INFINITY, 0.0, 0.0),
        |a, b| {
            if a.0 == f64::NEG_INFINITY {
                return b;
            }
            let m = a.0.max(b.0);
            let (ra, rb) = ((a.0 - m).exp(), (b.0 - m).exp());
            (m, a.1 * ra + b.1 * rb, a.2 * ra * ra + b.2 * rb * rb)
        },
    );
    let n = samples as f64;
    let mean = s1 / n;
    let second = s2 / n;
    let rel_var = ((second - mean * mean) / (mean * mean)).max(0.0);
    let t = window as f64;
    Ok(CumulantEstimate { value: (m + mean.ln()) / t, stderr: (rel_var / n).sqrt() / t })
}

/// `I(η) = sup_ξ {ξ η − F(ξ)}` on a grid of η.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFunction {
    pub eta: Vec<f64>,
    pub i_values: Vec<f64>,
    /// Where I vanishes: the slope of F at 0, i.e. q̄.
    pub center: f64,
}

impl RateFunction {
    pub fn is_convex(&self, tol: f64) -> bool {
        second_differences(&self.eta, &self.i_values).iter().all(|&d| d >= -tol)
    }

    /// Half the second derivative of I at its centre, from a parabola through the
    /// three grid points closest to the centre.
    pub fn curvature_at_center(&self) -> Result<f64, TransferError> {
        if self.eta.len() < 3 {
            return Err(TransferError::InsufficientData("rate grid shorter than 3".into()));
        }
        let i = self
            .eta
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - self.center).abs().total_cmp(&(b.1 - self.center).abs()))
            .map(|(i, _)| i)
            .expect("nonempty")
            .clamp(1, self.eta.len() - 2);
        let d = second_differences(&self.eta[i - 1..=i + 1], &self.i_values[i - 1..=i + 1]);
        Ok(d[0] / 2.0)
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["eta", "I"]).expect("csv");
        for (e, i) in self.eta.iter().zip(&self.i_values) {
            w.write_record([e.to_string(), i.to_string()]).expect("csv");
        }
        String::from_utf8(w.into_inner().expect("csv")).expect("utf8")
    }
}

/// Discrete convex conjugate of the samples `(xs, fs)` at each `y`, with a
/// parabolic refinement through the maximiser and its two neighbours.
///
/// Fails when the maximiser is a grid endpoint (y beyond the attainable slopes).
pub fn convex_conjugate(xs: &[f64], fs: &[f64], ys: &[f64]) -> Result<Vec<f64>, TransferError> {
    if xs.len() < 3 || xs.len() != fs.len() {
        return Err(TransferError::InsufficientData("need at least 3 samples".into()));
    }
    ys.iter()
        .map(|&y| {
            let g: Vec<f64> = xs.iter().zip(fs).map(|(x, f)| x * y - f).collect();
            let (k, _) = g
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .expect("nonempty");
            if k == 0 || k == xs.len() - 1 {
                return Err(TransferError::EtaOutOfRange(y));
            }
            Ok(parabola_max(&xs[k - 1..=k + 1], &g[k - 1..=k + 1]))
        })
        .collect()
}

/// Maximum of the parabola through three points (the middle one largest).
fn parabola_max(x: &[f64], g: &[f64]) -> f64 {
    let d1 = (g[1] - g[0]) / (x[1] - x[0]);
    let d2 = (g[2] - g[1]) / (x[2] - x[1]);
    let a = (d2 - d1) / (x[2] - x[0]);
    if a >= 0.0 {
        return g[1];
    }
    // g(t) = g[1] + b (t − x1) + a (t − x1)², with b the slope at x1.
    let b = d1 + a * (x[1] - x[0]);
    let best = g[1] - b * b / (4.0 * a);
    best.max(g[1])
}

pub fn legendre_fenchel(curve: &PressureCurve, eta_grid: &[f64]) -> Result<RateFunction, TransferError> {
    let i_values = convex_conjugate(&curve.xi, &curve.f, eta_grid)?;
    Ok(RateFunction { eta: eta_grid.to_vec(), i_values, center: curve.mean_from_pressure })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GartnerEllisRow {
    #[serde(rename = "T")]
    pub t: usize,
    pub empirical_rate: f64,
    pub relative_error: f64,
}

/// Empirical moderate-deviation rates against `−inf_{η ≥ ε} 𝓘(η)`, where
/// `𝓘(η) = lim a² I(q̄ + η/a) = κ η²` uses the curvature κ of I at its centre.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GartnerEllisComparison {
    pub predicted_rate: f64,
    pub rows: Vec<GartnerEllisRow>,
    pub extrapolated_rate: f64,
    pub extrapolated_relative_error: f64,
}

pub fn gartner_ellis_check(
    rate: &RateFunction,
    estimates: &[DeviationEstimate],
) -> Result<GartnerEllisComparison, TransferError> {
    check_estimate_family(estimates).map_err(|e| match e {
        crate::deviation::DeviationError::InsufficientData(msg) => TransferError::InsufficientData(msg),
        other => TransferError::InsufficientData(other.to_string()),
    })?;
    let curvature = rate.curvature_at_center()?;
    if !(curvature > 0.0) {
        return Err(TransferError::InsufficientData("rate function is flat at its centre".into()));
    }
    let eps = estimates[0].epsilon;
    // The scaled rate is increasing on [ε, ∞) for ε > 0, so the infimum sits at ε.
    let predicted_rate = -curvature * eps * eps;
    let rel = |r: f64| ((r - predicted_rate) / predicted_rate).abs();
    let rows = estimates
        .iter()
        .map(|e| GartnerEllisRow { t: e.t, empirical_rate: e.rate, relative_error: rel(e.rate) })
        .collect();
    let (extrapolated_rate, _) = extrapolate_rate(estimates);
    Ok(GartnerEllisComparison {
        predicted_rate,
        rows,
        extrapolated_rate,
        extrapolated_relative_error: rel(extrapolated_rate),
    })
}
