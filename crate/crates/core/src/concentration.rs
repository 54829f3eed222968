//! Concentration of decay rates of damped quantum maps.
//!
//! An eigenvalue `λ` of `M_N` has per-step decay rate `r = −ln|λ|`. Rates
//! cluster around the mean damping `ḡ`; this module counts how many fall
//! outside a window `|r − ḡ| < w` that is either fixed or shrinks like
//! `w(N) = (ln N)^{−(1−α)/2}`. Throughout, `|ln h|` is realised as `ln N`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::deviation::SpectralConstant;
use crate::quantum::{damped_propagator, spectrum, QuantumError};
use crate::torus::{ToralAutomorphism, TorusObservable};

/// Rates below this are reported as floor violations (moduli above `sup a`).
pub const RATE_FLOOR: f64 = -1e-8;
/// Multiplicative slack allowed between consecutive outside fractions.
pub const NOISE_ALLOWANCE: f64 = 0.1;
/// Fractions above `BOUND_SAFETY × bound_value` are flagged.
pub const BOUND_SAFETY: f64 = 10.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConcentrationError {
    #[error("alpha must lie in (0, 1), got {0}")]
    BadAlpha(f64),
    #[error("window half-width must be positive and finite, got {0}")]
    BadEpsilon(f64),
    #[error("need at least 3 Hilbert dimensions, got {0}")]
    TooFewSizes(usize),
    #[error("N list must be strictly ascending")]
    NotAscending,
    #[error(transparent)]
    Quantum(#[from] QuantumError),
}

pub fn window_width(n: usize, alpha: f64) -> f64 {
    (n as f64).ln().powf(-(1.0 - alpha) / 2.0)
}

pub fn check_alpha(alpha: f64) -> Result<(), ConcentrationError> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(ConcentrationError::BadAlpha(alpha))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayRateSample {
    #[serde(rename = "N")]
    pub n: usize,
    /// Ascending.
    pub rates: Vec<f64>,
    pub center: f64,
    pub alpha: f64,
    pub width: f64,
    /// Number of rates below [`RATE_FLOOR`]; kept as computed.
    pub below_floor: usize,
}

impl DecayRateSample {
    pub fn from_rates(n: usize, mut rates: Vec<f64>, center: f64, alpha: f64) -> Result<Self, ConcentrationError> {
        check_alpha(alpha)?;
        rates.sort_by(f64::total_cmp);
        let below_floor = rates.iter().filter(|&&r| r < RATE_FLOOR).count();
        Ok(Self { n, rates, center, alpha, width: window_width(n, alpha), below_floor })
    }

    pub fn mean_rate(&self) -> f64 {
        self.rates.iter().sum::<f64>() / self.rates.len() as f64
    }

    pub fn shifted(&self, g0: f64) -> Self {
        Self { rates: self.rates.iter().map(|r| r + g0).collect(), center: self.center + g0, ..self.clone() }
    }
}

/// Rates `−ln|λ_j|` of a spectrum, centred at the mean of `g`.
pub fn decay_rates(eigenvalues: &[Complex64], g: &TorusObservable, alpha: f64) -> Result<DecayRateSample, ConcentrationError> {
    let rates = eigenvalues.iter().map(|z| -z.norm().ln()).collect();
    DecayRateSample::from_rates(eigenvalues.len(), rates, g.mean(), alpha)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "epsilon")]
pub enum Window {
    Shrinking,
    Fixed(f64),
}

impl Window {
    pub fn half_width(&self, sample: &DecayRateSample) -> f64 {
        match *self {
            Window::Shrinking => sample.width,
            Window::Fixed(eps) => eps,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutsideCount {
    pub count: usize,
    pub fraction: f64,
    /// `r ≥ center + w`
    pub above: usize,
    /// `r ≤ center − w`
    pub below: usize,
}

pub fn count_outside(sample: &DecayRateSample, window: Window) -> OutsideCount {
    let w = window.half_width(sample);
    let above = sample.rates.iter().filter(|&&r| r - sample.center >= w).count();
    let below = sample.rates.iter().filter(|&&r| sample.center - r >= w).count();
    let count = above + below;
    let fraction = if sample.n == 0 { 0.0 } else { count as f64 / sample.n as f64 };
    OutsideCount { count, fraction, above, below }
}

pub fn weyl_count_check(sample: &DecayRateSample) -> bool {
    sample.rates.len() == sample.n
}

/// `e^{−c w² ln N} / (w² ln N)`, the fraction-normalised bound shape.
pub fn bound_value(n: usize, width: f64, c: f64) -> f64 {
    if c.is_infinite() {
        return 0.0;
    }
    let s = width * width * (n as f64).ln();
    (-c * s).exp() / s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationRow {
    #[serde(rename = "N")]
    pub n: usize,
    pub log_n: f64,
    pub width: f64,
    pub count_outside: usize,
    pub fraction_outside: f64,
    pub count_above: usize,
    pub count_below: usize,
    pub mean_rate: f64,
    pub center_drift: f64,
    pub below_floor: usize,
    pub bound_value: Option<f64>,
    pub bound_exceeded: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitStatus {
    Fitted,
    /// Every fraction is zero: perfect concentration.
    Degenerate,
    /// Fewer than two nonzero fractions.
    Insufficient,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationReport {
    pub log_h_convention: String,
    pub alpha: f64,
    pub window: Window,
    pub epsilon_fixed: Option<f64>,
    pub c: Option<f64>,
    pub c_is_infinite: bool,
    pub rows: Vec<ConcentrationRow>,
    /// `−slope` of `ln(fraction)` against `ln N` over rows with nonzero fraction.
    pub fitted_exponent: Option<f64>,
    pub fit_status: FitStatus,
    pub zero_fraction_ns: Vec<usize>,
    pub non_increasing: bool,
    pub warnings: Vec<String>,
}

impl ConcentrationReport {
    /// Perfect concentration counts as success.
    pub fn decays(&self) -> bool {
        match self.fit_status {
            FitStatus::Degenerate => true,
            FitStatus::Fitted => self.fitted_exponent.is_some_and(|e| e > 0.0),
            FitStatus::Insufficient => false,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["N", "log_N", "width", "fraction_outside", "bound_value"]).expect("in-memory write");
        for r in &self.rows {
            let bound = r.bound_value.map(|b| b.to_string()).unwrap_or_default();
            w.write_record([r.n.to_string(), r.log_n.to_string(), r.width.to_string(), r.fraction_outside.to_string(), bound])
                .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii")
    }
}

pub fn non_increasing(fractions: &[f64]) -> bool {
    fractions.windows(2).all(|w| w[1] <= w[0] * (1.0 + NOISE_ALLOWANCE))
}

fn fit_exponent(rows: &[ConcentrationRow]) -> (Option<f64>, FitStatus) {
    let pts: Vec<(f64, f64)> = rows.iter().filter(|r| r.fraction_outside > 0.0).map(|r| (r.log_n, r.fraction_outside.ln())).collect();
    if pts.is_empty() {
        return (None, FitStatus::Degenerate);
    }
    if pts.len() < 2 {
        return (None, FitStatus::Insufficient);
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    (Some(-sxy / sxx), FitStatus::Fitted)
}

pub fn check_sizes(n_list: &[usize]) -> Result<(), ConcentrationError> {
    if n_list.len() < 3 {
        return Err(ConcentrationError::TooFewSizes(n_list.len()));
    }
    if n_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(ConcentrationError::NotAscending);
    }
    Ok(())
}

/// Builds the report from precomputed samples (ascending in N).
pub fn concentration_report(
    samples: &[DecayRateSample],
    window: Window,
    constant: Option<&SpectralConstant>,
) -> Result<ConcentrationReport, ConcentrationError> {
    check_sizes(&samples.iter().map(|s| s.n).collect::<Vec<_>>())?;
    if let Window::Fixed(eps) = window {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(ConcentrationError::BadEpsilon(eps));
        }
    }
    let alpha = samples[0].alpha;
    let mut warnings = Vec::new();
    let rows: Vec<ConcentrationRow> = samples
        .iter()
        .map(|s| {
            let out = count_outside(s, window);
            let width = window.half_width(s);
            let bound = constant.map(|k| bound_value(s.n, width, k.c));
            let exceeded = bound.is_some_and(|b| out.fraction > BOUND_SAFETY * b);
            if exceeded {
                warnings.push(format!("N = {}: fraction {} exceeds {} x bound", s.n, out.fraction, BOUND_SAFETY));
            }
            if s.below_floor > 0 {
                warnings.push(format!("N = {}: {} rates below {}", s.n, s.below_floor, RATE_FLOOR));
            }
            if !weyl_count_check(s) {
                warnings.push(format!("N = {}: {} rates for dimension {}", s.n, s.rates.len(), s.n));
            }
            let mean_rate = s.mean_rate();
            ConcentrationRow {
                n: s.n,
                log_n: (s.n as f64).ln(),
                width,
                count_outside: out.count,
                fraction_outside: out.fraction,
                count_above: out.above,
                count_below: out.below,
                mean_rate,
                center_drift: mean_rate - s.center,
                below_floor: s.below_floor,
                bound_value: bound,
                bound_exceeded: exceeded,
            }
        })
        .collect();
    let (fitted_exponent, fit_status) = fit_exponent(&rows);
    let fractions: Vec<f64> = rows.iter().map(|r| r.fraction_outside).collect();
    Ok(ConcentrationReport {
        log_h_convention: "|log h| = ln N".into(),
        alpha,
        window,
        epsilon_fixed: match window {
            Window::Fixed(eps) => Some(eps),
            Window::Shrinking => None,
        },
        c: constant.and_then(|k| k.c.is_finite().then_some(k.c)),
        c_is_infinite: constant.is_some_and(|k| k.c.is_infinite()),
        zero_fraction_ns: rows.iter().filter(|r| r.count_outside == 0).map(|r| r.n).collect(),
        non_increasing: non_increasing(&fractions),
        rows,
        fitted_exponent,
        fit_status,
        warnings,
    })
}

/// Spectra of `Op(e^{−g}) U_N(κ)` for each N.
pub fn damped_spectra(
    map: &ToralAutomorphism,
    g: &TorusObservable,
    n_list: &[usize],
) -> Result<Vec<(usize, Vec<Complex64>)>, ConcentrationError> {
    n_list
        .iter()
        .map(|&n| {
            let sys = damped_propagator(map, g, n)?;
            Ok((n, spectrum(&sys)?))
        })
        .collect()
}

pub fn concentration_sweep(
    map: &ToralAutomorphism,
    g: &TorusObservable,
    n_list: &[usize],
    alpha: f64,
    window: Window,
    constant: Option<&SpectralConstant>,
) -> Result<ConcentrationReport, ConcentrationError> {
    check_alpha(alpha)?;
    check_sizes(n_list)?;
    let samples = damped_spectra(map, g, n_list)?
        .iter()
        .map(|(_, ev)| decay_rates(ev, g, alpha))
        .collect::<Result<Vec<_>, _>>()?;
    concentration_report(&samples, window, constant)
}
