//! Quantization on the torus with Planck constant `h = 1/(2πN)`.
//!
//! The Hilbert space is `C^N` with basis `|j⟩, j ∈ Z_N`. Fourier modes quantize
//! to phase-space translations
//!
//! ```text
//! T_N(m) |j⟩ = exp(iπ m₁ m₂ / N) · exp(2πi m₂ j / N) |j + m₁⟩,
//! ```
//!
//! so `e(x)` is the cyclic shift and `e(p)` the diagonal modulation. Cat maps
//! quantize through the quadratic Gauss-sum kernel
//!
//! ```text
//! U[j, k] ∝ Σ_{μ=0}^{|b|-1} exp(iπ (a k² − 2 k (j + μN) + d (j + μN)²) / (N b)),
//! ```
//!
//! normalised to be unitary. With these conventions the exact Egorov identity
//! reads `U† T(m) U = phase · T(κ⁻¹ m)`; see [`egorov_image`].

use faer::{Mat, MatRef};
use num_complex::Complex64;
use std::f64::consts::PI;
use thiserror::Error;

use crate::fourier::compose_coefficients;
use crate::torus::{Mode, ToralAutomorphism, TorusObservable, TorusPoint};

pub type C64 = Complex64;

/// Unitarity defect (Frobenius) accepted for a propagator.
pub const UNITARITY_TOL: f64 = 1e-10;
/// Damping symbol coefficients below this modulus are dropped.
pub const SYMBOL_CUTOFF: f64 = 1e-15;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuantumError {
    #[error("N = {n} aliases modes of radius {radius} (need N > 2 * radius)")]
    Aliasing { n: usize, radius: i64 },
    #[error("map ({a} {b}; {c} {d}) is not quantizable at N = {n}: {reason}")]
    NotQuantizable { a: i64, b: i64, c: i64, d: i64, n: usize, reason: String },
    #[error("kernel is singular for b = 0")]
    SingularKernel,
    #[error("damping symbol exceeds 1: sup a = {0}")]
    DampingExceedsOne(f64),
    #[error("Hilbert dimension must be >= 2, got {0}")]
    DimensionTooSmall(usize),
    #[error("dense eigensolver failed: {0}")]
    EigFailure(String),
    #[error("invariant violated: {0}")]
    Invariant(String),
}

/// `exp(iπ k / denom)` with `k` reduced exactly mod `2 denom`.
fn root_of_unity(k: i128, denom: i128) -> C64 {
    let r = k.rem_euclid(2 * denom);
    C64::cis(PI * r as f64 / denom as f64)
}

/// A phase-space translation, stored as the monomial matrix it is.
#[derive(Debug, Clone)]
pub struct TranslationOperator {
    pub m: Mode,
    pub n: usize,
    /// Column `j` has its single entry `phases[j]` in row `(j + m₁) mod N`.
    phases: Vec<C64>,
}

impl TranslationOperator {
    pub fn row_of(&self, j: usize) -> usize {
        (j as i64 + self.m.0).rem_euclid(self.n as i64) as usize
    }

    pub fn phase(&self, j: usize) -> C64 {
        self.phases[j]
    }

    pub fn to_matrix(&self) -> Mat<C64> {
        let mut out = Mat::<C64>::zeros(self.n, self.n);
        for j in 0..self.n {
            out[(self.row_of(j), j)] = self.phases[j];
        }
        out
    }

    /// `T · B` in O(N²).
    pub fn left_mul(&self, b: MatRef<'_, C64>) -> Mat<C64> {
        let mut out = Mat::<C64>::zeros(self.n, b.ncols());
        for j in 0..self.n {
            let r = self.row_of(j);
            let ph = self.phases[j];
            for c in 0..b.ncols() {
                out[(r, c)] = ph * b[(j, c)];
            }
        }
        out
    }

    /// `B · T` in O(N²).
    pub fn right_mul(&self, b: MatRef<'_, C64>) -> Mat<C64> {
        let mut out = Mat::<C64>::zeros(b.nrows(), self.n);
        for j in 0..self.n {
            let r = self.row_of(j);
            let ph = self.phases[j];
            for i in 0..b.nrows() {
                out[(i, j)] = b[(i, r)] * ph;
            }
        }
        out
    }
}

pub fn translation_operator(m: Mode, n: usize) -> Result<TranslationOperator, QuantumError> {
    if n < 2 {
        return Err(QuantumError::DimensionTooSmall(n));
    }
    let big_n = n as i128;
    let (m1, m2) = (m.0 as i128, m.1 as i128);
    // exp(iπ m₁m₂/N) exp(2πi m₂ j/N) = exp(iπ m₂ (m₁ + 2j) / N)
    let phases = (0..n).map(|j| root_of_unity(m2 * (m1 + 2 * j as i128), big_n)).collect();
    Ok(TranslationOperator { m, n, phases })
}

/// `Op_N(q) = Σ_m c_m T_N(m)`.
pub fn weyl_quantize(q: &TorusObservable, n: usize) -> Result<Mat<C64>, QuantumError> {
    if n < 2 {
        return Err(QuantumError::DimensionTooSmall(n));
    }
    let radius = q.radius();
    if n as i64 <= 2 * radius {
        return Err(QuantumError::Aliasing { n, radius });
    }
    let mut out = Mat::<C64>::zeros(n, n);
    for (m, c) in q.modes() {
        if c == C64::default() {
            continue;
        }
        let t = translation_operator(m, n)?;
        for j in 0..n {
            out[(t.row_of(j), j)] += c * t.phase(j);
        }
    }
    Ok(out)
}

/// The classical image in the exact Egorov identity `U† T(m) U ∝ T(κ⁻¹ m)`.
///
/// Fixed by exhaustive search over the transpose/inverse/reflection candidates at
/// N = 8 (see the `egorov_convention_is_inverse` test).
pub fn egorov_image(map: &ToralAutomorphism, m: Mode) -> Mode {
    let inv = map.inverse();
    Mode(inv.a * m.0 + inv.b * m.1, inv.c * m.0 + inv.d * m.1)
}

/// Checkerboard parity (`ab` and `cd` even) or even N.
pub fn is_admissible(map: &ToralAutomorphism, n: usize) -> bool {
    (map.a * map.b % 2 == 0 && map.c * map.d % 2 == 0) || n % 2 == 0
}

/// `U_N(κ)` from the Gauss-sum kernel, certified unitary and Egorov-exact.
pub fn metaplectic_propagator(map: &ToralAutomorphism, n: usize) -> Result<Mat<C64>, QuantumError> {
    if n < 2 {
        return Err(QuantumError::DimensionTooSmall(n));
    }
    if map.b == 0 {
        return Err(QuantumError::SingularKernel);
    }
    let fail = |reason: String| QuantumError::NotQuantizable { a: map.a, b: map.b, c: map.c, d: map.d, n, reason };
    if !is_admissible(map, n) {
        return Err(fail("parity condition fails and N is odd".into()));
    }
    let (a, b, d) = (map.a as i128, map.b as i128, map.d as i128);
    let big_n = n as i128;
    let denom = big_n * b.abs();
    let sign = b.signum();
    let mut u = Mat::<C64>::from_fn(n, n, |j, k| {
        let k = k as i128;
        (0..b.abs())
            .map(|mu| {
                let jj = j as i128 + mu * big_n;
                root_of_unity(sign * (a * k * k - 2 * k * jj + d * jj * jj), denom)
            })
            .sum()
    });
    let col_norm: f64 = (0..n).map(|j| u[(j, 0)].norm_sqr()).sum::<f64>().sqrt();
    if col_norm == 0.0 {
        return Err(fail("kernel column vanishes".into()));
    }
    let inv = 1.0 / col_norm;
    for k in 0..n {
        for j in 0..n {
            u[(j, k)] *= inv;
        }
    }
    let defect = unitarity_defect(u.as_ref());
    if defect > UNITARITY_TOL {
        return Err(fail(format!("unitarity defect {defect:e}")));
    }
    for m in [Mode(1, 0), Mode(0, 1)] {
        let overlap = egorov_overlap(map, u.as_ref(), m)?;
        if (overlap - 1.0).abs() > 1e-8 {
            return Err(fail(format!("Egorov overlap {overlap} at mode {m:?}")));
        }
    }
    Ok(u)
}

/// `‖U† U − I‖_F`.
pub fn unitarity_defect(u: MatRef<'_, C64>) -> f64 {
    let g = u.adjoint() * u;
    frobenius_distance_to_identity(g.as_ref())
}

fn frobenius_distance_to_identity(g: MatRef<'_, C64>) -> f64 {
    let mut s = 0.0;
    for j in 0..g.ncols() {
        for i in 0..g.nrows() {
            let target = if i == j { C64::new(1.0, 0.0) } else { C64::default() };
            s += (g[(i, j)] - target).norm_sqr();
        }
    }
    s.sqrt()
}

/// `‖A − A†‖_F`.
pub fn hermiticity_defect(a: MatRef<'_, C64>) -> f64 {
    let mut s = 0.0;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            s += (a[(i, j)] - a[(j, i)].conj()).norm_sqr();
        }
    }
    s.sqrt()
}

pub fn trace(a: MatRef<'_, C64>) -> C64 {
    (0..a.nrows()).map(|i| a[(i, i)]).sum()
}

/// `|tr(T(κ' m)† U† T(m) U)| / N`, equal to 1 when Egorov holds exactly.
pub fn egorov_overlap(map: &ToralAutomorphism, u: MatRef<'_, C64>, m: Mode) -> Result<f64, QuantumError> {
    let n = u.nrows();
    let t = translation_operator(m, n)?;
    let t_image = translation_operator(egorov_image(map, m), n)?;
    // tr((U T')† (T U)) as a Frobenius inner product, both factors in O(N²).
    let lhs = t_image.right_mul(u);
    let rhs = t.left_mul(u);
    let mut acc = C64::default();
    for j in 0..n {
        for i in 0..n {
            acc += lhs[(i, j)].conj() * rhs[(i, j)];
        }
    }
    Ok(acc.norm() / n as f64)
}

/// A damped quantum map `M_N = Op_N(a) U_N(κ)` with `a = e^{-g}`.
#[derive(Debug, Clone)]
pub struct QuantizedSystem {
    pub n: usize,
    pub map: ToralAutomorphism,
    pub damping: TorusObservable,
    /// Trigonometric-polynomial approximation of `e^{-g}`.
    pub symbol: TorusObservable,
    /// Sup of the symbol on the sampling grid.
    pub symbol_sup: f64,
    pub propagator: Mat<C64>,
    pub damping_op: Mat<C64>,
    pub damped: Mat<C64>,
}

/// `e^{-g}` as a trigonometric polynomial: grid evaluation, FFT, truncation.
pub fn damping_symbol(g: &TorusObservable, n: usize) -> (TorusObservable, f64) {
    let keep = ((n as i64 - 1) / 2).min(48);
    let grid = (8 * keep as usize).next_power_of_two().max(64);
    let symbol = compose_coefficients(g, |v| (-v).exp(), grid, keep, SYMBOL_CUTOFF);
    let sup = (0..grid)
        .flat_map(|j| (0..grid).map(move |k| (j, k)))
        .map(|(j, k)| symbol.eval_complex(TorusPoint { x: j as f64 / grid as f64, p: k as f64 / grid as f64 }).re)
        .fold(f64::NEG_INFINITY, f64::max);
    (symbol, sup)
}

pub fn damped_propagator(map: &ToralAutomorphism, g: &TorusObservable, n: usize) -> Result<QuantizedSystem, QuantumError> {
    let propagator = metaplectic_propagator(map, n)?;
    let (symbol, symbol_sup) = damping_symbol(g, n);
    if symbol_sup > 1.0 + 1e-12 {
        return Err(QuantumError::DampingExceedsOne(symbol_sup));
    }
    let damping_op = weyl_quantize(&symbol, n)?;
    let herm = hermiticity_defect(damping_op.as_ref());
    if herm > 1e-12 {
        return Err(QuantumError::Invariant(format!("damping operator hermiticity defect {herm:e}")));
    }
    let tr = trace(damping_op.as_ref());
    if (tr - C64::new(n as f64 * symbol.mean(), 0.0)).norm() > 1e-10 * n as f64 {
        return Err(QuantumError::Invariant(format!("trace {tr} != N * mean")));
    }
    let damped = &damping_op * &propagator;
    Ok(QuantizedSystem { n, map: *map, damping: g.clone(), symbol, symbol_sup, propagator, damping_op, damped })
}

/// All N eigenvalues of a square matrix, sorted by modulus (descending) then phase (ascending).
pub fn eigenvalues(m: MatRef<'_, C64>) -> Result<Vec<C64>, QuantumError> {
    let mut ev: Vec<C64> = m.eigenvalues().map_err(|e| QuantumError::EigFailure(format!("{e:?}")))?;
    if ev.len() != m.nrows() || ev.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(QuantumError::EigFailure(format!("{} finite eigenvalues for N = {}", ev.len(), m.nrows())));
    }
    ev.sort_by(|x, y| y.norm().total_cmp(&x.norm()).then(x.arg().total_cmp(&y.arg())));
    Ok(ev)
}

pub fn spectrum(system: &QuantizedSystem) -> Result<Vec<C64>, QuantumError> {
    eigenvalues(system.damped.as_ref())
}
