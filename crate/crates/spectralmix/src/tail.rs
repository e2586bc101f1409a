//! Asymptotic tail models for eigenvalue sequences and Euler–Maclaurin
//! summation of the slowly converging tails they generate.
//!
//! Eigenvalue sequences of −u″ + qu = zu behave like aₙ = (n + s)² + δ + o(1)
//! where the half-integer shift s is fixed by the boundary conditions and δ
//! collects the mean of the potential and the boundary cotangent terms.
//! [`TailModel`] captures (s, δ); the summation helpers replace every factor
//! or mass beyond a truncation index by its model value and sum the remainder
//! with an Euler–Maclaurin correction.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::quad::{gauss_legendre_unit, GL_ORDER};
use crate::{Error, Result};

/// Quadratic model âₙ = (n + shift)² + offset for the tail of an eigenvalue
/// sequence.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailModel {
    /// Index shift: 0 for Dirichlet–Dirichlet counting, −1/2 for one Robin
    /// endpoint, −1 for Robin at both ends.
    pub shift: f64,
    /// Additive offset (potential mean plus boundary cotangent terms).
    pub offset: f64,
}

impl TailModel {
    /// Model value at (possibly fractional) index `n`.
    pub fn value(&self, n: f64) -> f64 {
        let t = n + self.shift;
        t * t + self.offset
    }

    /// Fits the offset from computed values (1-based), averaging
    /// vₙ − (n + shift)² over the final quartile of the data.
    pub fn fit(values: &[f64], shift: f64) -> TailModel {
        if values.is_empty() {
            return TailModel { shift, offset: 0.0 };
        }
        let start = values.len() - (values.len() / 4).max(1);
        let mut sum = 0.0;
        let mut count = 0.0;
        for (i, v) in values.iter().enumerate().skip(start) {
            let n = (i + 1) as f64 + shift;
            sum += v - n * n;
            count += 1.0;
        }
        TailModel {
            shift,
            offset: sum / count,
        }
    }
}

/// Asymptotic model for the point masses γₙ of a spectral measure:
/// γₙ ≈ g·aₙ when the left endpoint is Dirichlet, γₙ ≈ g otherwise.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum MassModel {
    /// γₙ ≈ g.
    Constant(f64),
    /// γₙ ≈ g·aₙ.
    Linear(f64),
}

impl MassModel {
    /// Model mass at a pole of magnitude `a`.
    pub fn value(&self, a: f64) -> f64 {
        match *self {
            MassModel::Constant(g) => g,
            MassModel::Linear(g) => g * a,
        }
    }
}

/// Σ_{n=n0}^∞ f(n) by Euler–Maclaurin:
/// ∫_{n0}^∞ f dt + f(n0)/2 − f′(n0)/12 + f‴(n0)/720.
///
/// The integral is transformed to (0,1) by t = n0/s and evaluated with
/// Gauss–Legendre; f must decay at least like t⁻² for the transform to be
/// accurate. Derivatives are central differences, which is ample because the
/// correction terms are already small next to the integral.
pub(crate) fn em_tail_sum<F>(f: F, n0: f64) -> Complex64
where
    F: Fn(f64) -> Complex64,
{
    let (nodes, weights) = gauss_legendre_unit(GL_ORDER);
    let mut integral = Complex64::ZERO;
    for (s, w) in nodes.iter().zip(weights) {
        let t = n0 / s;
        integral += w * f(t) * (n0 / (s * s));
    }
    let h = 1.0 / 64.0;
    let df = (f(n0 + h) - f(n0 - h)) / (2.0 * h);
    let d3f = (f(n0 + 2.0 * h) - 2.0 * f(n0 + h) + 2.0 * f(n0 - h) - f(n0 - 2.0 * h))
        / (2.0 * h * h * h);
    integral + 0.5 * f(n0) - df / 12.0 + d3f / 720.0
}

/// Log of the tail factor ∏_{n≥first} (z/b(n) − 1)/(z/a(n) − 1) where
/// `pole(n)` and `zero(n)` give the model values a(n), b(n).
///
/// Terms up to an internal cutoff are summed explicitly; the rest by
/// Euler–Maclaurin. Errors when z sits so close to the modeled region that a
/// single factor exceeds its convergence bound.
pub(crate) fn paired_log_tail<A, B>(pole: A, zero: B, first: usize, z: Complex64) -> Result<Complex64>
where
    A: Fn(f64) -> f64,
    B: Fn(f64) -> f64,
{
    let term = |t: f64| -> Complex64 {
        let a = pole(t);
        let b = zero(t);
        let w = z * (a - b) / (b * (z - a));
        (Complex64::ONE + w).ln()
    };
    let wmag = |t: f64| -> f64 {
        let a = pole(t);
        let b = zero(t);
        (z * (a - b) / (b * (z - a))).norm()
    };
    let w0 = wmag(first as f64);
    if !w0.is_finite() || w0 >= 0.95 {
        return Err(Error::Domain(format!(
            "tail factor magnitude {w0:.3} at index {first}: evaluation point too close to \
             the modeled tail (increase the truncation or move z)"
        )));
    }
    let cutoff = first + (3 * first).max(2000).max((4.0 * z.norm().sqrt()) as usize);
    let mut sum = Complex64::ZERO;
    for n in first..=cutoff {
        sum += term(n as f64);
    }
    sum += em_tail_sum(term, (cutoff + 1) as f64);
    Ok(sum)
}

/// One term γ·[1/(a − z) − a/(1 + a²)] of a Herglotz sum, evaluated in the
/// cancellation-free form γ(1 + az)/((a − z)(1 + a²)).
pub(crate) fn herglotz_term(a: f64, gamma: f64, z: Complex64) -> Complex64 {
    gamma * (1.0 + a * z) / ((a - z) * (1.0 + a * a))
}

/// Tail Σ_{n≥first} γ̂ₙ·[1/(âₙ − z) − âₙ/(1 + âₙ²)] of a Herglotz sum, with
/// both the masses and the poles replaced by their models.
pub(crate) fn herglotz_tail(
    mass: &MassModel,
    poles: &TailModel,
    first: usize,
    z: Complex64,
) -> Result<Complex64> {
    let term = |t: f64| -> Complex64 {
        let a = poles.value(t);
        let g = mass.value(a);
        herglotz_term(a, g, z)
    };
    let a0 = poles.value(first as f64);
    if z.im == 0.0 && z.re >= a0 - 0.5 {
        return Err(Error::Domain(format!(
            "evaluation point {} inside the modeled tail support starting near {a0}",
            z.re
        )));
    }
    let cutoff = first + (3 * first).max(2000).max((4.0 * z.norm().sqrt()) as usize);
    let mut sum = Complex64::ZERO;
    for n in first..=cutoff {
        sum += term(n as f64);
    }
    sum += em_tail_sum(term, (cutoff + 1) as f64);
    Ok(sum)
}
