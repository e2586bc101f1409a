//! Potential families q ∈ L¹(0,π) with exact means, shifts, and cell
//! averages.
//!
//! Three parameterized families cover the laboratory's needs: truncated
//! cosine series (smooth), piecewise constants on a uniform partition, and
//! piecewise-linear interpolants of uniform grid samples. A constant
//! potential is carried as its own degenerate family so that closed-form
//! paths stay exact.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

use std::f64::consts::PI;

/// A parameterized potential on (0,π).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "lowercase")]
pub enum PotentialSpec {
    /// q(x) = c₀ + Σ_{k≥1} c_k cos(kx), parameters [c₀, c₁, …].
    Cosine(Vec<f64>),
    /// Constant value on each cell of the uniform partition of (0,π) into
    /// `len` pieces.
    Piecewise(Vec<f64>),
    /// Piecewise-linear interpolant of samples at the uniform nodes
    /// x_i = iπ/(len−1), i = 0,…,len−1.
    Grid(Vec<f64>),
    /// q ≡ c.
    Constant(f64),
}

impl PotentialSpec {
    /// The zero potential.
    pub fn zero() -> Self {
        PotentialSpec::Constant(0.0)
    }

    pub fn constant(c: f64) -> Self {
        PotentialSpec::Constant(c)
    }

    pub fn cosine(coefficients: Vec<f64>) -> Self {
        PotentialSpec::Cosine(coefficients)
    }

    pub fn piecewise(values: Vec<f64>) -> Self {
        PotentialSpec::Piecewise(values)
    }

    pub fn grid(samples: Vec<f64>) -> Self {
        PotentialSpec::Grid(samples)
    }

    /// Checks parameter counts and finiteness.
    pub fn validate(&self) -> Result<()> {
        let params: &[f64] = match self {
            PotentialSpec::Cosine(c) => c,
            PotentialSpec::Piecewise(v) => v,
            PotentialSpec::Grid(s) => s,
            PotentialSpec::Constant(c) => std::slice::from_ref(c),
        };
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Parameter("potential parameters must be finite".into()));
        }
        match self {
            PotentialSpec::Cosine(c) if c.is_empty() => {
                Err(Error::Parameter("cosine potential needs at least c0".into()))
            }
            PotentialSpec::Piecewise(v) if v.is_empty() => {
                Err(Error::Parameter("piecewise potential needs at least one cell".into()))
            }
            PotentialSpec::Grid(s) if s.len() < 2 => {
                Err(Error::Parameter("grid potential needs at least two samples".into()))
            }
            _ => Ok(()),
        }
    }

    /// Pointwise value at x ∈ [0,π].
    pub fn eval(&self, x: f64) -> Result<f64> {
        if !(0.0..=PI + 1e-12).contains(&x) {
            return Err(Error::Domain(format!("x = {x} outside [0, π]")));
        }
        Ok(self.eval_clamped(x))
    }

    /// Pointwise value with x clamped into [0,π]; used by integrators whose
    /// internal abscissae can step a rounding error outside the interval.
    pub(crate) fn eval_clamped(&self, x: f64) -> f64 {
        let x = x.clamp(0.0, PI);
        match self {
            PotentialSpec::Constant(c) => *c,
            PotentialSpec::Cosine(c) => {
                let mut v = c[0];
                for (k, ck) in c.iter().enumerate().skip(1) {
                    v += ck * (k as f64 * x).cos();
                }
                v
            }
            PotentialSpec::Piecewise(v) => {
                let k = v.len();
                let i = ((x * k as f64 / PI) as usize).min(k - 1);
                v[i]
            }
            PotentialSpec::Grid(s) => {
                let h = PI / (s.len() - 1) as f64;
                let i = ((x / h) as usize).min(s.len() - 2);
                let t = (x - i as f64 * h) / h;
                s[i] * (1.0 - t) + s[i + 1] * t
            }
        }
    }

    /// Exact mean (1/π)∫₀^π q.
    pub fn mean(&self) -> f64 {
        match self {
            PotentialSpec::Constant(c) => *c,
            PotentialSpec::Cosine(c) => c[0],
            PotentialSpec::Piecewise(v) => v.iter().sum::<f64>() / v.len() as f64,
            PotentialSpec::Grid(s) => {
                let interior: f64 = s[1..s.len() - 1].iter().sum();
                (0.5 * (s[0] + s[s.len() - 1]) + interior) / (s.len() - 1) as f64
            }
        }
    }

    /// The potential q + c, exactly within its own family.
    pub fn shift(&self, c: f64) -> PotentialSpec {
        match self {
            PotentialSpec::Constant(v) => PotentialSpec::Constant(v + c),
            PotentialSpec::Cosine(cs) => {
                let mut cs = cs.clone();
                cs[0] += c;
                PotentialSpec::Cosine(cs)
            }
            PotentialSpec::Piecewise(v) => {
                PotentialSpec::Piecewise(v.iter().map(|q| q + c).collect())
            }
            PotentialSpec::Grid(s) => PotentialSpec::Grid(s.iter().map(|q| q + c).collect()),
        }
    }

    /// Exact average of q over a subinterval [x0, x1] ⊆ [0,π].
    pub(crate) fn cell_average(&self, x0: f64, x1: f64) -> f64 {
        debug_assert!(x0 < x1 && x0 >= -1e-12 && x1 <= PI + 1e-12);
        let width = x1 - x0;
        match self {
            PotentialSpec::Constant(c) => *c,
            PotentialSpec::Cosine(c) => {
                let mut v = c[0];
                for (k, ck) in c.iter().enumerate().skip(1) {
                    let k = k as f64;
                    v += ck * ((k * x1).sin() - (k * x0).sin()) / (k * width);
                }
                v
            }
            PotentialSpec::Piecewise(v) => {
                let k = v.len();
                let h = PI / k as f64;
                let i0 = ((x0 / h) as usize).min(k - 1);
                let i1 = ((x1 / h) as usize).min(k - 1);
                let mut acc = 0.0;
                for (i, vi) in v.iter().enumerate().take(i1 + 1).skip(i0) {
                    let lo = (i as f64 * h).max(x0);
                    let hi = ((i + 1) as f64 * h).min(x1);
                    if hi > lo {
                        acc += vi * (hi - lo);
                    }
                }
                acc / width
            }
            PotentialSpec::Grid(s) => {
                let h = PI / (s.len() - 1) as f64;
                let i0 = ((x0 / h) as usize).min(s.len() - 2);
                let i1 = ((x1 / h) as usize).min(s.len() - 2);
                let mut acc = 0.0;
                for i in i0..=i1 {
                    let lo = (i as f64 * h).max(x0);
                    let hi = ((i + 1) as f64 * h).min(x1);
                    if hi > lo {
                        acc += 0.5 * (self.eval_clamped(lo) + self.eval_clamped(hi)) * (hi - lo);
                    }
                }
                acc / width
            }
        }
    }

    /// Interior breakpoints where the family is not smooth; meshes align
    /// their nodes with these.
    pub(crate) fn breakpoints(&self) -> Vec<f64> {
        match self {
            PotentialSpec::Piecewise(v) => {
                let h = PI / v.len() as f64;
                (1..v.len()).map(|i| i as f64 * h).collect()
            }
            PotentialSpec::Grid(s) => {
                let h = PI / (s.len() - 1) as f64;
                (1..s.len() - 1).map(|i| i as f64 * h).collect()
            }
            _ => Vec::new(),
        }
    }

    /// Upper bound on sup |q − mean(q)|, used to widen eigenvalue brackets.
    pub(crate) fn sup_deviation(&self) -> f64 {
        let mean = self.mean();
        match self {
            PotentialSpec::Constant(_) => 0.0,
            PotentialSpec::Cosine(c) => c.iter().skip(1).map(|ck| ck.abs()).sum(),
            PotentialSpec::Piecewise(v) => v
                .iter()
                .map(|q| (q - mean).abs())
                .fold(0.0, f64::max),
            PotentialSpec::Grid(s) => s
                .iter()
                .map(|q| (q - mean).abs())
                .fold(0.0, f64::max),
        }
    }
}

/// Pointwise value of the potential at x ∈ [0,π].
pub fn eval(spec: &PotentialSpec, x: f64) -> Result<f64> {
    spec.eval(x)
}

/// Exact mean (1/π)∫₀^π q.
pub fn mean(spec: &PotentialSpec) -> f64 {
    spec.mean()
}

/// The shifted potential q + c within the same family.
pub fn shift(spec: &PotentialSpec, c: f64) -> PotentialSpec {
    spec.shift(c)
}
