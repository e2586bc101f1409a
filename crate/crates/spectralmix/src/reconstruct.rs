//! Potential recovery from two spectra by least squares over a finite
//! parameter family.
//!
//! Two spectra σ(α₁, β) and σ(α₂, β) with sin(α₂−α₁) ≠ 0 determine the
//! potential uniquely, so a forward-model fit is well posed once the family
//! is rich enough. The engine minimizes Σ wₙ²(aₙ(q) − aₙ^target)² over both
//! spectra with Levenberg–Marquardt, using the first-order perturbation
//! identity ∂aₙ/∂q(x) = φₙ(x)²/‖φₙ‖² for analytic Jacobians and a small
//! Tikhonov penalty on high-order coefficients to suppress oscillatory null
//! directions at small data counts.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::lsq::{covariance_diagonal, levenberg_marquardt, Jacobian, LmOptions};
use crate::potential::PotentialSpec;
use crate::quad::simpson_uniform;
use crate::sturm::{self, BoundaryConditions};
use crate::tail::TailModel;
use crate::weyl::TripleBoundary;
use crate::{Error, Result};

/// Uniform quadrature grid on [0, π] used for eigenfunctions and inner
/// products (odd count for Simpson weights).
const GRID_NODES: usize = 801;

/// Parameterized potential family to fit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum PotentialFamily {
    /// Cosine series c₀ + Σ_{k≥1} c_k cos(kx) with `count` coefficients.
    Cosine { count: usize },
    /// Piecewise-constant values on `count` uniform cells of (0, π).
    Piecewise { count: usize },
}

impl PotentialFamily {
    fn count(&self) -> usize {
        match self {
            PotentialFamily::Cosine { count } | PotentialFamily::Piecewise { count } => *count,
        }
    }

    fn build(&self, params: &[f64]) -> PotentialSpec {
        match self {
            PotentialFamily::Cosine { .. } => PotentialSpec::cosine(params.to_vec()),
            PotentialFamily::Piecewise { .. } => PotentialSpec::piecewise(params.to_vec()),
        }
    }

    /// k-th basis direction evaluated at x.
    fn basis(&self, k: usize, x: f64) -> f64 {
        match self {
            PotentialFamily::Cosine { .. } => {
                if k == 0 {
                    1.0
                } else {
                    (k as f64 * x).cos()
                }
            }
            PotentialFamily::Piecewise { count } => {
                let cell = ((x / PI) * *count as f64).floor() as usize;
                if cell.min(count - 1) == k {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Two-spectra data set for the fit. `spectrum1` holds eigenvalues of
/// (α₁, β), `spectrum2` of (α₂, β); either may be empty (the fit then uses
/// the other alone, losing the uniqueness warrant).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReconstructionProblem {
    pub spectrum1: Vec<f64>,
    pub spectrum2: Vec<f64>,
    pub bc: TripleBoundary,
    pub family: PotentialFamily,
    /// Tikhonov weight λ on the high-order coefficient penalty.
    #[serde(default = "default_regularization")]
    pub regularization: f64,
}

fn default_regularization() -> f64 {
    1e-6
}

/// Solver configuration.
#[derive(Clone, Debug)]
pub struct ReconstructOptions {
    pub max_iterations: usize,
    /// Weight rows by 1/(1 + |aₙ|) so large-n eigenvalues do not dominate.
    pub balanced_weights: bool,
    /// Starting coefficients; defaults to the asymptotic mean estimate in
    /// the constant direction and zero elsewhere.
    pub initial: Option<Vec<f64>>,
}

impl Default for ReconstructOptions {
    fn default() -> Self {
        ReconstructOptions { max_iterations: 100, balanced_weights: true, initial: None }
    }
}

/// Fitted potential and fit diagnostics.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReconstructionFit {
    pub spec: PotentialSpec,
    /// Root-mean-square of the weighted data residuals (penalty rows
    /// excluded) at the solution.
    pub residual: f64,
    pub iterations: usize,
    /// RMS after the start and each accepted step (never increasing).
    pub trace: Vec<f64>,
    /// Per-parameter variance estimates from the final Jacobian.
    pub covariance: Vec<f64>,
    /// Mean (1/π)∫q of the fitted potential.
    pub fitted_mean: f64,
}

/// First-order eigenvalue sensitivity ∂aₙ/∂q as a function on the grid:
/// the normalized squared eigenfunction φₙ²/‖φₙ‖².
#[derive(Clone, Debug)]
pub struct Sensitivity {
    /// Uniform grid nodes on [0, π].
    pub grid: Vec<f64>,
    /// Sensitivity values on the grid; Simpson-integrates to exactly 1.
    pub values: Vec<f64>,
    /// The eigenvalue the sensitivity belongs to.
    pub eigenvalue: f64,
}

impl Sensitivity {
    /// Directional derivative ⟨sensitivity, direction⟩ = d aₙ(q + t·direction)/dt.
    pub fn inner(&self, direction: impl Fn(f64) -> f64) -> f64 {
        let h = PI / (self.grid.len() - 1) as f64;
        let integrand: Vec<f64> =
            self.grid.iter().zip(&self.values).map(|(&x, &s)| s * direction(x)).collect();
        simpson_uniform(&integrand, h)
    }
}

fn rk4_step(spec: &PotentialSpec, a: f64, x: f64, y: (f64, f64), h: f64) -> Result<(f64, f64)> {
    let f = |x: f64, y: (f64, f64)| -> Result<(f64, f64)> {
        Ok((y.1, (spec.eval(x)? - a) * y.0))
    };
    let k1 = f(x, y)?;
    let k2 = f(x + h / 2.0, (y.0 + h / 2.0 * k1.0, y.1 + h / 2.0 * k1.1))?;
    let k3 = f(x + h / 2.0, (y.0 + h / 2.0 * k2.0, y.1 + h / 2.0 * k2.1))?;
    let k4 = f(x + h, (y.0 + h * k3.0, y.1 + h * k3.1))?;
    Ok((
        y.0 + h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0),
        y.1 + h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1),
    ))
}

/// Squared eigenfunction on the uniform grid, normalized to unit Simpson
/// integral, for the boundary-α solution at energy `a`.
fn normalized_density(spec: &PotentialSpec, alpha: f64, a: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let cells = GRID_NODES - 1;
    let h = PI / cells as f64;
    let mut grid = Vec::with_capacity(GRID_NODES);
    let mut samples = Vec::with_capacity(GRID_NODES);
    let mut y = (alpha.sin(), alpha.cos());
    grid.push(0.0);
    samples.push(y.0);
    for i in 0..cells {
        let mut x = i as f64 * h;
        for _ in 0..2 {
            y = rk4_step(spec, a, x, y, h / 2.0)?;
            x += h / 2.0;
        }
        grid.push((i + 1) as f64 * h);
        samples.push(y.0);
    }
    let squared: Vec<f64> = samples.iter().map(|u| u * u).collect();
    let norm = simpson_uniform(&squared, h);
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(Error::Solver(format!(
            "eigenfunction normalization failed at energy {a} (norm {norm})"
        )));
    }
    Ok((grid, squared.iter().map(|s| s / norm).collect()))
}

/// Sensitivity of the n-th eigenvalue of (q, bc) to potential perturbations,
/// as the normalized squared eigenfunction on the quadrature grid.
pub fn eigenvalue_sensitivity(
    spec: &PotentialSpec,
    bc: &BoundaryConditions,
    n: usize,
) -> Result<Sensitivity> {
    if n == 0 {
        return Err(Error::Parameter("eigenvalue index must be ≥ 1".into()));
    }
    let spectrum = sturm::eigenvalues(spec, bc, n)?;
    let a = spectrum.values[n - 1];
    let (grid, values) = normalized_density(spec, bc.alpha, a)?;
    Ok(Sensitivity { grid, values, eigenvalue: a })
}

struct FitSetup {
    problem: ReconstructionProblem,
    bc1: BoundaryConditions,
    bc2: BoundaryConditions,
    weights1: Vec<f64>,
    weights2: Vec<f64>,
    sqrt_lambda: f64,
}

impl FitSetup {
    fn residuals(&self, params: &[f64]) -> Result<Vec<f64>> {
        let spec = self.problem.family.build(params);
        let mut out = Vec::new();
        for (targets, bc, weights) in [
            (&self.problem.spectrum1, &self.bc1, &self.weights1),
            (&self.problem.spectrum2, &self.bc2, &self.weights2),
        ] {
            if targets.is_empty() {
                continue;
            }
            let computed = sturm::eigenvalues(&spec, bc, targets.len())?;
            for (n, (&t, &w)) in targets.iter().zip(weights.iter()).enumerate() {
                out.push(w * (computed.values[n] - t));
            }
        }
        self.push_penalty_rows(params, &mut out);
        Ok(out)
    }

    fn push_penalty_rows(&self, params: &[f64], out: &mut Vec<f64>) {
        if self.sqrt_lambda == 0.0 {
            return;
        }
        match self.problem.family {
            PotentialFamily::Cosine { count } => {
                for k in 1..count {
                    out.push(self.sqrt_lambda * k as f64 * params[k]);
                }
            }
            PotentialFamily::Piecewise { count } => {
                for i in 0..count.saturating_sub(1) {
                    out.push(self.sqrt_lambda * (params[i + 1] - params[i]));
                }
            }
        }
    }

    fn jacobian(&self, params: &[f64]) -> Result<DMatrix<f64>> {
        let spec = self.problem.family.build(params);
        let p = params.len();
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (targets, bc, weights) in [
            (&self.problem.spectrum1, &self.bc1, &self.weights1),
            (&self.problem.spectrum2, &self.bc2, &self.weights2),
        ] {
            if targets.is_empty() {
                continue;
            }
            let computed = sturm::eigenvalues(&spec, bc, targets.len())?;
            let block: Result<Vec<Vec<f64>>> = (0..targets.len())
                .into_par_iter()
                .map(|n| {
                    let (_, density) = normalized_density(&spec, bc.alpha, computed.values[n])?;
                    let h = PI / (GRID_NODES - 1) as f64;
                    let mut row = Vec::with_capacity(p);
                    for k in 0..p {
                        let integrand: Vec<f64> = density
                            .iter()
                            .enumerate()
                            .map(|(i, &s)| s * self.problem.family.basis(k, i as f64 * h))
                            .collect();
                        row.push(weights[n] * simpson_uniform(&integrand, h));
                    }
                    Ok(row)
                })
                .collect();
            rows.extend(block?);
        }
        let data_rows = rows.len();
        let mut penalty = Vec::new();
        self.push_penalty_rows(params, &mut penalty);
        let m = data_rows + penalty.len();
        let mut jac = DMatrix::zeros(m, p);
        for (i, row) in rows.iter().enumerate() {
            for (k, &v) in row.iter().enumerate() {
                jac[(i, k)] = v;
            }
        }
        if self.sqrt_lambda > 0.0 {
            match self.problem.family {
                PotentialFamily::Cosine { count } => {
                    for k in 1..count {
                        jac[(data_rows + k - 1, k)] = self.sqrt_lambda * k as f64;
                    }
                }
                PotentialFamily::Piecewise { count } => {
                    for i in 0..count.saturating_sub(1) {
                        jac[(data_rows + i, i)] = -self.sqrt_lambda;
                        jac[(data_rows + i, i + 1)] = self.sqrt_lambda;
                    }
                }
            }
        }
        Ok(jac)
    }
}

fn validated_spectrum(values: &[f64], label: &str) -> Result<()> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Parameter(format!("nonfinite entry in {label}")));
    }
    if values.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Parameter(format!("{label} must be strictly increasing")));
    }
    Ok(())
}

/// Mean estimate q̄ from the asymptotic offset of the longer spectrum.
fn asymptotic_mean(problem: &ReconstructionProblem) -> f64 {
    let bc1 = problem.bc.zeros_bc();
    let bc2 = problem.bc.poles_bc();
    let (values, bc) = if problem.spectrum2.len() >= problem.spectrum1.len() {
        (&problem.spectrum2, bc2)
    } else {
        (&problem.spectrum1, bc1)
    };
    TailModel::fit(values, bc.index_shift()).offset - bc.cotangent_term()
}

/// Fits the family to both spectra by Levenberg–Marquardt with analytic
/// sensitivity Jacobians.
pub fn reconstruct(
    problem: &ReconstructionProblem,
    options: &ReconstructOptions,
) -> Result<ReconstructionFit> {
    TripleBoundary::new(problem.bc.alpha1, problem.bc.alpha2, problem.bc.beta)?;
    validated_spectrum(&problem.spectrum1, "spectrum1")?;
    validated_spectrum(&problem.spectrum2, "spectrum2")?;
    let n_data = problem.spectrum1.len() + problem.spectrum2.len();
    if n_data == 0 {
        return Err(Error::Parameter("both spectra are empty".into()));
    }
    let p = problem.family.count();
    if p == 0 {
        return Err(Error::Parameter("family parameter count must be ≥ 1".into()));
    }
    if p > n_data {
        return Err(Error::Parameter(format!(
            "family has {p} parameters but only {n_data} eigenvalues are supplied"
        )));
    }
    if !problem.regularization.is_finite() || problem.regularization < 0.0 {
        return Err(Error::Parameter(format!(
            "regularization weight must be nonnegative, got {}",
            problem.regularization
        )));
    }

    let weight = |a: f64| if options.balanced_weights { 1.0 / (1.0 + a.abs()) } else { 1.0 };
    let setup = FitSetup {
        problem: problem.clone(),
        bc1: problem.bc.zeros_bc(),
        bc2: problem.bc.poles_bc(),
        weights1: problem.spectrum1.iter().map(|&a| weight(a)).collect(),
        weights2: problem.spectrum2.iter().map(|&a| weight(a)).collect(),
        sqrt_lambda: problem.regularization.sqrt(),
    };

    let x0 = match &options.initial {
        Some(init) => {
            if init.len() != p {
                return Err(Error::Parameter(format!(
                    "initial guess has {} entries, family has {p}",
                    init.len()
                )));
            }
            init.clone()
        }
        None => {
            let mean = asymptotic_mean(problem);
            let mut x0 = vec![0.0; p];
            match problem.family {
                PotentialFamily::Cosine { .. } => x0[0] = mean,
                PotentialFamily::Piecewise { .. } => x0.fill(mean),
            }
            x0
        }
    };

    let outcome = levenberg_marquardt(
        &|params| setup.residuals(params),
        Jacobian::Analytic(&|params| setup.jacobian(params)),
        &x0,
        &LmOptions { max_iter: options.max_iterations, ..LmOptions::default() },
    )?;
    if !outcome.converged {
        return Err(Error::NonConvergence {
            message: format!(
                "fit did not converge within {} iterations (final RMS {:.3e})",
                options.max_iterations, outcome.rms
            ),
            trace: outcome.trace,
        });
    }
    let covariance =
        covariance_diagonal(&outcome.jacobian, &outcome.residual).ok_or_else(|| {
            Error::Conditioning(
                "Jacobian is rank-deficient; the family is not identifiable from the \
                 supplied spectra"
                    .into(),
            )
        })?;

    let spec = problem.family.build(&outcome.x);
    let fitted_mean = crate::potential::mean(&spec);
    let data_rms = (outcome.residual[..n_data].iter().map(|r| r * r).sum::<f64>()
        / n_data as f64)
        .sqrt();
    Ok(ReconstructionFit {
        spec,
        residual: data_rms,
        iterations: outcome.iterations,
        trace: outcome.trace,
        covariance,
        fitted_mean,
    })
}
