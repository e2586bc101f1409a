//! Dense Levenberg–Marquardt for the small nonlinear least-squares systems
//! arising in completion and reconstruction.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

pub(crate) struct LmOptions {
    pub max_iter: usize,
    /// Stop when the root-mean-square residual falls below this.
    pub residual_tol: f64,
    /// Stop when the accepted step is below step_tol · (1 + ‖x‖).
    pub step_tol: f64,
    pub lambda0: f64,
    pub fd_step: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        LmOptions {
            max_iter: 200,
            residual_tol: 1e-10,
            step_tol: 1e-12,
            lambda0: 1e-3,
            fd_step: 1e-6,
        }
    }
}

pub(crate) struct LmOutcome {
    pub x: Vec<f64>,
    pub residual: Vec<f64>,
    pub rms: f64,
    pub iterations: usize,
    /// Root-mean-square residual after the start and each accepted step.
    pub trace: Vec<f64>,
    pub converged: bool,
    pub jacobian: DMatrix<f64>,
}

pub(crate) enum Jacobian<'a> {
    FiniteDifference,
    Analytic(&'a dyn Fn(&[f64]) -> Result<DMatrix<f64>>),
}

fn rms(r: &DVector<f64>) -> f64 {
    (r.norm_squared() / r.len() as f64).sqrt()
}

fn finite_difference_jacobian<F>(f: &F, x: &[f64], m: usize, h0: f64) -> Result<DMatrix<f64>>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let p = x.len();
    let mut jac = DMatrix::zeros(m, p);
    let mut xt = x.to_vec();
    for j in 0..p {
        let h = h0 * (1.0 + x[j].abs());
        xt[j] = x[j] + h;
        let plus = f(&xt)?;
        xt[j] = x[j] - h;
        let minus = f(&xt)?;
        xt[j] = x[j];
        if plus.len() != m || minus.len() != m {
            return Err(Error::Solver("residual dimension changed during differencing".into()));
        }
        for i in 0..m {
            jac[(i, j)] = (plus[i] - minus[i]) / (2.0 * h);
        }
    }
    Ok(jac)
}

/// Minimizes ‖f(x)‖² by damped Gauss–Newton steps. Only improving steps are
/// accepted, so the reported residual trace is strictly decreasing.
pub(crate) fn levenberg_marquardt<F>(
    f: &F,
    jac: Jacobian,
    x0: &[f64],
    opts: &LmOptions,
) -> Result<LmOutcome>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let mut x = DVector::from_column_slice(x0);
    let mut r = DVector::from_vec(f(x.as_slice())?);
    let m = r.len();
    if m == 0 {
        return Err(Error::Parameter("empty residual vector".into()));
    }
    let mut cost = r.norm_squared();
    let mut lambda = opts.lambda0;
    let mut trace = vec![rms(&r)];
    let mut jacobian: Option<DMatrix<f64>> = None;
    let mut converged = false;
    let mut iterations = 0;

    for _ in 0..opts.max_iter {
        if rms(&r) <= opts.residual_tol {
            converged = true;
            break;
        }
        jacobian = Some(match jac {
            Jacobian::FiniteDifference => finite_difference_jacobian(f, x.as_slice(), m, opts.fd_step)?,
            Jacobian::Analytic(g) => g(x.as_slice())?,
        });
        let jac_ref = jacobian.as_ref().expect("just assigned");
        let h = jac_ref.transpose() * jac_ref;
        let g = jac_ref.transpose() * &r;
        let mut accepted = false;
        for _ in 0..30 {
            let mut damped = h.clone();
            for i in 0..damped.nrows() {
                damped[(i, i)] += lambda * h[(i, i)].max(1e-12);
            }
            let delta = match damped.cholesky() {
                Some(ch) => ch.solve(&(-&g)),
                None => {
                    lambda *= 4.0;
                    continue;
                }
            };
            let xt = &x + &delta;
            let rt = DVector::from_vec(f(xt.as_slice())?);
            let cost_t = rt.norm_squared();
            if cost_t.is_finite() && cost_t < cost {
                let step = delta.norm();
                x = xt;
                r = rt;
                cost = cost_t;
                lambda = (lambda / 3.0).max(1e-14);
                trace.push(rms(&r));
                accepted = true;
                iterations += 1;
                if step <= opts.step_tol * (1.0 + x.norm()) {
                    converged = true;
                }
                break;
            }
            lambda *= 4.0;
        }
        if !accepted {
            converged = true;
            break;
        }
        if converged {
            break;
        }
    }
    if rms(&r) <= opts.residual_tol {
        converged = true;
    }
    let jacobian = match jacobian {
        Some(j) => j,
        None => match jac {
            Jacobian::FiniteDifference => finite_difference_jacobian(f, x.as_slice(), m, opts.fd_step)?,
            Jacobian::Analytic(g) => g(x.as_slice())?,
        },
    };

    Ok(LmOutcome {
        x: x.as_slice().to_vec(),
        residual: r.as_slice().to_vec(),
        rms: rms(&r),
        iterations,
        trace,
        converged,
        jacobian,
    })
}

/// Diagonal of the covariance estimate s²(JᵀJ)⁻¹ with s² = ‖r‖²/max(1, m−p).
pub(crate) fn covariance_diagonal(jacobian: &DMatrix<f64>, residual: &[f64]) -> Option<Vec<f64>> {
    let m = jacobian.nrows();
    let p = jacobian.ncols();
    let dof = (m as i64 - p as i64).max(1) as f64;
    let s2 = residual.iter().map(|r| r * r).sum::<f64>() / dof;
    let h = jacobian.transpose() * jacobian;
    let inv = h.try_inverse()?;
    Some((0..p).map(|i| (s2 * inv[(i, i)]).max(0.0)).collect())
}
