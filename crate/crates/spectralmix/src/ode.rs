//! Adaptive Dormand–Prince 5(4) integration for small complex linear systems.

use num_complex::Complex64;

use crate::potential::PotentialSpec;
use crate::{Error, Result};

pub(crate) struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Rescale the state when it grows past 1e120. Only valid for callers
    /// that use the result projectively (ratios of components).
    pub allow_rescale: bool,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions {
            rtol: 1e-10,
            atol: 1e-14,
            allow_rescale: false,
        }
    }
}

const STAGES: usize = 7;

const A: [[f64; 6]; STAGES] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];

const C: [f64; STAGES] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];

const B5: [f64; STAGES] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];

const ERR: [f64; STAGES] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Integrates y′ = f(x, y) from `x0` to `x1` (either direction) with an
/// adaptive Dormand–Prince 5(4) pair.
pub(crate) fn rk45<const N: usize, F>(
    f: F,
    x0: f64,
    x1: f64,
    y0: [Complex64; N],
    opts: &OdeOptions,
) -> Result<[Complex64; N]>
where
    F: Fn(f64, &[Complex64; N]) -> [Complex64; N],
{
    let span = x1 - x0;
    if span == 0.0 {
        return Ok(y0);
    }
    let dir = span.signum();
    let mut x = x0;
    let mut y = y0;
    let mut h = span / 64.0;
    let min_step = span.abs() * 1e-14;
    for _ in 0..2_000_000 {
        if (x - x1) * dir >= 0.0 {
            return Ok(y);
        }
        if (x + h - x1) * dir > 0.0 {
            h = x1 - x;
        }
        let mut k = [[Complex64::ZERO; N]; STAGES];
        k[0] = f(x, &y);
        for s in 1..STAGES {
            let mut ys = y;
            for (j, kj) in k.iter().enumerate().take(s) {
                let a = A[s][j];
                if a != 0.0 {
                    for i in 0..N {
                        ys[i] += h * a * kj[i];
                    }
                }
            }
            k[s] = f(x + C[s] * h, &ys);
        }
        let mut y5 = y;
        let mut err = [Complex64::ZERO; N];
        for (s, ks) in k.iter().enumerate() {
            for i in 0..N {
                y5[i] += h * B5[s] * ks[i];
                err[i] += h * ERR[s] * ks[i];
            }
        }
        let mut ratio: f64 = 0.0;
        for i in 0..N {
            let scale = opts.atol + opts.rtol * y[i].norm().max(y5[i].norm());
            ratio = ratio.max(err[i].norm() / scale);
        }
        if ratio <= 1.0 {
            x += h;
            y = y5;
            if opts.allow_rescale {
                let mag = y.iter().map(|c| c.norm()).fold(0.0, f64::max);
                if mag > 1e120 {
                    for yi in &mut y {
                        *yi /= mag;
                    }
                }
            }
        }
        let factor = if ratio > 0.0 {
            (0.9 * ratio.powf(-0.2)).clamp(0.2, 5.0)
        } else {
            5.0
        };
        h *= factor;
        if h.abs() < min_step {
            return Err(Error::Solver(format!(
                "step size underflow at x = {x} while integrating to {x1}"
            )));
        }
    }
    Err(Error::Solver(format!(
        "step budget exhausted at x = {x} while integrating to {x1}"
    )))
}

/// Integrates −u″ + qu = zu as the first-order system (u, u′) between `x0`
/// and `x1` (either direction).
pub(crate) fn integrate_schrodinger(
    spec: &PotentialSpec,
    z: Complex64,
    init: (Complex64, Complex64),
    x0: f64,
    x1: f64,
    opts: &OdeOptions,
) -> Result<(Complex64, Complex64)> {
    let rhs = |x: f64, y: &[Complex64; 2]| {
        let q = spec.eval_clamped(x);
        [y[1], (q - z) * y[0]]
    };
    let out = rk45(rhs, x0, x1, [init.0, init.1], opts)?;
    Ok((out[0], out[1]))
}

/// Integrates the solution together with its z-derivative: the state is
/// (u, u′, v, v′) where v = ∂u/∂z satisfies −v″ + qv = zv + u.
pub(crate) fn integrate_schrodinger_sensitivity(
    spec: &PotentialSpec,
    z: Complex64,
    init: (Complex64, Complex64),
    x0: f64,
    x1: f64,
    opts: &OdeOptions,
) -> Result<[Complex64; 4]> {
    let rhs = |x: f64, y: &[Complex64; 4]| {
        let q = spec.eval_clamped(x);
        [y[1], (q - z) * y[0], y[3], (q - z) * y[2] - y[0]]
    };
    rk45(rhs, x0, x1, [init.0, init.1, Complex64::ZERO, Complex64::ZERO], opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn reproduces_free_solution_forward() {
        let spec = PotentialSpec::zero();
        let z = Complex64::new(4.0, 0.0);
        let init = (Complex64::ZERO, Complex64::ONE);
        let (u, du) = integrate_schrodinger(
            &spec,
            z,
            init,
            0.0,
            std::f64::consts::PI,
            &OdeOptions::default(),
        )
        .unwrap();
        let x = std::f64::consts::PI;
        assert_relative_eq!(u.re, (2.0 * x).sin() / 2.0, epsilon = 1e-9);
        assert_relative_eq!(du.re, (2.0 * x).cos(), epsilon = 1e-9);
        assert!(u.im.abs() < 1e-12 && du.im.abs() < 1e-12);
    }

    #[test]
    fn reproduces_free_solution_backward_at_complex_energy() {
        let spec = PotentialSpec::zero();
        let z = Complex64::new(1.5, 2.0);
        let sq = z.sqrt();
        let init = (Complex64::ONE, Complex64::ZERO);
        let (u, _) = integrate_schrodinger(
            &spec,
            z,
            init,
            std::f64::consts::PI,
            0.0,
            &OdeOptions::default(),
        )
        .unwrap();
        let exact = (sq * std::f64::consts::PI).cos();
        assert_relative_eq!(u.re, exact.re, max_relative = 1e-8);
        assert_relative_eq!(u.im, exact.im, max_relative = 1e-8);
    }

    #[test]
    fn sensitivity_matches_finite_difference() {
        let spec = PotentialSpec::cosine(vec![0.0, 1.0]);
        let z0 = Complex64::new(3.0, 0.0);
        let init = (Complex64::ZERO, Complex64::ONE);
        let opts = OdeOptions::default();
        let out = integrate_schrodinger_sensitivity(
            &spec,
            z0,
            init,
            0.0,
            std::f64::consts::PI,
            &opts,
        )
        .unwrap();
        let dz = 1e-6;
        let plus = integrate_schrodinger(
            &spec,
            z0 + Complex64::new(dz, 0.0),
            init,
            0.0,
            std::f64::consts::PI,
            &opts,
        )
        .unwrap();
        let minus = integrate_schrodinger(
            &spec,
            z0 - Complex64::new(dz, 0.0),
            init,
            0.0,
            std::f64::consts::PI,
            &opts,
        )
        .unwrap();
        let fd = (plus.0 - minus.0) / (2.0 * dz);
        assert_relative_eq!(out[2].re, fd.re, max_relative = 1e-5);
    }
}
