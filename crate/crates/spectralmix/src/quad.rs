//! Quadrature: composite Simpson on uniform grids and Gauss–Legendre nodes.

use std::sync::OnceLock;

/// Composite Simpson rule for samples on a uniform grid of spacing `h`.
/// The sample count must be odd (an even number of intervals).
pub fn simpson_uniform(values: &[f64], h: f64) -> f64 {
    assert!(
        values.len() >= 3 && values.len() % 2 == 1,
        "simpson needs an odd sample count, got {}",
        values.len()
    );
    let mut sum = values[0] + values[values.len() - 1];
    for (i, v) in values.iter().enumerate().skip(1).take(values.len() - 2) {
        sum += if i % 2 == 1 { 4.0 * v } else { 2.0 * v };
    }
    sum * h / 3.0
}

/// Nodes and weights of the `n`-point Gauss–Legendre rule on (0, 1).
///
/// Computed by Newton iteration on Pₙ from the Chebyshev initial guess;
/// results for the default order are cached.
pub fn gauss_legendre_unit(n: usize) -> &'static (Vec<f64>, Vec<f64>) {
    static CACHE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    assert_eq!(n, GL_ORDER, "only the default Gauss-Legendre order is cached");
    CACHE.get_or_init(|| compute_gauss_legendre_unit(GL_ORDER))
}

/// Default Gauss–Legendre order used by tail integrals.
pub const GL_ORDER: usize = 48;

fn compute_gauss_legendre_unit(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_with_derivative(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre_with_derivative(n, x);
        nodes[i] = 0.5 * (1.0 - x);
        weights[i] = 1.0 / ((1.0 - x * x) * dp * dp);
    }
    nodes.reverse();
    weights.reverse();
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn simpson_integrates_quartic_to_machine_accuracy_on_fine_grid() {
        let n = 201;
        let h = 1.0 / (n as f64 - 1.0);
        let values: Vec<f64> = (0..n).map(|i| (i as f64 * h).powi(4)).collect();
        assert_relative_eq!(simpson_uniform(&values, h), 0.2, max_relative = 1e-9);
    }

    #[test]
    fn gauss_legendre_is_exact_for_high_degree_polynomials() {
        let (nodes, weights) = gauss_legendre_unit(GL_ORDER);
        let total: f64 = weights.iter().sum();
        assert_relative_eq!(total, 1.0, max_relative = 1e-13);
        for degree in [10usize, 40, 95] {
            let exact = 1.0 / (degree as f64 + 1.0);
            let quad: f64 = nodes
                .iter()
                .zip(weights)
                .map(|(x, w)| w * x.powi(degree as i32))
                .sum();
            assert_relative_eq!(quad, exact, max_relative = 1e-12);
        }
    }

    #[test]
    fn gauss_legendre_handles_integrable_endpoint_behavior() {
        let (nodes, weights) = gauss_legendre_unit(GL_ORDER);
        let quad: f64 = nodes
            .iter()
            .zip(weights)
            .map(|(x, w)| w / (1.0 + x * x))
            .sum();
        assert_relative_eq!(quad, std::f64::consts::FRAC_PI_4, max_relative = 1e-12);
    }
}
