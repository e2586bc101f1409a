//! Weyl–Titchmarsh m-functions computed three independent ways: from the
//! defining ODE solution, as a Herglotz sum over the spectral measure, and
//! as an interlacing zero/pole product with asymptotic tail correction.
//!
//! For a triple (α₁, α₂, β) with sin(α₂ − α₁) ≠ 0 the m-function is
//!
//! m(z) = [−sin α₁·u′(0) + cos α₁·u(0)] / (sin(α₂−α₁)·[−sin α₂·u′(0) + cos α₂·u(0)])
//!
//! where u solves −u″ + qu = zu with u(π) = sin β, u′(π) = −cos β. Its zeros
//! are the eigenvalues of (α₁, β), its poles those of (α₂, β), and the two
//! spectra interlace. The classical pair m_{α,β} is the triple with
//! α₂ = α and α₁ = α − π/2 (mod π).

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ode::{integrate_schrodinger, integrate_schrodinger_sensitivity, OdeOptions};
use crate::potential::PotentialSpec;
use crate::sturm::{self, BoundaryConditions, SpectralMeasure, Spectrum};
use crate::tail::{herglotz_tail, herglotz_term, paired_log_tail, TailModel};
use crate::{Error, Result};

use std::f64::consts::PI;

/// Boundary triple (α₁, α₂, β) defining an m-function with zeros on
/// σ(α₁, β) and poles on σ(α₂, β). Requires sin(α₂ − α₁) ≠ 0.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TripleBoundary {
    pub alpha1: f64,
    pub alpha2: f64,
    pub beta: f64,
}

impl TripleBoundary {
    pub fn new(alpha1: f64, alpha2: f64, beta: f64) -> Result<Self> {
        for (name, v) in [("alpha1", alpha1), ("alpha2", alpha2), ("beta", beta)] {
            if !v.is_finite() || !(0.0..PI).contains(&v) {
                return Err(Error::Parameter(format!(
                    "{name} = {v} outside the admissible range [0, π)"
                )));
            }
        }
        if (alpha2 - alpha1).sin().abs() < 1e-12 {
            return Err(Error::Degenerate(format!(
                "sin(α₂ − α₁) vanishes for α₁ = {alpha1}, α₂ = {alpha2}"
            )));
        }
        Ok(TripleBoundary { alpha1, alpha2, beta })
    }

    /// The classical pair m_{α,β}: α₂ = α and α₁ = α − π/2 reduced into
    /// [0, π) (the m-function is invariant under α₁ ↦ α₁ + π).
    pub fn from_pair(alpha: f64, beta: f64) -> Result<Self> {
        let mut alpha1 = alpha - PI / 2.0;
        if alpha1 < 0.0 {
            alpha1 += PI;
        }
        TripleBoundary::new(alpha1, alpha, beta)
    }

    /// Boundary conditions carrying the zeros of the m-function.
    pub fn zeros_bc(&self) -> BoundaryConditions {
        BoundaryConditions { alpha: self.alpha1, beta: self.beta }
    }

    /// Boundary conditions carrying the poles of the m-function.
    pub fn poles_bc(&self) -> BoundaryConditions {
        BoundaryConditions { alpha: self.alpha2, beta: self.beta }
    }

    /// Whether the zeros lie below the poles (b₁ < a₁ < b₂ < …). Eigenvalues
    /// decrease in α, so this holds exactly when α₁ > α₂.
    pub fn zeros_first(&self) -> bool {
        self.alpha1 > self.alpha2
    }
}

/// Grouping of the zero/pole product.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProductForm {
    /// C(z/b₁ − 1)·∏ₙ (z/bₙ₊₁ − 1)/(z/aₙ − 1); requires zeros-first data
    /// and carries one more zero than poles.
    LeadingFactor,
    /// ±C·∏ₙ (z/bₙ − 1)/(z/aₙ − 1) with matched counts; the sign is −1 when
    /// the zeros come first and +1 when the poles do.
    Plain,
}

/// Interlacing zero/pole product representation of an m-function.
///
/// `zeros` and `poles` are stored in shifted coordinates w = z + `offset`,
/// chosen so every entry is positive; evaluation maps back transparently.
/// The tail models continue the two sequences beyond the stored data.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProductRepresentation {
    pub zeros: Vec<f64>,
    pub poles: Vec<f64>,
    /// Multiplicative constant C > 0.
    pub constant: f64,
    pub form: ProductForm,
    /// Shift applied to both sequences relative to the original spectral
    /// variable.
    pub offset: f64,
    pub zero_tail: TailModel,
    pub pole_tail: TailModel,
}

impl ProductRepresentation {
    pub fn new(
        zeros: Vec<f64>,
        poles: Vec<f64>,
        constant: f64,
        form: ProductForm,
        offset: f64,
        zero_tail: TailModel,
        pole_tail: TailModel,
    ) -> Result<Self> {
        if zeros.is_empty() || poles.is_empty() {
            return Err(Error::Parameter("empty zero or pole sequence".into()));
        }
        let expected_zeros = match form {
            ProductForm::Plain => poles.len(),
            ProductForm::LeadingFactor => poles.len() + 1,
        };
        if zeros.len() != expected_zeros {
            return Err(Error::Parameter(format!(
                "{} zeros with {} poles does not fit the {:?} form",
                zeros.len(),
                poles.len(),
                form
            )));
        }
        if !(constant > 0.0) || !constant.is_finite() {
            return Err(Error::Parameter(format!("constant C = {constant} must be positive")));
        }
        for seq in [&zeros, &poles] {
            if seq.iter().any(|v| !v.is_finite() || *v <= 0.0) {
                return Err(Error::Parameter(
                    "sequences must be positive in shifted coordinates".into(),
                ));
            }
            if seq.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Parameter("sequences must be strictly increasing".into()));
            }
        }
        let zeros_first = zeros[0] < poles[0];
        if form == ProductForm::LeadingFactor && !zeros_first {
            return Err(Error::Parameter(
                "leading-factor form requires the zeros to come first".into(),
            ));
        }
        let pairs = poles.len();
        for n in 0..pairs {
            let (b, a) = if zeros_first {
                (zeros[n], poles[n])
            } else {
                (poles[n], zeros[n])
            };
            let next = if zeros_first {
                zeros.get(n + 1)
            } else {
                poles.get(n + 1)
            };
            if !(b < a) || next.is_some_and(|nx| !(a < *nx)) {
                return Err(Error::Parameter(format!(
                    "zeros and poles fail to interlace near index {}",
                    n + 1
                )));
            }
        }
        Ok(ProductRepresentation {
            zeros,
            poles,
            constant,
            form,
            offset,
            zero_tail,
            pole_tail,
        })
    }

    /// Whether the zeros lie below the poles.
    pub fn zeros_first(&self) -> bool {
        self.zeros[0] < self.poles[0]
    }

    /// Number of stored pole factors (the usable truncation range).
    pub fn len(&self) -> usize {
        self.poles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poles.is_empty()
    }

    fn sign(&self) -> f64 {
        match self.form {
            ProductForm::LeadingFactor => 1.0,
            ProductForm::Plain => {
                if self.zeros_first() {
                    -1.0
                } else {
                    1.0
                }
            }
        }
    }

    /// Zero index paired with pole index n (1-based) in the product tail.
    fn paired_zero_index(&self, n: f64) -> f64 {
        match self.form {
            ProductForm::Plain => n,
            ProductForm::LeadingFactor => n + 1.0,
        }
    }
}

/// Builds the product representation of the m-function of (q, triple) from
/// its first `n_max` zeros and poles, with C = 1 (uncalibrated) and tail
/// models fitted to the data. Sequences are shifted to be positive when the
/// lowest eigenvalue is not.
pub fn product_representation(
    spec: &PotentialSpec,
    bc: &TripleBoundary,
    n_max: usize,
    form: ProductForm,
) -> Result<ProductRepresentation> {
    if n_max < 8 {
        return Err(Error::Parameter("n_max below 8 leaves nothing to fit tails from".into()));
    }
    let n_zeros = match form {
        ProductForm::Plain => n_max,
        ProductForm::LeadingFactor => n_max + 1,
    };
    let zeros = sturm::eigenvalues(spec, &bc.zeros_bc(), n_zeros)?;
    let poles = sturm::eigenvalues(spec, &bc.poles_bc(), n_max)?;
    let min = zeros.values[0].min(poles.values[0]);
    let offset = if min <= 0.0 { 1.0 - min } else { 0.0 };
    let zeros = zeros.shifted(offset);
    let poles = poles.shifted(offset);
    ProductRepresentation::new(
        zeros.values.clone(),
        poles.values.clone(),
        1.0,
        form,
        offset,
        zeros.fitted_tail_model(),
        poles.fitted_tail_model(),
    )
}

/// [`product_representation`] followed by [`fit_constant`] at z₀ = i.
pub fn calibrated_product(
    spec: &PotentialSpec,
    bc: &TripleBoundary,
    n_max: usize,
    form: ProductForm,
) -> Result<ProductRepresentation> {
    let mut rep = product_representation(spec, bc, n_max, form)?;
    rep.constant = fit_constant(spec, bc, &rep, Complex64::new(0.0, 1.0))?;
    Ok(rep)
}

/// m-function from its defining ODE solution: integrates backward from π at
/// relative tolerance 1e-10 and forms the boundary ratio. The denominator
/// magnitude is the distance monitor: z on or numerically near a pole
/// (an eigenvalue of (α₂, β)) is rejected as pole proximity.
pub fn m_direct(spec: &PotentialSpec, bc: &TripleBoundary, z: Complex64) -> Result<Complex64> {
    spec.validate()?;
    TripleBoundary::new(bc.alpha1, bc.alpha2, bc.beta)?;
    if !z.re.is_finite() || !z.im.is_finite() {
        return Err(Error::Parameter(format!("nonfinite z = {z}")));
    }
    let init = (
        Complex64::new(bc.beta.sin(), 0.0),
        Complex64::new(-bc.beta.cos(), 0.0),
    );
    let opts = OdeOptions { allow_rescale: true, ..OdeOptions::default() };
    let (u, du) = integrate_schrodinger(spec, z, init, PI, 0.0, &opts)?;
    let num = -bc.alpha1.sin() * du + bc.alpha1.cos() * u;
    let den = -bc.alpha2.sin() * du + bc.alpha2.cos() * u;
    let scale = u.norm() + du.norm();
    if den.norm() < 1e-12 * scale {
        return Err(Error::PoleProximity(format!(
            "z = {z} is numerically on the pole spectrum of (α₂, β)"
        )));
    }
    Ok(num / ((bc.alpha2 - bc.alpha1).sin() * den))
}

/// m-function as the Herglotz sum a + Σ γₙ[1/(aₙ − z) − aₙ/(1 + aₙ²)] over a
/// spectral measure, plus a model tail for the indices beyond the data.
/// Returns the total; [`m_herglotz_parts`] separates the tail estimate.
pub fn m_herglotz(measure: &SpectralMeasure, a: f64, z: Complex64) -> Result<Complex64> {
    Ok(m_herglotz_parts(measure, a, z)?.0)
}

/// (value, tail) split of [`m_herglotz`]: `value` includes the tail, and
/// `tail` reports the model-tail contribution on its own.
pub fn m_herglotz_parts(
    measure: &SpectralMeasure,
    a: f64,
    z: Complex64,
) -> Result<(Complex64, Complex64)> {
    if !a.is_finite() || !z.re.is_finite() || !z.im.is_finite() {
        return Err(Error::Parameter("nonfinite Herglotz input".into()));
    }
    for (an, g) in &measure.entries {
        if !(*g > 0.0) {
            return Err(Error::Parameter(format!("nonpositive mass {g} at {an}")));
        }
        if z.im == 0.0 && (z.re - an).abs() < 1e-9 * (1.0 + z.re.abs()) {
            return Err(Error::PoleProximity(format!(
                "z = {} is on the measure support near {an}",
                z.re
            )));
        }
    }
    let mut sum = Complex64::new(a, 0.0);
    for (an, g) in &measure.entries {
        sum += herglotz_term(*an, *g, z);
    }
    let tail = if measure.entries.len() >= 8 {
        herglotz_tail(
            &measure.fitted_mass_model(),
            &measure.fitted_tail_model(),
            measure.entries.len() + 1,
            z,
        )?
    } else {
        Complex64::ZERO
    };
    Ok((sum + tail, tail))
}

/// m-function from its zero/pole product. Factors up to `truncation` come
/// from the stored sequences; when `truncation` equals the representation
/// length the remaining factors are summed from the tail models, while a
/// smaller `truncation` evaluates the bare truncated product (a deliberate
/// under-truncation diagnostic).
pub fn m_product(rep: &ProductRepresentation, z: Complex64, truncation: usize) -> Result<Complex64> {
    if truncation == 0 || truncation > rep.len() {
        return Err(Error::Parameter(format!(
            "truncation {truncation} outside 1..={}",
            rep.len()
        )));
    }
    let w = z + rep.offset;
    if w.im == 0.0 {
        for a in rep.poles.iter().take(truncation) {
            if (w.re - a).abs() < 1e-9 * (1.0 + w.re.abs()) {
                return Err(Error::PoleProximity(format!(
                    "z = {} is numerically at the pole {}",
                    z.re,
                    a - rep.offset
                )));
            }
        }
    }
    let mut value = Complex64::new(rep.sign() * rep.constant, 0.0);
    match rep.form {
        ProductForm::Plain => {
            for n in 0..truncation {
                value *= (w / rep.zeros[n] - 1.0) / (w / rep.poles[n] - 1.0);
            }
        }
        ProductForm::LeadingFactor => {
            value *= w / rep.zeros[0] - 1.0;
            for n in 0..truncation {
                value *= (w / rep.zeros[n + 1] - 1.0) / (w / rep.poles[n] - 1.0);
            }
        }
    }
    if truncation == rep.len() {
        let zero_tail = rep.zero_tail;
        let paired = |t: f64| zero_tail.value(rep.paired_zero_index(t));
        let pole_tail = rep.pole_tail;
        let tail = paired_log_tail(|t| pole_tail.value(t), paired, rep.len() + 1, w)?;
        value *= tail.exp();
    }
    Ok(value)
}

/// Calibrates the product constant C > 0 by matching [`m_direct`] at z₀:
/// C = Re(m_direct(z₀) / m_product(z₀; C = 1)).
pub fn fit_constant(
    spec: &PotentialSpec,
    bc: &TripleBoundary,
    rep: &ProductRepresentation,
    z0: Complex64,
) -> Result<f64> {
    let md = m_direct(spec, bc, z0)?;
    if md.norm() < 1e-14 {
        return Err(Error::Degenerate(format!(
            "m(z₀) vanishes at z₀ = {z0}; pick a calibration point away from the zeros"
        )));
    }
    let mut unit = rep.clone();
    unit.constant = 1.0;
    let base = m_product(&unit, z0, unit.len())?;
    if base.norm() < 1e-280 {
        return Err(Error::Degenerate(format!("product vanishes at z₀ = {z0}")));
    }
    let ratio = md / base;
    if !(ratio.re > 0.0) || ratio.im.abs() > 0.1 * ratio.norm() {
        return Err(Error::Degenerate(format!(
            "calibration ratio {ratio} is not a positive real constant"
        )));
    }
    Ok(ratio.re)
}

/// Residue of the product representation at its k-th pole (1-based), with
/// the factors beyond the stored data supplied by the tail models.
pub fn residue_product(rep: &ProductRepresentation, k: usize) -> Result<f64> {
    if k == 0 || k > rep.len() {
        return Err(Error::Parameter(format!("pole index {k} outside 1..={}", rep.len())));
    }
    let ak = rep.poles[k - 1];
    let mut value = rep.sign() * rep.constant * ak;
    match rep.form {
        ProductForm::Plain => {
            value *= ak / rep.zeros[k - 1] - 1.0;
            for j in 0..rep.len() {
                if j != k - 1 {
                    value *= (ak / rep.zeros[j] - 1.0) / (ak / rep.poles[j] - 1.0);
                }
            }
        }
        ProductForm::LeadingFactor => {
            value *= (ak / rep.zeros[0] - 1.0) * (ak / rep.zeros[k] - 1.0);
            for j in 0..rep.len() {
                if j != k - 1 {
                    value *= (ak / rep.zeros[j + 1] - 1.0) / (ak / rep.poles[j] - 1.0);
                }
            }
        }
    }
    let zero_tail = rep.zero_tail;
    let paired = |t: f64| zero_tail.value(rep.paired_zero_index(t));
    let pole_tail = rep.pole_tail;
    let tail = paired_log_tail(
        |t| pole_tail.value(t),
        paired,
        rep.len() + 1,
        Complex64::new(ak, 0.0),
    )?;
    Ok(value * tail.re.exp())
}

/// Spectral measure of a boundary triple: entries (aₙ, γₙ) over the poles
/// σ(α₂, β) with γₙ = −Res(m, aₙ), computed from the z-derivative of the
/// denominator via the variational equation.
pub fn triple_spectral_measure(
    spec: &PotentialSpec,
    bc: &TripleBoundary,
    n_max: usize,
) -> Result<SpectralMeasure> {
    spec.validate()?;
    TripleBoundary::new(bc.alpha1, bc.alpha2, bc.beta)?;
    let poles = sturm::eigenvalues(spec, &bc.poles_bc(), n_max)?;
    let sin_delta = (bc.alpha2 - bc.alpha1).sin();
    let entries: Result<Vec<(f64, f64)>> = poles
        .values
        .par_iter()
        .map(|&a| {
            let init = (
                Complex64::new(bc.beta.sin(), 0.0),
                Complex64::new(-bc.beta.cos(), 0.0),
            );
            let opts = OdeOptions::default();
            let state = integrate_schrodinger_sensitivity(
                spec,
                Complex64::new(a, 0.0),
                init,
                PI,
                0.0,
                &opts,
            )?;
            let (u, du, v, dv) = (state[0], state[1], state[2], state[3]);
            let num = -bc.alpha1.sin() * du + bc.alpha1.cos() * u;
            let dden_dz = -bc.alpha2.sin() * dv + bc.alpha2.cos() * v;
            if dden_dz.norm() < 1e-300 {
                return Err(Error::Conditioning(format!(
                    "stationary denominator at eigenvalue {a}"
                )));
            }
            let residue = num / (sin_delta * dden_dz);
            let gamma = -residue.re;
            if !(gamma > 0.0) {
                return Err(Error::Solver(format!(
                    "nonpositive residue mass {gamma} at eigenvalue {a}"
                )));
            }
            Ok((a, gamma))
        })
        .collect();
    Ok(SpectralMeasure {
        entries: entries?,
        bc: bc.poles_bc(),
    })
}

/// Samples m on a real grid, dropping points within `exclusion` of a pole.
/// Returns the kept (x, m(x)) pairs together with the pole and zero
/// sequences covering the grid (for marker output).
pub struct RealLineScan {
    pub samples: Vec<(f64, f64)>,
    pub zeros: Spectrum,
    pub poles: Spectrum,
}

/// Evaluates m on a grid of real points with pole neighborhoods excluded.
pub fn real_line_scan(
    spec: &PotentialSpec,
    bc: &TripleBoundary,
    grid: &[f64],
    exclusion: f64,
) -> Result<RealLineScan> {
    if grid.is_empty() {
        return Err(Error::Parameter("empty evaluation grid".into()));
    }
    if !(exclusion > 0.0) {
        return Err(Error::Parameter(format!("exclusion radius {exclusion} must be positive")));
    }
    let top = grid.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let q_mean = spec.mean();
    let mut n_cover = 1usize;
    while sturm::asymptotic_model(&bc.poles_bc(), q_mean, n_cover) < top + 2.0 {
        n_cover += 1;
    }
    n_cover += 2;
    let poles = sturm::eigenvalues(spec, &bc.poles_bc(), n_cover)?;
    let zeros = sturm::eigenvalues(spec, &bc.zeros_bc(), n_cover)?;
    let samples: Result<Vec<Option<(f64, f64)>>> = grid
        .par_iter()
        .map(|&x| {
            if poles.values.iter().any(|a| (x - a).abs() <= exclusion) {
                return Ok(None);
            }
            let m = m_direct(spec, bc, Complex64::new(x, 0.0))?;
            Ok(Some((x, m.re)))
        })
        .collect();
    Ok(RealLineScan {
        samples: samples?.into_iter().flatten().collect(),
        zeros,
        poles,
    })
}

/// Estimates the linear coefficient of the Herglotz representation,
/// lim Im m(iy)/y, by eliminating the O(y^{−1/2}) term between two heights.
/// For the operators computed here the limit is 0; the estimate reports how
/// close to 0 the data comes.
pub fn linear_term_estimate(spec: &PotentialSpec, bc: &TripleBoundary) -> Result<f64> {
    let y1 = 400.0;
    let y2 = 1600.0;
    let v1 = m_direct(spec, bc, Complex64::new(0.0, y1))?.im / y1;
    let v2 = m_direct(spec, bc, Complex64::new(0.0, y2))?.im / y2;
    Ok(2.0 * v2 - v1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn coth_pi() -> f64 {
        1.0 / PI.tanh()
    }

    #[test]
    fn m_direct_matches_free_dirichlet_closed_form() {
        let spec = PotentialSpec::zero();
        let bc = TripleBoundary::from_pair(0.0, 0.0).unwrap();
        let m = m_direct(&spec, &bc, Complex64::new(-1.0, 0.0)).unwrap();
        assert_abs_diff_eq!(m.re, -coth_pi(), epsilon = 1e-8);
        assert_abs_diff_eq!(m.im, 0.0, epsilon = 1e-10);
    }

    #[test]
    fn m_direct_matches_free_neumann_closed_forms() {
        let spec = PotentialSpec::zero();
        let nd = TripleBoundary::from_pair(PI / 2.0, 0.0).unwrap();
        let m = m_direct(&spec, &nd, Complex64::new(-1.0, 0.0)).unwrap();
        assert_abs_diff_eq!(m.re, PI.tanh(), epsilon = 1e-8);
        let nn = TripleBoundary::from_pair(PI / 2.0, PI / 2.0).unwrap();
        let m = m_direct(&spec, &nn, Complex64::new(-1.0, 0.0)).unwrap();
        assert_abs_diff_eq!(m.re, coth_pi(), epsilon = 1e-8);
    }

    #[test]
    fn m_direct_is_herglotz_and_conjugate_symmetric() {
        let cases = [
            (PotentialSpec::zero(), TripleBoundary::from_pair(0.0, 0.0).unwrap()),
            (
                PotentialSpec::cosine(vec![0.0, 2.0]),
                TripleBoundary::from_pair(1.0, 2.0).unwrap(),
            ),
            (
                PotentialSpec::piecewise(vec![1.0, -1.0]),
                TripleBoundary::new(0.4, 2.1, 0.9).unwrap(),
            ),
        ];
        for (spec, bc) in &cases {
            for z in [Complex64::new(0.3, 1.0), Complex64::new(-2.0, 0.5), Complex64::new(8.7, 2.0)]
            {
                let m = m_direct(spec, bc, z).unwrap();
                assert!(m.im > 0.0, "Im m = {} not positive at {z}", m.im);
                let conj = m_direct(spec, bc, z.conj()).unwrap();
                assert_abs_diff_eq!(conj.re, m.re, epsilon = 1e-10 * (1.0 + m.norm()));
                assert_abs_diff_eq!(conj.im, -m.im, epsilon = 1e-10 * (1.0 + m.norm()));
            }
        }
    }

    #[test]
    fn m_herglotz_matches_the_closed_form_with_tail_correction() {
        let spec = PotentialSpec::zero();
        let bc = BoundaryConditions::dirichlet_dirichlet();
        let measure = sturm::spectral_measure(&spec, &bc, 400).unwrap();
        let triple = TripleBoundary::from_pair(0.0, 0.0).unwrap();
        let a = m_direct(&spec, &triple, Complex64::new(0.0, 1.0)).unwrap().re;
        let z = Complex64::new(-1.0, 0.0);
        let (value, tail) = m_herglotz_parts(&measure, a, z).unwrap();
        assert_abs_diff_eq!(value.re, -coth_pi(), epsilon = 1e-6);
        assert!(tail.norm() > 1e-6, "tail {tail} unexpectedly negligible");
    }

    #[test]
    fn calibrated_product_recovers_the_free_dirichlet_constant() {
        let spec = PotentialSpec::zero();
        let bc = TripleBoundary::from_pair(0.0, 0.0).unwrap();
        let rep = calibrated_product(&spec, &bc, 400, ProductForm::Plain).unwrap();
        assert!(rep.zeros_first());
        assert_relative_eq!(rep.constant, 1.0 / PI, max_relative = 1e-4);
        let m = m_product(&rep, Complex64::new(-1.0, 0.0), rep.len()).unwrap();
        assert_abs_diff_eq!(m.re, -coth_pi(), epsilon = 1e-6);
        assert_abs_diff_eq!(m_product(&rep, Complex64::ZERO, rep.len()).unwrap().re,
            -rep.constant, epsilon = 1e-9);
    }

    #[test]
    fn poles_first_product_carries_a_positive_sign() {
        let spec = PotentialSpec::zero();
        let bc = TripleBoundary::from_pair(PI / 2.0, PI / 2.0).unwrap();
        let rep = calibrated_product(&spec, &bc, 400, ProductForm::Plain).unwrap();
        assert!(!rep.zeros_first());
        assert_relative_eq!(rep.offset, 1.0, max_relative = 1e-9);
        assert_relative_eq!(rep.constant, coth_pi(), max_relative = 1e-6);
        let m = m_product(&rep, Complex64::new(-1.0, 0.0), rep.len()).unwrap();
        assert_abs_diff_eq!(m.re, coth_pi(), epsilon = 1e-6);
    }

    #[test]
    fn leading_factor_form_agrees_with_the_plain_form() {
        let spec = PotentialSpec::cosine(vec![0.0, 1.0]);
        let bc = TripleBoundary::from_pair(0.0, 0.0).unwrap();
        let plain = calibrated_product(&spec, &bc, 60, ProductForm::Plain).unwrap();
        let leading = calibrated_product(&spec, &bc, 60, ProductForm::LeadingFactor).unwrap();
        for z in [Complex64::new(2.3, 1.0), Complex64::new(-4.0, 0.0)] {
            let mp = m_product(&plain, z, plain.len()).unwrap();
            let ml = m_product(&leading, z, leading.len()).unwrap();
            assert_relative_eq!(mp.re, ml.re, max_relative = 1e-6);
            assert_abs_diff_eq!(mp.im, ml.im, epsilon = 1e-6 * (1.0 + mp.norm()));
        }
    }

    #[test]
    fn three_routes_agree_for_a_cosine_potential() {
        let spec = PotentialSpec::cosine(vec![0.0, 2.0]);
        let bc = TripleBoundary::from_pair(0.0, 0.0).unwrap();
        let z = Complex64::new(3.0, 2.0);
        let direct = m_direct(&spec, &bc, z).unwrap();
        let rep = calibrated_product(&spec, &bc, 400, ProductForm::Plain).unwrap();
        let product = m_product(&rep, z, rep.len()).unwrap();
        assert!((direct - product).norm() / direct.norm() < 1e-3);
        let measure = sturm::spectral_measure(&spec, &bc.poles_bc(), 400).unwrap();
        let a = direct_linear_coefficient(&spec, &bc);
        let herglotz = m_herglotz(&measure, a, z).unwrap();
        assert!((direct - herglotz).norm() / direct.norm() < 1e-3);
    }

    fn direct_linear_coefficient(spec: &PotentialSpec, bc: &TripleBoundary) -> f64 {
        m_direct(spec, bc, Complex64::new(0.0, 1.0)).unwrap().re
    }

    #[test]
    fn product_residues_match_the_measure_masses() {
        let spec = PotentialSpec::zero();
        let bc = TripleBoundary::from_pair(0.0, 0.0).unwrap();
        let rep = calibrated_product(&spec, &bc, 400, ProductForm::Plain).unwrap();
        for k in [1usize, 2, 5] {
            let res = residue_product(&rep, k).unwrap();
            let gamma = 2.0 * (k * k) as f64 / PI;
            assert_relative_eq!(res, -gamma, max_relative = 1e-4);
        }
    }

    #[test]
    fn triple_measure_masses_match_norming_constants() {
        let spec = PotentialSpec::cosine(vec![0.5, 1.0]);
        let bc = TripleBoundary::from_pair(0.0, 0.0).unwrap();
        let triple = triple_spectral_measure(&spec, &bc, 6).unwrap();
        let pair = sturm::spectral_measure(&spec, &bc.poles_bc(), 6).unwrap();
        for ((a1, g1), (a2, g2)) in triple.entries.iter().zip(&pair.entries) {
            assert_relative_eq!(a1, a2, max_relative = 1e-9);
            assert_relative_eq!(g1, g2, max_relative = 1e-6);
        }
    }

    #[test]
    fn under_truncation_visibly_degrades_the_product() {
        let spec = PotentialSpec::zero();
        let bc = TripleBoundary::from_pair(0.0, 0.0).unwrap();
        let rep = calibrated_product(&spec, &bc, 400, ProductForm::Plain).unwrap();
        let z = Complex64::new(-1.0, 0.0);
        let full = m_product(&rep, z, rep.len()).unwrap();
        let bare = m_product(&rep, z, 5).unwrap();
        assert!((full.re - -coth_pi()).abs() < 1e-6);
        assert!((bare.re - -coth_pi()).abs() > 1e-3);
    }

    #[test]
    fn interlacing_violations_are_rejected() {
        let tail = TailModel { shift: 0.0, offset: 0.0 };
        let bad = ProductRepresentation::new(
            vec![1.0, 2.0],
            vec![3.0, 4.0],
            1.0,
            ProductForm::Plain,
            0.0,
            tail,
            tail,
        );
        assert!(bad.is_err());
        let good = ProductRepresentation::new(
            vec![0.5, 2.0],
            vec![1.0, 3.0],
            1.0,
            ProductForm::Plain,
            0.0,
            tail,
            tail,
        );
        assert!(good.is_ok());
    }

    #[test]
    fn real_line_scan_excludes_pole_neighborhoods() {
        let spec = PotentialSpec::zero();
        let bc = TripleBoundary::from_pair(0.0, 0.0).unwrap();
        let grid: Vec<f64> = (0..=120).map(|i| i as f64 * 0.25).collect();
        let scan = real_line_scan(&spec, &bc, &grid, 0.05).unwrap();
        for (x, _) in &scan.samples {
            for a in &scan.poles.values {
                assert!((x - a).abs() > 0.05);
            }
        }
        assert!(scan.samples.len() > 100);
    }

    #[test]
    fn linear_term_estimate_is_negligible_for_pair_triples() {
        let cases = [
            (PotentialSpec::zero(), TripleBoundary::from_pair(0.0, 0.0).unwrap()),
            (
                PotentialSpec::cosine(vec![0.0, 2.0]),
                TripleBoundary::from_pair(PI / 2.0, 0.0).unwrap(),
            ),
        ];
        for (spec, bc) in &cases {
            let a = linear_term_estimate(spec, bc).unwrap();
            assert!(a.abs() < 5e-3, "linear term estimate {a} too large");
        }
    }

    #[test]
    fn degenerate_triples_are_rejected() {
        assert!(TripleBoundary::new(1.0, 1.0, 0.0).is_err());
        assert!(TripleBoundary::new(0.0, PI, 0.0).is_err());
        assert!(TripleBoundary::from_pair(0.0, 0.0).is_ok());
    }

    #[test]
    fn fit_constant_is_stable_across_calibration_points() {
        let spec = PotentialSpec::cosine(vec![0.0, 2.0]);
        let bc = TripleBoundary::from_pair(0.0, 0.0).unwrap();
        let rep = product_representation(&spec, &bc, 400, ProductForm::Plain).unwrap();
        let c1 = fit_constant(&spec, &bc, &rep, Complex64::new(0.0, 1.0)).unwrap();
        let c2 = fit_constant(&spec, &bc, &rep, Complex64::new(0.0, 2.0)).unwrap();
        assert!(c1 > 0.0);
        assert_relative_eq!(c1, c2, max_relative = 1e-3);
    }
}
