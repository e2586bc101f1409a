//! Recovery of missing second-spectrum eigenvalues from mixed spectral data.
//!
//! The m-function factors as m = F·G: G collects the pole/zero pairs
//! (a_{k_n}, b_{l_n}) carrying the unknown zeros together with the product
//! constant and the asymptotic pair tail, while F collects the explicitly
//! known complement factors. F is fully determined by the data, so
//! Res(m, a_{k_n}) = −γ_{k_n} gives computable targets
//! Res(G, a_{k_n}) = −γ_{k_n}/F(a_{k_n}); in the Marchenko limit where every
//! index is mass-marked, F ≡ 1 and the targets are the masses themselves.
//! The engine solves the residue equations for the hidden zeros inside
//! strict interlacing boxes by least squares, closing the count with either
//! the large-|z| normalization identity fixing the constant, an asymptotic
//! tie on the largest unknown zero, or a caller-supplied anchor zero.

use std::collections::{BTreeMap, BTreeSet};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::cebotarev::{self, IndexMap, IndexedSubsequences, SequenceView};
use crate::lsq::{covariance_diagonal, levenberg_marquardt, Jacobian, LmOptions};
use crate::potential::PotentialSpec;
use crate::sturm;
use crate::tail::TailModel;
use crate::weyl::TripleBoundary;
use crate::{Error, Result};

/// Index maps for the non-matching modes: position n pairs the pole a_{k_n}
/// with the zero b_{l_n}. Positions n ≤ `equal_through` are exempt from the
/// general-boundary-condition requirement k_n ≠ l_n.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CompletionMaps {
    pub k: IndexMap,
    pub l: IndexMap,
    #[serde(default)]
    pub equal_through: usize,
}

/// Input bundle for the completion engine: the full pole spectrum σ(α₂, β),
/// the known zeros of σ(α₁, β), and the spectral-measure masses marking the
/// poles whose paired zeros are hidden.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MixedSpectralData {
    /// Full second spectrum a_1 < … < a_N.
    pub spectrum: Vec<f64>,
    pub bc: TripleBoundary,
    /// Matching mode: indices n ∈ A whose zeros b_n are hidden.
    #[serde(default)]
    pub index_set: Vec<usize>,
    /// Zeros b_j for every index outside the hidden set, keyed by the
    /// underlying 1-based zero index.
    #[serde(default)]
    pub known_zeros: BTreeMap<usize, f64>,
    /// Masses γ at the mass-marked pole indices.
    #[serde(default)]
    pub masses: BTreeMap<usize, f64>,
    /// Non-matching anchored mode: (position s in the pair list, zero value).
    #[serde(default)]
    pub anchor: Option<(usize, f64)>,
    /// Non-matching index maps; absent in matching mode.
    #[serde(default)]
    pub index_maps: Option<CompletionMaps>,
}

/// Closing equation used when no anchor zero is supplied.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PinMode {
    /// Fix the constant from the large-|z| asymptote of the m-function at
    /// z₀ = i·10⁶, evaluated with the unknown zeros at their model values.
    Normalization,
    /// Keep the constant free and tie the largest-index unknown zero to its
    /// asymptotic-model value by an extra weighted equation.
    LargestZeroToModel,
}

/// Which non-matching theorem drives the solve.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NonMatchingMode {
    /// One known anchor zero b_{l_s} replaces the pinning equation.
    Anchored,
    /// Requires the absolute-convergence hypothesis (H3) on the index maps;
    /// pins by normalization.
    AbsolutelyConvergent,
}

/// Solver configuration.
#[derive(Clone, Copy, Debug)]
pub struct CompletionOptions {
    pub pin_mode: PinMode,
    /// Weight of the model-tie equation in `LargestZeroToModel` mode.
    pub pin_weight: f64,
    /// Acceptance threshold on the RMS of the relative residue equations.
    pub residual_tol: f64,
    pub max_iterations: usize,
}

impl Default for CompletionOptions {
    fn default() -> Self {
        CompletionOptions {
            pin_mode: PinMode::Normalization,
            pin_weight: 1.0,
            residual_tol: 1e-5,
            max_iterations: 200,
        }
    }
}

/// Recovered zeros and solve diagnostics.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CompletionResult {
    /// (underlying zero index, recovered value), ascending by index.
    pub recovered_zeros: Vec<(usize, f64)>,
    /// Product constant C > 0 (fitted, or fixed by the normalization pin).
    pub constant: f64,
    /// RMS of the relative residue equations at the solution.
    pub residual_norm: f64,
    /// Residual of the closing equation at the solution: the relative
    /// mismatch of the large-|z| normalization identity, the scaled model
    /// tie, or 0 in anchored mode.
    pub pin_residual: f64,
    /// 1σ half-widths for the recovered zeros from the local Jacobian.
    pub confidence: Vec<f64>,
    pub iterations: usize,
    /// Solver residual RMS after each accepted step.
    pub residual_trace: Vec<f64>,
}

/// Forward-check of a completion against a known ground-truth potential.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CompletionCheck {
    pub max_abs_error: f64,
    pub max_rel_error: f64,
    /// Set when the maximum absolute error exceeds 1e−2.
    pub flagged: bool,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn logit(p: f64) -> f64 {
    let p = p.clamp(1e-9, 1.0 - 1e-9);
    (p / (1.0 - p)).ln()
}

fn pin_point() -> Complex64 {
    Complex64::new(0.0, 1e6)
}

/// How the solve closes the equation count for the product constant.
enum Closure {
    /// C is the last parameter; the large-|z| identity supplies two extra
    /// residual rows (real and imaginary relative mismatch).
    Identity { initial: f64 },
    /// C fixed from the normalization identity evaluated at the asymptotic
    /// model zeros; parameters are the zeros only. Fallback used when the
    /// joint identity solve stalls on inconsistent data.
    FrozenConstant(f64),
    /// C is the last parameter; one extra model-tie equation.
    ModelPin { weight: f64, initial: f64 },
    /// C is the last parameter; the anchor zero squares the system.
    Anchor { initial: f64 },
}

/// Pieces of the large-|z| normalization identity m(z₀) ≈ m̂(z₀), all
/// independent of the unknowns.
struct Asymptote {
    w0: Complex64,
    m_hat: Complex64,
    /// F(w₀) times the model pair tail beyond the data.
    f_tail_at_w0: Complex64,
    /// Pole factors of the pair product at w₀.
    g_pole_at_w0: Complex64,
}

impl Asymptote {
    fn model_value(&self, sign: f64, constant: f64, b: &[f64]) -> Complex64 {
        let mut g = self.g_pole_at_w0;
        for bv in b {
            g *= self.w0 / bv - 1.0;
        }
        sign * constant * self.f_tail_at_w0 * g
    }

    /// Relative mismatch m_model(w₀)/m̂(w₀) − 1 for given unknowns.
    fn mismatch(&self, sign: f64, constant: f64, b: &[f64]) -> Complex64 {
        self.model_value(sign, constant, b) / self.m_hat - 1.0
    }

    /// Constant implied by the identity for given unknowns.
    fn implied_constant(&self, sign: f64, b: &[f64]) -> Result<f64> {
        let ratio = self.m_hat / self.model_value(sign, 1.0, b);
        if !(ratio.re > 0.0) || ratio.im.abs() > 0.1 * ratio.norm() {
            return Err(Error::Degenerate(format!(
                "normalization identity gives a non-positive product constant ({ratio})"
            )));
        }
        Ok(ratio.re)
    }
}

/// Internal solve setup in shifted (positive) coordinates.
struct System {
    shift: f64,
    poles: Vec<f64>,
    zero_model: TailModel,
    sign: f64,
    /// Pole index k_n per position (1-based indices into `poles`).
    k_idx: Vec<usize>,
    /// Zero index l_n per position.
    l_idx: Vec<usize>,
    /// Positions (0-based) whose zero is unknown.
    unknown_pos: Vec<usize>,
    /// Targets Res(G, a_{k_n}) = −γ_{k_n}/F(a_{k_n}).
    targets: Vec<f64>,
    /// Model pair-tail factor at a_{k_n}, part of G's rows.
    row_tail: Vec<f64>,
    /// Interlacing boxes per unknown position (shifted).
    boxes: Vec<(f64, f64)>,
    /// Initial zero values per position (model, clamped into the boxes).
    initial_b: Vec<f64>,
    closure: Closure,
    asymptote: Asymptote,
}

impl System {
    /// Zero values per position and the constant, from the parameters.
    fn decode(&self, params: &[f64]) -> (Vec<f64>, f64) {
        let mut b = self.initial_b.clone();
        for (j, &pos) in self.unknown_pos.iter().enumerate() {
            let (lo, hi) = self.boxes[j];
            b[pos] = lo + (hi - lo) * sigmoid(params[j]);
        }
        let constant = match self.closure {
            Closure::FrozenConstant(c) => c,
            _ => params[self.unknown_pos.len()].exp(),
        };
        (b, constant)
    }

    fn residuals(&self, params: &[f64]) -> Result<Vec<f64>> {
        let (b, constant) = self.decode(params);
        let m = self.k_idx.len();
        let mut out = Vec::with_capacity(m + 1);
        for n in 0..m {
            let a = self.poles[self.k_idx[n] - 1];
            let mut res_g = self.sign * constant * a * (a / b[n] - 1.0) * self.row_tail[n];
            for j in 0..m {
                if j != n {
                    let aj = self.poles[self.k_idx[j] - 1];
                    res_g *= (a / b[j] - 1.0) / (a / aj - 1.0);
                }
            }
            out.push((res_g - self.targets[n]) / self.targets[n].abs());
        }
        match self.closure {
            Closure::Identity { .. } => {
                let mismatch = self.asymptote.mismatch(self.sign, constant, &b);
                out.push(mismatch.re);
                out.push(mismatch.im);
            }
            Closure::ModelPin { weight, .. } => {
                let (j, pos) = self.largest_unknown();
                let model = self.zero_model.value(self.l_idx[pos] as f64);
                let (lo, hi) = self.boxes[j];
                out.push(weight * (b[pos] - model) / (hi - lo));
            }
            Closure::FrozenConstant(_) | Closure::Anchor { .. } => {}
        }
        Ok(out)
    }

    /// (slot in `unknown_pos`, position) of the largest-index unknown zero.
    fn largest_unknown(&self) -> (usize, usize) {
        self.unknown_pos
            .iter()
            .enumerate()
            .max_by_key(|(_, &pos)| self.l_idx[pos])
            .map(|(j, &pos)| (j, pos))
            .expect("model pin requires at least one unknown zero")
    }
}

/// Interlacing box for the zero at underlying index j (shifted coordinates).
fn zero_box(j: usize, poles: &[f64], pole_model: &TailModel, zeros_first: bool) -> (f64, f64) {
    if zeros_first {
        let lo = if j == 1 { 0.0 } else { poles[j - 2] };
        (lo, poles[j - 1])
    } else {
        let hi = if j < poles.len() {
            poles[j]
        } else {
            pole_model.value((poles.len() + 1) as f64)
        };
        (poles[j - 1], hi)
    }
}

/// Builds index maps equivalent to the matching index set A.
fn matching_maps(index_set: &[usize]) -> Result<CompletionMaps> {
    let map = IndexMap::new(index_set.to_vec(), None)?;
    Ok(CompletionMaps { k: map.clone(), l: map, equal_through: usize::MAX })
}

/// Number of map positions whose indices fit inside a spectrum of length N.
fn position_count(maps: &CompletionMaps, n_len: usize) -> usize {
    let mut m = 0usize;
    while let (Ok(k), Ok(l)) = (maps.k.index(m + 1), maps.l.index(m + 1)) {
        if k > n_len || l > n_len {
            break;
        }
        m += 1;
    }
    m
}

enum PinChoice {
    Normalization,
    ModelTie { weight: f64 },
    Anchored,
}

fn assemble(
    data: &MixedSpectralData,
    maps: &CompletionMaps,
    anchor: Option<(usize, f64)>,
    pin: PinChoice,
) -> Result<System> {
    TripleBoundary::new(data.bc.alpha1, data.bc.alpha2, data.bc.beta)?;
    let n_len = data.spectrum.len();
    if n_len < 8 {
        return Err(Error::Parameter(format!(
            "spectrum with {n_len} entries is too short (need at least 8)"
        )));
    }
    if data.spectrum.iter().any(|v| !v.is_finite()) {
        return Err(Error::Parameter("nonfinite spectrum entry".into()));
    }
    if data.spectrum.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Parameter("spectrum must be strictly increasing".into()));
    }
    for (idx, g) in &data.masses {
        if *idx == 0 || *idx > n_len {
            return Err(Error::Parameter(format!("mass index {idx} outside 1..={n_len}")));
        }
        if !g.is_finite() || !(*g > 0.0) {
            return Err(Error::Parameter(format!("mass at index {idx} must be positive")));
        }
    }

    let m_count = position_count(maps, n_len);
    let k_idx: Vec<usize> = (1..=m_count).map(|n| maps.k.index(n)).collect::<Result<_>>()?;
    let l_idx: Vec<usize> = (1..=m_count).map(|n| maps.l.index(n)).collect::<Result<_>>()?;

    let zeros_first = data.bc.zeros_first();
    let sign = if zeros_first { -1.0 } else { 1.0 };

    let general_bc = data.bc.alpha1 != 0.0 && data.bc.alpha2 != 0.0;
    if general_bc {
        for n in 1..=m_count {
            if n > maps.equal_through && k_idx[n - 1] == l_idx[n - 1] {
                return Err(Error::Hypothesis(
                    format!(
                        "general boundary conditions require k_n ≠ l_n beyond position {}, \
                         but position {n} has k = l = {}",
                        maps.equal_through,
                        k_idx[n - 1]
                    ),
                    None,
                ));
            }
        }
        if maps.k.extend.is_some()
            && maps.k.extend == maps.l.extend
            && maps.equal_through < usize::MAX
        {
            return Err(Error::Hypothesis(
                "general boundary conditions require k_n ≠ l_n for all large n, but both \
                 index maps extend by the same rule"
                    .into(),
                None,
            ));
        }
    }

    let l_set: BTreeSet<usize> = l_idx.iter().copied().collect();
    let k_set: BTreeSet<usize> = k_idx.iter().copied().collect();
    for (n, k) in k_idx.iter().enumerate() {
        if !data.masses.contains_key(k) {
            return Err(Error::Parameter(format!(
                "missing mass for pole index {k} (position {})",
                n + 1
            )));
        }
    }
    for idx in data.masses.keys() {
        if !k_set.contains(idx) {
            return Err(Error::Parameter(format!(
                "mass supplied at index {idx}, which is not a mass-marked pole position"
            )));
        }
    }
    for idx in data.known_zeros.keys() {
        if *idx == 0 || *idx > n_len {
            return Err(Error::Parameter(format!("known zero index {idx} outside 1..={n_len}")));
        }
    }
    for j in 1..=n_len {
        if !l_set.contains(&j) && !data.known_zeros.contains_key(&j) {
            return Err(Error::Parameter(format!(
                "zero index {j} is neither hidden nor supplied in known_zeros"
            )));
        }
    }

    let raw_pole_model = TailModel::fit(&data.spectrum, data.bc.poles_bc().index_shift());
    let raw_zero_offset = raw_pole_model.offset - data.bc.poles_bc().cotangent_term()
        + data.bc.zeros_bc().cotangent_term();
    let raw_zero_shift = data.bc.zeros_bc().index_shift();
    let raw_zero_model = TailModel { shift: raw_zero_shift, offset: raw_zero_offset };
    let min_value = data
        .spectrum
        .iter()
        .copied()
        .chain(data.known_zeros.values().copied())
        .chain(l_idx.iter().map(|&l| raw_zero_model.value(l as f64)))
        .fold(f64::INFINITY, f64::min);
    let shift = if min_value <= 0.0 { 1.0 - min_value } else { 0.0 };

    let poles: Vec<f64> = data.spectrum.iter().map(|a| a + shift).collect();
    let pole_model =
        TailModel { shift: raw_pole_model.shift, offset: raw_pole_model.offset + shift };
    let zero_model = TailModel { shift: raw_zero_shift, offset: raw_zero_offset + shift };

    let known_zeros_shifted: BTreeMap<usize, f64> = data
        .known_zeros
        .iter()
        .filter(|(idx, _)| !l_set.contains(idx))
        .map(|(idx, v)| (*idx, v + shift))
        .collect();
    for (&j, &b) in &known_zeros_shifted {
        let (lo, hi) = zero_box(j, &poles, &pole_model, zeros_first);
        if !(b > lo && b < hi) {
            return Err(Error::Parameter(format!(
                "known zero {} at index {j} breaks interlacing with the poles",
                b - shift
            )));
        }
    }

    let mut fixed_pos = BTreeMap::new();
    if let Some((s, value)) = anchor {
        if s == 0 || s > m_count {
            return Err(Error::Parameter(format!("anchor position {s} outside 1..={m_count}")));
        }
        let shifted = value + shift;
        let (lo, hi) = zero_box(l_idx[s - 1], &poles, &pole_model, zeros_first);
        if !(shifted > lo && shifted < hi) {
            return Err(Error::Parameter(format!(
                "anchor zero {value} at index {} breaks interlacing with the poles",
                l_idx[s - 1]
            )));
        }
        fixed_pos.insert(s - 1, shifted);
    }
    let unknown_pos: Vec<usize> =
        (0..m_count).filter(|pos| !fixed_pos.contains_key(pos)).collect();
    let boxes: Vec<(f64, f64)> = unknown_pos
        .iter()
        .map(|&pos| zero_box(l_idx[pos], &poles, &pole_model, zeros_first))
        .collect();

    let mut initial_b = vec![0.0; m_count];
    for (j, &pos) in unknown_pos.iter().enumerate() {
        let (lo, hi) = boxes[j];
        let frac = ((zero_model.value(l_idx[pos] as f64) - lo) / (hi - lo)).clamp(0.05, 0.95);
        initial_b[pos] = lo + (hi - lo) * frac;
    }
    for (&pos, &value) in &fixed_pos {
        initial_b[pos] = value;
    }

    let tail_first = n_len + 1;
    let mut targets = Vec::with_capacity(m_count);
    let mut row_tail = Vec::with_capacity(m_count);
    for n in 0..m_count {
        let a = poles[k_idx[n] - 1];
        let mut f0 = 1.0f64;
        for j in 1..=n_len {
            if let Some(b) = known_zeros_shifted.get(&j) {
                f0 *= a / b - 1.0;
            }
            if !k_set.contains(&j) {
                f0 *= 1.0 / (a / poles[j - 1] - 1.0);
            }
        }
        if f0.abs() < 1e-12 {
            return Err(Error::Conditioning(format!(
                "known factor F vanishes at pole index {} (F = {f0:.3e})",
                k_idx[n]
            )));
        }
        targets.push(-data.masses[&k_idx[n]] / f0);
        let tail = crate::tail::paired_log_tail(
            |t| pole_model.value(t),
            |t| zero_model.value(t),
            tail_first,
            Complex64::new(a, 0.0),
        )?;
        row_tail.push(tail.re.exp());
    }

    let w0 = pin_point() + shift;
    let q_mean = raw_pole_model.offset - data.bc.poles_bc().cotangent_term();
    let s_root = (pin_point() - q_mean).sqrt();
    let i = Complex64::I;
    let num = data.bc.alpha1.cos() - i * s_root * data.bc.alpha1.sin();
    let den = data.bc.alpha2.cos() - i * s_root * data.bc.alpha2.sin();
    let m_hat = num / ((data.bc.alpha2 - data.bc.alpha1).sin() * den);
    let mut f_at_w0 = Complex64::ONE;
    for j in 1..=n_len {
        if let Some(b) = known_zeros_shifted.get(&j) {
            f_at_w0 *= w0 / b - 1.0;
        }
        if !k_set.contains(&j) {
            f_at_w0 *= 1.0 / (w0 / poles[j - 1] - 1.0);
        }
    }
    let full_tail = crate::tail::paired_log_tail(
        |t| pole_model.value(t),
        |t| zero_model.value(t),
        tail_first,
        w0,
    )?;
    let mut g_pole_at_w0 = Complex64::ONE;
    for n in 0..m_count {
        g_pole_at_w0 *= 1.0 / (w0 / poles[k_idx[n] - 1] - 1.0);
    }
    let asymptote =
        Asymptote { w0, m_hat, f_tail_at_w0: f_at_w0 * full_tail.exp(), g_pole_at_w0 };

    let c_implied = asymptote.implied_constant(sign, &initial_b)?;
    let closure = match pin {
        PinChoice::Normalization => Closure::Identity { initial: c_implied },
        PinChoice::ModelTie { weight } => {
            if unknown_pos.is_empty() {
                Closure::FrozenConstant(c_implied)
            } else {
                if !weight.is_finite() || !(weight > 0.0) {
                    return Err(Error::Parameter(format!(
                        "pin weight must be positive and finite, got {weight}"
                    )));
                }
                Closure::ModelPin { weight, initial: c_implied }
            }
        }
        PinChoice::Anchored => Closure::Anchor { initial: c_implied },
    };

    Ok(System {
        shift,
        poles,
        zero_model,
        sign,
        k_idx,
        l_idx,
        unknown_pos,
        targets,
        row_tail,
        boxes,
        initial_b,
        closure,
        asymptote,
    })
}

/// Targets Res(G, a_{k_n}) = −γ_{k_n}/F(a_{k_n}) for the mass-marked poles,
/// computable from the data alone (the product constant lives in G).
pub fn target_residues(data: &MixedSpectralData) -> Result<Vec<f64>> {
    let maps = match &data.index_maps {
        Some(maps) => maps.clone(),
        None => matching_maps(&validated_index_set(data)?)?,
    };
    let system = assemble(data, &maps, None, PinChoice::Normalization)?;
    Ok(system.targets)
}

fn validated_index_set(data: &MixedSpectralData) -> Result<Vec<usize>> {
    let set = &data.index_set;
    if set.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Parameter(
            "index set must be strictly increasing (sorted, no duplicates)".into(),
        ));
    }
    if let Some(&last) = set.last() {
        if last > data.spectrum.len() {
            return Err(Error::Parameter(format!(
                "index set entry {last} exceeds the spectrum length {}",
                data.spectrum.len()
            )));
        }
    }
    Ok(set.clone())
}

/// One LM pass over a system: final parameters, outcome, and the RMS of the
/// residue rows alone (the closure rows are excluded from acceptance).
struct Attempt {
    x_final: Vec<f64>,
    outcome: Option<crate::lsq::LmOutcome>,
    residuals: Vec<f64>,
    residue_rms: f64,
}

fn run_system(system: &System, options: &CompletionOptions) -> Result<Attempt> {
    let m = system.k_idx.len();
    let mut x0 = Vec::with_capacity(system.unknown_pos.len() + 1);
    for (j, &pos) in system.unknown_pos.iter().enumerate() {
        let (lo, hi) = system.boxes[j];
        x0.push(logit((system.initial_b[pos] - lo) / (hi - lo)));
    }
    match system.closure {
        Closure::FrozenConstant(_) => {}
        Closure::Identity { initial }
        | Closure::ModelPin { initial, .. }
        | Closure::Anchor { initial } => {
            x0.push(initial.max(1e-12).ln());
        }
    }

    let outcome = if x0.is_empty() {
        None
    } else {
        let lm_opts = LmOptions {
            max_iter: options.max_iterations,
            residual_tol: (options.residual_tol * 1e-3).max(1e-14),
            ..LmOptions::default()
        };
        Some(levenberg_marquardt(
            &|params| system.residuals(params),
            Jacobian::FiniteDifference,
            &x0,
            &lm_opts,
        )?)
    };

    let x_final = outcome.as_ref().map(|o| o.x.clone()).unwrap_or_default();
    let residuals = system.residuals(&x_final)?;
    let residue_rms = if m > 0 {
        (residuals[..m].iter().map(|r| r * r).sum::<f64>() / m as f64).sqrt()
    } else {
        0.0
    };
    Ok(Attempt { x_final, outcome, residuals, residue_rms })
}

fn solve(
    data: &MixedSpectralData,
    maps: &CompletionMaps,
    anchor: Option<(usize, f64)>,
    pin: PinChoice,
    options: &CompletionOptions,
) -> Result<CompletionResult> {
    let mut system = assemble(data, maps, anchor, pin)?;
    let n_unknown = system.unknown_pos.len();

    let mut attempt = run_system(&system, options)?;
    if attempt.residue_rms > options.residual_tol {
        if let Closure::Identity { initial } = system.closure {
            system.closure = Closure::FrozenConstant(initial);
            attempt = run_system(&system, options)?;
        }
    }
    let Attempt { x_final, outcome, residuals: final_residuals, residue_rms } = attempt;

    let (b, constant) = system.decode(&x_final);
    let pin_residual = match system.closure {
        Closure::Identity { .. } | Closure::FrozenConstant(_) => {
            system.asymptote.mismatch(system.sign, constant, &b).norm()
        }
        Closure::ModelPin { weight, .. } => {
            final_residuals.last().map(|r| r.abs() / weight).unwrap_or(0.0)
        }
        Closure::Anchor { .. } => 0.0,
    };

    if residue_rms > options.residual_tol {
        return Err(Error::NonConvergence {
            message: format!(
                "residue equations stalled at RMS {residue_rms:.3e} (tolerance {:.1e}); \
                 the data admit no interlacing-compatible completion at this accuracy",
                options.residual_tol
            ),
            trace: outcome.map(|o| o.trace).unwrap_or_default(),
        });
    }

    let variances =
        outcome.as_ref().and_then(|o| covariance_diagonal(&o.jacobian, &o.residual));
    let mut entries = Vec::with_capacity(n_unknown);
    for (j, &pos) in system.unknown_pos.iter().enumerate() {
        let (lo, hi) = system.boxes[j];
        let s = sigmoid(x_final[j]);
        let slope = (hi - lo) * s * (1.0 - s);
        let half_width = variances
            .as_ref()
            .and_then(|v| v.get(j))
            .map(|var| var.max(0.0).sqrt() * slope)
            .unwrap_or(0.0);
        entries.push((system.l_idx[pos], b[pos] - system.shift, half_width));
    }
    entries.sort_by_key(|(idx, _, _)| *idx);
    let recovered: Vec<(usize, f64)> = entries.iter().map(|&(i, v, _)| (i, v)).collect();
    let confidence: Vec<f64> = entries.iter().map(|&(_, _, c)| c).collect();

    for (idx, supplied) in &data.known_zeros {
        if let Some(&(_, solved)) = recovered.iter().find(|(r, _)| r == idx) {
            let scale = 1.0 + supplied.abs();
            if (*supplied - solved).abs() > 1e-3 * scale {
                return Err(Error::Degenerate(format!(
                    "zero index {idx} is over-specified: supplied {supplied} but the residue \
                     equations give {solved}"
                )));
            }
        }
    }

    Ok(CompletionResult {
        recovered_zeros: recovered,
        constant,
        residual_norm: residue_rms,
        pin_residual,
        confidence,
        iterations: outcome.as_ref().map(|o| o.iterations).unwrap_or(0),
        residual_trace: outcome.map(|o| o.trace).unwrap_or_default(),
    })
}

/// Matching-index completion: the hidden zeros share their indices with the
/// mass-marked poles (index set A). A = ∅ echoes the input and only
/// calibrates the constant.
pub fn complete_matching(
    data: &MixedSpectralData,
    options: &CompletionOptions,
) -> Result<CompletionResult> {
    if data.index_maps.is_some() {
        return Err(Error::Parameter(
            "index maps present; use complete_nonmatching for sparse index pairings".into(),
        ));
    }
    if data.anchor.is_some() {
        return Err(Error::Parameter("anchors apply to the non-matching modes only".into()));
    }
    let maps = matching_maps(&validated_index_set(data)?)?;
    let pin = match options.pin_mode {
        PinMode::Normalization => PinChoice::Normalization,
        PinMode::LargestZeroToModel => PinChoice::ModelTie { weight: options.pin_weight },
    };
    solve(data, &maps, None, pin, options)
}

/// Non-matching completion over explicit index maps, in anchored or
/// absolutely-convergent mode. The absolutely-convergent mode refuses to run
/// unless the H3 summability check passes on the maps; general boundary
/// conditions (both α nonzero) additionally require k_n ≠ l_n beyond the
/// declared `equal_through` position.
pub fn complete_nonmatching(
    data: &MixedSpectralData,
    mode: NonMatchingMode,
    options: &CompletionOptions,
) -> Result<CompletionResult> {
    let maps = data
        .index_maps
        .clone()
        .ok_or_else(|| Error::Parameter("non-matching completion requires index maps".into()))?;
    match mode {
        NonMatchingMode::Anchored => {
            let anchor = data.anchor.ok_or_else(|| {
                Error::Parameter("anchored mode requires an anchor zero (position, value)".into())
            })?;
            solve(data, &maps, Some(anchor), PinChoice::Anchored, options)
        }
        NonMatchingMode::AbsolutelyConvergent => {
            let report = hypothesis_gate(data, &maps)?;
            if !report.h3.holds {
                return Err(Error::Hypothesis(
                    format!(
                        "absolute-convergence hypothesis fails on the index maps \
                         (verdict {:?}, decay exponent {:?})",
                        report.h3.verdict, report.h3.decay_exponent
                    ),
                    Some(Box::new(report)),
                ));
            }
            let pin = match options.pin_mode {
                PinMode::Normalization => PinChoice::Normalization,
                PinMode::LargestZeroToModel => PinChoice::ModelTie { weight: options.pin_weight },
            };
            solve(data, &maps, None, pin, options)
        }
    }
}

/// Runs the summability checks for the data's index maps, with unknown zeros
/// replaced by their asymptotic-model values (the verdicts depend on the maps
/// and the asymptotics, not on the hidden unknowns).
pub fn hypothesis_gate(
    data: &MixedSpectralData,
    maps: &CompletionMaps,
) -> Result<cebotarev::HypothesisReport> {
    TripleBoundary::new(data.bc.alpha1, data.bc.alpha2, data.bc.beta)?;
    let n_len = data.spectrum.len();
    let raw_pole_model = TailModel::fit(&data.spectrum, data.bc.poles_bc().index_shift());
    let raw_zero_model = TailModel {
        shift: data.bc.zeros_bc().index_shift(),
        offset: raw_pole_model.offset - data.bc.poles_bc().cotangent_term()
            + data.bc.zeros_bc().cotangent_term(),
    };
    let mut zero_values = Vec::with_capacity(n_len);
    for j in 1..=n_len {
        match data.known_zeros.get(&j) {
            Some(v) => zero_values.push(*v),
            None => zero_values.push(raw_zero_model.value(j as f64)),
        }
    }
    let min_value = data
        .spectrum
        .iter()
        .chain(zero_values.iter())
        .copied()
        .fold(f64::INFINITY, f64::min);
    let shift = if min_value <= 0.0 { 1.0 - min_value } else { 0.0 };
    let seq = IndexedSubsequences::new(
        maps.k.clone(),
        maps.l.clone(),
        SequenceView::new(
            data.spectrum.iter().map(|v| v + shift).collect(),
            TailModel { shift: raw_pole_model.shift, offset: raw_pole_model.offset + shift },
        )?,
        SequenceView::new(
            zero_values.iter().map(|v| v + shift).collect(),
            TailModel { shift: raw_zero_model.shift, offset: raw_zero_model.offset + shift },
        )?,
    )?;
    cebotarev::check_hypotheses(&seq, 200_000)
}

/// Compares recovered zeros against a forward solve of the true potential.
pub fn verify_completion(
    result: &CompletionResult,
    spec: &PotentialSpec,
    bc: &TripleBoundary,
) -> Result<CompletionCheck> {
    if result.recovered_zeros.is_empty() {
        return Ok(CompletionCheck { max_abs_error: 0.0, max_rel_error: 0.0, flagged: false });
    }
    let top = result.recovered_zeros.iter().map(|(idx, _)| *idx).max().unwrap();
    let truth = sturm::eigenvalues(spec, &bc.zeros_bc(), top)?;
    let mut max_abs = 0.0f64;
    let mut max_rel = 0.0f64;
    for (idx, value) in &result.recovered_zeros {
        let t = truth.values[idx - 1];
        let abs = (value - t).abs();
        max_abs = max_abs.max(abs);
        max_rel = max_rel.max(abs / (1.0 + t.abs()));
    }
    Ok(CompletionCheck { max_abs_error: max_abs, max_rel_error: max_rel, flagged: max_abs > 1e-2 })
}

/// Forward-computed reference data for building completion inputs: the full
/// pole spectrum, all zeros, and the measure masses of a potential/boundary
/// pair.
pub fn forward_mixed_data(
    spec: &PotentialSpec,
    bc: &TripleBoundary,
    n_max: usize,
) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let poles = sturm::eigenvalues(spec, &bc.poles_bc(), n_max)?;
    let zeros = sturm::eigenvalues(spec, &bc.zeros_bc(), n_max)?;
    let measure = crate::weyl::triple_spectral_measure(spec, bc, n_max)?;
    let masses = measure.entries.iter().map(|(_, g)| *g).collect();
    Ok((poles.values, zeros.values, masses))
}
