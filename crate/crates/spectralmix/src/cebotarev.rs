//! Partial-fraction (Čebotarev) normal forms for interlacing zero/pole
//! products, residue subsequences over sparse index maps, and numerical
//! checkers for the convergence hypotheses behind the non-matching
//! completion modes.
//!
//! The finite product −C·∏ₙ (z/bₙ − 1)/(z/aₙ − 1) expands exactly into
//! e + Σ rₙ(1/(z−aₙ) + 1/aₙ) with e = −C. For subsequences a_{k_n}, b_{l_n}
//! the residues of the truncated product are
//!
//! A_{k_n,m} = (a_{k_n}/b_{l_n})(a_{k_n} − b_{l_n})·
//!             ∏_{j≤m, j≠n} (a_{k_j}/b_{l_j})(a_{k_n} − b_{l_j})/(a_{k_n} − a_{k_j})
//!
//! and A_{k_n} = lim_m A_{k_n,m}. The hypothesis checkers report numerical
//! evidence (never proof) for the summability conditions those limits feed.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::tail::{em_tail_sum, TailModel};
use crate::{Error, Result};

/// Partial-fraction normal form cz² + dz + e + Σ rₙ(1/(z−pₙ) + 1/pₙ).
///
/// Residues follow the plain convention rₙ = Res(f, pₙ); Herglotz-type
/// functions then carry rₙ < 0 (their spectral masses are −rₙ).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CebotarevForm {
    pub c: f64,
    pub d: f64,
    pub e: f64,
    /// Strictly increasing, strictly positive pole locations.
    pub poles: Vec<f64>,
    /// Residue at each pole, aligned with `poles`.
    pub residues: Vec<f64>,
}

impl CebotarevForm {
    pub fn new(c: f64, d: f64, e: f64, poles: Vec<f64>, residues: Vec<f64>) -> Result<Self> {
        if ![c, d, e].iter().all(|v| v.is_finite()) {
            return Err(Error::Parameter("nonfinite polynomial coefficient".into()));
        }
        if poles.len() != residues.len() {
            return Err(Error::Parameter(format!(
                "{} poles with {} residues",
                poles.len(),
                residues.len()
            )));
        }
        if poles.iter().any(|p| !p.is_finite() || *p <= 0.0) {
            return Err(Error::Parameter("poles must be positive and finite".into()));
        }
        if poles.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Degenerate("poles must be strictly increasing".into()));
        }
        if residues.iter().any(|r| !r.is_finite()) {
            return Err(Error::Parameter("nonfinite residue".into()));
        }
        Ok(CebotarevForm { c, d, e, poles, residues })
    }

    /// Whether the form is of Herglotz type in the stored convention:
    /// no quadratic term, nonnegative linear term, all residues negative.
    pub fn is_herglotz(&self) -> bool {
        self.c == 0.0 && self.d >= 0.0 && self.residues.iter().all(|r| *r < 0.0)
    }
}

/// Exact partial fractions of the finite product −C·∏ (z/bₙ − 1)/(z/aₙ − 1):
/// c = d = 0, e = −C (the value at z = 0), and residues from the
/// product-of-differences formula. Empty sequences give the constant −C.
pub fn finite_product_to_form(zeros: &[f64], poles: &[f64], constant: f64) -> Result<CebotarevForm> {
    if zeros.len() != poles.len() {
        return Err(Error::Parameter(format!(
            "{} zeros with {} poles",
            zeros.len(),
            poles.len()
        )));
    }
    if !(constant > 0.0) || !constant.is_finite() {
        return Err(Error::Parameter(format!("constant C = {constant} must be positive")));
    }
    for seq in [zeros, poles] {
        if seq.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(Error::Parameter("zeros and poles must be positive".into()));
        }
        if seq.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Degenerate("sequences must be strictly increasing".into()));
        }
    }
    for a in poles {
        for b in zeros {
            if (a - b).abs() < 1e-12 * (1.0 + a.abs()) {
                return Err(Error::Degenerate(format!("coincident zero/pole pair near {a}")));
            }
        }
    }
    let mut residues = Vec::with_capacity(poles.len());
    for (k, &ak) in poles.iter().enumerate() {
        let mut r = -constant * ak * (ak / zeros[k] - 1.0);
        for j in 0..poles.len() {
            if j != k {
                r *= (ak / zeros[j] - 1.0) / (ak / poles[j] - 1.0);
            }
        }
        residues.push(r);
    }
    CebotarevForm::new(0.0, 0.0, -constant, poles.to_vec(), residues)
}

/// Evaluates the form at z: cz² + dz + e + Σ rₙ(1/(z−pₙ) + 1/pₙ).
pub fn form_eval(form: &CebotarevForm, z: Complex64) -> Result<Complex64> {
    if !z.re.is_finite() || !z.im.is_finite() {
        return Err(Error::Parameter(format!("nonfinite z = {z}")));
    }
    if z.im == 0.0 {
        for p in &form.poles {
            if (z.re - p).abs() < 1e-9 * (1.0 + z.re.abs()) {
                return Err(Error::PoleProximity(format!(
                    "z = {} is numerically at the pole {p}",
                    z.re
                )));
            }
        }
    }
    let mut value = z * z * form.c + z * form.d + form.e;
    for (p, r) in form.poles.iter().zip(&form.residues) {
        value += *r * (1.0 / (z - p) + 1.0 / p);
    }
    Ok(value)
}

/// Heuristic bound on the pole-sum tail that a truncation of this form would
/// drop, assuming the stored residues continue with the same power law:
/// extrapolates |rₙ|/pₙ² from the final quartile and bounds
/// |Σ_{n>N} rₙ·z/(pₙ(z−pₙ))|. Returns 0 when fewer than 8 poles are stored.
pub fn form_tail_bound(form: &CebotarevForm, z: Complex64) -> f64 {
    let n = form.poles.len();
    if n < 8 {
        return 0.0;
    }
    let start = 3 * n / 4;
    let mut coeff: f64 = 0.0;
    for j in start..n {
        let weight = form.residues[j].abs() / form.poles[j].powi(2);
        coeff = coeff.max(weight * (j + 1) as f64 * (j + 1) as f64);
    }
    let pn = form.poles[n - 1];
    let amplification = if z.im != 0.0 || z.re < 0.5 * pn {
        1.0 / (1.0 - (z.norm() / pn).min(0.5))
    } else {
        2.0
    };
    z.norm() * coeff / n as f64 * amplification
}

/// Rule extending an index map beyond its stored entries.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExtendRule {
    /// kₙ = n.
    Identity,
    /// kₙ = n².
    Squares,
}

impl ExtendRule {
    fn index(self, n: usize) -> usize {
        match self {
            ExtendRule::Identity => n,
            ExtendRule::Squares => n * n,
        }
    }

    fn index_f(self, t: f64) -> f64 {
        match self {
            ExtendRule::Identity => t,
            ExtendRule::Squares => t * t,
        }
    }
}

/// Strictly increasing index map n ↦ kₙ: explicit initial entries plus an
/// optional closed-form extension rule for the indices beyond them.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IndexMap {
    pub initial: Vec<usize>,
    pub extend: Option<ExtendRule>,
}

impl IndexMap {
    pub fn new(initial: Vec<usize>, extend: Option<ExtendRule>) -> Result<Self> {
        if initial.iter().any(|k| *k == 0) {
            return Err(Error::Parameter("index maps are 1-based; 0 is not a valid index".into()));
        }
        if initial.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Parameter("index map entries must be strictly increasing".into()));
        }
        if let (Some(rule), Some(last)) = (extend, initial.last()) {
            if rule.index(initial.len() + 1) <= *last {
                return Err(Error::Parameter(format!(
                    "extension rule continues at {} which does not exceed the last stored index {last}",
                    rule.index(initial.len() + 1)
                )));
            }
        }
        Ok(IndexMap { initial, extend })
    }

    pub fn identity() -> Self {
        IndexMap { initial: Vec::new(), extend: Some(ExtendRule::Identity) }
    }

    pub fn squares() -> Self {
        IndexMap { initial: Vec::new(), extend: Some(ExtendRule::Squares) }
    }

    /// kₙ for 1-based n.
    pub fn index(&self, n: usize) -> Result<usize> {
        if n == 0 {
            return Err(Error::Parameter("subsequence positions are 1-based".into()));
        }
        if n <= self.initial.len() {
            return Ok(self.initial[n - 1]);
        }
        match self.extend {
            Some(rule) => Ok(rule.index(n)),
            None => Err(Error::Parameter(format!(
                "index map holds {} entries and has no extension rule (asked for {n})",
                self.initial.len()
            ))),
        }
    }

    /// Largest usable position given a cap on positions.
    fn available(&self, cap: usize) -> usize {
        if self.extend.is_some() {
            cap
        } else {
            cap.min(self.initial.len())
        }
    }

    /// Continuous extension of the rule, for tail quadrature; only valid
    /// beyond the stored entries.
    fn index_model(&self, t: f64) -> Option<f64> {
        self.extend.map(|rule| rule.index_f(t))
    }
}

/// An underlying value sequence: stored values for indices 1..=len plus an
/// asymptotic model for every index beyond them.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SequenceView {
    pub values: Vec<f64>,
    pub model: TailModel,
}

impl SequenceView {
    pub fn new(values: Vec<f64>, model: TailModel) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parameter("nonfinite sequence value".into()));
        }
        if values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Parameter("sequence values must be strictly increasing".into()));
        }
        Ok(SequenceView { values, model })
    }

    /// Value at the 1-based underlying index, stored or modeled.
    pub fn value(&self, idx: usize) -> f64 {
        if idx >= 1 && idx <= self.values.len() {
            self.values[idx - 1]
        } else {
            self.model.value(idx as f64)
        }
    }
}

/// Subsequence data ({kₙ}, {lₙ}, a-values, b-values) for the sparse residue
/// machinery: two index maps over two underlying sequences.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IndexedSubsequences {
    pub k: IndexMap,
    pub l: IndexMap,
    pub a: SequenceView,
    pub b: SequenceView,
}

impl IndexedSubsequences {
    pub fn new(k: IndexMap, l: IndexMap, a: SequenceView, b: SequenceView) -> Result<Self> {
        let seq = IndexedSubsequences { k, l, a, b };
        let probe = seq.available(32).min(8);
        let mut last_a = f64::NEG_INFINITY;
        let mut last_b = f64::NEG_INFINITY;
        for n in 1..=probe {
            let a = seq.a_at(n)?;
            let b = seq.b_at(n)?;
            if a <= last_a || b <= last_b {
                return Err(Error::Parameter(
                    "subsequence values must be strictly increasing".into(),
                ));
            }
            last_a = a;
            last_b = b;
        }
        Ok(seq)
    }

    /// a_{kₙ} for 1-based n.
    pub fn a_at(&self, n: usize) -> Result<f64> {
        Ok(self.a.value(self.k.index(n)?))
    }

    /// b_{lₙ} for 1-based n.
    pub fn b_at(&self, n: usize) -> Result<f64> {
        Ok(self.b.value(self.l.index(n)?))
    }

    /// Largest position usable by both maps under a cap.
    pub fn available(&self, cap: usize) -> usize {
        self.k.available(cap).min(self.l.available(cap))
    }

    /// Whether both maps extend indefinitely (enabling model tails).
    fn extends(&self) -> bool {
        self.k.extend.is_some() && self.l.extend.is_some()
    }

    /// Model values of a_{k_t}, b_{l_t} for continuous t beyond the data.
    fn model_pair(&self, t: f64) -> Option<(f64, f64)> {
        let ka = self.k.index_model(t)?;
        let lb = self.l.index_model(t)?;
        Some((self.a.model.value(ka), self.b.model.value(lb)))
    }
}

/// Exact truncated residues {A_{k_n,m}} for n = 1..=m.
pub fn residues_partial(seq: &IndexedSubsequences, m: usize) -> Result<Vec<f64>> {
    if m == 0 {
        return Ok(Vec::new());
    }
    if seq.available(m) < m {
        return Err(Error::Parameter(format!(
            "sequences provide {} positions, m = {m} requested",
            seq.available(m)
        )));
    }
    let a: Vec<f64> = (1..=m).map(|n| seq.a_at(n)).collect::<Result<_>>()?;
    let b: Vec<f64> = (1..=m).map(|n| seq.b_at(n)).collect::<Result<_>>()?;
    let mut out = Vec::with_capacity(m);
    for n in 0..m {
        let an = a[n];
        for j in 0..m {
            if (an - b[j]).abs() < 1e-12 * (1.0 + an.abs()) {
                return Err(Error::Degenerate(format!(
                    "a_{{k_{}}} = {an} coincides with b_{{l_{}}} = {}",
                    n + 1,
                    j + 1,
                    b[j]
                )));
            }
        }
        if b[n] == 0.0 {
            return Err(Error::Degenerate("zero value in the b subsequence".into()));
        }
        let mut value = an / b[n] * (an - b[n]);
        for j in 0..m {
            if j != n {
                value *= a[j] / b[j] * (an - b[j]) / (an - a[j]);
            }
        }
        out.push(value);
    }
    Ok(out)
}

/// Convergence study of the residue triangle: partial products at
/// geometrically spaced checkpoints and model-tail extrapolated limits.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ResidueLimitReport {
    /// Truncation levels m at which partials were recorded.
    pub checkpoints: Vec<usize>,
    /// Row n = 1.. of A_{k_n,m} values, one per checkpoint (rows only carry
    /// checkpoints with m ≥ n).
    pub partials: Vec<Vec<f64>>,
    /// Extrapolated limits A_{k_n} (tail factor from the asymptotic models
    /// when both maps extend; otherwise the final partial).
    pub limits: Vec<f64>,
    /// |A(m_last) − A(m_prev)| per row over the final checkpoint step.
    pub final_increments: Vec<f64>,
    /// True when some row's increments grow instead of settling.
    pub divergent: bool,
}

/// Geometric checkpoint ladder ending at `max`.
fn checkpoint_ladder(max: usize) -> Vec<usize> {
    let mut pts = vec![max];
    let mut m = max;
    while m > 4 {
        m /= 2;
        pts.push(m);
    }
    pts.reverse();
    pts.dedup();
    pts
}

/// Multiplicative remainder ∏_{j>m} (a_{k_j}/b_{l_j})(aₙ − b_{l_j})/(aₙ − a_{k_j})
/// summed in logs under the asymptotic models.
fn row_tail_factor(seq: &IndexedSubsequences, an: f64, m: usize) -> f64 {
    let f = |t: f64| -> Complex64 {
        match seq.model_pair(t) {
            Some((a, b)) => {
                let ratio = (a / b) * (an - b) / (an - a);
                if ratio > 0.0 {
                    Complex64::new(ratio.ln(), 0.0)
                } else {
                    Complex64::ZERO
                }
            }
            None => Complex64::ZERO,
        }
    };
    if seq.extends() {
        em_tail_sum(f, (m + 1) as f64).re.exp()
    } else {
        1.0
    }
}

/// Runs the residue triangle A_{k_n,m} for the first `min(64, N)` rows with
/// m up to N, recording checkpoints, Cauchy increments, and extrapolated
/// limits. Non-Cauchy rows set the `divergent` flag rather than erroring.
pub fn residues_limit(seq: &IndexedSubsequences, n_cap: usize) -> Result<ResidueLimitReport> {
    let m_max = seq.available(n_cap);
    if m_max == 0 {
        return Ok(ResidueLimitReport {
            checkpoints: Vec::new(),
            partials: Vec::new(),
            limits: Vec::new(),
            final_increments: Vec::new(),
            divergent: false,
        });
    }
    let rows = m_max.min(64);
    let a: Vec<f64> = (1..=m_max).map(|n| seq.a_at(n)).collect::<Result<_>>()?;
    let b: Vec<f64> = (1..=m_max).map(|n| seq.b_at(n)).collect::<Result<_>>()?;
    let checkpoints = checkpoint_ladder(m_max);
    let mut current: Vec<f64> = Vec::with_capacity(rows);
    let mut partials: Vec<Vec<f64>> = vec![Vec::new(); rows];
    for m in 1..=m_max {
        let am = a[m - 1];
        let bm = b[m - 1];
        for (n, value) in current.iter_mut().enumerate() {
            let an = a[n];
            let denom = an - am;
            if denom.abs() < 1e-12 * (1.0 + an.abs()) {
                return Err(Error::Degenerate(format!(
                    "coincident subsequence values a_{{k_{}}} and a_{{k_{m}}}",
                    n + 1
                )));
            }
            *value *= am / bm * (an - bm) / denom;
        }
        if m <= rows {
            let an = a[m - 1];
            if (an - bm).abs() < 1e-12 * (1.0 + an.abs()) {
                return Err(Error::Degenerate(format!(
                    "a_{{k_{m}}} = {an} coincides with b_{{l_{m}}} = {bm}"
                )));
            }
            let mut value = an / bm * (an - bm);
            for j in 0..m - 1 {
                value *= a[j] / b[j] * (an - b[j]) / (an - a[j]);
            }
            current.push(value);
        }
        if checkpoints.contains(&m) {
            for (n, value) in current.iter().enumerate() {
                partials[n].push(*value);
            }
        }
    }
    let mut limits = Vec::with_capacity(rows);
    let mut final_increments = Vec::with_capacity(rows);
    let mut divergent = false;
    for (n, row) in partials.iter().enumerate() {
        let last = *current.get(n).unwrap_or(&f64::NAN);
        limits.push(last * row_tail_factor(seq, a[n], m_max));
        let len = row.len();
        if len >= 3 {
            let d_last = (row[len - 1] - row[len - 2]).abs();
            let d_prev = (row[len - 2] - row[len - 3]).abs();
            final_increments.push(d_last);
            let scale = 1e-8 * last.abs().max(1.0);
            if d_last > scale && d_last >= d_prev {
                divergent = true;
            }
        } else {
            final_increments.push(0.0);
        }
    }
    Ok(ResidueLimitReport { checkpoints, partials, limits, final_increments, divergent })
}

/// Numerical verdict on a summability hypothesis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Convergent,
    Divergent,
    Inconclusive,
}

/// Partial-sum trace and verdict for one hypothesis. Verdicts are numerical
/// evidence, never proofs: Convergent when the partial sums go Cauchy below
/// 1e−8 over the last decade of indices or the per-term decay exponent
/// exceeds 1.1; Divergent when the exponent drops below 0.95 while the sums
/// still grow; Inconclusive otherwise.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HypothesisTrace {
    pub checkpoints: Vec<usize>,
    pub partial_sums: Vec<f64>,
    pub last_increment: f64,
    pub decay_exponent: Option<f64>,
    pub verdict: Verdict,
    pub holds: bool,
}

/// Verdicts for the three summability hypotheses of the non-matching
/// completion lemmas.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HypothesisReport {
    /// lim_m Σ_{n≤m} |A_{k_n,m} − A_{k_n}|/a_{k_n}² finite.
    pub h1: HypothesisTrace,
    /// {A_{k_n}/a_{k_n}²} ∈ l¹.
    pub h2: HypothesisTrace,
    /// Σ |a_{k_n}/b_{l_n} − 1| < ∞ (absolute convergence of the ratio
    /// product; implies the other two).
    pub h3: HypothesisTrace,
    pub n_used: usize,
}

/// Least-squares slope of ln(term) against ln(n) over the final two decades,
/// reported as the decay exponent p in term ~ n^{−p}.
fn decay_exponent(terms: &[(usize, f64)]) -> Option<f64> {
    let filtered: Vec<(f64, f64)> = terms
        .iter()
        .filter(|(_, t)| *t > 0.0 && t.is_finite())
        .map(|(n, t)| ((*n as f64).ln(), t.ln()))
        .collect();
    if filtered.len() < 4 {
        return None;
    }
    let n = filtered.len() as f64;
    let sx: f64 = filtered.iter().map(|(x, _)| x).sum();
    let sy: f64 = filtered.iter().map(|(_, y)| y).sum();
    let sxx: f64 = filtered.iter().map(|(x, _)| x * x).sum();
    let sxy: f64 = filtered.iter().map(|(x, y)| x * y).sum();
    let denom = n * sxx - sx * sx;
    if denom.abs() < 1e-12 {
        return None;
    }
    Some(-(n * sxy - sx * sy) / denom)
}

fn empty_trace() -> HypothesisTrace {
    HypothesisTrace {
        checkpoints: Vec::new(),
        partial_sums: Vec::new(),
        last_increment: 0.0,
        decay_exponent: None,
        verdict: Verdict::Convergent,
        holds: true,
    }
}

/// Verdict machinery over precomputed checkpoint sums and per-term samples.
fn assemble_trace(
    checkpoints: Vec<usize>,
    partial_sums: Vec<f64>,
    samples: &[(usize, f64)],
) -> HypothesisTrace {
    let len = partial_sums.len();
    if len == 0 {
        return empty_trace();
    }
    let max = *checkpoints.last().unwrap();
    let decade_idx = checkpoints
        .iter()
        .position(|&m| m * 10 >= max)
        .unwrap_or(0)
        .min(len - 1);
    let decade_growth = partial_sums[len - 1] - partial_sums[decade_idx];
    let last_increment = if len >= 2 {
        partial_sums[len - 1] - partial_sums[len - 2]
    } else {
        partial_sums[len - 1]
    };
    let exponent = decay_exponent(samples);
    let scale = partial_sums[len - 1].abs().max(1.0);
    let verdict = if decade_growth.abs() < 1e-8 * scale {
        Verdict::Convergent
    } else {
        match exponent {
            Some(p) if p >= 1.1 => Verdict::Convergent,
            Some(p) if p <= 0.95 && decade_growth > 1e-6 * scale => Verdict::Divergent,
            _ => Verdict::Inconclusive,
        }
    };
    HypothesisTrace {
        checkpoints,
        partial_sums,
        last_increment,
        decay_exponent: exponent,
        verdict,
        holds: verdict == Verdict::Convergent,
    }
}

/// Assembles a trace from per-term magnitudes evaluated at 1..=max.
fn trace_from_terms(term: impl Fn(usize) -> f64, max: usize) -> HypothesisTrace {
    if max == 0 {
        return empty_trace();
    }
    let checkpoints = checkpoint_ladder(max);
    let mut partial_sums = Vec::with_capacity(checkpoints.len());
    let mut sum = 0.0;
    let mut samples: Vec<(usize, f64)> = Vec::new();
    let sample_floor = (max / 100).max(1);
    let sample_stride = (max / 64).max(1);
    for n in 1..=max {
        let t = term(n);
        sum += t;
        if n >= sample_floor && n % sample_stride == 0 {
            samples.push((n, t));
        }
        if checkpoints.contains(&n) {
            partial_sums.push(sum);
        }
    }
    assemble_trace(checkpoints, partial_sums, &samples)
}

/// Checks the three summability hypotheses numerically with positions up to
/// N: (H1) the residue-difference sum, (H2) l¹ of A_{k_n}/a_{k_n}², and
/// (H3) absolute convergence of Σ |a_{k_n}/b_{l_n} − 1|. H3 runs over all N
/// positions; H1 and H2 run the quadratic residue triangle and are capped at
/// min(N, 3000) positions. Empty subsequences return Convergent throughout.
pub fn check_hypotheses(seq: &IndexedSubsequences, n_cap: usize) -> Result<HypothesisReport> {
    if n_cap < 10 {
        return Err(Error::Parameter(format!("cap N = {n_cap} below the minimum of 10")));
    }
    let n3 = seq.available(n_cap);
    let h3 = if n3 == 0 {
        trace_from_terms(|_| 0.0, 0)
    } else {
        let ratio_term = |n: usize| -> f64 {
            match (seq.a_at(n), seq.b_at(n)) {
                (Ok(a), Ok(b)) if b != 0.0 => (a / b - 1.0).abs(),
                _ => f64::NAN,
            }
        };
        trace_from_terms(ratio_term, n3)
    };

    let m_cap = seq.available(n_cap.min(3000));
    if m_cap == 0 {
        let empty = trace_from_terms(|_| 0.0, 0);
        return Ok(HypothesisReport { h1: empty.clone(), h2: empty, h3, n_used: n3 });
    }
    let a: Vec<f64> = (1..=m_cap).map(|n| seq.a_at(n)).collect::<Result<_>>()?;
    let b: Vec<f64> = (1..=m_cap).map(|n| seq.b_at(n)).collect::<Result<_>>()?;
    let half = (m_cap / 2).max(1);
    let h1_checkpoints = checkpoint_ladder(half);
    let mut snapshots: Vec<Vec<f64>> = Vec::with_capacity(h1_checkpoints.len());
    let mut current: Vec<f64> = Vec::with_capacity(m_cap);
    for m in 1..=m_cap {
        let am = a[m - 1];
        let bm = b[m - 1];
        for (n, value) in current.iter_mut().enumerate() {
            let an = a[n];
            let denom = an - am;
            if denom.abs() < 1e-12 * (1.0 + an.abs()) {
                return Err(Error::Degenerate(format!(
                    "coincident subsequence values a_{{k_{}}} and a_{{k_{m}}}",
                    n + 1
                )));
            }
            *value *= am / bm * (an - bm) / denom;
        }
        let an = a[m - 1];
        if (an - bm).abs() < 1e-12 * (1.0 + an.abs()) {
            return Err(Error::Degenerate(format!(
                "a_{{k_{m}}} = {an} coincides with b_{{l_{m}}} = {bm}"
            )));
        }
        let mut value = an / bm * (an - bm);
        for j in 0..m - 1 {
            value *= a[j] / b[j] * (an - b[j]) / (an - a[j]);
        }
        current.push(value);
        if h1_checkpoints.contains(&m) {
            snapshots.push(current.clone());
        }
    }
    let limits: Vec<f64> = current
        .iter()
        .enumerate()
        .map(|(n, v)| v * row_tail_factor(seq, a[n], m_cap))
        .collect();
    let h1_term = |snap: &[f64], n: usize| (snap[n - 1] - limits[n - 1]).abs() / a[n - 1].powi(2);
    let h1_sums: Vec<f64> = snapshots
        .iter()
        .map(|snap| (1..=snap.len()).map(|n| h1_term(snap, n)).sum())
        .collect();
    let mut h1_samples: Vec<(usize, f64)> = Vec::new();
    if let Some(last_snap) = snapshots.last() {
        let floor = (half / 100).max(1);
        let stride = (half / 64).max(1);
        for n in (floor..=last_snap.len()).step_by(stride) {
            h1_samples.push((n, h1_term(last_snap, n)));
        }
    }
    let h1 = assemble_trace(h1_checkpoints, h1_sums, &h1_samples);
    let h2 = trace_from_terms(|n| limits[n - 1].abs() / a[n - 1].powi(2), m_cap);
    Ok(HypothesisReport { h1, h2, h3, n_used: n3 })
}

/// Which sequence sits below the other in the strict alternation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum InterlacingOrder {
    /// s2₁ < s1₁ < s2₂ < s1₂ < … (zeros-below-poles layout).
    SecondBelowFirst,
    /// s1₁ < s2₁ < s1₂ < s2₂ < … (poles-below-zeros layout).
    FirstBelowSecond,
}

/// True iff the two increasing sequences strictly alternate in the given
/// order over their common range.
pub fn interlacing_check(seq1: &[f64], seq2: &[f64], order: InterlacingOrder) -> bool {
    if seq1.is_empty() || seq2.is_empty() {
        return false;
    }
    let (lower, upper) = match order {
        InterlacingOrder::SecondBelowFirst => (seq2, seq1),
        InterlacingOrder::FirstBelowSecond => (seq1, seq2),
    };
    for seq in [seq1, seq2] {
        if seq.windows(2).any(|w| w[0] >= w[1]) {
            return false;
        }
    }
    for n in 0..lower.len().min(upper.len()) {
        if !(lower[n] < upper[n]) {
            return false;
        }
        if let Some(next) = lower.get(n + 1) {
            if !(upper[n] < *next) {
                return false;
            }
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::PotentialSpec;
    use crate::weyl::{self, ProductForm, TripleBoundary};
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn free_dd_nd_sequences(len: usize) -> IndexedSubsequences {
        let a: Vec<f64> = (1..=len).map(|n| (n * n) as f64).collect();
        let b: Vec<f64> = (1..=len).map(|n| (n as f64 - 0.5).powi(2)).collect();
        IndexedSubsequences::new(
            IndexMap::identity(),
            IndexMap::identity(),
            SequenceView::new(a, TailModel { shift: 0.0, offset: 0.0 }).unwrap(),
            SequenceView::new(b, TailModel { shift: -0.5, offset: 0.0 }).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn single_pair_expands_to_the_known_partial_fraction() {
        let form = finite_product_to_form(&[0.25], &[1.0], 1.0).unwrap();
        assert_abs_diff_eq!(form.e, -1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(form.residues[0], -3.0, epsilon = 1e-15);
        let at_zero = form_eval(&form, Complex64::ZERO).unwrap();
        assert_abs_diff_eq!(at_zero.re, -1.0, epsilon = 1e-15);
        let at_five = form_eval(&form, Complex64::new(5.0, 0.0)).unwrap();
        assert_abs_diff_eq!(at_five.re, -(4.0 * 5.0 - 1.0) / (5.0 - 1.0), epsilon = 1e-13);
    }

    #[test]
    fn empty_product_reduces_to_the_constant() {
        let form = finite_product_to_form(&[], &[], 2.5).unwrap();
        assert_eq!(form.poles.len(), 0);
        assert_abs_diff_eq!(form.e, -2.5, epsilon = 1e-15);
        let v = form_eval(&form, Complex64::new(3.0, 1.0)).unwrap();
        assert_abs_diff_eq!(v.re, -2.5, epsilon = 1e-15);
        assert_abs_diff_eq!(v.im, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn random_interlacing_forms_match_the_product_on_a_grid() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..100 {
            let mut zeros = Vec::new();
            let mut poles = Vec::new();
            let mut x = 0.2;
            for _ in 0..4 {
                x += rng.random_range(0.1..1.0);
                zeros.push(x);
                x += rng.random_range(0.1..1.0);
                poles.push(x);
            }
            let c = rng.random_range(0.5..2.0);
            let form = finite_product_to_form(&zeros, &poles, c).unwrap();
            for i in 0..10 {
                let z = Complex64::new(-3.0 + i as f64 * 0.83, 0.7);
                let mut product = Complex64::new(-c, 0.0);
                for (bz, az) in zeros.iter().zip(&poles) {
                    product *= (z / bz - 1.0) / (z / az - 1.0);
                }
                let form_value = form_eval(&form, z).unwrap();
                assert!(
                    (product - form_value).norm() <= 1e-10 * (1.0 + product.norm()),
                    "form {form_value} vs product {product} at {z}"
                );
            }
        }
    }

    #[test]
    fn degenerate_inputs_are_rejected() {
        assert!(finite_product_to_form(&[0.25, 0.25], &[1.0, 2.0], 1.0).is_err());
        assert!(finite_product_to_form(&[0.25, 1.0], &[1.0, 2.0], 1.0).is_err());
        assert!(finite_product_to_form(&[0.25], &[1.0, 2.0], 1.0).is_err());
        assert!(finite_product_to_form(&[0.25], &[1.0], -1.0).is_err());
    }

    #[test]
    fn form_matches_a_bare_truncated_product_representation() {
        let spec = PotentialSpec::zero();
        let bc = TripleBoundary::from_pair(0.0, 0.0).unwrap();
        let rep = weyl::product_representation(&spec, &bc, 8, ProductForm::Plain).unwrap();
        let form = finite_product_to_form(&rep.zeros[..4], &rep.poles[..4], rep.constant).unwrap();
        let z = Complex64::new(-2.0, 0.0);
        let bare = weyl::m_product(&rep, z, 4).unwrap();
        let via_form = form_eval(&form, z).unwrap();
        assert!((bare - via_form).norm() <= 1e-10 * (1.0 + bare.norm()));
    }

    #[test]
    fn partial_residues_match_hand_computed_values() {
        let single = IndexedSubsequences::new(
            IndexMap::identity(),
            IndexMap::identity(),
            SequenceView::new(vec![1.0], TailModel { shift: 0.0, offset: 0.0 }).unwrap(),
            SequenceView::new(vec![0.25], TailModel { shift: -0.5, offset: 0.0 }).unwrap(),
        )
        .unwrap();
        let a = residues_partial(&single, 1).unwrap();
        assert_abs_diff_eq!(a[0], 3.0, epsilon = 1e-14);

        let seq = free_dd_nd_sequences(2);
        let a = residues_partial(&seq, 2).unwrap();
        let expected = 3.0 * (4.0 / 2.25) * ((1.0 - 2.25) / (1.0 - 4.0));
        assert_abs_diff_eq!(a[0], expected, epsilon = 1e-12);
        assert_relative_eq!(a[0], 2.0 + 2.0 / 9.0, max_relative = 1e-12);
    }

    #[test]
    fn partial_residues_equal_finite_product_residues() {
        let seq = free_dd_nd_sequences(5);
        let m = 5;
        let a_vals: Vec<f64> = (1..=m).map(|n| seq.a_at(n).unwrap()).collect();
        let b_vals: Vec<f64> = (1..=m).map(|n| seq.b_at(n).unwrap()).collect();
        let computed = residues_partial(&seq, m).unwrap();
        for n in 0..m {
            let an = a_vals[n];
            let mut oracle = an / b_vals[n] * (an - b_vals[n]);
            let mut num = 1.0;
            let mut den = 1.0;
            let mut scale = 1.0;
            for j in 0..m {
                if j != n {
                    num *= an - b_vals[j];
                    den *= an - a_vals[j];
                    scale *= a_vals[j] / b_vals[j];
                }
            }
            oracle *= scale * num / den;
            assert_relative_eq!(computed[n], oracle, max_relative = 1e-12);
        }
    }

    #[test]
    fn identity_map_limits_recover_the_scaled_product_residue() {
        let seq = free_dd_nd_sequences(600);
        let report = residues_limit(&seq, 500).unwrap();
        assert_relative_eq!(report.limits[0], 2.0, max_relative = 1e-3);
        assert!(!report.divergent);

        let spec = PotentialSpec::zero();
        let bc = TripleBoundary::from_pair(0.0, 0.0).unwrap();
        let rep = weyl::calibrated_product(&spec, &bc, 400, ProductForm::Plain).unwrap();
        let res_m = weyl::residue_product(&rep, 1).unwrap();
        assert_relative_eq!(report.limits[0], res_m / -rep.constant, max_relative = 1e-3);
    }

    #[test]
    fn single_pair_rows_are_constant_in_m() {
        let seq = IndexedSubsequences::new(
            IndexMap::new(vec![1], None).unwrap(),
            IndexMap::new(vec![1], None).unwrap(),
            SequenceView::new(vec![1.0], TailModel { shift: 0.0, offset: 0.0 }).unwrap(),
            SequenceView::new(vec![0.25], TailModel { shift: -0.5, offset: 0.0 }).unwrap(),
        )
        .unwrap();
        let report = residues_limit(&seq, 400).unwrap();
        assert_eq!(report.partials.len(), 1);
        for v in &report.partials[0] {
            assert_abs_diff_eq!(*v, 3.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn sparse_even_maps_have_decaying_increments() {
        let a: Vec<f64> = (1..=800).map(|j| (j * j) as f64).collect();
        let b: Vec<f64> = (1..=800).map(|j| (j as f64 - 0.5).powi(2)).collect();
        let double = |n: usize| 2 * n;
        let k: Vec<usize> = (1..=400).map(double).collect();
        let seq = IndexedSubsequences::new(
            IndexMap::new(k.clone(), None).unwrap(),
            IndexMap::new(k, None).unwrap(),
            SequenceView::new(a, TailModel { shift: 0.0, offset: 0.0 }).unwrap(),
            SequenceView::new(b, TailModel { shift: -0.5, offset: 0.0 }).unwrap(),
        )
        .unwrap();
        let report = residues_limit(&seq, 400).unwrap();
        let row = &report.partials[0];
        let start = report.checkpoints.iter().position(|&m| m >= 50).unwrap();
        let mut prev = f64::INFINITY;
        for c in start..row.len() - 1 {
            let d = (row[c + 1] - row[c]).abs();
            assert!(d <= prev, "increment {d} grew past {prev}");
            prev = d;
        }
        assert!(!report.divergent);
    }

    #[test]
    fn identity_maps_fail_the_ratio_hypothesis() {
        let seq = free_dd_nd_sequences(64);
        let report = check_hypotheses(&seq, 50_000).unwrap();
        assert!(!report.h3.holds, "H3 verdict {:?} should not hold", report.h3.verdict);
        assert_ne!(report.h3.verdict, Verdict::Convergent);
        let p = report.h3.decay_exponent.unwrap();
        assert!((p - 1.0).abs() < 0.1, "harmonic exponent estimate {p}");
    }

    #[test]
    fn square_maps_satisfy_all_three_hypotheses() {
        let seq = IndexedSubsequences::new(
            IndexMap::squares(),
            IndexMap::squares(),
            SequenceView::new(Vec::new(), TailModel { shift: 0.0, offset: 0.0 }).unwrap(),
            SequenceView::new(Vec::new(), TailModel { shift: -0.5, offset: 0.0 }).unwrap(),
        )
        .unwrap();
        let report = check_hypotheses(&seq, 200_000).unwrap();
        assert!(report.h3.holds, "H3 verdict {:?}", report.h3.verdict);
        assert!(report.h1.holds, "H1 verdict {:?}", report.h1.verdict);
        assert!(report.h2.holds, "H2 verdict {:?}", report.h2.verdict);
        assert!(report.h3.decay_exponent.unwrap() > 1.5);
    }

    #[test]
    fn empty_subsequences_are_trivially_convergent() {
        let seq = IndexedSubsequences::new(
            IndexMap::new(Vec::new(), None).unwrap(),
            IndexMap::new(Vec::new(), None).unwrap(),
            SequenceView::new(Vec::new(), TailModel { shift: 0.0, offset: 0.0 }).unwrap(),
            SequenceView::new(Vec::new(), TailModel { shift: -0.5, offset: 0.0 }).unwrap(),
        )
        .unwrap();
        let report = check_hypotheses(&seq, 1000).unwrap();
        assert!(report.h1.holds && report.h2.holds && report.h3.holds);
        assert_eq!(report.n_used, 0);
    }

    #[test]
    fn interlacing_check_handles_the_documented_cases() {
        let dd = [1.0, 4.0, 9.0];
        let nd = [0.25, 2.25, 6.25];
        assert!(interlacing_check(&dd, &nd, InterlacingOrder::SecondBelowFirst));
        assert!(!interlacing_check(&dd, &nd, InterlacingOrder::FirstBelowSecond));
        assert!(!interlacing_check(&[1.0, 4.0], &[5.0, 6.0], InterlacingOrder::SecondBelowFirst));
        assert!(!interlacing_check(&[1.0, 4.0], &[5.0, 6.0], InterlacingOrder::FirstBelowSecond));
        assert!(!interlacing_check(&dd, &dd, InterlacingOrder::SecondBelowFirst));
    }

    #[test]
    fn tail_bound_shrinks_with_more_stored_poles() {
        let spec = PotentialSpec::zero();
        let bc = TripleBoundary::from_pair(0.0, 0.0).unwrap();
        let rep = weyl::product_representation(&spec, &bc, 200, ProductForm::Plain).unwrap();
        let short = finite_product_to_form(&rep.zeros[..50], &rep.poles[..50], 1.0).unwrap();
        let long = finite_product_to_form(&rep.zeros, &rep.poles, 1.0).unwrap();
        let z = Complex64::new(5.0, 1.0);
        let b_short = form_tail_bound(&short, z);
        let b_long = form_tail_bound(&long, z);
        assert!(b_short > 0.0);
        assert!(b_long < b_short, "bound did not shrink: {b_long} vs {b_short}");
    }

    #[test]
    fn hypothesis_report_serializes_round_trip() {
        let seq = free_dd_nd_sequences(32);
        let report = check_hypotheses(&seq, 100).unwrap();
        let json = serde_json::to_string(&report).unwrap();
        let back: HypothesisReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back.h3.checkpoints, report.h3.checkpoints);
        assert_eq!(back.h3.verdict, report.h3.verdict);
    }

    #[test]
    fn index_map_validation_rejects_inconsistent_extensions() {
        assert!(IndexMap::new(vec![2, 5, 9], Some(ExtendRule::Identity)).is_err());
        assert!(IndexMap::new(vec![1, 4], Some(ExtendRule::Squares)).is_ok());
        assert!(IndexMap::new(vec![3, 3], None).is_err());
        assert!(IndexMap::new(vec![0], None).is_err());
        let map = IndexMap::new(vec![2, 7], None).unwrap();
        assert_eq!(map.index(2).unwrap(), 7);
        assert!(map.index(3).is_err());
    }
}
