//! Forward and inverse spectral computations for one-dimensional Schrödinger
//! operators −u″ + qu = zu on (0,π) with separated boundary conditions
//! u(0)cos α − u′(0)sin α = 0 and u(π)cos β + u′(π)sin β = 0.
//!
//! The crate computes the forward data of such operators — eigenvalues,
//! norming constants, spectral measures, Weyl–Titchmarsh m-functions — by
//! independent routes (shooting with a Prüfer transform, Herglotz sums over
//! the spectral measure, interlacing zero/pole products), and runs the
//! corresponding inverse engines: completing missing eigenvalues of a second
//! spectrum from one spectrum plus point masses of the spectral measure, and
//! fitting a potential to two spectra.
//!
//! Modules mirror the pipeline:
//!
//! * [`potential`] — parameterized potential families q ∈ L¹(0,π).
//! * [`sturm`] — eigenvalues, norming constants, spectral measures,
//!   eigenvalue asymptotics.
//! * [`weyl`] — m-functions three ways (ODE definition, Herglotz sum,
//!   infinite product with tail correction).
//! * [`cebotarev`] — partial-fraction normal forms, residue sequences,
//!   convergence-hypothesis checkers.
//! * [`completion`] — recovery of missing second-spectrum eigenvalues from
//!   mixed spectral data (matching and non-matching index sets).
//! * [`reconstruct`] — two-spectra potential fitting and eigenvalue
//!   sensitivities.

pub mod cebotarev;
pub mod completion;
pub mod potential;
pub mod reconstruct;
pub mod sturm;
pub mod tail;
pub mod weyl;

mod lsq;
mod ode;
mod quad;
mod roots;

pub use cebotarev::{
    CebotarevForm, ExtendRule, HypothesisReport, HypothesisTrace, IndexMap, IndexedSubsequences,
    InterlacingOrder, ResidueLimitReport, SequenceView, Verdict,
};
pub use completion::{
    CompletionCheck, CompletionMaps, CompletionOptions, CompletionResult, MixedSpectralData,
    NonMatchingMode, PinMode,
};
pub use potential::PotentialSpec;
pub use reconstruct::{
    PotentialFamily, ReconstructOptions, ReconstructionFit, ReconstructionProblem, Sensitivity,
};
pub use sturm::{BoundaryConditions, SpectralMeasure, Spectrum};
pub use tail::TailModel;
pub use weyl::{ProductForm, ProductRepresentation, RealLineScan, TripleBoundary};

/// Errors produced by the solvers and data validators.
///
/// The variants are grouped by how a caller should react: `Parameter`,
/// `Domain`, and `Degenerate` mean the input itself is unusable;
/// `PoleProximity`, `Conditioning`, and `Solver` mean a computation could not
/// be carried out safely; `Hypothesis` is a refusal because a theorem
/// hypothesis failed its numerical check; `NonConvergence` means an iteration
/// ended above its residual tolerance.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An argument lies outside the documented domain (e.g. x ∉ [0,π]).
    #[error("domain error: {0}")]
    Domain(String),
    /// A structurally invalid parameter (wrong count, non-increasing
    /// sequence, non-positive tolerance, …).
    #[error("invalid parameter: {0}")]
    Parameter(String),
    /// Coincident values where distinct ones are required.
    #[error("degenerate input: {0}")]
    Degenerate(String),
    /// A quantity that must stay away from zero fell below its safeguard.
    #[error("ill-conditioned: {0}")]
    Conditioning(String),
    /// An evaluation point is too close to a pole of the function.
    #[error("pole proximity: {0}")]
    PoleProximity(String),
    /// Internal solver failure (bracketing, step-size underflow, …).
    #[error("solver failure: {0}")]
    Solver(String),
    /// A theorem hypothesis failed its numerical verification. Carries the
    /// summability report when one was computed.
    #[error("hypothesis refusal: {0}")]
    Hypothesis(String, Option<Box<cebotarev::HypothesisReport>>),
    /// An iterative solve finished above its residual tolerance.
    #[error("no convergence: {message}")]
    NonConvergence {
        message: String,
        /// Residual norm after each accepted iteration.
        trace: Vec<f64>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

/// Reads `SPECTRALMIX_THREADS` and, when set to a positive integer, caps the
/// global rayon thread pool at that many threads.
///
/// Returns the applied cap, or `None` when the variable is unset or invalid.
/// Safe to call more than once; later calls cannot shrink an existing pool
/// and simply return the parsed value.
pub fn configure_threads_from_env() -> Option<usize> {
    let raw = std::env::var("SPECTRALMIX_THREADS").ok()?;
    let n: usize = raw.trim().parse().ok()?;
    if n == 0 {
        return None;
    }
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Some(n)
}
