//! JSON input schemas for the subcommands.
//!
//! Inputs are strict: unknown keys are rejected so that typos surface as
//! configuration errors instead of silently ignored settings. Boundary
//! angles accept either a number in [0, π) or the shorthands "D" (Dirichlet,
//! α = 0) and "N" (Neumann, α = π/2).

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_2;

use serde::Deserialize;
use spectralmix::cebotarev::{ExtendRule, IndexMap};
use spectralmix::reconstruct::PotentialFamily;
use spectralmix::{
    BoundaryConditions, CompletionMaps, Error, MixedSpectralData, PinMode, PotentialSpec, Result,
    TripleBoundary,
};

/// Boundary angle: numeric radians or a named classical condition.
#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
pub enum AngleSpec {
    Value(f64),
    Named(String),
}

impl AngleSpec {
    pub fn resolve(&self) -> Result<f64> {
        match self {
            AngleSpec::Value(v) => Ok(*v),
            AngleSpec::Named(name) => match name.as_str() {
                "D" | "d" => Ok(0.0),
                "N" | "n" => Ok(FRAC_PI_2),
                other => Err(Error::Parameter(format!(
                    "unknown boundary shorthand {other:?}; use \"D\", \"N\", or a number"
                ))),
            },
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairBcInput {
    pub alpha: AngleSpec,
    pub beta: AngleSpec,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TripleBcInput {
    pub alpha1: AngleSpec,
    pub alpha2: AngleSpec,
    pub beta: AngleSpec,
}

/// Boundary conditions: a single pair (α, β) or a full triple (α₁, α₂, β).
#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
pub enum BcInput {
    Triple(TripleBcInput),
    Pair(PairBcInput),
}

impl BcInput {
    /// The pair form, for commands driving a single spectrum.
    pub fn to_pair(&self) -> Result<BoundaryConditions> {
        match self {
            BcInput::Pair(p) => BoundaryConditions::new(p.alpha.resolve()?, p.beta.resolve()?),
            BcInput::Triple(_) => Err(Error::Parameter(
                "this command takes a single boundary pair {alpha, beta}".into(),
            )),
        }
    }

    /// The triple form; a pair (α, β) means the canonical triple over
    /// (α + π/2 mod π, α, β).
    pub fn to_triple(&self) -> Result<TripleBoundary> {
        match self {
            BcInput::Pair(p) => TripleBoundary::from_pair(p.alpha.resolve()?, p.beta.resolve()?),
            BcInput::Triple(t) => TripleBoundary::new(
                t.alpha1.resolve()?,
                t.alpha2.resolve()?,
                t.beta.resolve()?,
            ),
        }
    }
}

/// Input for `forward` and `mfunc`: a potential and boundary conditions.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialInput {
    pub potential: PotentialSpec,
    pub bc: BcInput,
}

#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExtendInput {
    Identity,
    Squares,
}

impl From<ExtendInput> for ExtendRule {
    fn from(rule: ExtendInput) -> Self {
        match rule {
            ExtendInput::Identity => ExtendRule::Identity,
            ExtendInput::Squares => ExtendRule::Squares,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapInput {
    #[serde(default)]
    pub initial: Vec<usize>,
    #[serde(default)]
    pub extend: Option<ExtendInput>,
}

impl MapInput {
    fn build(&self) -> Result<IndexMap> {
        IndexMap::new(self.initial.clone(), self.extend.map(Into::into))
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapsInput {
    pub k: MapInput,
    pub l: MapInput,
    #[serde(default)]
    pub equal_through: usize,
}

#[derive(Clone, Copy, Debug, Default, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum CompletionModeInput {
    #[default]
    Matching,
    Anchored,
    AbsolutelyConvergent,
}

#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PinModeInput {
    Normalization,
    LargestZeroToModel,
}

impl From<PinModeInput> for PinMode {
    fn from(mode: PinModeInput) -> Self {
        match mode {
            PinModeInput::Normalization => PinMode::Normalization,
            PinModeInput::LargestZeroToModel => PinMode::LargestZeroToModel,
        }
    }
}

/// Input for `complete` and `check-hypotheses`: mixed spectral data plus the
/// completion mode.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompleteInput {
    pub spectrum: Vec<f64>,
    pub bc: BcInput,
    #[serde(default)]
    pub index_set: Vec<usize>,
    #[serde(default)]
    pub known_zeros: BTreeMap<usize, f64>,
    #[serde(default)]
    pub masses: BTreeMap<usize, f64>,
    #[serde(default)]
    pub anchor: Option<(usize, f64)>,
    #[serde(default)]
    pub index_maps: Option<MapsInput>,
    #[serde(default)]
    pub mode: CompletionModeInput,
    #[serde(default)]
    pub pin_mode: Option<PinModeInput>,
}

impl CompleteInput {
    pub fn to_data(&self) -> Result<MixedSpectralData> {
        let index_maps = match &self.index_maps {
            Some(maps) => Some(CompletionMaps {
                k: maps.k.build()?,
                l: maps.l.build()?,
                equal_through: maps.equal_through,
            }),
            None => None,
        };
        Ok(MixedSpectralData {
            spectrum: self.spectrum.clone(),
            bc: self.bc.to_triple()?,
            index_set: self.index_set.clone(),
            known_zeros: self.known_zeros.clone(),
            masses: self.masses.clone(),
            anchor: self.anchor,
            index_maps,
        })
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyInput {
    pub kind: String,
    pub count: usize,
}

impl FamilyInput {
    pub fn build(&self) -> Result<PotentialFamily> {
        match self.kind.as_str() {
            "cosine" => Ok(PotentialFamily::Cosine { count: self.count }),
            "piecewise" => Ok(PotentialFamily::Piecewise { count: self.count }),
            other => Err(Error::Parameter(format!(
                "unknown family kind {other:?}; use \"cosine\" or \"piecewise\""
            ))),
        }
    }
}

/// Input for `reconstruct`: two spectra, boundary data, and the family.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReconstructInput {
    #[serde(default)]
    pub spectrum1: Vec<f64>,
    #[serde(default)]
    pub spectrum2: Vec<f64>,
    pub bc: BcInput,
    pub family: FamilyInput,
    #[serde(default)]
    pub regularization: Option<f64>,
    #[serde(default)]
    pub initial: Option<Vec<f64>>,
    #[serde(default)]
    pub balanced_weights: Option<bool>,
    #[serde(default)]
    pub max_iterations: Option<usize>,
}
