//! Experiment configuration: one JSON document per run, plus command-line
//! overrides.

use crate::coboundary::SubsequenceRule;
use crate::error::{Error, Result};
use crate::measures::Exponent;
use crate::scalar::{q_from_f64, q_int, q_parse, Q};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system: SystemSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observable: Option<ObservableSpec>,
    #[serde(default = "default_stages")]
    pub stages: Vec<StageName>,
    #[serde(default)]
    pub params: Params,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Output directory; the --out flag takes precedence.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<String>,
}

fn default_stages() -> Vec<StageName> {
    vec![StageName::Support, StageName::Solve, StageName::Verify]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SystemSpec {
    Finite(FiniteSpec),
    Rotation(RotationSpec),
    Planted(PlantedSpec),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiniteSpec {
    pub atoms: usize,
    /// Defaults to the uniform measure.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<RationalSpec>>,
    /// One permutation per factor, as images [T(0), T(1), ...].
    pub maps: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RotationSpec {
    pub alphas: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantedSpec {
    pub kind: PlantedKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub atoms: Option<usize>,
    /// Number of factors (finite_random).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub maps: Option<usize>,
    /// Per-factor shifts (finite_cyclic).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shifts: Option<Vec<i64>>,
    /// Rotation angle (rotation).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub zero_weight_group: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lcm_cap: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlantedKind {
    FiniteRandom,
    FiniteCyclic,
    Rotation,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ObservableSpec {
    /// Tensor factors as per-atom value tables.
    Tensor { factors: Vec<Vec<RationalSpec>> },
    /// Arbitrary values on listed product points; zero elsewhere.
    General { values: Vec<GeneralEntry> },
    /// Closed-form factors for circle systems.
    Circle { factors: Vec<CircleFnSpec> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneralEntry {
    pub point: Vec<usize>,
    pub value: RationalSpec,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "named", rename_all = "snake_case", deny_unknown_fields)]
pub enum CircleFnSpec {
    Const { value: f64 },
    Cos,
    Sin,
    Indicator { lo: f64, hi: f64 },
    /// cos 2πx - cos 2π(x + α) with α taken from the matching system factor.
    PlantedCoboundary,
}

/// A rational given as an integer, a float (converted to its exact binary
/// value but flagged inexact), or a "p/q" string.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RationalSpec {
    Int(i64),
    Float(f64),
    Text(String),
}

impl RationalSpec {
    /// Returns the value and whether it denotes an exact rational.
    pub fn to_q(&self) -> Result<(Q, bool)> {
        match self {
            RationalSpec::Int(n) => Ok((q_int(*n), true)),
            RationalSpec::Float(x) => q_from_f64(*x)
                .map(|v| (v, false))
                .ok_or_else(|| Error::InvalidConfig(format!("{x} is not a finite number"))),
            RationalSpec::Text(s) => q_parse(s)
                .map(|v| (v, true))
                .ok_or_else(|| Error::InvalidConfig(format!("cannot parse rational {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageName {
    Support,
    Nonsingularity,
    Sums,
    ShiftedSums,
    Solve,
    Komlos,
    Verify,
    Reverse,
}

impl StageName {
    /// Canonical execution order; requested stages run in this order no
    /// matter how the config lists them.
    pub const ORDER: [StageName; 8] = [
        StageName::Support,
        StageName::Nonsingularity,
        StageName::Sums,
        StageName::ShiftedSums,
        StageName::Solve,
        StageName::Komlos,
        StageName::Verify,
        StageName::Reverse,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            StageName::Support => "support",
            StageName::Nonsingularity => "nonsingularity",
            StageName::Sums => "sums",
            StageName::ShiftedSums => "shifted_sums",
            StageName::Solve => "solve",
            StageName::Komlos => "komlos",
            StageName::Verify => "verify",
            StageName::Reverse => "reverse",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ORDER
            .iter()
            .find(|st| st.as_str() == s.trim())
            .copied()
            .ok_or_else(|| Error::InvalidConfig(format!("unknown stage {s:?}")))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ExponentSpec {
    Num(f64),
    Text(String),
}

impl ExponentSpec {
    pub fn to_exponent(&self) -> Result<Exponent> {
        match self {
            ExponentSpec::Num(p) => Exponent::new(*p),
            ExponentSpec::Text(s) => Exponent::parse(s),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubsequenceSpec {
    PowersOfTwo,
    PeriodAligned,
}

impl SubsequenceSpec {
    pub fn to_rule(self) -> SubsequenceRule {
        match self {
            SubsequenceSpec::PowersOfTwo => SubsequenceRule::PowersOfTwo,
            SubsequenceSpec::PeriodAligned => SubsequenceRule::PeriodAligned,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    /// Upper sum index for series, diagnostics, and telescoping checks.
    pub n_max: usize,
    /// Shift range for the windowed sums.
    pub m_max: usize,
    /// Orbit window half-width for circle solving.
    pub horizon: usize,
    pub p: ExponentSpec,
    /// Number of averaging stages K.
    pub k: usize,
    pub subsequence: SubsequenceSpec,
    /// Float comparison tolerance on inexact pathways.
    pub tolerance: f64,
    /// Random subsets drawn by the nonsingularity check.
    pub trials: usize,
    /// Monte Carlo draws on circle systems, and sampled verification windows.
    pub samples: usize,
    /// Anchor value added per orbit when solving.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub orbit_constant: Option<RationalSpec>,
}

impl Default for Params {
    fn default() -> Self {
        Params {
            n_max: 64,
            m_max: 32,
            horizon: 64,
            p: ExponentSpec::Text("inf".into()),
            k: 4,
            subsequence: SubsequenceSpec::PeriodAligned,
            tolerance: 1e-12,
            trials: 200,
            samples: 10_000,
            orbit_constant: None,
        }
    }
}

/// Command-line overrides; every field beats the config when present.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub n_max: Option<usize>,
    pub horizon: Option<usize>,
    pub p: Option<String>,
    pub tolerance: Option<f64>,
    pub stages: Option<Vec<StageName>>,
    pub out: Option<String>,
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::InvalidConfig(format!("cannot read {}: {e}", path.display()))
        })?;
        let config: ExperimentConfig = serde_json::from_str(&text)
            .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?;
        Ok(config)
    }

    pub fn apply_overrides(&mut self, ov: &Overrides) -> Result<()> {
        if let Some(seed) = ov.seed {
            self.seed = Some(seed);
        }
        if let Some(n_max) = ov.n_max {
            self.params.n_max = n_max;
        }
        if let Some(horizon) = ov.horizon {
            self.params.horizon = horizon;
        }
        if let Some(p) = &ov.p {
            self.params.p = ExponentSpec::Text(p.clone());
        }
        if let Some(tol) = ov.tolerance {
            self.params.tolerance = tol;
        }
        if let Some(stages) = &ov.stages {
            self.stages = stages.clone();
        }
        if let Some(out) = &ov.out {
            self.out = Some(out.clone());
        }
        Ok(())
    }

    pub fn is_circle(&self) -> bool {
        matches!(
            &self.system,
            SystemSpec::Rotation(_)
                | SystemSpec::Planted(PlantedSpec {
                    kind: PlantedKind::Rotation,
                    ..
                })
        )
    }

    fn needs_observable(&self) -> bool {
        self.stages.iter().any(|s| {
            matches!(
                s,
                StageName::Sums
                    | StageName::ShiftedSums
                    | StageName::Solve
                    | StageName::Komlos
                    | StageName::Verify
            )
        })
    }

    fn needs_seed(&self) -> bool {
        let planted = matches!(&self.system, SystemSpec::Planted(_));
        let subset_draws = self.stages.contains(&StageName::Nonsingularity);
        let reverse_draws = self.stages.contains(&StageName::Reverse);
        let circle_sampling = self.is_circle()
            && self.stages.iter().any(|s| {
                matches!(s, StageName::Sums | StageName::Solve | StageName::Verify)
            });
        planted || subset_draws || reverse_draws || circle_sampling
    }

    pub fn validate(&self) -> Result<()> {
        if self.stages.is_empty() {
            return Err(Error::InvalidConfig("no stages requested".into()));
        }
        for (i, s) in self.stages.iter().enumerate() {
            if self.stages[..i].contains(s) {
                return Err(Error::InvalidConfig(format!(
                    "stage {} listed more than once",
                    s.as_str()
                )));
            }
        }
        if self.stages.contains(&StageName::Verify)
            && !self.stages.contains(&StageName::Solve)
            && !self.stages.contains(&StageName::Komlos)
        {
            return Err(Error::InvalidConfig(
                "verify requires solve or komlos in the stage list".into(),
            ));
        }

        match &self.system {
            SystemSpec::Finite(spec) => {
                if spec.maps.is_empty() {
                    return Err(Error::InvalidConfig("finite system needs maps".into()));
                }
                for (i, map) in spec.maps.iter().enumerate() {
                    if map.len() != spec.atoms {
                        return Err(Error::InvalidConfig(format!(
                            "map {i} has {} entries for {} atoms",
                            map.len(),
                            spec.atoms
                        )));
                    }
                }
                if let Some(w) = &spec.weights {
                    if w.len() != spec.atoms {
                        return Err(Error::InvalidConfig(format!(
                            "{} weights for {} atoms",
                            w.len(),
                            spec.atoms
                        )));
                    }
                }
            }
            SystemSpec::Rotation(spec) => {
                if spec.alphas.is_empty() {
                    return Err(Error::InvalidConfig("rotation system needs alphas".into()));
                }
            }
            SystemSpec::Planted(spec) => {
                match spec.kind {
                    PlantedKind::FiniteRandom => {
                        if spec.atoms.is_none() || spec.maps.is_none() {
                            return Err(Error::InvalidConfig(
                                "finite_random planting needs atoms and maps".into(),
                            ));
                        }
                    }
                    PlantedKind::FiniteCyclic => {
                        if spec.atoms.is_none() || spec.shifts.is_none() {
                            return Err(Error::InvalidConfig(
                                "finite_cyclic planting needs atoms and shifts".into(),
                            ));
                        }
                    }
                    PlantedKind::Rotation => {
                        if spec.alpha.is_none() {
                            return Err(Error::InvalidConfig(
                                "rotation planting needs alpha".into(),
                            ));
                        }
                    }
                }
                if self.observable.is_some() {
                    return Err(Error::InvalidConfig(
                        "planted systems supply their own observable".into(),
                    ));
                }
            }
        }

        match (&self.observable, self.is_circle()) {
            (Some(ObservableSpec::Circle { .. }), false) => {
                return Err(Error::InvalidConfig(
                    "closed-form circle observables require a rotation system".into(),
                ))
            }
            (Some(ObservableSpec::Tensor { .. }), true)
            | (Some(ObservableSpec::General { .. }), true) => {
                return Err(Error::InvalidConfig(
                    "table observables require a finite system".into(),
                ))
            }
            (None, _) if self.needs_observable()
                && !matches!(&self.system, SystemSpec::Planted(_)) =>
            {
                return Err(Error::InvalidConfig(
                    "requested stages need an observable".into(),
                ))
            }
            _ => {}
        }

        if self.needs_seed() && self.seed.is_none() {
            return Err(Error::InvalidConfig(
                "requested stages draw random data; a seed is required".into(),
            ));
        }

        let p = &self.params;
        if p.n_max == 0 || p.horizon == 0 || p.k == 0 || p.trials == 0 || p.samples == 0 {
            return Err(Error::InvalidConfig(
                "n_max, horizon, k, trials, and samples must be positive".into(),
            ));
        }
        if p.tolerance.is_nan() || p.tolerance <= 0.0 {
            return Err(Error::InvalidConfig("tolerance must be positive".into()));
        }
        p.p.to_exponent()?;
        if let Some(c) = &p.orbit_constant {
            c.to_q()?;
        }
        Ok(())
    }

    /// Requested stages in canonical execution order.
    pub fn ordered_stages(&self) -> Vec<StageName> {
        StageName::ORDER
            .iter()
            .filter(|s| self.stages.contains(s))
            .copied()
            .collect()
    }
}

pub fn parse_stage_list(s: &str) -> Result<Vec<StageName>> {
    s.split(',')
        .filter(|part| !part.trim().is_empty())
        .map(StageName::parse)
        .collect()
}
