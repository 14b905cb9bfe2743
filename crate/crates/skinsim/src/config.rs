//! Run configuration: one flat, versioned JSON document.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use skinsim_core::circuit::{CircuitConfig, GateConvention};
use skinsim_core::engine::{EngineConfig, InitialState, ObservableFlags, DEFAULT_DT, DEFAULT_RECORDS};
use skinsim_core::model::{self, Boundary, DisorderKind, ModelSpec};

use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Trajectory,
    Ensemble,
    Sweep,
    PbcSteady,
    Liouvillian,
    Circuit,
    Analyze,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundaryName {
    Open,
    Periodic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DisorderName {
    None,
    Quasiperiodic,
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialName {
    Neel,
    Skin,
    RandomFock,
    GroundState,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GateName {
    Pauli,
    Hopping,
}

/// Sweep axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepOver {
    /// Disorder strength `W`, values in `values`.
    W,
    /// System size `L`, values in `values`.
    L,
}

fn default_schema() -> u32 {
    SCHEMA_VERSION
}
fn default_hopping() -> f64 {
    1.0
}
fn default_gamma() -> f64 {
    model::DEFAULT_GAMMA
}
fn default_theta() -> f64 {
    model::DEFAULT_THETA
}
fn default_alpha() -> f64 {
    model::DEFAULT_ALPHA
}
fn default_dt() -> f64 {
    DEFAULT_DT
}
fn default_records() -> usize {
    DEFAULT_RECORDS
}
fn default_n_traj() -> usize {
    1
}
fn default_observables() -> Vec<String> {
    vec!["S_half".into(), "f_skin".into(), "f_r".into(), "density".into()]
}

pub const OBSERVABLE_NAMES: [&str; 8] =
    ["S_half", "f_skin", "f_r", "I_AB", "v", "density", "correlation", "momentum"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_schema")]
    pub schema_version: u32,
    pub mode: Mode,
    #[serde(default)]
    pub label: String,

    // model
    #[serde(default)]
    pub sites: usize,
    #[serde(default = "BoundaryName::open")]
    pub boundary: BoundaryName,
    #[serde(default = "default_hopping")]
    pub hopping: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_theta")]
    pub theta: f64,
    #[serde(default = "DisorderName::none")]
    pub disorder: DisorderName,
    #[serde(default)]
    pub disorder_strength: f64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub disorder_seed: u64,

    // engine
    #[serde(default = "default_dt")]
    pub dt: f64,
    /// Final time; `t_over_l_max * L` wins when both are given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_over_l_max: Option<f64>,
    #[serde(default = "default_records")]
    pub records: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_n_traj")]
    pub n_traj: usize,
    /// First trajectory index (trajectory mode).
    #[serde(default)]
    pub trajectory_index: u64,
    #[serde(default = "InitialName::neel")]
    pub initial: InitialName,
    #[serde(default = "default_observables")]
    pub observables: Vec<String>,

    // sweep
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep_over: Option<SweepOver>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub values: Vec<f64>,

    // pbc-steady: fraction of the run at the end averaged as steady state
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steady_fraction: Option<f64>,

    // liouvillian
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub particles: Option<usize>,

    // circuit
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_t: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modules: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint_every: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shots: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gate: Option<GateName>,

    // analyze
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,

    /// Output directory; relative paths resolve under `SKINSIM_OUT` when set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,

    /// Description carried by checked-in recipes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recipe: Option<Recipe>,

    /// Provenance block written into `meta.json`; ignored on input.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run: Option<serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Recipe {
    /// Figure panel the run targets.
    pub figure: String,
    /// Reduced sizes used at desk scale, e.g. `L=64, n_traj=100`.
    pub reduced: String,
    /// What to look for in the output.
    pub check: String,
}

impl BoundaryName {
    fn open() -> Self {
        BoundaryName::Open
    }
}
impl DisorderName {
    fn none() -> Self {
        DisorderName::None
    }
}
impl InitialName {
    fn neel() -> Self {
        InitialName::Neel
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| CliError::Config(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Checks mode-required fields; messages name the offending field.
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |field: &str, why: String| Err(CliError::Config(format!("field `{field}`: {why}")));
        if self.schema_version != SCHEMA_VERSION {
            return bad("schema_version", format!("expected {SCHEMA_VERSION}, got {}", self.schema_version));
        }
        if self.mode == Mode::Analyze {
            if self.input.is_none() {
                return bad("input", "required in analyze mode".into());
            }
            return Ok(());
        }
        if self.sites < 2 && !(self.mode == Mode::Sweep && self.sweep_over == Some(SweepOver::L)) {
            return bad("sites", format!("must be >= 2, got {}", self.sites));
        }
        for name in &self.observables {
            if !OBSERVABLE_NAMES.contains(&name.as_str()) {
                return bad("observables", format!("unknown observable `{name}`; known: {OBSERVABLE_NAMES:?}"));
            }
        }
        if self.records == 0 {
            return bad("records", "must be >= 1".into());
        }
        let needs_time = !matches!(self.mode, Mode::Circuit);
        if needs_time && self.t_max.is_none() && self.t_over_l_max.is_none() {
            return bad("t_max", "either `t_max` or `t_over_l_max` is required".into());
        }
        for (field, v) in [("t_max", self.t_max), ("t_over_l_max", self.t_over_l_max)] {
            if let Some(v) = v {
                if !(v >= 0.0) || !v.is_finite() {
                    return bad(field, format!("must be finite and >= 0, got {v}"));
                }
            }
        }
        if matches!(self.mode, Mode::Ensemble | Mode::Sweep | Mode::PbcSteady) && self.n_traj == 0 {
            return bad("n_traj", "must be >= 1".into());
        }
        match self.mode {
            Mode::Sweep => {
                if self.sweep_over.is_none() {
                    return bad("sweep_over", "required in sweep mode (`w` or `l`)".into());
                }
                if self.values.is_empty() {
                    return bad("values", "sweep needs at least one value".into());
                }
                if self.sweep_over == Some(SweepOver::W) && self.disorder == DisorderName::None {
                    return bad("disorder", "a W sweep needs `quasiperiodic` or `uniform` disorder".into());
                }
                if self.sweep_over == Some(SweepOver::L)
                    && self.values.iter().any(|v| v.fract() != 0.0 || *v < 2.0)
                {
                    return bad("values", "system sizes must be integers >= 2".into());
                }
            }
            Mode::PbcSteady => {
                if let Some(f) = self.steady_fraction {
                    if !(f > 0.0 && f <= 1.0) {
                        return bad("steady_fraction", format!("must lie in (0, 1], got {f}"));
                    }
                }
            }
            Mode::Circuit => {
                for (field, present) in [
                    ("delta_t", self.delta_t.is_some()),
                    ("p", self.p.is_some()),
                    ("modules", self.modules.is_some()),
                    ("shots", self.shots.is_some()),
                ] {
                    if !present {
                        return bad(field, "required in circuit mode".into());
                    }
                }
                if self.checkpoint_every == Some(0) {
                    return bad("checkpoint_every", "must be >= 1".into());
                }
                self.circuit_config()
                    .validate()
                    .or_else(|e| bad("p", e.to_string()))?;
            }
            _ => {}
        }
        if !matches!(self.mode, Mode::Circuit | Mode::Sweep) {
            self.model_spec()
                .validate()
                .or_else(|e| bad("model", e.to_string()))?;
            self.engine_config(self.sites)
                .validate(&self.model_spec())
                .or_else(|e| bad("dt", e.to_string()))?;
        }
        Ok(())
    }

    pub fn model_spec(&self) -> ModelSpec {
        self.model_spec_for(self.sites, self.disorder_strength)
    }

    pub fn model_spec_for(&self, sites: usize, strength: f64) -> ModelSpec {
        let mut spec = ModelSpec::new(sites);
        spec.hopping = self.hopping;
        spec.gamma = self.gamma;
        spec.theta = self.theta;
        spec.alpha = self.alpha;
        spec.disorder_strength = strength;
        spec.disorder_seed = self.disorder_seed;
        spec.boundary = match self.boundary {
            BoundaryName::Open => Boundary::Open,
            BoundaryName::Periodic => Boundary::Periodic,
        };
        spec.disorder = match self.disorder {
            DisorderName::None => DisorderKind::None,
            DisorderName::Quasiperiodic => DisorderKind::Quasiperiodic,
            DisorderName::Uniform => DisorderKind::Uniform,
        };
        spec
    }

    pub fn t_max_for(&self, sites: usize) -> f64 {
        match (self.t_over_l_max, self.t_max) {
            (Some(r), _) => r * sites as f64,
            (None, Some(t)) => t,
            (None, None) => 0.0,
        }
    }

    pub fn observable_flags(&self) -> ObservableFlags {
        let on = |n: &str| self.observables.iter().any(|o| o == n);
        ObservableFlags {
            entropy: on("S_half"),
            mutual_information: on("I_AB"),
            density: on("density"),
            f_skin: on("f_skin"),
            f_r: on("f_r"),
            correlation: on("correlation"),
            velocity: on("v"),
            momentum: on("momentum"),
        }
    }

    pub fn engine_config(&self, sites: usize) -> EngineConfig {
        EngineConfig::new(self.t_max_for(sites), self.seed)
            .with_dt(self.dt)
            .with_records(self.records)
            .with_observables(self.observable_flags())
    }

    pub fn initial_state(&self) -> InitialState {
        match self.initial {
            InitialName::Neel => InitialState::Neel,
            InitialName::Skin => InitialState::Skin,
            InitialName::RandomFock => InitialState::RandomFock,
            InitialName::GroundState => InitialState::GroundState,
        }
    }

    pub fn circuit_config(&self) -> CircuitConfig {
        let convention = match self.gate.unwrap_or(GateName::Pauli) {
            GateName::Pauli => GateConvention::Pauli,
            GateName::Hopping => GateConvention::Hopping,
        };
        let mut cfg = CircuitConfig::new(
            self.delta_t.unwrap_or(0.0),
            self.p.unwrap_or(0.0),
            self.modules.unwrap_or(0),
            self.shots.unwrap_or(0),
        )
        .with_convention(convention);
        if self.disorder == DisorderName::Quasiperiodic {
            cfg = cfg.with_quasiperiodic(self.disorder_strength, self.alpha);
        }
        cfg
    }

    /// Serialized form without the provenance block, used for comparisons.
    pub fn canonical(&self) -> RunConfig {
        RunConfig { run: None, ..self.clone() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_ensemble_config_fills_defaults() {
        let cfg = RunConfig::from_json(r#"{"mode":"ensemble","sites":16,"n_traj":8,"t_max":8}"#).unwrap();
        assert_eq!(cfg.schema_version, SCHEMA_VERSION);
        assert_eq!(cfg.gamma, 0.5);
        assert_eq!(cfg.boundary, BoundaryName::Open);
        assert_eq!(cfg.engine_config(16).steps(), 160);
    }

    #[test]
    fn errors_name_the_field() {
        let e = RunConfig::from_json(r#"{"mode":"ensemble","sites":16,"t_max":8,"gama":1}"#).unwrap_err();
        assert!(e.to_string().contains("gama"), "{e}");
        let e = RunConfig::from_json(r#"{"mode":"ensemble","sites":16}"#).unwrap_err();
        assert!(e.to_string().contains("t_max"), "{e}");
        let e = RunConfig::from_json(r#"{"mode":"circuit","sites":8,"p":0.5,"modules":3,"shots":2}"#).unwrap_err();
        assert!(e.to_string().contains("delta_t"), "{e}");
        let e = RunConfig::from_json(r#"{"mode":"ensemble","sites":16,"t_max":8,"observables":["S"]}"#).unwrap_err();
        assert!(e.to_string().contains("observables"), "{e}");
        let e = RunConfig::from_json(r#"{"mode":"ensemble","sites":16,"t_max":8,"schema_version":7}"#).unwrap_err();
        assert!(e.to_string().contains("schema_version"), "{e}");
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn serialization_round_trips() {
        let cfg = RunConfig::from_json(
            r#"{"mode":"sweep","label":"x","sites":32,"t_over_l_max":1.5,"sweep_over":"w","values":[0,0.5],"disorder":"quasiperiodic","n_traj":4}"#,
        )
        .unwrap();
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        assert_eq!(RunConfig::from_json(&text).unwrap(), cfg);
    }
}
