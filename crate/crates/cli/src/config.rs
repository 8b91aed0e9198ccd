//! Experiment configuration: one JSON document per experiment.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use twoscale_core::scheme::TimeProfile;
use twoscale_core::{
    BarMesh, BarModel, DoubleWell, EnergyModel, Forcing, Quadratic, ReferenceSettings, SchemeParams,
    SolverSettings,
};

/// A configuration problem, tagged with the offending key.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub key: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.key, self.message)
    }
}

impl std::error::Error for ConfigError {}

fn err<T>(key: &str, message: impl fmt::Display) -> Result<T, ConfigError> {
    Err(ConfigError { key: key.to_string(), message: message.to_string() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    DoubleWell,
    Quadratic {
        #[serde(default = "one")]
        omega: f64,
    },
    Bar(BarMesh),
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StateSpec {
    Values { values: Vec<f64> },
    #[default]
    Zero,
    /// Bar reference configuration `η(x) = x`.
    Identity,
    /// Bar state `x + A sin(jπx/L)`.
    SinePerturbation { amplitude: f64, wavenumber: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSpec {
    pub eta0: StateSpec,
    #[serde(default)]
    pub eta_star: StateSpec,
}

/// `f(t) = g(t)·profile` on `[0, T]`, zero outside.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ForcingSpec {
    #[default]
    Zero,
    Constant { value: Vec<f64> },
    /// `g(t) = Σ cᵢ tⁱ`.
    Polynomial { profile: Vec<f64>, coeffs: Vec<f64> },
    /// Piece `i` is `Σ cᵢⱼ (t − breaksᵢ)ʲ` on `[breaksᵢ, breaksᵢ₊₁)`.
    Piecewise { profile: Vec<f64>, breaks: Vec<f64>, pieces: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeSpec {
    pub tau: f64,
    /// Defaults to `tau`.
    #[serde(default)]
    pub h: Option<f64>,
    pub horizon: f64,
    #[serde(default)]
    pub dissipation: f64,
    #[serde(default = "one_usize")]
    pub save_stride: usize,
}

fn one_usize() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    /// Strictly decreasing list of velocity steps.
    pub taus: Vec<f64>,
    /// Fixed acceleration step; `τ = h` for every level when absent.
    #[serde(default)]
    pub h: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceKind {
    /// RK4 on the limit equation.
    #[default]
    Rk4,
    /// The time-delayed equation at the sweep's fixed `h`.
    Delayed,
    /// Closed form, quadratic model with zero forcing only.
    ExactLinear,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReferenceSpec {
    pub kind: ReferenceKind,
    pub step: f64,
    pub blowup_bound: f64,
}

impl Default for ReferenceSpec {
    fn default() -> Self {
        let d = ReferenceSettings::default();
        Self { kind: ReferenceKind::Rk4, step: d.step, blowup_bound: d.blowup_bound }
    }
}

impl ReferenceSpec {
    pub fn settings(&self) -> ReferenceSettings {
        ReferenceSettings { step: self.step, blowup_bound: self.blowup_bound }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareSpec {
    /// Points of the uniform output grid, endpoints included.
    pub samples: usize,
    /// State component written to `compare.csv`.
    pub component: usize,
}

impl Default for CompareSpec {
    fn default() -> Self {
        Self { samples: 501, component: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: Option<String>,
    pub model: ModelSpec,
    pub initial: InitialSpec,
    #[serde(default)]
    pub forcing: ForcingSpec,
    pub scheme: SchemeSpec,
    #[serde(default)]
    pub sweep: Option<SweepSpec>,
    #[serde(default)]
    pub solver: SolverSettings,
    #[serde(default)]
    pub reference: ReferenceSpec,
    #[serde(default)]
    pub compare: CompareSpec,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

pub const PRESETS: &[(&str, &str)] = &[
    ("double-well-canonical", include_str!("../../../presets/double-well-canonical.json")),
    ("double-well-wrong-well", include_str!("../../../presets/double-well-wrong-well.json")),
    ("double-well-split", include_str!("../../../presets/double-well-split.json")),
    ("double-well-low-energy", include_str!("../../../presets/double-well-low-energy.json")),
    ("quadratic", include_str!("../../../presets/quadratic.json")),
    ("bar-small", include_str!("../../../presets/bar-small.json")),
];

pub fn preset_names() -> impl Iterator<Item = &'static str> {
    PRESETS.iter().map(|(n, _)| *n)
}

impl ExperimentConfig {
    /// Parses and validates a JSON document.
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| ConfigError {
            key: format!("line {} column {}", e.line(), e.column()),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError { key: path.display().to_string(), message: e.to_string() })?;
        Self::from_json(&text)
    }

    pub fn preset(name: &str) -> Result<Self, ConfigError> {
        match PRESETS.iter().find(|(n, _)| *n == name) {
            Some((_, text)) => Self::from_json(text),
            None => err(
                "preset",
                format!("unknown preset '{name}', expected one of {:?}", preset_names().collect::<Vec<_>>()),
            ),
        }
    }

    /// Canonical JSON of the resolved configuration (defaults filled in).
    pub fn resolved_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn build_model(&self) -> Result<Box<dyn EnergyModel>, ConfigError> {
        Ok(match &self.model {
            ModelSpec::DoubleWell => Box::new(DoubleWell::new()),
            ModelSpec::Quadratic { omega } => match Quadratic::new(*omega) {
                Ok(q) => Box::new(q),
                Err(e) => return err("model.omega", e),
            },
            ModelSpec::Bar(mesh) => match BarModel::new(*mesh) {
                Ok(b) => Box::new(b),
                Err(e) => return err("model", e),
            },
        })
    }

    fn build_state(&self, spec: &StateSpec, key: &str, dim: usize) -> Result<Vec<f64>, ConfigError> {
        let mesh = match &self.model {
            ModelSpec::Bar(mesh) => Some(mesh),
            _ => None,
        };
        let state = match (spec, mesh) {
            (StateSpec::Values { values }, _) => values.clone(),
            (StateSpec::Zero, _) => vec![0.0; dim],
            (StateSpec::Identity, Some(mesh)) => mesh.identity(),
            (StateSpec::SinePerturbation { amplitude, wavenumber }, Some(mesh)) => {
                mesh.sine_perturbation(*amplitude, *wavenumber)
            }
            (_, None) => return err(key, "this state kind needs the bar model"),
        };
        if state.len() != dim {
            return err(key, format!("expected {dim} components, got {}", state.len()));
        }
        if state.iter().any(|v| !v.is_finite()) {
            return err(key, "components must be finite");
        }
        Ok(state)
    }

    pub fn eta0(&self, dim: usize) -> Result<Vec<f64>, ConfigError> {
        self.build_state(&self.initial.eta0, "initial.eta0", dim)
    }

    pub fn eta_star(&self, dim: usize) -> Result<Vec<f64>, ConfigError> {
        self.build_state(&self.initial.eta_star, "initial.eta_star", dim)
    }

    pub fn build_forcing(&self, dim: usize) -> Result<Forcing, ConfigError> {
        let horizon = self.scheme.horizon;
        let check = |profile: &Vec<f64>, key: &str| {
            if profile.len() != dim {
                return err(key, format!("expected {dim} components, got {}", profile.len()));
            }
            Ok(())
        };
        Ok(match &self.forcing {
            ForcingSpec::Zero => Forcing::zero(),
            ForcingSpec::Constant { value } => {
                check(value, "forcing.value")?;
                Forcing::constant(value.clone(), horizon)
            }
            ForcingSpec::Polynomial { profile, coeffs } => {
                check(profile, "forcing.profile")?;
                Forcing::separable(profile.clone(), TimeProfile::Polynomial(coeffs.clone()), horizon)
            }
            ForcingSpec::Piecewise { profile, breaks, pieces } => {
                check(profile, "forcing.profile")?;
                match Forcing::piecewise(profile.clone(), breaks.clone(), pieces.clone(), horizon) {
                    Ok(f) => f,
                    Err(e) => return err("forcing", e),
                }
            }
        })
    }

    pub fn scheme_params(&self) -> Result<SchemeParams, ConfigError> {
        let s = &self.scheme;
        let h = s.h.unwrap_or(s.tau);
        let mut p = match SchemeParams::from_times(s.tau, h, s.horizon) {
            Ok(p) => p,
            Err(e) => return err("scheme", format!("{e} (need h = N·tau and horizon = M·h)")),
        };
        p.dissipation = s.dissipation;
        p.save_stride = s.save_stride;
        Ok(p)
    }

    /// `(τ, h)` pairs of the sweep.
    pub fn sweep_grid(&self) -> Result<Vec<(f64, f64)>, ConfigError> {
        let Some(sweep) = &self.sweep else {
            return err("sweep", "this command needs a sweep section");
        };
        if sweep.taus.is_empty() {
            return err("sweep.taus", "empty sweep list");
        }
        Ok(sweep.taus.iter().map(|&t| (t, sweep.h.unwrap_or(t))).collect())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let model = self.build_model()?;
        let dim = model.dim();
        self.eta0(dim)?;
        self.eta_star(dim)?;
        self.build_forcing(dim)?;
        let params = self.scheme_params()?;
        if let Err(e) = params.validate() {
            return err("scheme", e);
        }
        if self.scheme.dissipation > 0.0 && model.dissipation().is_none() {
            return err("scheme.dissipation", "the model has no regularizer for a dissipation term");
        }
        if let Some(sweep) = &self.sweep {
            if sweep.taus.is_empty() {
                return err("sweep.taus", "empty sweep list");
            }
            if sweep.taus.windows(2).any(|w| !(w[1] < w[0])) {
                return err("sweep.taus", "must be strictly decreasing");
            }
            for (i, &(tau, h)) in self.sweep_grid()?.iter().enumerate() {
                if let Err(e) = SchemeParams::from_times(tau, h, self.scheme.horizon) {
                    return err(&format!("sweep.taus[{i}]"), format!("{e} (need h = N·tau and horizon = M·h)"));
                }
            }
        }
        if let Err(e) = self.solver.validate() {
            return err("solver", e);
        }
        let r = &self.reference;
        if !(r.step > 0.0 && r.step.is_finite()) {
            return err("reference.step", "must be positive");
        }
        if !(r.blowup_bound > 0.0) {
            return err("reference.blowup_bound", "must be positive");
        }
        match r.kind {
            ReferenceKind::ExactLinear => {
                if !matches!(self.model, ModelSpec::Quadratic { .. }) || self.forcing != ForcingSpec::Zero {
                    return err("reference.kind", "exact_linear needs the quadratic model and zero forcing");
                }
            }
            ReferenceKind::Delayed => {
                if self.sweep.as_ref().and_then(|s| s.h).is_none() {
                    return err("reference.kind", "delayed needs a fixed sweep.h");
                }
            }
            ReferenceKind::Rk4 => {}
        }
        if self.compare.samples < 2 {
            return err("compare.samples", "need at least 2 samples");
        }
        if self.compare.component >= dim {
            return err("compare.component", format!("must be below the model dimension {dim}"));
        }
        Ok(())
    }
}
