//! Scenario files: everything needed to run one design + simulation study.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::control::{OutputFeedbackOptions, Weights};
use crate::linalg::Matrix;
use crate::network::{
    build_model, ppm_to_mass, CompartmentalModel, FleetParams, NetworkError, OutputMode, RateConstants, STATES,
};
use crate::simulate::{TemperatureParams, TimeGrid, CELSIUS_OFFSET, SECONDS_PER_DAY, STEFAN_BOLTZMANN};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed scenario: {0}")]
    Parse(String),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("no bundled scenario named {0:?}")]
    UnknownScenario(String),
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError::Invalid(msg.into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeedbackMode {
    Full,
    Output,
}

impl FeedbackMode {
    pub fn output_mode(self) -> OutputMode {
        match self {
            Self::Full => OutputMode::Full,
            Self::Output => OutputMode::FirstState,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    pub n_q: u32,
    pub n_h: u32,
    /// Per-unit rate constants, or fleet totals when `rates_are_fleet_totals`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rates: Option<RateConstants>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub rates_are_fleet_totals: bool,
    /// State matrix given directly, row by row.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<[[f64; STATES]; STATES]>,
}

/// Compartment volumes, km³.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Volumes {
    pub v1: f64,
    pub v4: f64,
}

/// Initial masses directly, or a tropospheric concentration plus fuel masses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mass: Option<[f64; STATES]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ppm: Option<f64>,
    /// Fuel masses `[x2, x3]`, t.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fuel: Option<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SetPointSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x1e: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ppm: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum R1Preset {
    Identity,
    /// `CᵀC` for the scenario's output matrix.
    Ctc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum R1Spec {
    Preset(R1Preset),
    Explicit(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightSpec {
    pub r1: R1Spec,
    pub r2: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<[f64; STATES]>,
}

/// Temperature block in everyday units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemperatureSpec {
    pub emissivity_normal: f64,
    pub t0_celsius: f64,
    pub te_celsius: f64,
    /// J K⁻¹ m⁻².
    pub heat_capacity: f64,
    /// W m⁻².
    pub solar_constant: f64,
    pub albedo: f64,
    /// km³/t.
    pub eta: f64,
}

impl TemperatureSpec {
    pub fn params(&self, v1: f64) -> TemperatureParams {
        TemperatureParams {
            heat_capacity: self.heat_capacity,
            solar: self.solar_constant * SECONDS_PER_DAY,
            albedo: self.albedo,
            sigma_day: STEFAN_BOLTZMANN * SECONDS_PER_DAY,
            emissivity_normal: self.emissivity_normal,
            eta: self.eta,
            v1,
            t0: self.t0_celsius + CELSIUS_OFFSET,
            t_e: self.te_celsius + CELSIUS_OFFSET,
        }
    }
}

fn default_stride() -> usize {
    1
}

fn default_c_fc() -> f64 {
    1.0
}

fn is_default_stride(v: &usize) -> bool {
    *v == 1
}

fn is_default_c_fc(v: &f64) -> bool {
    *v == 1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub feedback: FeedbackMode,
    /// Days.
    pub horizon: f64,
    /// Days.
    pub dt: f64,
    #[serde(default = "default_stride", skip_serializing_if = "is_default_stride")]
    pub record_every: usize,
    /// Flow criticality used for the network circularity.
    #[serde(default = "default_c_fc", skip_serializing_if = "is_default_c_fc")]
    pub c_fc: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    pub network: NetworkSpec,
    pub volumes: Volumes,
    pub initial: InitialSpec,
    pub setpoint: SetPointSpec,
    pub weights: WeightSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<TemperatureSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_feedback: Option<OutputFeedbackOptions>,
}

const BUNDLED: [(&str, &str); 6] = [
    ("random_rates_fullstate", include_str!("../scenarios/random_rates_fullstate.toml")),
    ("random_rates_output", include_str!("../scenarios/random_rates_output.toml")),
    ("co2_fullstate", include_str!("../scenarios/co2_fullstate.toml")),
    ("co2_output", include_str!("../scenarios/co2_output.toml")),
    ("co2_fullstate_temperature", include_str!("../scenarios/co2_fullstate_temperature.toml")),
    ("co2_output_temperature", include_str!("../scenarios/co2_output_temperature.toml")),
];

impl Scenario {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let s: Self = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario fields are always representable in TOML")
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn bundled_names() -> impl Iterator<Item = &'static str> {
        BUNDLED.iter().map(|(name, _)| *name)
    }

    pub fn bundled_source(name: &str) -> Option<&'static str> {
        BUNDLED.iter().find(|(n, _)| *n == name).map(|(_, text)| *text)
    }

    pub fn bundled(name: &str) -> Result<Self, ConfigError> {
        let text = Self::bundled_source(name).ok_or_else(|| ConfigError::UnknownScenario(name.into()))?;
        Self::from_toml_str(text)
    }

    pub fn all_bundled() -> Vec<Self> {
        Self::bundled_names()
            .map(|n| Self::bundled(n).expect("bundled scenarios are valid"))
            .collect()
    }

    // written so that NaN is rejected too
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.name.trim().is_empty() {
            return invalid("name must not be empty");
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return invalid(format!("horizon = {} must be positive", self.horizon));
        }
        if !(self.dt > 0.0 && self.dt <= self.horizon) {
            return invalid(format!("dt = {} must lie in (0, horizon]", self.dt));
        }
        if self.record_every == 0 {
            return invalid("record_every must be at least 1");
        }
        if !(self.c_fc >= 1.0) {
            return invalid("c_fc must be at least 1");
        }
        match (&self.network.rates, &self.network.matrix) {
            (Some(_), None) | (None, Some(_)) => {}
            _ => return invalid("give exactly one of network.rates or network.matrix"),
        }
        if !(self.volumes.v1 > 0.0 && self.volumes.v4 > 0.0) {
            return invalid("volumes must be positive");
        }
        let x0 = self.initial_state()?;
        if x0.iter().any(|v| !(*v >= 0.0)) {
            return invalid(format!("initial masses {x0:?} must be nonnegative"));
        }
        self.setpoint_mass()?;
        if !(self.weights.r2 > 0.0) {
            return invalid("weights.r2 must be positive");
        }
        if let R1Spec::Explicit(rows) = &self.weights.r1 {
            if rows.len() != STATES || rows.iter().any(|r| r.len() != STATES) {
                return invalid("explicit weights.r1 must be 4x4");
            }
        }
        Ok(())
    }

    pub fn initial_state(&self) -> Result<[f64; STATES], ConfigError> {
        match &self.initial {
            InitialSpec {
                mass: Some(m),
                ppm: None,
                fuel: None,
            } => Ok(*m),
            InitialSpec {
                mass: None,
                ppm: Some(ppm),
                fuel: Some([x2, x3]),
            } => Ok([
                ppm_to_mass(*ppm, self.volumes.v1),
                *x2,
                *x3,
                ppm_to_mass(*ppm, self.volumes.v4),
            ]),
            _ => invalid("initial needs either mass, or ppm together with fuel"),
        }
    }

    pub fn setpoint_mass(&self) -> Result<f64, ConfigError> {
        match (self.setpoint.x1e, self.setpoint.ppm) {
            (Some(x), None) => Ok(x),
            (None, Some(ppm)) => Ok(ppm_to_mass(ppm, self.volumes.v1)),
            _ => invalid("setpoint needs exactly one of x1e or ppm"),
        }
    }

    pub fn fleet(&self) -> Result<FleetParams, NetworkError> {
        FleetParams::new(self.network.n_q, self.network.n_h)
    }

    pub fn build_model(&self) -> Result<CompartmentalModel, NetworkError> {
        let fleet = self.fleet()?;
        let mode = self.feedback.output_mode();
        match (&self.network.rates, &self.network.matrix) {
            (Some(r), _) if self.network.rates_are_fleet_totals => {
                let rates = RateConstants::from_fleet_totals(
                    r.a41, r.a12, r.a13, r.a14, r.a42, r.a22, r.a43, r.a33, &fleet,
                );
                build_model(rates, fleet, mode)
            }
            (Some(r), _) => build_model(*r, fleet, mode),
            (None, Some(m)) => CompartmentalModel::from_state_matrix(Matrix::from_rows(m), fleet, mode),
            (None, None) => Err(NetworkError::StructureMismatch("no rates or matrix given".into())),
        }
    }

    /// Weights with `CᵀC` taken from `model`.
    pub fn weights(&self, model: &CompartmentalModel) -> Result<Weights, crate::control::ControlError> {
        let r1 = match &self.weights.r1 {
            R1Spec::Preset(R1Preset::Identity) => Matrix::identity(STATES),
            R1Spec::Preset(R1Preset::Ctc) => &model.c().transpose() * model.c(),
            R1Spec::Explicit(rows) => {
                let flat: Vec<f64> = rows.iter().flatten().copied().collect();
                Matrix::from_row_slice(STATES, STATES, &flat)
            }
        };
        let n = Matrix::column(&self.weights.n.unwrap_or([0.0; STATES]));
        Weights::new(r1, self.weights.r2, n)
    }

    pub fn temperature_params(&self) -> Option<TemperatureParams> {
        self.temperature.as_ref().map(|t| t.params(self.volumes.v1))
    }

    pub fn grid(&self) -> TimeGrid {
        TimeGrid::new(self.horizon, self.dt).with_stride(self.record_every)
    }

    pub fn output_feedback_options(&self) -> OutputFeedbackOptions {
        self.output_feedback.unwrap_or_default()
    }

    /// Directory for artifacts when none is given on the command line.
    pub fn output_dir(&self) -> PathBuf {
        self.output
            .clone()
            .unwrap_or_else(|| PathBuf::from("out").join(&self.name))
    }
}
