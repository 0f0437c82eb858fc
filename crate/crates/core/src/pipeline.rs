//! End-to-end run of a scenario: model, set-point, checks, design,
//! simulation, key variables and the a-posteriori verifications.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::control::{
    check_pair_observable, design_full_state, design_output_feedback, evaluate_cost, pbh_detectable,
    pbh_stabilizable, ControlError, ControllerDesign, Weights, PBH_TOL,
};
use crate::keyvars::{key_series_with_criticality, KeyVariableSeries};
use crate::linalg::{eigenvalues, Spectrum};
use crate::network::{compute_setpoint, CompartmentalModel, NetworkError, SetPoint, STATES};
use crate::output::{write_csv_file, CsvError};
use crate::scenario::{ConfigError, FeedbackMode, Scenario};
use crate::simulate::{
    check_nonnegative, settling_time, simulate_closed_loop, simulate_with_temperature, NegativeState, SimError,
    Trajectory, CELSIUS_OFFSET,
};

/// Band used for the reported settling times.
pub const SETTLING_BAND: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Step {
    BuildModel,
    SetPoint,
    Stabilizability,
    Detectability,
    Observability,
    Design,
    Simulation,
    WriteOutputs,
}

impl fmt::Display for Step {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::BuildModel => "building the state-space model",
            Self::SetPoint => "computing the set-point",
            Self::Stabilizability => "PBH stabilizability test of (A, B)",
            Self::Detectability => "PBH detectability test of (A, C)",
            Self::Observability => "observability test of (A, R1)",
            Self::Design => "controller design",
            Self::Simulation => "closed-loop simulation",
            Self::WriteOutputs => "writing outputs",
        })
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{step}: {source}")]
    Network { step: Step, source: NetworkError },
    #[error("{step}: {source}")]
    Control { step: Step, source: ControlError },
    #[error("{step}: {source}")]
    Simulation { step: Step, source: SimError },
    #[error("{step}: {path}: {message}")]
    Output { step: Step, path: PathBuf, message: String },
}

impl PipelineError {
    /// 1 configuration, 2 design, 3 simulation or output.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 1,
            Self::Network { .. } | Self::Control { .. } => 2,
            Self::Simulation { .. } | Self::Output { .. } => 3,
        }
    }

    pub fn step(&self) -> Option<Step> {
        match self {
            Self::Config(_) => None,
            Self::Network { step, .. }
            | Self::Control { step, .. }
            | Self::Simulation { step, .. }
            | Self::Output { step, .. } => Some(*step),
        }
    }
}

fn at_network(step: Step) -> impl FnOnce(NetworkError) -> PipelineError {
    move |source| PipelineError::Network { step, source }
}

fn at_control(step: Step) -> impl FnOnce(ControlError) -> PipelineError {
    move |source| PipelineError::Control { step, source }
}

/// Outcome of the synthesis half of the pipeline.
#[derive(Debug, Clone)]
pub struct Design {
    pub model: CompartmentalModel,
    pub setpoint: SetPoint,
    pub weights: Weights,
    pub open_loop: Spectrum,
    pub controller: ControllerDesign,
}

/// Builds the model and designs the controller. The set-point comes before
/// the PBH test so a zero θ is reported as the set-point condition it breaks.
pub fn design(scenario: &Scenario) -> Result<Design, PipelineError> {
    scenario.validate()?;
    let model = scenario.build_model().map_err(at_network(Step::BuildModel))?;
    let setpoint = compute_setpoint(&model, scenario.setpoint_mass()?).map_err(at_network(Step::SetPoint))?;
    let weights = scenario.weights(&model).map_err(at_control(Step::Design))?;
    let open_loop = eigenvalues(model.a()).map_err(|e| PipelineError::Control {
        step: Step::BuildModel,
        source: e.into(),
    })?;

    if !pbh_stabilizable(model.a(), model.b(), PBH_TOL).map_err(at_control(Step::Stabilizability))? {
        return Err(PipelineError::Control {
            step: Step::Stabilizability,
            source: ControlError::NotStabilizable,
        });
    }
    let controller = match scenario.feedback {
        FeedbackMode::Full => {
            if !check_pair_observable(model.a(), &weights.r1) {
                return Err(PipelineError::Control {
                    step: Step::Observability,
                    source: ControlError::NotObservable,
                });
            }
            design_full_state(&model, &weights)
        }
        FeedbackMode::Output => {
            if !pbh_detectable(model.a(), model.c(), PBH_TOL).map_err(at_control(Step::Detectability))? {
                return Err(PipelineError::Control {
                    step: Step::Detectability,
                    source: ControlError::NotDetectable,
                });
            }
            design_output_feedback(&model, &weights, &scenario.output_feedback_options())
        }
    }
    .map_err(at_control(Step::Design))?;

    Ok(Design {
        model,
        setpoint,
        weights,
        open_loop,
        controller,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub scenario: String,
    pub feedback: FeedbackMode,
    pub k: Vec<f64>,
    pub g: Option<Vec<f64>>,
    pub p: Vec<Vec<f64>>,
    pub riccati_residual: f64,
    pub residual_tolerance: f64,
    pub stationarity: f64,
    pub iterations: usize,
    pub open_loop_eigenvalues: Spectrum,
    pub closed_loop_eigenvalues: Spectrum,
    pub x0: [f64; STATES],
    pub setpoint: SetPoint,
    pub horizon: f64,
    pub dt: f64,
    pub samples: usize,
    /// Days for each state to stay within 1% of its initial distance from `x_e`.
    pub settling_times: [Option<f64>; STATES],
    pub u0: f64,
    pub lambda0: f64,
    pub phi1_0: f64,
    pub phi_nz0: f64,
    pub gamma: Option<f64>,
    /// Trapezoidal cost of the simulated run, when it converged.
    pub cost: Option<f64>,
    /// `½ x̃0ᵀ P x̃0`, the infinite-horizon cost of the designed gain.
    pub predicted_cost: f64,
    pub initial_emissivity: Option<f64>,
    pub final_temperature_celsius: Option<f64>,
    /// `T − T_e` at the final sample, K.
    pub final_translated_temperature: Option<f64>,
    pub nonnegative: bool,
    pub first_negative: Option<NegativeState>,
}

impl RunReport {
    pub fn passed(&self) -> bool {
        self.nonnegative
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

fn fmt_opt(v: Option<f64>, unit: &str) -> String {
    v.map_or_else(|| "-".into(), |v| format!("{v:.4}{unit}"))
}

fn fmt_vec(v: &[f64]) -> String {
    let items: Vec<String> = v.iter().map(|x| format!("{x:.4}")).collect();
    format!("[{}]", items.join(", "))
}

fn fmt_spectrum(s: &Spectrum) -> String {
    let items: Vec<String> = s
        .eigenvalues
        .iter()
        .map(|&(re, im)| {
            if im == 0.0 {
                format!("{re:.4}")
            } else {
                format!("{re:.4}{im:+.4}i")
            }
        })
        .collect();
    items.join(", ")
}

impl fmt::Display for RunReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "scenario            {} ({:?} feedback)", self.scenario, self.feedback)?;
        writeln!(f, "K                   {}", fmt_vec(&self.k))?;
        if let Some(g) = &self.g {
            writeln!(f, "G                   {}", fmt_vec(g))?;
        }
        writeln!(
            f,
            "Riccati residual    {:.3e} (tolerance {:.1e})",
            self.riccati_residual, self.residual_tolerance
        )?;
        if self.feedback == FeedbackMode::Output {
            writeln!(
                f,
                "stationarity        {:.3e} after {} iterations",
                self.stationarity, self.iterations
            )?;
        }
        writeln!(f, "open-loop eig       {}", fmt_spectrum(&self.open_loop_eigenvalues))?;
        writeln!(f, "closed-loop eig     {}", fmt_spectrum(&self.closed_loop_eigenvalues))?;
        writeln!(f, "x0 [t]              {}", fmt_vec(&self.x0))?;
        writeln!(f, "x_e [t]             {}", fmt_vec(&self.setpoint.x_e))?;
        writeln!(
            f,
            "horizon             {} d, dt {} d, {} samples",
            self.horizon, self.dt, self.samples
        )?;
        for (i, t) in self.settling_times.iter().enumerate() {
            writeln!(f, "x{} settles (1%)     {}", i + 1, fmt_opt(*t, " d"))?;
        }
        writeln!(f, "u(0)                {:.4} t/d", self.u0)?;
        writeln!(f, "lambda(0)           {:.4} t/d", self.lambda0)?;
        writeln!(f, "phi1(0)             {:.4} t/d", self.phi1_0)?;
        writeln!(f, "phi_nz(0)           {:.4} t/d", self.phi_nz0)?;
        writeln!(f, "gamma               {}", fmt_opt(self.gamma, " t"))?;
        writeln!(f, "cost (simulated)    {}", fmt_opt(self.cost, ""))?;
        writeln!(f, "cost (predicted)    {:.4}", self.predicted_cost)?;
        if self.initial_emissivity.is_some() {
            writeln!(f, "epsilon(0)          {}", fmt_opt(self.initial_emissivity, ""))?;
            writeln!(f, "final T             {}", fmt_opt(self.final_temperature_celsius, " degC"))?;
            writeln!(f, "final T - T_e       {}", fmt_opt(self.final_translated_temperature, " K"))?;
        }
        match &self.first_negative {
            None => writeln!(f, "nonnegativity       pass"),
            Some(v) => writeln!(f, "nonnegativity       FAIL: {v}"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub design: Design,
    pub trajectory: Trajectory,
    pub keys: KeyVariableSeries,
    pub report: RunReport,
}

pub fn run_scenario(scenario: &Scenario) -> Result<RunOutcome, PipelineError> {
    let design = design(scenario)?;
    let x0 = scenario.initial_state()?;
    let gain = design.controller.gain();
    let grid = scenario.grid();
    let temp = scenario.temperature_params();
    let simulated = match &temp {
        Some(tp) => simulate_with_temperature(&design.model, &gain, &x0, &design.setpoint, tp, &grid),
        None => simulate_closed_loop(&design.model, &gain, &x0, &design.setpoint, &grid),
    };
    let trajectory = simulated.map_err(|source| PipelineError::Simulation {
        step: Step::Simulation,
        source,
    })?;

    let keys = key_series_with_criticality(&trajectory, design.model.rates(), design.model.fleet(), scenario.c_fc);
    let first_negative = check_nonnegative(&trajectory).err();
    let x_e = design.setpoint.x_e;
    let settling_times: [Option<f64>; STATES] =
        std::array::from_fn(|i| settling_time(&trajectory, i, x_e[i], SETTLING_BAND).ok());
    let cost = evaluate_cost(&trajectory, &design.setpoint, &design.weights).ok();
    let x0_tilde: Vec<f64> = (0..STATES).map(|i| x0[i] - x_e[i]).collect();
    let predicted_cost = 0.5 * design.controller.cost_matrix().quad_form(&x0_tilde);
    let final_temperature = trajectory.temperature.as_ref().and_then(|t| t.last().copied());

    let c = &design.controller;
    let report = RunReport {
        scenario: scenario.name.clone(),
        feedback: scenario.feedback,
        k: c.k.clone(),
        g: c.g.clone(),
        p: c.p.clone(),
        riccati_residual: c.are_residual,
        residual_tolerance: c.residual_tolerance,
        stationarity: c.stationarity,
        iterations: c.iterations,
        open_loop_eigenvalues: design.open_loop.clone(),
        closed_loop_eigenvalues: c.closed_loop_spectrum.clone(),
        x0,
        setpoint: design.setpoint,
        horizon: scenario.horizon,
        dt: scenario.dt,
        samples: trajectory.len(),
        settling_times,
        u0: trajectory.u[0],
        lambda0: keys.lambda[0],
        phi1_0: keys.phi1[0],
        phi_nz0: keys.phi_nz[0],
        gamma: keys.gamma,
        cost,
        predicted_cost,
        initial_emissivity: trajectory.emissivity.as_ref().map(|e| e[0]),
        final_temperature_celsius: final_temperature.map(|t| t - CELSIUS_OFFSET),
        final_translated_temperature: final_temperature
            .zip(temp.as_ref())
            .map(|(t, tp)| t - tp.t_e),
        nonnegative: first_negative.is_none(),
        first_negative,
    };
    Ok(RunOutcome {
        design,
        trajectory,
        keys,
        report,
    })
}

fn output_error(path: &Path, message: impl ToString) -> PipelineError {
    PipelineError::Output {
        step: Step::WriteOutputs,
        path: path.to_path_buf(),
        message: message.to_string(),
    }
}

/// Writes `trajectory.csv`, `report.json` and `report.txt` into `dir`.
pub fn write_artifacts(outcome: &RunOutcome, dir: &Path) -> Result<(), PipelineError> {
    std::fs::create_dir_all(dir).map_err(|e| output_error(dir, e))?;
    let csv_path = dir.join("trajectory.csv");
    write_csv_file(&outcome.trajectory, &outcome.keys, &csv_path).map_err(|e: CsvError| output_error(&csv_path, e))?;
    let json_path = dir.join("report.json");
    std::fs::write(&json_path, outcome.report.to_json() + "\n").map_err(|e| output_error(&json_path, e))?;
    let txt_path = dir.join("report.txt");
    std::fs::write(&txt_path, outcome.report.to_string()).map_err(|e| output_error(&txt_path, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::RateConstants;

    #[test]
    fn degenerate_theta_is_a_setpoint_error() {
        let mut s = Scenario::bundled("co2_fullstate").unwrap();
        // a22 = n_q(a12 + a42) with fleet totals 0.5 + 0.5
        s.network.rates = Some(RateConstants {
            a22: 1.0,
            ..s.network.rates.unwrap()
        });
        let err = design(&s).unwrap_err();
        assert_eq!(err.step(), Some(Step::SetPoint));
        assert_eq!(err.exit_code(), 2);
        assert!(matches!(
            err,
            PipelineError::Network {
                source: NetworkError::DegenerateTheta { theta: "theta1", .. },
                ..
            }
        ));
        assert!(err.to_string().contains("set-point"));
    }

    #[test]
    fn invalid_scenario_exit_code() {
        let mut s = Scenario::bundled("co2_fullstate").unwrap();
        s.horizon = -1.0;
        assert_eq!(design(&s).unwrap_err().exit_code(), 1);
    }

    #[test]
    fn oversized_step_exit_code() {
        let mut s = Scenario::bundled("random_rates_fullstate").unwrap();
        s.dt = 0.1;
        let err = run_scenario(&s).unwrap_err();
        assert_eq!(err.step(), Some(Step::Simulation));
        assert_eq!(err.exit_code(), 3);
    }
}
