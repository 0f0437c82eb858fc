//! The four-state carbon network: urban troposphere (x1), vehicle fuel (x2),
//! heater fuel (x3) and surrounding troposphere (x4), with carbon capture as
//! the single input acting on x1.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::Matrix;

/// Number of mass states.
pub const STATES: usize = 4;

/// Density of CO₂ used for ppm ↔ tonnes conversions, in t/km³.
pub const CO2_DENSITY_T_PER_KM3: f64 = 1.8e6;

/// θ values closer to zero than this are treated as degenerate.
pub const THETA_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum NetworkError {
    #[error("rate constant {name} = {value} is negative or not finite")]
    InvalidRate { name: &'static str, value: f64 },
    #[error("fleet sizes must be at least 1 (n_q = {n_q}, n_h = {n_h})")]
    InvalidFleet { n_q: u32, n_h: u32 },
    #[error("{theta} = {value:e} is zero: set-point condition violated and (A, B) is not stabilizable")]
    DegenerateTheta { theta: &'static str, value: f64 },
    #[error("a14 = {0} must be positive to place x4 at equilibrium")]
    ZeroRate(f64),
    #[error("set-point mass x1e = {0} must be nonnegative")]
    NegativeSetPoint(f64),
    #[error("state matrix does not have the network structure: {0}")]
    StructureMismatch(String),
}

/// Per-unit rate constants in day⁻¹. `a12`, `a42` are per vehicle and
/// `a13`, `a43` per heater.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateConstants {
    pub a41: f64,
    pub a12: f64,
    pub a13: f64,
    pub a14: f64,
    pub a42: f64,
    pub a22: f64,
    pub a43: f64,
    pub a33: f64,
}

impl RateConstants {
    /// Rates where the combustion constants are given for the whole fleet
    /// (e.g. `0.5 / n_q` is passed as `0.5`) and divided at construction.
    #[allow(clippy::too_many_arguments)]
    pub fn from_fleet_totals(
        a41: f64,
        a12_total: f64,
        a13_total: f64,
        a14: f64,
        a42_total: f64,
        a22: f64,
        a43_total: f64,
        a33: f64,
        fleet: &FleetParams,
    ) -> Self {
        let nq = f64::from(fleet.n_q);
        let nh = f64::from(fleet.n_h);
        Self {
            a41,
            a12: a12_total / nq,
            a13: a13_total / nh,
            a14,
            a42: a42_total / nq,
            a22,
            a43: a43_total / nh,
            a33,
        }
    }

    /// Rate table of the tropospheric CO₂ case.
    pub fn tropospheric_co2(fleet: &FleetParams) -> Self {
        Self::from_fleet_totals(0.2, 0.5, 0.5, 0.1, 0.5, 0.3, 0.5, 0.6, fleet)
    }

    pub fn zero() -> Self {
        Self {
            a41: 0.0,
            a12: 0.0,
            a13: 0.0,
            a14: 0.0,
            a42: 0.0,
            a22: 0.0,
            a43: 0.0,
            a33: 0.0,
        }
    }

    fn named(&self) -> [(&'static str, f64); 8] {
        [
            ("a41", self.a41),
            ("a12", self.a12),
            ("a13", self.a13),
            ("a14", self.a14),
            ("a42", self.a42),
            ("a22", self.a22),
            ("a43", self.a43),
            ("a33", self.a33),
        ]
    }

    pub fn validate(&self) -> Result<(), NetworkError> {
        for (name, value) in self.named() {
            if !(value.is_finite() && value >= 0.0) {
                return Err(NetworkError::InvalidRate { name, value });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FleetParams {
    /// Vehicles with combustion engines.
    pub n_q: u32,
    /// House heaters.
    pub n_h: u32,
}

impl FleetParams {
    pub fn new(n_q: u32, n_h: u32) -> Result<Self, NetworkError> {
        let f = Self { n_q, n_h };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<(), NetworkError> {
        if self.n_q < 1 || self.n_h < 1 {
            return Err(NetworkError::InvalidFleet {
                n_q: self.n_q,
                n_h: self.n_h,
            });
        }
        Ok(())
    }
}

/// Compartment `c^k_{i,j}`: a node when `i == j`, an arc from `i` to `j` otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Compartment {
    pub k: u8,
    pub i: u8,
    pub j: u8,
}

impl Compartment {
    pub fn is_node(&self) -> bool {
        self.i == self.j
    }

    pub fn label(&self) -> String {
        format!("c{}_{},{}", self.k, self.i, self.j)
    }
}

/// Bookkeeping of the compartment set. Nodes: urban troposphere (1),
/// vehicles (2), heaters (3), surrounding troposphere (4), carbon capture (5)
/// and the fossil reserve (6).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkTopology {
    pub compartments: Vec<Compartment>,
}

impl NetworkTopology {
    pub fn carbon_network() -> Self {
        const SET: [(u8, u8, u8); 15] = [
            (1, 1, 1),
            (2, 2, 2),
            (3, 3, 3),
            (4, 4, 4),
            (5, 5, 5),
            (6, 6, 6),
            (7, 2, 1),
            (8, 3, 1),
            (9, 4, 1),
            (10, 1, 4),
            (11, 1, 5),
            (12, 2, 4),
            (13, 3, 4),
            (14, 6, 2),
            (15, 6, 3),
        ];
        Self {
            compartments: SET.iter().map(|&(k, i, j)| Compartment { k, i, j }).collect(),
        }
    }

    pub fn compartment_count(&self) -> usize {
        self.compartments.len()
    }

    pub fn node_count(&self) -> usize {
        self.compartments.iter().filter(|c| c.is_node()).count()
    }

    pub fn arc_count(&self) -> usize {
        self.compartments.iter().filter(|c| !c.is_node()).count()
    }

    pub fn labels(&self) -> Vec<String> {
        self.compartments.iter().map(Compartment::label).collect()
    }
}

/// Which states are measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputMode {
    /// `C = I₄`.
    Full,
    /// `C = [1, 0, 0, 0]`.
    FirstState,
}

impl OutputMode {
    pub fn output_matrix(self) -> Matrix {
        match self {
            OutputMode::Full => Matrix::identity(STATES),
            OutputMode::FirstState => Matrix::row(&[1.0, 0.0, 0.0, 0.0]),
        }
    }
}

/// `ẋ = Ax + Bu`, `y = Cx` for the carbon network.
#[derive(Debug, Clone, PartialEq)]
pub struct CompartmentalModel {
    a: Matrix,
    b: Matrix,
    c: Matrix,
    theta1: f64,
    theta2: f64,
    rates: RateConstants,
    fleet: FleetParams,
}

pub fn theta1(rates: &RateConstants, fleet: &FleetParams) -> f64 {
    -f64::from(fleet.n_q) * (rates.a12 + rates.a42) + rates.a22
}

pub fn theta2(rates: &RateConstants, fleet: &FleetParams) -> f64 {
    -f64::from(fleet.n_h) * (rates.a13 + rates.a43) + rates.a33
}

fn input_matrix() -> Matrix {
    Matrix::column(&[-1.0, 0.0, 0.0, 0.0])
}

/// Assembles the state-space model from rate constants.
pub fn build_model(
    rates: RateConstants,
    fleet: FleetParams,
    output_mode: OutputMode,
) -> Result<CompartmentalModel, NetworkError> {
    rates.validate()?;
    fleet.validate()?;
    let nq = f64::from(fleet.n_q);
    let nh = f64::from(fleet.n_h);
    let th1 = theta1(&rates, &fleet);
    let th2 = theta2(&rates, &fleet);
    let a = Matrix::from_rows(&[
        [-rates.a41, nq * rates.a12, nh * rates.a13, rates.a14],
        [0.0, th1, 0.0, 0.0],
        [0.0, 0.0, th2, 0.0],
        [rates.a41, nq * rates.a42, nh * rates.a43, -rates.a14],
    ]);
    Ok(CompartmentalModel {
        a,
        b: input_matrix(),
        c: output_mode.output_matrix(),
        theta1: th1,
        theta2: th2,
        rates,
        fleet,
    })
}

impl CompartmentalModel {
    /// Wraps a printed state matrix, recovering the per-unit rates from its
    /// entries. The matrix is kept verbatim.
    pub fn from_state_matrix(
        a: Matrix,
        fleet: FleetParams,
        output_mode: OutputMode,
    ) -> Result<Self, NetworkError> {
        fleet.validate()?;
        if a.nrows() != STATES || a.ncols() != STATES || !a.is_finite() {
            return Err(NetworkError::StructureMismatch(format!(
                "expected a finite 4x4 matrix, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        let tol = 1e-12 * a.max_abs().max(1.0);
        for &(i, j) in &[(1, 0), (1, 2), (1, 3), (2, 0), (2, 1), (2, 3)] {
            if a[(i, j)].abs() > tol {
                return Err(NetworkError::StructureMismatch(format!(
                    "entry ({}, {}) = {} must be zero",
                    i + 1,
                    j + 1,
                    a[(i, j)]
                )));
            }
        }
        if (a[(0, 0)] + a[(3, 0)]).abs() > tol || (a[(0, 3)] + a[(3, 3)]).abs() > tol {
            return Err(NetworkError::StructureMismatch(
                "exchange between x1 and x4 does not conserve mass".into(),
            ));
        }
        let nq = f64::from(fleet.n_q);
        let nh = f64::from(fleet.n_h);
        let rates = RateConstants {
            a41: a[(3, 0)],
            a12: a[(0, 1)] / nq,
            a13: a[(0, 2)] / nh,
            a14: a[(0, 3)],
            a42: a[(3, 1)] / nq,
            a22: a[(1, 1)] + a[(0, 1)] + a[(3, 1)],
            a43: a[(3, 2)] / nh,
            a33: a[(2, 2)] + a[(0, 2)] + a[(3, 2)],
        };
        rates.validate()?;
        Ok(Self {
            theta1: a[(1, 1)],
            theta2: a[(2, 2)],
            a,
            b: input_matrix(),
            c: output_mode.output_matrix(),
            rates,
            fleet,
        })
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn b(&self) -> &Matrix {
        &self.b
    }

    pub fn c(&self) -> &Matrix {
        &self.c
    }

    pub fn theta1(&self) -> f64 {
        self.theta1
    }

    pub fn theta2(&self) -> f64 {
        self.theta2
    }

    pub fn rates(&self) -> &RateConstants {
        &self.rates
    }

    pub fn fleet(&self) -> &FleetParams {
        &self.fleet
    }

    /// Number of measured outputs.
    pub fn outputs(&self) -> usize {
        self.c.nrows()
    }

    /// Same dynamics with a different measurement matrix.
    pub fn with_output_matrix(&self, c: Matrix) -> Self {
        assert_eq!(c.ncols(), STATES);
        Self { c, ..self.clone() }
    }

    pub fn with_output_mode(&self, mode: OutputMode) -> Self {
        self.with_output_matrix(mode.output_matrix())
    }
}

/// Equilibrium state and input of the regulator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SetPoint {
    pub x_e: [f64; STATES],
    pub v_e: f64,
}

/// `x_e = [x1e, 0, 0, (a41/a14)·x1e]`, `v_e = 0`.
#[allow(clippy::neg_cmp_op_on_partial_ord)]
pub fn compute_setpoint(model: &CompartmentalModel, x1e: f64) -> Result<SetPoint, NetworkError> {
    if model.theta1.abs() <= THETA_TOL {
        return Err(NetworkError::DegenerateTheta {
            theta: "theta1",
            value: model.theta1,
        });
    }
    if model.theta2.abs() <= THETA_TOL {
        return Err(NetworkError::DegenerateTheta {
            theta: "theta2",
            value: model.theta2,
        });
    }
    let a14 = model.rates.a14;
    if a14 <= 0.0 {
        return Err(NetworkError::ZeroRate(a14));
    }
    if !(x1e >= 0.0) {
        return Err(NetworkError::NegativeSetPoint(x1e));
    }
    let x4e = model.rates.a41 / a14 * x1e;
    Ok(SetPoint {
        x_e: [x1e, 0.0, 0.0, x4e],
        v_e: 0.0,
    })
}

/// Tonnes of CO₂ in `volume_km3` at concentration `ppm`.
pub fn ppm_to_mass(ppm: f64, volume_km3: f64) -> f64 {
    ppm * 1e-6 * CO2_DENSITY_T_PER_KM3 * volume_km3
}

pub fn mass_to_ppm(mass_t: f64, volume_km3: f64) -> f64 {
    mass_t / (1e-6 * CO2_DENSITY_T_PER_KM3 * volume_km3)
}
