//! Sustainability key variables: instantaneous circularity, fossil
//! extraction flow φ1, net-zero flow φ_nz and the net-zero level γ.

use serde::{Deserialize, Serialize};

use crate::network::{FleetParams, RateConstants};
use crate::simulate::Trajectory;

/// Fraction of the horizon, at the end, inspected when estimating γ.
pub const GAMMA_TAIL_FRACTION: f64 = 0.1;
/// φ_nz must stay below this fraction of its peak over the tail window.
pub const GAMMA_NET_ZERO_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CircularityInputs {
    /// Batch-transported finite-time-sustainable mass, t.
    pub m_fb: f64,
    /// Continuously transported finite-time-sustainable flow, t/d.
    pub mdot_fc: f64,
    /// Mass-to-flow conversion factor, d⁻¹.
    pub delta: f64,
    /// Functional-disposal multiplier, ≥ 1.
    pub mu_fb: f64,
    /// Batch criticality in (0, 1].
    pub c_fb: f64,
    /// Flow criticality, ≥ 1.
    pub c_fc: f64,
}

impl CircularityInputs {
    pub fn is_valid(&self) -> bool {
        self.delta > 0.0 && self.mu_fb >= 1.0 && self.c_fb > 0.0 && self.c_fb <= 1.0 && self.c_fc >= 1.0
    }
}

/// `λ = −(Δ·μ_fb·c_fb·m_fb + c_fc·ṁ_fc)`.
pub fn circularity_general(inp: &CircularityInputs) -> f64 {
    debug_assert!(inp.is_valid(), "circularity inputs out of domain: {inp:?}");
    -(inp.delta * inp.mu_fb * inp.c_fb * inp.m_fb + inp.c_fc * inp.mdot_fc)
}

/// Extraction from the fossil reserve, `a22·x2 + a33·x3`.
pub fn phi1(x2: f64, x3: f64, rates: &RateConstants) -> f64 {
    rates.a22 * x2 + rates.a33 * x3
}

/// Emitted minus captured CO₂ flow.
pub fn phi_nz(x2: f64, x3: f64, u: f64, rates: &RateConstants, fleet: &FleetParams) -> f64 {
    let nq = f64::from(fleet.n_q);
    let nh = f64::from(fleet.n_h);
    nq * (rates.a12 + rates.a42) * x2 + nh * (rates.a13 + rates.a43) * x3 - u
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct KeyVariableSeries {
    pub t: Vec<f64>,
    pub lambda: Vec<f64>,
    pub phi1: Vec<f64>,
    pub phi_nz: Vec<f64>,
    /// Tropospheric mass `x1 + x4` once net zero holds, if it does by the end.
    pub gamma: Option<f64>,
}

/// Pointwise key variables of a trajectory. The network circularity uses
/// `m_fb = 0` and `c_fc = 1`, so `λ = −(φ1 + φ_nz)`.
pub fn key_series(traj: &Trajectory, rates: &RateConstants, fleet: &FleetParams) -> KeyVariableSeries {
    key_series_with_criticality(traj, rates, fleet, 1.0)
}

/// As [`key_series`] with flow criticality `c_fc`: `λ = −c_fc·(φ1 + φ_nz)`.
pub fn key_series_with_criticality(
    traj: &Trajectory,
    rates: &RateConstants,
    fleet: &FleetParams,
    c_fc: f64,
) -> KeyVariableSeries {
    let phi1s: Vec<f64> = traj.x.iter().map(|x| phi1(x[1], x[2], rates)).collect();
    let phinz: Vec<f64> = traj
        .x
        .iter()
        .zip(&traj.u)
        .map(|(x, &u)| phi_nz(x[1], x[2], u, rates, fleet))
        .collect();
    let lambda = phi1s.iter().zip(&phinz).map(|(a, b)| -c_fc * (a + b)).collect();
    KeyVariableSeries {
        t: traj.t.clone(),
        lambda,
        gamma: estimate_gamma(traj, &phinz),
        phi1: phi1s,
        phi_nz: phinz,
    }
}

fn estimate_gamma(traj: &Trajectory, phinz: &[f64]) -> Option<f64> {
    let (first, last) = (*traj.t.first()?, *traj.t.last()?);
    let start = last - GAMMA_TAIL_FRACTION * (last - first);
    let peak = phinz.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tail: Vec<usize> = (0..traj.len()).filter(|&i| traj.t[i] >= start).collect();
    if tail.is_empty() || tail.iter().any(|&i| phinz[i].abs() > GAMMA_NET_ZERO_TOL * peak) {
        return None;
    }
    let sum: f64 = tail.iter().map(|&i| traj.x[i][0] + traj.x[i][3]).sum();
    Some(sum / tail.len() as f64)
}
