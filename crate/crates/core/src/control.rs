//! LQR synthesis for the carbon network: PBH checks, full-state design from
//! the algebraic Riccati equation, and static output feedback.
//!
//! For output feedback `u = −K y`, the closed-loop cost matrix `P` of a
//! stabilizing `K` satisfies
//!
//! ```text
//! AᵀP + PA + R1 + r2·GᵀG − r2⁻¹(PB + N)(BᵀP + Nᵀ) = 0,
//! G = KC − r2⁻¹(BᵀP + Nᵀ)
//! ```
//!
//! and the gain is chosen so that `G·Cᵀ = 0`, i.e. the part of the
//! full-information optimal gain that the measurements can express. The
//! condition does not depend on the initial state. It is solved by a damped
//! Newton iteration whose Jacobian comes from Lyapunov sensitivity equations.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{
    are_residual, eigenvalues, lu_solve, pbh_rank_test, rank, solve_are, solve_lyapunov,
    LinalgError, Matrix, Spectrum, HURWITZ_MARGIN,
};
use crate::network::{CompartmentalModel, SetPoint, STATES};
use crate::simulate::Trajectory;

/// Eigenvalues with real part ≥ −this are "unstable" for the PBH tests.
pub const PBH_TOL: f64 = 1e-9;
const OBSERVABILITY_RANK_TOL: f64 = 1e-9;
const PSD_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ControlError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("pair (A, B) is not stabilizable")]
    NotStabilizable,
    #[error("pair (A, C) is not detectable")]
    NotDetectable,
    #[error("pair (A, R1) is not observable")]
    NotObservable,
    #[error("invalid weights: {0}")]
    InvalidWeights(String),
    #[error("full-state design needs C = I (got {0} outputs)")]
    NotFullState(usize),
    #[error("no stabilizing static output gain found on the seed grid")]
    NoStabilizingSeed,
    #[error("output-feedback iteration stalled after {iterations} iterations (stationarity {stationarity:e})")]
    StalledIteration { iterations: usize, stationarity: f64 },
    #[error("Riccati residual {residual:e} exceeds tolerance {tolerance:e}")]
    ResidualTooLarge { residual: f64, tolerance: f64 },
    #[error("trajectory has not converged: final deviation {final_deviation:e} > 1% of initial {initial_deviation:e}")]
    NotConverged {
        final_deviation: f64,
        initial_deviation: f64,
    },
    #[error("trajectory is empty or lacks control samples")]
    EmptyTrajectory,
}

/// Weights of the quadratic cost: `R1` on the state, `r2` on the input and
/// the cross term `N`.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights {
    pub r1: Matrix,
    pub r2: f64,
    pub n: Matrix,
}

impl Weights {
    pub fn new(r1: Matrix, r2: f64, n: Matrix) -> Result<Self, ControlError> {
        let w = Self { r1, r2, n };
        w.validate()?;
        Ok(w)
    }

    /// No cross term.
    pub fn uncoupled(r1: Matrix, r2: f64) -> Result<Self, ControlError> {
        let n = Matrix::zeros(r1.nrows(), 1);
        Self::new(r1, r2, n)
    }

    pub fn has_cross_term(&self) -> bool {
        self.n.max_abs() != 0.0
    }

    /// Checks `r2 > 0`, `R1 = R1ᵀ` and `[[R1, N], [Nᵀ, r2]] ⪰ 0`.
    pub fn validate(&self) -> Result<(), ControlError> {
        let n = self.r1.nrows();
        if !self.r1.is_square() || self.n.nrows() != n || self.n.ncols() != 1 {
            return Err(ControlError::InvalidWeights(format!(
                "R1 is {}x{}, N is {}x{}",
                self.r1.nrows(),
                self.r1.ncols(),
                self.n.nrows(),
                self.n.ncols()
            )));
        }
        if !(self.r2 > 0.0 && self.r2.is_finite()) {
            return Err(ControlError::InvalidWeights(format!(
                "r2 = {} must be positive",
                self.r2
            )));
        }
        if !self.r1.is_finite() || !self.n.is_finite() {
            return Err(ControlError::InvalidWeights("non-finite weight".into()));
        }
        let scale = 1.0 + self.r1.norm_inf();
        if self.r1.asymmetry() > 1e-12 * scale {
            return Err(ControlError::InvalidWeights("R1 is not symmetric".into()));
        }
        let mut block = Matrix::zeros(n + 1, n + 1);
        block.set_block(0, 0, &self.r1);
        block.set_block(0, n, &self.n);
        block.set_block(n, 0, &self.n.transpose());
        block[(n, n)] = self.r2;
        let min = eigenvalues(&block.symmetrized())?
            .iter()
            .map(|z| z.re)
            .fold(f64::INFINITY, f64::min);
        if min < -PSD_TOL * (scale + self.r2) {
            return Err(ControlError::InvalidWeights(format!(
                "[[R1, N], [N', r2]] is not positive semidefinite (eigenvalue {min:e})"
            )));
        }
        Ok(())
    }
}

/// Result of a controller synthesis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerDesign {
    /// Gain acting on `y − C·x_e`, one row.
    pub k: Vec<f64>,
    /// Cost matrix, row-major rows.
    pub p: Vec<Vec<f64>>,
    /// Output-feedback auxiliary row `G`; absent for full-state designs.
    pub g: Option<Vec<f64>>,
    pub are_residual: f64,
    pub residual_tolerance: f64,
    /// `‖G·Cᵀ‖∞` for output feedback, zero for full state.
    pub stationarity: f64,
    pub iterations: usize,
    pub closed_loop_spectrum: Spectrum,
}

impl ControllerDesign {
    pub fn gain(&self) -> Matrix {
        Matrix::row(&self.k)
    }

    pub fn cost_matrix(&self) -> Matrix {
        Matrix::from_rows(&self.p)
    }
}

pub fn pbh_stabilizable(a: &Matrix, b: &Matrix, tol: f64) -> Result<bool, ControlError> {
    Ok(pbh_rank_test(a, b, tol)?)
}

/// Dual PBH test on `(Aᵀ, Cᵀ)`.
pub fn pbh_detectable(a: &Matrix, c: &Matrix, tol: f64) -> Result<bool, ControlError> {
    Ok(pbh_rank_test(&a.transpose(), &c.transpose(), tol)?)
}

/// Rank test on `[R1; R1·A; …; R1·Aⁿ⁻¹]`.
pub fn check_pair_observable(a: &Matrix, r1: &Matrix) -> bool {
    let n = a.nrows();
    let mut block = r1.clone();
    let mut stacked = r1.clone();
    for _ in 1..n {
        block = &block * a;
        stacked = stacked.vstack(&block);
    }
    rank(&stacked, OBSERVABILITY_RANK_TOL) == n
}

/// `A − B·K·C`. Panics if the shapes do not chain.
pub fn closed_loop(model: &CompartmentalModel, k: &Matrix) -> Matrix {
    model.a() - &(&(model.b() * k) * model.c())
}

pub fn design_full_state(
    model: &CompartmentalModel,
    weights: &Weights,
) -> Result<ControllerDesign, ControlError> {
    weights.validate()?;
    if model.c() != &Matrix::identity(STATES) {
        return Err(ControlError::NotFullState(model.outputs()));
    }
    if weights.has_cross_term() {
        return Err(ControlError::InvalidWeights(
            "full-state design takes no cross term N".into(),
        ));
    }
    let (a, b) = (model.a(), model.b());
    if !pbh_stabilizable(a, b, PBH_TOL)? {
        return Err(ControlError::NotStabilizable);
    }
    if !check_pair_observable(a, &weights.r1) {
        return Err(ControlError::NotObservable);
    }
    let p = solve_are(a, b, &weights.r1, weights.r2)?;
    let k = (&b.transpose() * &p).scale(1.0 / weights.r2);
    let s = (b * &b.transpose()).scale(1.0 / weights.r2);
    let residual = are_residual(a, &s, &weights.r1, &p).norm_inf();
    let tolerance = 1e-8 * (1.0 + weights.r1.norm_inf());
    if residual > tolerance {
        return Err(ControlError::ResidualTooLarge {
            residual,
            tolerance,
        });
    }
    let spectrum = eigenvalues(&closed_loop(model, &k))?;
    Ok(ControllerDesign {
        k: k.as_slice().to_vec(),
        p: p.to_rows(),
        g: None,
        are_residual: residual,
        residual_tolerance: tolerance,
        stationarity: 0.0,
        iterations: 0,
        closed_loop_spectrum: spectrum,
    })
}

/// Iteration controls for [`design_output_feedback`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OutputFeedbackOptions {
    /// Bound on the entries of the output-feedback Riccati residual.
    pub residual_tol: f64,
    /// Bound on `‖G·Cᵀ‖∞`.
    pub grad_tol: f64,
    pub max_iter: usize,
    /// Smallest Newton step fraction before the iteration is declared stalled.
    pub damping_floor: f64,
}

impl Default for OutputFeedbackOptions {
    fn default() -> Self {
        Self {
            residual_tol: 1e-7,
            grad_tol: 1e-10,
            max_iter: 500,
            damping_floor: 2f64.powi(-20),
        }
    }
}

/// Everything derived from one candidate gain.
struct GainEval {
    p: Matrix,
    g: Matrix,
    closed: Matrix,
    /// `G·Cᵀ`, a row of length l.
    stationarity: Matrix,
}

impl GainEval {
    fn norm(&self) -> f64 {
        self.stationarity.max_abs()
    }
}

fn evaluate_gain(model: &CompartmentalModel, w: &Weights, k: &Matrix) -> Option<GainEval> {
    let closed = closed_loop(model, k);
    let kc = k * model.c();
    let q = &w.r1 + &(&kc.transpose() * &kc).scale(w.r2)
        - &w.n * &kc
        - &kc.transpose() * &w.n.transpose();
    // solve_lyapunov rejects non-Hurwitz closed loops
    let p = solve_lyapunov(&closed, &q.symmetrized()).ok()?;
    let g = &kc - &(&(&model.b().transpose() * &p) + &w.n.transpose()).scale(1.0 / w.r2);
    let stationarity = &g * &model.c().transpose();
    Some(GainEval {
        p,
        g,
        closed,
        stationarity,
    })
}

/// Left-hand side of the output-feedback Riccati equation.
pub fn output_feedback_residual(model: &CompartmentalModel, w: &Weights, p: &Matrix, g: &Matrix) -> Matrix {
    let a = model.a();
    let b = model.b();
    let pb_n = &(p * b) + &w.n;
    &a.transpose() * p + p * a + &w.r1 + (&g.transpose() * g).scale(w.r2)
        - (&pb_n * &pb_n.transpose()).scale(1.0 / w.r2)
}

/// Newton direction solving `F(K + Δ) ≈ 0` with `F(K) = G(K)·Cᵀ`.
fn newton_step(model: &CompartmentalModel, w: &Weights, eval: &GainEval) -> Option<Matrix> {
    let l = model.outputs();
    let c = model.c();
    let mut jac = Matrix::zeros(l, l);
    for j in 0..l {
        let mut delta = Matrix::zeros(1, l);
        delta[(0, j)] = 1.0;
        let dc = &delta * c;
        let forcing = (&(&dc.transpose() * &eval.g) + &(&eval.g.transpose() * &dc)).scale(w.r2);
        let dp = solve_lyapunov(&eval.closed, &forcing).ok()?;
        let dg = &dc - &(&model.b().transpose() * &dp).scale(1.0 / w.r2);
        let df = &dg * &c.transpose();
        for i in 0..l {
            jac[(j, i)] = df[(0, i)];
        }
    }
    // Δ·J = −F  ⇔  Jᵀ Δᵀ = −Fᵀ
    let step = lu_solve(&jac.transpose(), &(-&eval.stationarity).transpose()).ok()?;
    Some(step.transpose())
}

/// Fallback direction: move to the least-squares gain reproducing `r2⁻¹(BᵀP+Nᵀ)` on the outputs.
fn projection_step(model: &CompartmentalModel, eval: &GainEval) -> Option<Matrix> {
    let c = model.c();
    let cct = c * &c.transpose();
    let step = lu_solve(&cct, &(-&eval.stationarity).transpose()).ok()?;
    Some(step.transpose())
}

fn seed_gain(model: &CompartmentalModel, w: &Weights) -> Option<(Matrix, GainEval)> {
    let l = model.outputs();
    let mut best: Option<(Matrix, GainEval)> = None;
    for sign in [-1.0, 1.0] {
        for e in -30..=30 {
            let k = Matrix::row(&vec![sign * 10f64.powf(f64::from(e) / 10.0); l]);
            if let Some(eval) = evaluate_gain(model, w, &k) {
                if best.as_ref().is_none_or(|(_, b)| eval.norm() < b.norm()) {
                    best = Some((k, eval));
                }
            }
        }
        if best.is_some() {
            break;
        }
    }
    best
}

pub fn design_output_feedback(
    model: &CompartmentalModel,
    weights: &Weights,
    opts: &OutputFeedbackOptions,
) -> Result<ControllerDesign, ControlError> {
    weights.validate()?;
    let (a, b, c) = (model.a(), model.b(), model.c());
    if !pbh_stabilizable(a, b, PBH_TOL)? {
        return Err(ControlError::NotStabilizable);
    }
    if !pbh_detectable(a, c, PBH_TOL)? {
        return Err(ControlError::NotDetectable);
    }
    let (mut k, mut eval) = seed_gain(model, weights).ok_or(ControlError::NoStabilizingSeed)?;
    let mut iterations = 0;
    while eval.norm() > opts.grad_tol {
        if iterations >= opts.max_iter {
            return Err(ControlError::StalledIteration {
                iterations,
                stationarity: eval.norm(),
            });
        }
        iterations += 1;
        let mut accepted = None;
        for direction in [newton_step(model, weights, &eval), projection_step(model, &eval)]
            .into_iter()
            .flatten()
        {
            let mut alpha = 1.0;
            while alpha >= opts.damping_floor {
                let candidate = &k + &direction.scale(alpha);
                if let Some(next) = evaluate_gain(model, weights, &candidate) {
                    if next.norm() < eval.norm() {
                        accepted = Some((candidate, next));
                        break;
                    }
                }
                alpha *= 0.5;
            }
            if accepted.is_some() {
                break;
            }
        }
        match accepted {
            Some((next_k, next_eval)) => {
                k = next_k;
                eval = next_eval;
            }
            None => {
                return Err(ControlError::StalledIteration {
                    iterations,
                    stationarity: eval.norm(),
                })
            }
        }
    }
    let residual = output_feedback_residual(model, weights, &eval.p, &eval.g).max_abs();
    if residual > opts.residual_tol {
        return Err(ControlError::ResidualTooLarge {
            residual,
            tolerance: opts.residual_tol,
        });
    }
    let spectrum = eigenvalues(&eval.closed)?;
    debug_assert!(spectrum.is_hurwitz(HURWITZ_MARGIN));
    Ok(ControllerDesign {
        k: k.as_slice().to_vec(),
        p: eval.p.to_rows(),
        g: Some(eval.g.as_slice().to_vec()),
        are_residual: residual,
        residual_tolerance: opts.residual_tol,
        stationarity: eval.norm(),
        iterations,
        closed_loop_spectrum: spectrum,
    })
}

/// `½∫[(x−x_e)ᵀR1(x−x_e) + r2(u−v_e)² + 2(x−x_e)ᵀN(u−v_e)] dt` by the
/// trapezoidal rule over the recorded samples.
pub fn evaluate_cost(
    trajectory: &Trajectory,
    setpoint: &SetPoint,
    weights: &Weights,
) -> Result<f64, ControlError> {
    let len = trajectory.len();
    if len == 0 || trajectory.u.len() != len {
        return Err(ControlError::EmptyTrajectory);
    }
    let deviation = |x: &[f64; STATES]| -> [f64; STATES] {
        std::array::from_fn(|i| x[i] - setpoint.x_e[i])
    };
    let inf_norm = |v: &[f64; STATES]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let initial = inf_norm(&deviation(&trajectory.x[0]));
    let last = inf_norm(&deviation(&trajectory.x[len - 1]));
    if last > 0.01 * initial {
        return Err(ControlError::NotConverged {
            final_deviation: last,
            initial_deviation: initial,
        });
    }
    let integrand: Vec<f64> = trajectory
        .x
        .iter()
        .zip(&trajectory.u)
        .map(|(x, &u)| {
            let dx = deviation(x);
            let du = u - setpoint.v_e;
            let cross: f64 = (0..STATES).map(|i| dx[i] * weights.n[(i, 0)]).sum();
            weights.r1.quad_form(&dx) + weights.r2 * du * du + 2.0 * cross * du
        })
        .collect();
    let integral: f64 = trajectory
        .t
        .windows(2)
        .zip(integrand.windows(2))
        .map(|(t, f)| 0.5 * (t[1] - t[0]) * (f[0] + f[1]))
        .sum();
    Ok(0.5 * integral)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{build_model, FleetParams, OutputMode, RateConstants};

    #[test]
    fn pbh_examples() {
        let a = Matrix::diag(&[1.0, -1.0]);
        assert!(!pbh_stabilizable(&a, &Matrix::column(&[0.0, 1.0]), PBH_TOL).unwrap());
        assert!(!pbh_detectable(&a, &Matrix::row(&[0.0, 1.0]), PBH_TOL).unwrap());
        assert!(pbh_detectable(&a, &Matrix::row(&[1.0, 0.0]), PBH_TOL).unwrap());
    }

    #[test]
    fn observability_examples() {
        let a = Matrix::from_rows(&[[0.0, 1.0], [-2.0, -3.0]]);
        assert!(check_pair_observable(&a, &Matrix::identity(2)));
        assert!(!check_pair_observable(&a, &Matrix::zeros(2, 2)));
    }

    #[test]
    fn weights_validation() {
        assert!(Weights::uncoupled(Matrix::identity(4), 0.0).is_err());
        assert!(Weights::uncoupled(Matrix::diag(&[1.0, -1.0]), 1.0).is_err());
        // [[1, 2], [2, 1]] is indefinite
        assert!(Weights::new(Matrix::from_rows(&[[1.0]]), 1.0, Matrix::column(&[2.0])).is_err());
        assert!(Weights::new(Matrix::from_rows(&[[1.0]]), 1.0, Matrix::column(&[0.5])).is_ok());
    }

    #[test]
    fn closed_loop_with_zero_gain_is_open_loop() {
        let fleet = FleetParams::new(5000, 10000).unwrap();
        let m = build_model(RateConstants::tropospheric_co2(&fleet), fleet, OutputMode::FirstState)
            .unwrap();
        assert_eq!(closed_loop(&m, &Matrix::row(&[0.0])), *m.a());
        let ahat = closed_loop(&m, &Matrix::row(&[-0.837]));
        assert!((ahat[(0, 0)] + 1.037).abs() < 1e-12);
    }

    #[test]
    fn scalar_cost_matches_closed_form() {
        // a = -1, b = -1, r1 = 1, r2 = 1: p = √2 − 1 and k = −p.
        let p = solve_are(
            &Matrix::from_rows(&[[-1.0]]),
            &Matrix::from_rows(&[[-1.0]]),
            &Matrix::from_rows(&[[1.0]]),
            1.0,
        )
        .unwrap();
        let expected = 2f64.sqrt() - 1.0;
        assert!((p[(0, 0)] - expected).abs() < 1e-12);
        let k = -p[(0, 0)];
        assert!((k + expected).abs() < 1e-12);
    }
}
