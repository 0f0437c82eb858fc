//! Closed-loop simulation in translated coordinates `x̃ = x − x_e`, optionally
//! coupled with the tropospheric temperature balance, plus the a-posteriori
//! checks run on the resulting trajectories.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::control::closed_loop;
use crate::linalg::{eigenvalues, LinalgError, Matrix, HURWITZ_MARGIN};
use crate::network::{CompartmentalModel, SetPoint, STATES};

/// Stefan–Boltzmann constant, W m⁻² K⁻⁴.
pub const STEFAN_BOLTZMANN: f64 = 5.67e-8;
pub const SECONDS_PER_DAY: f64 = 86_400.0;
pub const CELSIUS_OFFSET: f64 = 273.15;

/// RK4 is rejected when `dt · max|λ(Â)|` exceeds this.
pub const RK4_STABILITY_MARGIN: f64 = 0.5;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum SimError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("closed loop is not Hurwitz (max real part {max_real:e})")]
    NotHurwitz { max_real: f64 },
    #[error("step {dt} too large: dt·max|λ| = {product:.3} > {RK4_STABILITY_MARGIN}")]
    StepTooLarge { dt: f64, product: f64 },
    #[error("invalid time grid: {0}")]
    InvalidGrid(String),
    #[error("invalid temperature parameters: {0}")]
    InvalidTemperature(String),
    #[error("emissivity {value} left (0, 1] at t = {time} d")]
    EmissivityOutOfRange { time: f64, value: f64 },
    #[error("state x{} never settles within the horizon", .index + 1)]
    NeverSettles { index: usize },
    #[error("gain has {got} entries, model has {expected} outputs")]
    GainShape { got: usize, expected: usize },
}

/// Uniform integration grid. Every `record_every`-th step is stored, plus
/// the final one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub horizon: f64,
    pub dt: f64,
    pub record_every: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, dt: f64) -> Self {
        Self {
            horizon,
            dt,
            record_every: 1,
        }
    }

    pub fn with_stride(mut self, record_every: usize) -> Self {
        self.record_every = record_every;
        self
    }

    fn steps(&self) -> Result<usize, SimError> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(SimError::InvalidGrid(format!("dt = {} must be positive", self.dt)));
        }
        if !(self.horizon >= self.dt && self.horizon.is_finite()) {
            return Err(SimError::InvalidGrid(format!(
                "horizon = {} must be at least dt = {}",
                self.horizon, self.dt
            )));
        }
        if self.record_every == 0 {
            return Err(SimError::InvalidGrid("record_every must be at least 1".into()));
        }
        Ok((self.horizon / self.dt).round() as usize)
    }

    fn records(&self, step: usize, last: usize) -> bool {
        step.is_multiple_of(self.record_every) || step == last
    }
}

/// Parameters of the tropospheric temperature balance, with time in days.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TemperatureParams {
    /// Effective heat capacity, J K⁻¹ m⁻².
    pub heat_capacity: f64,
    /// Incoming solar energy, J d⁻¹ m⁻².
    pub solar: f64,
    pub albedo: f64,
    /// Stefan–Boltzmann constant per day, J d⁻¹ m⁻² K⁻⁴.
    pub sigma_day: f64,
    /// Emissivity with no CO₂ disturbance.
    pub emissivity_normal: f64,
    /// km³/t.
    pub eta: f64,
    /// Volume of the urban compartment, km³.
    pub v1: f64,
    /// Initial temperature, K.
    pub t0: f64,
    /// Reference temperature for the translated output, K.
    pub t_e: f64,
}

impl TemperatureParams {
    /// Values of the urban CO₂ case with the given normal emissivity.
    pub fn urban_co2(emissivity_normal: f64) -> Self {
        Self {
            heat_capacity: 8e8,
            solar: 1367.6 * SECONDS_PER_DAY,
            albedo: 0.3,
            sigma_day: STEFAN_BOLTZMANN * SECONDS_PER_DAY,
            emissivity_normal,
            eta: 2.36e-4,
            v1: 1.18,
            t0: 15.2 + CELSIUS_OFFSET,
            t_e: 13.9 + CELSIUS_OFFSET,
        }
    }

    // written so that NaN is rejected too
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |msg: &str| Err(SimError::InvalidTemperature(msg.to_string()));
        if !(self.heat_capacity > 0.0) {
            return bad("heat capacity must be positive");
        }
        if !(self.solar >= 0.0) {
            return bad("solar input must be nonnegative");
        }
        if !(0.0..=1.0).contains(&self.albedo) {
            return bad("albedo must lie in [0, 1]");
        }
        if !(self.sigma_day > 0.0 && self.v1 > 0.0 && self.eta >= 0.0 && self.t0 > 0.0) {
            return bad("sigma, V1, eta and T0 must be positive");
        }
        Ok(())
    }

    /// `ε = ε_n − η·x1/V1`.
    pub fn emissivity(&self, x1: f64) -> f64 {
        self.emissivity_normal - self.eta * x1 / self.v1
    }

    /// Temperature derivative in K/d.
    pub fn temperature_rate(&self, temperature: f64, emissivity: f64) -> f64 {
        (self.solar * (1.0 - self.albedo) - emissivity * self.sigma_day * temperature.powi(4))
            / self.heat_capacity
    }

    /// Radiative equilibrium `(S(1−α)/(εσ))^¼` for a held `x1`.
    pub fn equilibrium_temperature(&self, x1: f64) -> f64 {
        (self.solar * (1.0 - self.albedo) / (self.emissivity(x1) * self.sigma_day)).powf(0.25)
    }

    /// Normal emissivity that puts the radiative equilibrium at `t_eq` when
    /// `x1` is held at `x1`.
    pub fn emissivity_for_equilibrium(&self, t_eq: f64, x1: f64) -> f64 {
        self.solar * (1.0 - self.albedo) / (self.sigma_day * t_eq.powi(4)) + self.eta * x1 / self.v1
    }
}

/// Sampled closed-loop response in original coordinates.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    /// Days.
    pub t: Vec<f64>,
    /// Tonnes.
    pub x: Vec<[f64; STATES]>,
    /// Carbon capture, t/d.
    pub u: Vec<f64>,
    pub y: Vec<Vec<f64>>,
    /// Kelvin.
    pub temperature: Option<Vec<f64>>,
    pub emissivity: Option<Vec<f64>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn state(&self, index: usize) -> impl Iterator<Item = f64> + '_ {
        self.x.iter().map(move |x| x[index])
    }

    /// `T − T_e` per sample.
    pub fn translated_temperature(&self, t_e: f64) -> Option<Vec<f64>> {
        self.temperature
            .as_ref()
            .map(|ts| ts.iter().map(|t| t - t_e).collect())
    }
}

/// First sample at which a state went negative.
#[derive(Debug, Clone, Copy, Error, PartialEq, Serialize, Deserialize)]
#[error("x{} = {value} < 0 at t = {time} d", .index + 1)]
pub struct NegativeState {
    pub time: f64,
    /// Zero-based state index.
    pub index: usize,
    pub value: f64,
}

fn rk4_step<const N: usize>(mut f: impl FnMut(&[f64; N]) -> [f64; N], y: &[f64; N], dt: f64) -> [f64; N] {
    let k1 = f(y);
    let k2 = f(&std::array::from_fn(|i| y[i] + 0.5 * dt * k1[i]));
    let k3 = f(&std::array::from_fn(|i| y[i] + 0.5 * dt * k2[i]));
    let k4 = f(&std::array::from_fn(|i| y[i] + dt * k3[i]));
    std::array::from_fn(|i| y[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
}

/// State of `x' = A x` after `steps` RK4 steps of size `dt`, for any dimension.
pub fn rk4_linear(a: &Matrix, x0: &[f64], dt: f64, steps: usize) -> Vec<f64> {
    let f = |x: &[f64]| a.mul_vec(x);
    let axpy = |x: &[f64], k: &[f64], h: f64| -> Vec<f64> { x.iter().zip(k).map(|(x, k)| x + h * k).collect() };
    let mut x = x0.to_vec();
    for _ in 0..steps {
        let k1 = f(&x);
        let k2 = f(&axpy(&x, &k1, 0.5 * dt));
        let k3 = f(&axpy(&x, &k2, 0.5 * dt));
        let k4 = f(&axpy(&x, &k3, dt));
        for i in 0..x.len() {
            x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    x
}

struct ClosedLoop {
    ahat: [[f64; STATES]; STATES],
    /// `K·C`, the feedback acting on the translated state.
    kc: [f64; STATES],
    c: Matrix,
}

impl ClosedLoop {
    fn prepare(model: &CompartmentalModel, k: &Matrix, dt: f64) -> Result<Self, SimError> {
        if k.nrows() != 1 || k.ncols() != model.outputs() {
            return Err(SimError::GainShape {
                got: k.nrows() * k.ncols(),
                expected: model.outputs(),
            });
        }
        let ahat = closed_loop(model, k);
        let spectrum = eigenvalues(&ahat)?;
        let max_real = spectrum.max_real();
        if max_real >= -HURWITZ_MARGIN {
            return Err(SimError::NotHurwitz { max_real });
        }
        let product = dt * spectrum.max_modulus();
        if product > RK4_STABILITY_MARGIN {
            return Err(SimError::StepTooLarge { dt, product });
        }
        let kc = k * model.c();
        Ok(Self {
            ahat: std::array::from_fn(|i| std::array::from_fn(|j| ahat[(i, j)])),
            kc: std::array::from_fn(|j| kc[(0, j)]),
            c: model.c().clone(),
        })
    }

    fn derivative(&self, xt: &[f64]) -> [f64; STATES] {
        std::array::from_fn(|i| (0..STATES).map(|j| self.ahat[i][j] * xt[j]).sum())
    }

    fn record(&self, traj: &mut Trajectory, t: f64, xt: &[f64], sp: &SetPoint) {
        let x: [f64; STATES] = std::array::from_fn(|i| xt[i] + sp.x_e[i]);
        // u = −K(y − C x_e) + v_e = −K C x̃ + v_e
        let u = -(0..STATES).map(|j| self.kc[j] * xt[j]).sum::<f64>() + sp.v_e;
        traj.t.push(t);
        traj.y.push(self.c.mul_vec(&x));
        traj.x.push(x);
        traj.u.push(u);
    }
}

fn translate(x0: &[f64; STATES], sp: &SetPoint) -> [f64; STATES] {
    std::array::from_fn(|i| x0[i] - sp.x_e[i])
}

/// Integrates `x̃' = (A − BKC) x̃` with classical RK4 and maps back to
/// `x = x̃ + x_e`, `u = −K(y − C x_e) + v_e`.
pub fn simulate_closed_loop(
    model: &CompartmentalModel,
    k: &Matrix,
    x0: &[f64; STATES],
    setpoint: &SetPoint,
    grid: &TimeGrid,
) -> Result<Trajectory, SimError> {
    let steps = grid.steps()?;
    let cl = ClosedLoop::prepare(model, k, grid.dt)?;
    let mut traj = Trajectory::default();
    let mut xt = translate(x0, setpoint);
    cl.record(&mut traj, 0.0, &xt, setpoint);
    for step in 1..=steps {
        xt = rk4_step(|y| cl.derivative(y), &xt, grid.dt);
        if grid.records(step, steps) {
            cl.record(&mut traj, step as f64 * grid.dt, &xt, setpoint);
        }
    }
    Ok(traj)
}

/// As [`simulate_closed_loop`], with the temperature integrated alongside.
/// Emissivity follows the untranslated `x1` at every RK4 stage; the mass
/// states do not feel the temperature.
pub fn simulate_with_temperature(
    model: &CompartmentalModel,
    k: &Matrix,
    x0: &[f64; STATES],
    setpoint: &SetPoint,
    temp: &TemperatureParams,
    grid: &TimeGrid,
) -> Result<Trajectory, SimError> {
    temp.validate()?;
    let steps = grid.steps()?;
    let cl = ClosedLoop::prepare(model, k, grid.dt)?;
    let x1e = setpoint.x_e[0];

    let emissivity_at = |time: f64, x1: f64| -> Result<f64, SimError> {
        let eps = temp.emissivity(x1);
        if eps > 0.0 && eps <= 1.0 {
            Ok(eps)
        } else {
            Err(SimError::EmissivityOutOfRange { time, value: eps })
        }
    };

    let mut traj = Trajectory {
        temperature: Some(Vec::new()),
        emissivity: Some(Vec::new()),
        ..Trajectory::default()
    };
    let push_thermal = |traj: &mut Trajectory, temperature: f64, eps: f64| {
        traj.temperature.get_or_insert_with(Vec::new).push(temperature);
        traj.emissivity.get_or_insert_with(Vec::new).push(eps);
    };

    let xt0 = translate(x0, setpoint);
    let mut z = [xt0[0], xt0[1], xt0[2], xt0[3], temp.t0];
    let eps0 = emissivity_at(0.0, z[0] + x1e)?;
    cl.record(&mut traj, 0.0, &z[..STATES], setpoint);
    push_thermal(&mut traj, z[4], eps0);

    for step in 1..=steps {
        let t_prev = (step - 1) as f64 * grid.dt;
        let mut stage_error = None;
        let next = rk4_step(
            |y: &[f64; 5]| {
                let dx = cl.derivative(&y[..STATES]);
                let eps = match emissivity_at(t_prev, y[0] + x1e) {
                    Ok(e) => e,
                    Err(e) => {
                        stage_error.get_or_insert(e);
                        temp.emissivity(y[0] + x1e)
                    }
                };
                [dx[0], dx[1], dx[2], dx[3], temp.temperature_rate(y[4], eps)]
            },
            &z,
            grid.dt,
        );
        if let Some(e) = stage_error {
            return Err(e);
        }
        z = next;
        let t = step as f64 * grid.dt;
        let eps = emissivity_at(t, z[0] + x1e)?;
        if grid.records(step, steps) {
            cl.record(&mut traj, t, &z[..STATES], setpoint);
            push_thermal(&mut traj, z[4], eps);
        }
    }
    Ok(traj)
}

/// Passes iff every sample satisfies `x_i ≥ −1e-9 · (running max of x_i)`.
pub fn check_nonnegative(traj: &Trajectory) -> Result<(), NegativeState> {
    let mut running_max = [f64::NEG_INFINITY; STATES];
    for (t, x) in traj.t.iter().zip(&traj.x) {
        for i in 0..STATES {
            running_max[i] = running_max[i].max(x[i]);
            if x[i] < -1e-9 * running_max[i] {
                return Err(NegativeState {
                    time: *t,
                    index: i,
                    value: x[i],
                });
            }
        }
    }
    Ok(())
}

/// Earliest time after which `|x_i − target| ≤ band · |x_i(0) − target|`
/// holds for the rest of the trajectory.
pub fn settling_time(traj: &Trajectory, index: usize, target: f64, band: f64) -> Result<f64, SimError> {
    if traj.is_empty() {
        return Err(SimError::NeverSettles { index });
    }
    let tol = band * (traj.x[0][index] - target).abs();
    let last_outside = traj
        .x
        .iter()
        .rposition(|x| (x[index] - target).abs() > tol);
    match last_outside {
        None => Ok(traj.t[0]),
        Some(i) if i + 1 < traj.len() => Ok(traj.t[i + 1]),
        Some(_) => Err(SimError::NeverSettles { index }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{build_model, compute_setpoint, FleetParams, OutputMode, RateConstants};

    fn co2() -> CompartmentalModel {
        let fleet = FleetParams::new(5000, 10000).unwrap();
        build_model(RateConstants::tropospheric_co2(&fleet), fleet, OutputMode::FirstState).unwrap()
    }

    #[test]
    fn equilibrium_start_stays_put() {
        let m = co2();
        let sp = compute_setpoint(&m, 637.2).unwrap();
        let traj =
            simulate_closed_loop(&m, &Matrix::row(&[-0.8]), &sp.x_e, &sp, &TimeGrid::new(10.0, 0.1))
                .unwrap();
        assert_eq!(traj.len(), 101);
        assert!(traj.x.iter().all(|x| x == &sp.x_e));
        assert!(traj.u.iter().all(|&u| u == 0.0));
    }

    #[test]
    fn open_loop_is_rejected() {
        let m = co2();
        let sp = compute_setpoint(&m, 637.2).unwrap();
        let err = simulate_closed_loop(&m, &Matrix::row(&[0.0]), &sp.x_e, &sp, &TimeGrid::new(1.0, 0.1));
        assert!(matches!(err, Err(SimError::NotHurwitz { .. })));
    }

    #[test]
    fn large_step_is_rejected() {
        let m = co2();
        let sp = compute_setpoint(&m, 637.2).unwrap();
        let err = simulate_closed_loop(&m, &Matrix::row(&[-0.8]), &sp.x_e, &sp, &TimeGrid::new(10.0, 5.0));
        assert!(matches!(err, Err(SimError::StepTooLarge { .. })));
    }

    #[test]
    fn stride_keeps_final_sample() {
        let m = co2();
        let sp = compute_setpoint(&m, 637.2).unwrap();
        let grid = TimeGrid::new(1.0, 0.1).with_stride(3);
        let traj = simulate_closed_loop(&m, &Matrix::row(&[-0.8]), &[700.0, 1.0, 1.0, 1300.0], &sp, &grid)
            .unwrap();
        let t: Vec<f64> = traj.t.iter().map(|t| (t * 10.0).round()).collect();
        assert_eq!(t, vec![0.0, 3.0, 6.0, 9.0, 10.0]);
    }

    #[test]
    fn planted_violation() {
        let mut traj = Trajectory::default();
        for i in 0..=10 {
            traj.t.push(f64::from(i));
            let x2 = if i == 5 { -1.0 } else { 1.0 };
            traj.x.push([1.0, x2, 1.0, 1.0]);
            traj.u.push(0.0);
        }
        let v = check_nonnegative(&traj).unwrap_err();
        assert_eq!((v.time, v.index, v.value), (5.0, 1, -1.0));
        traj.x[5][1] = -1e-12;
        assert!(check_nonnegative(&traj).is_ok());
    }

    #[test]
    fn settling_examples() {
        let mut traj = Trajectory::default();
        for i in 0..5 {
            traj.t.push(f64::from(i));
            traj.x.push([2.0, 0.0, 0.0, 0.0]);
        }
        assert_eq!(settling_time(&traj, 0, 2.0, 0.01).unwrap(), 0.0);
        traj.x = vec![[10.0; 4], [5.0; 4], [0.5; 4], [0.01; 4], [0.0; 4]];
        assert_eq!(settling_time(&traj, 0, 0.0, 0.01).unwrap(), 3.0);
        traj.x[4] = [1.0; 4];
        assert!(matches!(
            settling_time(&traj, 0, 0.0, 0.01),
            Err(SimError::NeverSettles { index: 0 })
        ));
    }

    #[test]
    fn radiative_cooling_without_sun() {
        let m = co2();
        let sp = compute_setpoint(&m, 637.2).unwrap();
        let mut temp = TemperatureParams::urban_co2(0.748);
        temp.solar = 0.0;
        temp.albedo = 0.9;
        let traj = simulate_with_temperature(
            &m,
            &Matrix::row(&[-0.8]),
            &[915.4, 210.0, 500.0, 1830.8],
            &sp,
            &temp,
            &TimeGrid::new(500.0, 0.1).with_stride(10),
        )
        .unwrap();
        let ts = traj.temperature.unwrap();
        assert!(ts.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn emissivity_range_is_enforced() {
        let m = co2();
        let sp = compute_setpoint(&m, 637.2).unwrap();
        let temp = TemperatureParams::urban_co2(0.1);
        let err = simulate_with_temperature(
            &m,
            &Matrix::row(&[-0.8]),
            &[915.4, 210.0, 500.0, 1830.8],
            &sp,
            &temp,
            &TimeGrid::new(10.0, 0.1),
        );
        assert!(matches!(err, Err(SimError::EmissivityOutOfRange { time, .. }) if time == 0.0));
    }
}
