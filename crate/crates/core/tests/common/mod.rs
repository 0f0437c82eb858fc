#![allow(dead_code)]

use carbon_control::linalg::{eigenvalues, Matrix};
use carbon_control::network::{build_model, CompartmentalModel, FleetParams, OutputMode, RateConstants};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

pub const CO2_X0: [f64; 4] = [915.4, 210.0, 500.0, 1830.8];
pub const CO2_X1E: f64 = 637.2;
pub const RANDOM_X0: [f64; 4] = [1.0, 2.0, 3.0, 4.0];
pub const RANDOM_X1E: f64 = 3.73;

pub fn co2_fleet() -> FleetParams {
    FleetParams::new(5000, 10000).unwrap()
}

pub fn co2_model(mode: OutputMode) -> CompartmentalModel {
    let fleet = co2_fleet();
    build_model(RateConstants::tropospheric_co2(&fleet), fleet, mode).unwrap()
}

pub fn random_rate_matrix() -> Matrix {
    Matrix::from_rows(&[
        [-3.41, 95.82, 39.62, 5.63],
        [0.0, -128.85, 0.0, 0.0],
        [0.0, 0.0, -95.20, 0.0],
        [3.41, 38.57, 63.91, -5.63],
    ])
}

pub fn random_rate_model(mode: OutputMode) -> CompartmentalModel {
    let fleet = FleetParams::new(15, 7).unwrap();
    CompartmentalModel::from_state_matrix(random_rate_matrix(), fleet, mode).unwrap()
}

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut StdRng, rows: usize, cols: usize) -> Matrix {
    let data: Vec<f64> = (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Matrix::from_row_slice(rows, cols, &data)
}

/// Random matrix shifted so that its spectral abscissa is in [-2, -0.1].
pub fn random_stable(rng: &mut StdRng, n: usize) -> Matrix {
    let scale = rng.gen_range(0.5..3.0);
    random_stable_scaled(rng, n, scale)
}

/// As [`random_stable`] with entries drawn from `[-scale, scale]` before the shift.
pub fn random_stable_scaled(rng: &mut StdRng, n: usize, scale: f64) -> Matrix {
    let m = random_matrix(rng, n, n).scale(scale);
    let abscissa = eigenvalues(&m).unwrap().max_real();
    let target = -rng.gen_range(0.1..2.0);
    &m + &Matrix::identity(n).scale(target - abscissa)
}

/// Random symmetric positive definite matrix `LLᵀ + δI`.
pub fn random_spd(rng: &mut StdRng, n: usize) -> Matrix {
    let l = random_matrix(rng, n, n);
    &(&l * &l.transpose()) + &Matrix::identity(n).scale(0.1)
}

/// `e^{At}` by scaling and squaring of a truncated Taylor series.
pub fn expm(a: &Matrix, t: f64) -> Matrix {
    let n = a.nrows();
    let at = a.scale(t);
    let norm = at.norm_inf();
    let squarings = if norm > 0.5 { (norm / 0.5).log2().ceil() as u32 } else { 0 };
    let scaled = at.scale(0.5f64.powi(squarings as i32));
    let mut term = Matrix::identity(n);
    let mut sum = Matrix::identity(n);
    for k in 1..=30 {
        term = (&term * &scaled).scale(1.0 / f64::from(k));
        sum = &sum + &term;
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    sum
}

pub fn max_rel_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(1e-300))
        .fold(0.0, f64::max)
}
