//! Continuous-time Lyapunov and algebraic Riccati equations, and the PBH
//! rank test they both depend on.

use super::decomp::{column_basis, complex_rank, Lu};
use super::eigen::eigenvalues;
use super::{LinalgError, Matrix};

/// Eigenvalues with real part at or above `-HURWITZ_MARGIN` are not stable.
pub const HURWITZ_MARGIN: f64 = 1e-12;

/// Relative tolerance of the rank decisions inside the PBH test.
pub const PBH_RANK_TOL: f64 = 1e-9;

const SIGN_MAX_ITER: usize = 100;
const KLEINMAN_MAX_STEPS: usize = 4;

/// PBH test: `rank [λI − A, B] = n` for every eigenvalue of `A` whose real
/// part is at least `-tol`.
pub fn pbh_rank_test(a: &Matrix, b: &Matrix, tol: f64) -> Result<bool, LinalgError> {
    let n = a.nrows();
    if !a.is_square() || b.nrows() != n {
        return Err(LinalgError::DimensionMismatch(format!(
            "A is {}x{}, B is {}x{}",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    let spectrum = eigenvalues(a)?;
    for lambda in spectrum.iter().filter(|l| l.re >= -tol) {
        let re = (&Matrix::identity(n).scale(lambda.re) - a).hstack(b);
        let im = Matrix::identity(n)
            .scale(lambda.im)
            .hstack(&Matrix::zeros(n, b.ncols()));
        if complex_rank(&re, &im, PBH_RANK_TOL) < n {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Solves `FᵀP + PF + Q = 0` for Hurwitz `F` by Kronecker vectorization.
pub fn solve_lyapunov(f: &Matrix, q: &Matrix) -> Result<Matrix, LinalgError> {
    if !f.is_square() || !q.is_square() || f.nrows() != q.nrows() {
        return Err(LinalgError::DimensionMismatch(format!(
            "F is {}x{}, Q is {}x{}",
            f.nrows(),
            f.ncols(),
            q.nrows(),
            q.ncols()
        )));
    }
    let spectrum = eigenvalues(f)?;
    let max_real = spectrum.max_real();
    if max_real >= -HURWITZ_MARGIN {
        return Err(LinalgError::NotHurwitz { max_real });
    }
    let n = f.nrows();
    let ft = f.transpose();
    let eye = Matrix::identity(n);
    let system = eye.kron(&ft) + ft.kron(&eye);
    // column-major vec
    let mut rhs = Matrix::zeros(n * n, 1);
    for j in 0..n {
        for i in 0..n {
            rhs[(i + j * n, 0)] = -q[(i, j)];
        }
    }
    let lu = Lu::factor(&system)?;
    let mut x = lu.solve(&rhs)?;
    // one step of iterative refinement
    let r = &rhs - &(&system * &x);
    x = x + lu.solve(&r)?;
    let mut p = Matrix::zeros(n, n);
    for j in 0..n {
        for i in 0..n {
            p[(i, j)] = x[(i + j * n, 0)];
        }
    }
    Ok(p.symmetrized())
}

/// `AᵀP + PA + R1 − PSP`.
pub fn are_residual(a: &Matrix, s: &Matrix, r1: &Matrix, p: &Matrix) -> Matrix {
    let at = a.transpose();
    &at * p + p * a + r1 - &(p * s) * p
}

/// Stabilizing solution of `AᵀP + PA + R1 − PSP = 0`, `S = BBᵀ/r2`.
///
/// The stable invariant subspace `[X1; X2]` of the Hamiltonian
/// `[[A, −S], [−R1, −Aᵀ]]` is read off the matrix sign function, giving
/// `P = X2 X1⁻¹`. A few Newton–Kleinman steps then polish the result.
pub fn solve_are(a: &Matrix, b: &Matrix, r1: &Matrix, r2: f64) -> Result<Matrix, LinalgError> {
    let n = a.nrows();
    if !a.is_square() || b.nrows() != n || r1.nrows() != n || !r1.is_square() {
        return Err(LinalgError::DimensionMismatch(
            "solve_are expects A n×n, B n×m, R1 n×n".into(),
        ));
    }
    if r2 <= 0.0 || !r2.is_finite() {
        return Err(LinalgError::InvalidArgument(format!(
            "r2 must be positive, got {r2}"
        )));
    }
    if !pbh_rank_test(a, b, HURWITZ_MARGIN.max(1e-9))? {
        return Err(LinalgError::NotStabilizable);
    }
    let s = (b * &b.transpose()).scale(1.0 / r2);
    let mut h = Matrix::zeros(2 * n, 2 * n);
    h.set_block(0, 0, a);
    h.set_block(0, n, &-&s);
    h.set_block(n, 0, &-r1);
    h.set_block(n, n, &-&a.transpose());

    let w = matrix_sign(&h)?;
    let projector = &Matrix::identity(2 * n) - &w;
    let basis = column_basis(&projector, n)?;
    let x1 = basis.block(0, 0, n, n);
    let x2 = basis.block(n, 0, n, n);
    let pt = Lu::factor(&x1.transpose())
        .map_err(|e| LinalgError::IllConditionedSubspace(format!("X1 is singular: {e}")))?
        .solve(&x2.transpose())?;
    let mut p = pt.transpose().symmetrized();

    let r1_scale = 1.0 + r1.norm_inf();
    let mut res = are_residual(a, &s, r1, &p).norm_inf();
    for _ in 0..KLEINMAN_MAX_STEPS {
        if res <= 1e-14 * r1_scale {
            break;
        }
        let closed = a - &(&s * &p);
        let q = r1 + &(&(&p * &s) * &p);
        let Ok(next) = solve_lyapunov(&closed, &q) else {
            break;
        };
        let next_res = are_residual(a, &s, r1, &next).norm_inf();
        if next_res >= res {
            break;
        }
        p = next;
        res = next_res;
    }
    let closed = a - &(&s * &p);
    let max_real = eigenvalues(&closed)?.max_real();
    if max_real >= -HURWITZ_MARGIN {
        return Err(LinalgError::IllConditionedSubspace(format!(
            "closed loop A - SP is not Hurwitz (max real part {max_real:e})"
        )));
    }
    Ok(p)
}

/// Matrix sign function by the determinant-scaled Newton iteration.
fn matrix_sign(h: &Matrix) -> Result<Matrix, LinalgError> {
    let dim = h.nrows() as f64;
    let mut z = h.clone();
    let mut scaling = true;
    for _ in 0..SIGN_MAX_ITER {
        let lu = Lu::factor(&z).map_err(|_| {
            LinalgError::IllConditionedSubspace(
                "Hamiltonian has eigenvalues on the imaginary axis".into(),
            )
        })?;
        let zinv = lu.solve(&Matrix::identity(z.nrows()))?;
        let mu = if scaling {
            lu.determinant().abs().powf(-1.0 / dim)
        } else {
            1.0
        };
        let next = (z.scale(mu) + zinv.scale(1.0 / mu)).scale(0.5);
        let change = (&next - &z).norm_one() / next.norm_one();
        z = next;
        if change < 1e-2 {
            scaling = false;
        }
        if change < 1e-13 {
            return Ok(z);
        }
    }
    Err(LinalgError::NoConvergence {
        found: 0,
        total: h.nrows(),
    })
}
