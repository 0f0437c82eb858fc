use super::{LinalgError, Matrix};

/// Relative pivot threshold below which a matrix is declared singular.
pub const PIVOT_TOL: f64 = 1e-12;

/// LU factorization with partial pivoting, `PA = LU` packed in one matrix.
#[derive(Debug, Clone)]
pub struct Lu {
    lu: Matrix,
    perm: Vec<usize>,
    sign: f64,
}

impl Lu {
    pub fn factor(a: &Matrix) -> Result<Self, LinalgError> {
        if !a.is_square() {
            return Err(LinalgError::NotSquare {
                rows: a.nrows(),
                cols: a.ncols(),
            });
        }
        let n = a.nrows();
        let threshold = PIVOT_TOL * a.norm_inf();
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut sign = 1.0;
        for k in 0..n {
            let (p, pivot) = (k..n)
                .map(|i| (i, lu[(i, k)].abs()))
                .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            if pivot <= threshold || pivot == 0.0 {
                return Err(LinalgError::SingularMatrix { pivot, column: k });
            }
            if p != k {
                for j in 0..n {
                    let tmp = lu[(k, j)];
                    lu[(k, j)] = lu[(p, j)];
                    lu[(p, j)] = tmp;
                }
                perm.swap(k, p);
                sign = -sign;
            }
            let d = lu[(k, k)];
            for i in k + 1..n {
                let f = lu[(i, k)] / d;
                lu[(i, k)] = f;
                if f != 0.0 {
                    for j in k + 1..n {
                        lu[(i, j)] -= f * lu[(k, j)];
                    }
                }
            }
        }
        Ok(Self { lu, perm, sign })
    }

    pub fn solve(&self, b: &Matrix) -> Result<Matrix, LinalgError> {
        let n = self.lu.nrows();
        if b.nrows() != n {
            return Err(LinalgError::DimensionMismatch(format!(
                "rhs has {} rows, system has {n}",
                b.nrows()
            )));
        }
        let mut x = Matrix::zeros(n, b.ncols());
        for c in 0..b.ncols() {
            let mut y: Vec<f64> = self.perm.iter().map(|&p| b[(p, c)]).collect();
            for i in 0..n {
                let s: f64 = (0..i).map(|k| self.lu[(i, k)] * y[k]).sum();
                y[i] -= s;
            }
            for i in (0..n).rev() {
                let s: f64 = (i + 1..n).map(|k| self.lu[(i, k)] * y[k]).sum();
                y[i] = (y[i] - s) / self.lu[(i, i)];
            }
            for i in 0..n {
                x[(i, c)] = y[i];
            }
        }
        Ok(x)
    }

    pub fn determinant(&self) -> f64 {
        (0..self.lu.nrows()).map(|i| self.lu[(i, i)]).product::<f64>() * self.sign
    }
}

/// Solves `A X = b` by LU with partial pivoting.
pub fn lu_solve(a: &Matrix, b: &Matrix) -> Result<Matrix, LinalgError> {
    Lu::factor(a)?.solve(b)
}

pub fn inverse(a: &Matrix) -> Result<Matrix, LinalgError> {
    lu_solve(a, &Matrix::identity(a.nrows()))
}

/// Determinant, returning 0 for matrices the LU factorization calls singular.
pub fn determinant(a: &Matrix) -> f64 {
    match Lu::factor(a) {
        Ok(lu) => lu.determinant(),
        Err(_) => 0.0,
    }
}

/// Numerical rank: pivots larger than `tol * ‖M‖∞` under complete pivoting.
pub fn rank(m: &Matrix, tol: f64) -> usize {
    let threshold = tol * m.norm_inf();
    let mut w = m.clone();
    let (rows, cols) = (w.nrows(), w.ncols());
    let mut r = 0;
    for k in 0..rows.min(cols) {
        let mut best = (k, k, 0.0);
        for i in k..rows {
            for j in k..cols {
                let v = w[(i, j)].abs();
                if v > best.2 {
                    best = (i, j, v);
                }
            }
        }
        if best.2 <= threshold || best.2 == 0.0 {
            break;
        }
        let (pi, pj, _) = best;
        for j in 0..cols {
            let tmp = w[(k, j)];
            w[(k, j)] = w[(pi, j)];
            w[(pi, j)] = tmp;
        }
        for i in 0..rows {
            let tmp = w[(i, k)];
            w[(i, k)] = w[(i, pj)];
            w[(i, pj)] = tmp;
        }
        let d = w[(k, k)];
        for i in k + 1..rows {
            let f = w[(i, k)] / d;
            if f != 0.0 {
                for j in k..cols {
                    w[(i, j)] -= f * w[(k, j)];
                }
            }
        }
        r += 1;
    }
    r
}

/// Rank of the complex matrix `re + i·im`, via its real 2×2 block embedding.
pub fn complex_rank(re: &Matrix, im: &Matrix, tol: f64) -> usize {
    let top = re.hstack(&-im);
    let bottom = im.hstack(re);
    rank(&top.vstack(&bottom), tol) / 2
}

/// Thin orthonormal basis of the column space, from Gram–Schmidt with column
/// pivoting (largest remaining column first, reorthogonalized once).
pub fn column_basis(m: &Matrix, count: usize) -> Result<Matrix, LinalgError> {
    let (rows, cols) = (m.nrows(), m.ncols());
    let scale = m.max_abs().max(f64::MIN_POSITIVE);
    let mut work: Vec<Vec<f64>> = (0..cols)
        .map(|j| (0..rows).map(|i| m[(i, j)]).collect())
        .collect();
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(count);
    for _ in 0..count {
        let (j, norm) = work
            .iter()
            .enumerate()
            .map(|(j, v)| (j, v.iter().map(|x| x * x).sum::<f64>().sqrt()))
            .fold((0, -1.0), |b, c| if c.1 > b.1 { c } else { b });
        if norm <= 1e-10 * scale {
            return Err(LinalgError::IllConditionedSubspace(format!(
                "column space has rank {} < {count}",
                basis.len()
            )));
        }
        let mut q = work[j].clone();
        for _ in 0..2 {
            for b in &basis {
                let d: f64 = q.iter().zip(b).map(|(x, y)| x * y).sum();
                q.iter_mut().zip(b).for_each(|(x, y)| *x -= d * y);
            }
        }
        let qn = q.iter().map(|x| x * x).sum::<f64>().sqrt();
        q.iter_mut().for_each(|x| *x /= qn);
        for v in work.iter_mut() {
            let d: f64 = v.iter().zip(&q).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(&q).for_each(|(x, y)| *x -= d * y);
        }
        basis.push(q);
    }
    let mut out = Matrix::zeros(rows, count);
    for (j, b) in basis.iter().enumerate() {
        for i in 0..rows {
            out[(i, j)] = b[i];
        }
    }
    Ok(out)
}
