//! Dense real-matrix kernels for systems of a handful of states.

mod decomp;
mod eigen;
mod equations;
mod matrix;

use thiserror::Error;

pub use decomp::{column_basis, complex_rank, determinant, inverse, lu_solve, rank, Lu, PIVOT_TOL};
pub use eigen::{eigenvalues, Spectrum};
pub use equations::{
    are_residual, pbh_rank_test, solve_are, solve_lyapunov, HURWITZ_MARGIN, PBH_RANK_TOL,
};
pub use matrix::Matrix;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum LinalgError {
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("matrix has non-finite entries")]
    NonFinite,
    #[error("singular matrix: pivot {pivot:e} in column {column}")]
    SingularMatrix { pivot: f64, column: usize },
    #[error("eigenvalue iteration did not converge ({found} of {total} eigenvalues found)")]
    NoConvergence { found: usize, total: usize },
    #[error("matrix is not Hurwitz (max real part {max_real:e})")]
    NotHurwitz { max_real: f64 },
    #[error("pair (A, B) is not stabilizable")]
    NotStabilizable,
    #[error("ill-conditioned invariant subspace: {0}")]
    IllConditionedSubspace(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
