//! Dense linear algebra for small problems: a row-major matrix type,
//! radix-2 FFT, one-sided Jacobi SVD, pseudoinverse, damped normal-equation
//! solves and real eigenvalues of small nonsymmetric matrices.

mod eig;
mod fft;
mod matrix;
mod solve;
mod svd;

pub use eig::eigenvalues;
pub use fft::{fft, irfft, rfft, Direction};
pub use matrix::Matrix;
pub use solve::{cholesky_solve, lstsq, pinv, solve_damped_normal};
pub use svd::{svd, svd_with, Svd, SvdOptions};

pub(crate) use fft::{irfft_counted, rfft_counted};

pub use num_complex::Complex64;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("FFT length {len} is not a power of two; pad to {padded}")]
    NotPowerOfTwo { len: usize, padded: usize },
    #[error("empty input")]
    Empty,
    #[error("SVD did not converge after {sweeps} sweeps")]
    SvdNoConvergence { sweeps: usize },
    #[error("eigenvalue iteration did not converge after {iterations} iterations")]
    EigNoConvergence { iterations: usize },
    #[error("matrix is not positive definite at damping {damping}; increase the damping")]
    NotPositiveDefinite { damping: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("matrix contains non-finite entries")]
    NonFinite,
    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
}
