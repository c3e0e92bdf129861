//! Comparison models: dense network, exact DMD, SINDy and HAVOK.

mod dmd;
mod ffnn;
mod havok;
mod sindy;

use thiserror::Error;

use crate::linalg::LinalgError;

pub use dmd::{dmd_fit, DmdModel};
pub use ffnn::{ffnn_init, ffnn_train_lm, FfnnConfig, FfnnParams};
pub use havok::{delay_matrix, havok_fit, havok_fit_multi, HavokModel};
pub use sindy::{derivatives, polynomial_library, sindy_fit, sindy_simulate, term_name, Monomial, SindyModel};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BaselineError {
    #[error("invalid input: {0}")]
    Invalid(&'static str),
    #[error("empty input")]
    Empty,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("rank {rank} exceeds the maximum {max}")]
    RankTooLarge { rank: usize, max: usize },
    #[error("no library term survives threshold {threshold} for state {state}; try a smaller threshold")]
    EmptyActiveSet { state: usize, threshold: f64 },
    #[error("non-finite {0}")]
    NonFinite(&'static str),
    #[error("damping overflow without an accepted step (gradient norm {grad_norm:e})")]
    DampingOverflow { grad_norm: f64 },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}
