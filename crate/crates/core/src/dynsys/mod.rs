//! ODE models, integration and snapshot datasets.

mod dataset;
mod ode;
mod systems;

pub use dataset::{
    generate_lorenz_dataset, generate_lorenz_trajectories, generate_lv_dataset, lv_environments, pairs_from_trajectories,
    train_validation_split, DatasetMeta, Environment, LvEnvironmentData, LvOptions, TrajectoryDataset, LORENZ_NOMINAL_IC,
};
pub use ode::{integrate, rk4, Trajectory};
pub use systems::{lorenz_rhs, lotka_volterra_rhs, Lorenz, LotkaVolterra, OdeModel};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DynError {
    #[error("step size underflow at t = {t}")]
    StepUnderflow { t: f64 },
    #[error("invalid time span [{t0}, {t1}] with sample interval {dt}")]
    InvalidSpan { t0: f64, t1: f64, dt: f64 },
    #[error("tolerance must be positive, got {0}")]
    InvalidTolerance(f64),
    #[error("state dimension {got} does not match model dimension {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite state at t = {t}")]
    NonFinite { t: f64 },
    #[error("split fraction {frac} of {total} pairs leaves an empty half")]
    EmptySplit { frac: f64, total: usize },
    #[error("{0}")]
    Invalid(&'static str),
}
