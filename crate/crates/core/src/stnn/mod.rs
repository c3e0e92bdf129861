//! Structured network with Hankel-factorized layers and `p` parallel
//! branches.
//!
//! Each branch maps `x ∈ ℝ⁴` through
//!
//! 1. `σ₁(F₈·J·x + b₁)`, `J = [I₄; 0]`
//! 2. `σ₂(Jᵀ·F₈′·D̂₈·a₁ + b₂)`
//! 3. `σ₃(Ĩ₄·a₂ + b₃)`, `Ĩ₄` the anti-identity
//! 4. `D₄·a₃ + b₄`
//!
//! and the output is `σ₄(Σ_b branch_b)`. Every branch owns 64 trainable
//! scalars laid out as in [`layout`].

pub mod butterfly;
mod model;
mod train;

use alloc::string::String;

use num_traits::Float;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::LinalgError;
use crate::lm::StepRecord;

pub use model::{count_flops, count_params, init, StnnParams};
pub use train::{train_lm, BatchLoss};
pub use crate::lm::{TrainOptions, TrainReport};

/// State width.
pub const N: usize = 4;
/// Embedding width `2n`.
pub const R: usize = 8;
/// Trainable scalars per branch.
pub const PARAMS_PER_BRANCH: usize = 64;

/// Offsets inside one branch's parameter block.
pub mod layout {
    use core::ops::Range;

    pub const BUTTERFLY1: Range<usize> = 0..16;
    pub const BIAS1: Range<usize> = 16..24;
    pub const DHAT: Range<usize> = 24..32;
    pub const BUTTERFLY2: Range<usize> = 32..48;
    pub const BIAS2: Range<usize> = 48..52;
    pub const BIAS3: Range<usize> = 52..56;
    pub const DOUT: Range<usize> = 56..60;
    pub const BIAS4: Range<usize> = 60..64;

    /// Parameters that determine each materialized layer matrix; layer 3
    /// has none.
    pub const LAYER_WEIGHTS: [Range<usize>; 4] = [0..16, 24..48, 0..0, 56..60];

    /// Name of the block holding branch-local offset `k`.
    pub fn block_name(k: usize) -> &'static str {
        const NAMES: [(usize, &str); 13] = [
            (4, "layer1.f2a"),
            (8, "layer1.f2b"),
            (12, "layer1.h8"),
            (16, "layer1.h4"),
            (24, "layer1.bias"),
            (32, "layer2.dhat"),
            (40, "layer2.f2"),
            (44, "layer2.h8"),
            (48, "layer2.h4"),
            (52, "layer2.bias"),
            (56, "layer3.bias"),
            (60, "layer4.dout"),
            (64, "layer4.bias"),
        ];
        NAMES.iter().find(|(end, _)| k < *end).map_or("unknown", |(_, n)| n)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Sigmoid,
    LeakyRelu { slope: f64 },
    Relu,
    Identity,
}

impl Activation {
    pub fn apply(&self, z: f64) -> f64 {
        match *self {
            Activation::Tanh => z.tanh(),
            Activation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
            Activation::LeakyRelu { slope } => {
                if z > 0.0 {
                    z
                } else {
                    slope * z
                }
            }
            Activation::Relu => z.max(0.0),
            Activation::Identity => z,
        }
    }

    /// Derivative with respect to the pre-activation.
    pub fn derivative(&self, z: f64) -> f64 {
        match *self {
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
            Activation::Sigmoid => {
                let s = 1.0 / (1.0 + (-z).exp());
                s * (1.0 - s)
            }
            Activation::LeakyRelu { slope } => {
                if z > 0.0 {
                    1.0
                } else {
                    slope
                }
            }
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StnnConfig {
    pub n: usize,
    pub p: usize,
    pub activations: [Activation; 4],
    pub alpha: [f64; 4],
    pub seed: u64,
}

impl Default for StnnConfig {
    fn default() -> Self {
        Self {
            n: N,
            p: 6,
            activations: [
                Activation::Tanh,
                Activation::LeakyRelu { slope: 0.01 },
                Activation::Relu,
                Activation::Identity,
            ],
            alpha: [0.0, 1e-7, 0.0, 0.0],
            seed: 0,
        }
    }
}

impl StnnConfig {
    pub fn with_p(p: usize) -> Self {
        Self { p, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), StnnError> {
        if self.n != N {
            return Err(StnnError::InvalidConfig(alloc::format!("state width must be {N}, got {}", self.n)));
        }
        if self.p == 0 {
            return Err(StnnError::InvalidConfig("branch count p must be at least 1".into()));
        }
        if let Some(a) = self.alpha.iter().find(|a| !(a.is_finite() && **a >= 0.0)) {
            return Err(StnnError::InvalidConfig(alloc::format!("regularization weights must be finite and nonnegative, got {a}")));
        }
        for act in &self.activations {
            if let Activation::LeakyRelu { slope } = act {
                if !slope.is_finite() {
                    return Err(StnnError::InvalidConfig("leaky_relu slope must be finite".into()));
                }
            }
        }
        Ok(())
    }

    pub fn n_params(&self) -> usize {
        PARAMS_PER_BRANCH * self.p
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StnnError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("parameter vector has length {got}, expected {expected}")]
    ParamCount { expected: usize, got: usize },
    #[error("empty batch")]
    EmptyBatch,
    #[error("batch size {batch} exceeds training set size {available}")]
    BatchTooLarge { batch: usize, available: usize },
    #[error("non-finite Jacobian entry in block {block} of branch {branch}")]
    NonFiniteJacobian { block: &'static str, branch: usize },
    #[error("non-finite loss")]
    NonFiniteLoss,
    #[error("damping exceeded {lambda_max:e} without an accepted step (gradient norm {grad_norm:e})")]
    DampingOverflow {
        lambda_max: f64,
        grad_norm: f64,
        trace: alloc::vec::Vec<StepRecord>,
    },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}
