//! Levenberg–Marquardt for sum-of-squares objectives `Σ rᵢ(θ)²`.

use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{solve_damped_normal, LinalgError};
use crate::rng;
use crate::Matrix;

/// `JᵀJ`, `Jᵀr` and `Σ r²`, accumulated one residual row at a time.
#[derive(Clone, Debug)]
pub struct NormalEquations {
    p: usize,
    /// Upper triangle, row-major `p × p`.
    jtj: Vec<f64>,
    pub jtr: Vec<f64>,
    pub cost: f64,
}

impl NormalEquations {
    pub fn new(p: usize) -> Self {
        Self {
            p,
            jtj: vec![0.0; p * p],
            jtr: vec![0.0; p],
            cost: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.p
    }

    /// Adds residual `r` with gradient row `g`.
    pub fn push(&mut self, r: f64, g: &[f64]) {
        debug_assert_eq!(g.len(), self.p);
        self.cost += r * r;
        let p = self.p;
        for (i, &gi) in g.iter().enumerate() {
            if gi == 0.0 {
                continue;
            }
            self.jtr[i] += gi * r;
            let row = &mut self.jtj[i * p + i..(i + 1) * p];
            for (a, &gj) in row.iter_mut().zip(&g[i..]) {
                *a += gi * gj;
            }
        }
    }

    /// Adds residual `r` whose gradient is `g` on `offset..offset + g.len()`
    /// and zero elsewhere.
    pub fn push_sparse(&mut self, r: f64, offset: usize, g: &[f64]) {
        self.cost += r * r;
        let p = self.p;
        for (a, &gi) in g.iter().enumerate() {
            if gi == 0.0 {
                continue;
            }
            let i = offset + a;
            self.jtr[i] += gi * r;
            let row = &mut self.jtj[i * p + i..i * p + offset + g.len()];
            for (x, &gj) in row.iter_mut().zip(&g[a..]) {
                *x += gi * gj;
            }
        }
    }

    pub fn merge(&mut self, other: &NormalEquations) {
        for (a, b) in self.jtj.iter_mut().zip(&other.jtj) {
            *a += b;
        }
        for (a, b) in self.jtr.iter_mut().zip(&other.jtr) {
            *a += b;
        }
        self.cost += other.cost;
    }

    /// Full symmetric `JᵀJ`.
    pub fn jtj(&self) -> Matrix {
        let p = self.p;
        Matrix::from_fn(p, p, |i, j| if i <= j { self.jtj[i * p + j] } else { self.jtj[j * p + i] })
    }

    pub fn gradient_norm(&self) -> f64 {
        self.jtr.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

pub trait LeastSquaresProblem {
    type Error;

    fn n_params(&self) -> usize;

    /// Normal equations at `params`.
    fn normal_equations(&mut self, params: &[f64]) -> Result<NormalEquations, Self::Error>;

    /// `Σ r²` at `params`.
    fn cost(&mut self, params: &[f64]) -> Result<f64, Self::Error>;
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LmSettings {
    pub lambda0: f64,
    pub lambda_up: f64,
    pub lambda_down: f64,
    /// Damping above this means no step can be accepted.
    pub lambda_max: f64,
    /// A gradient norm below this at overflow counts as convergence.
    pub grad_tol: f64,
}

impl Default for LmSettings {
    fn default() -> Self {
        Self {
            lambda0: 1e-3,
            lambda_up: 10.0,
            lambda_down: 0.1,
            lambda_max: 1e16,
            grad_tol: 1e-12,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub cost_before: f64,
    pub cost_after: f64,
    pub lambda: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LmError<E> {
    #[error("problem evaluation failed: {0}")]
    Problem(E),
    #[error("damping exceeded {lambda_max:e} without an accepted step (gradient norm {grad_norm:e})")]
    DampingOverflow {
        lambda_max: f64,
        grad_norm: f64,
        trace: Vec<StepRecord>,
    },
    #[error(transparent)]
    Linalg(LinalgError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StepOutcome {
    Accepted,
    /// Damping overflowed at a stationary point.
    Converged,
}

/// Damping state carried across calls to [`step`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LmState {
    pub lambda: f64,
    pub trace: Vec<StepRecord>,
}

impl LmState {
    pub fn new(settings: &LmSettings) -> Self {
        Self {
            lambda: settings.lambda0,
            trace: Vec::new(),
        }
    }
}

/// One accepted LM step (with as many rejected trials as needed).
pub fn step<P: LeastSquaresProblem>(
    problem: &mut P,
    params: &mut [f64],
    settings: &LmSettings,
    state: &mut LmState,
) -> Result<StepOutcome, LmError<P::Error>> {
    let ne = problem.normal_equations(params).map_err(LmError::Problem)?;
    let jtj = ne.jtj();
    let rhs: Vec<f64> = ne.jtr.iter().map(|v| -v).collect();
    let cost0 = ne.cost;
    let mut trial = params.to_vec();
    loop {
        if state.lambda > settings.lambda_max || !state.lambda.is_finite() {
            let grad_norm = ne.gradient_norm();
            state.lambda = settings.lambda_max;
            if grad_norm <= settings.grad_tol * cost0.max(1.0) {
                return Ok(StepOutcome::Converged);
            }
            return Err(LmError::DampingOverflow {
                lambda_max: settings.lambda_max,
                grad_norm,
                trace: state.trace.clone(),
            });
        }
        let delta = match solve_damped_normal(&jtj, state.lambda, &rhs) {
            Ok(d) => d,
            Err(LinalgError::NotPositiveDefinite { .. }) => {
                state.lambda *= settings.lambda_up;
                continue;
            }
            Err(e) => return Err(LmError::Linalg(e)),
        };
        for ((t, p), d) in trial.iter_mut().zip(params.iter()).zip(&delta) {
            *t = p + d;
        }
        let cost1 = problem.cost(&trial).map_err(LmError::Problem)?;
        let accepted = cost1.is_finite() && cost1 < cost0;
        state.trace.push(StepRecord {
            cost_before: cost0,
            cost_after: cost1,
            lambda: state.lambda,
            accepted,
        });
        if accepted {
            params.copy_from_slice(&trial);
            state.lambda = (state.lambda * settings.lambda_down).max(1e-12);
            return Ok(StepOutcome::Accepted);
        }
        state.lambda *= settings.lambda_up;
    }
}

/// Mini-batch schedule shared by the network trainers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub epochs: usize,
    pub batch_size: usize,
    /// LM steps taken on each mini-batch before moving on.
    pub steps_per_batch: usize,
    pub lm: LmSettings,
    /// Drives the per-epoch shuffle.
    pub seed: u64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            epochs: 5,
            batch_size: 1000,
            steps_per_batch: 10,
            lm: LmSettings::default(),
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Full training-set loss before the first step.
    pub initial_loss: f64,
    /// Full training-set loss after each epoch.
    pub loss_trace: Vec<f64>,
    pub final_train_loss: f64,
    pub final_val_loss: Option<f64>,
    /// Damping after every LM step.
    pub lm_damping_trace: Vec<f64>,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    /// Mini-batches abandoned after the damping overflowed.
    pub stalled_batches: usize,
    pub epochs: usize,
    /// Seconds; left at 0 here and filled in by callers that own a clock.
    pub wall_time: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MinibatchStats {
    pub damping_trace: Vec<f64>,
    pub accepted: usize,
    pub rejected: usize,
    pub stalled: usize,
}

/// Runs `opts.epochs` shuffled passes over `m` samples. `problem_for`
/// builds the least-squares problem of one mini-batch from its sample
/// indices; `after_epoch` sees the parameters at the end of every epoch.
/// The damping carries over between mini-batches. A damping overflow
/// aborts only if no step has been accepted yet; otherwise the damping is
/// reset and training moves on to the next mini-batch.
pub fn minibatch<P, F, G>(
    params: &mut [f64],
    m: usize,
    opts: &TrainOptions,
    mut problem_for: F,
    mut after_epoch: G,
) -> Result<MinibatchStats, LmError<P::Error>>
where
    P: LeastSquaresProblem,
    F: FnMut(&[usize]) -> P,
    G: FnMut(&[f64]) -> Result<(), P::Error>,
{
    let mut stats = MinibatchStats::default();
    let mut state = LmState::new(&opts.lm);
    let mut order: Vec<usize> = (0..m).collect();
    for epoch in 0..opts.epochs {
        let mut r = rng::stream(opts.seed, epoch as u64);
        rng::shuffle(&mut r, &mut order);
        for chunk in order.chunks(opts.batch_size.max(1)) {
            let mut problem = problem_for(chunk);
            for _ in 0..opts.steps_per_batch {
                state.trace.clear();
                let outcome = step(&mut problem, params, &opts.lm, &mut state);
                stats.accepted += state.trace.iter().filter(|s| s.accepted).count();
                stats.rejected += state.trace.iter().filter(|s| !s.accepted).count();
                stats.damping_trace.push(state.lambda);
                match outcome {
                    Ok(StepOutcome::Accepted) => {}
                    Ok(StepOutcome::Converged) => break,
                    Err(LmError::DampingOverflow { .. }) if stats.accepted > 0 => {
                        stats.stalled += 1;
                        state.lambda = opts.lm.lambda0;
                        break;
                    }
                    Err(e) => return Err(e),
                }
            }
        }
        after_epoch(params).map_err(LmError::Problem)?;
    }
    Ok(stats)
}
