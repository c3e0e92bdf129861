//! Best-fit linear operator from snapshot pairs by proximal gradient on
//! `½‖X′ − HX‖²_F + α‖H‖_*`.

use alloc::vec::Vec;

use num_traits::Float;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hankel::{rho, HankelError, HankelOperator};
use crate::linalg::{svd, LinalgError};
use crate::Matrix;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FitError {
    #[error("X is {x_rows}x{x_cols} but X' is {xp_rows}x{xp_cols}")]
    ShapeMismatch {
        x_rows: usize,
        x_cols: usize,
        xp_rows: usize,
        xp_cols: usize,
    },
    #[error("alpha must be a non-negative finite number, got {0}")]
    InvalidAlpha(f64),
    #[error("max_iter must be at least 1")]
    NoIterations,
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Hankel(#[from] HankelError),
}

/// Soft-thresholds the singular values: `U·diag(max(S − t, 0))·Vᵀ`.
pub fn svt(a: &Matrix, threshold: f64) -> Result<Matrix, LinalgError> {
    let d = svd(a)?;
    let shrunk: Vec<f64> = d.s.iter().map(|s| (s - threshold).max(0.0)).collect();
    let us = Matrix::from_fn(d.u.rows(), shrunk.len(), |i, j| d.u[(i, j)] * shrunk[j]);
    Ok(us.matmul(&d.v.transpose()))
}

pub fn nuclear_norm(a: &Matrix) -> Result<f64, LinalgError> {
    Ok(svd(a)?.s.iter().sum())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitProblem {
    pub x: Matrix,
    pub xp: Matrix,
    pub alpha: f64,
}

impl FitProblem {
    pub fn new(x: Matrix, xp: Matrix, alpha: f64) -> Result<Self, FitError> {
        if x.shape() != xp.shape() {
            return Err(FitError::ShapeMismatch {
                x_rows: x.rows(),
                x_cols: x.cols(),
                xp_rows: xp.rows(),
                xp_cols: xp.cols(),
            });
        }
        if !(alpha >= 0.0) || !alpha.is_finite() {
            return Err(FitError::InvalidAlpha(alpha));
        }
        Ok(Self { x, xp, alpha })
    }

    fn smooth(&self, h: &Matrix) -> f64 {
        let r = &self.xp - &h.matmul(&self.x);
        0.5 * r.frobenius_norm().powi(2)
    }

    pub fn objective(&self, h: &Matrix) -> Result<f64, LinalgError> {
        let reg = if self.alpha > 0.0 { self.alpha * nuclear_norm(h)? } else { 0.0 };
        Ok(self.smooth(h) + reg)
    }

    /// Gradient of the smooth part with respect to `Hᵀ`: `X(XᵀHᵀ − X′ᵀ)`.
    fn grad_t(&self, ht: &Matrix) -> Matrix {
        let xt = self.x.transpose();
        let inner = &xt.matmul(ht) - &self.xp.transpose();
        self.x.matmul(&inner)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepRule {
    /// `t = ‖X‖₂²`, the Lipschitz constant of the smooth part.
    #[default]
    Fixed,
    /// Start from half the previous `t` and double until the quadratic
    /// upper bound holds.
    Backtracking,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub step_rule: StepRule,
    pub max_iter: usize,
    pub rel_tol: f64,
    /// Nesterov momentum (FISTA). The objective is then not monotone.
    pub accelerate: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            step_rule: StepRule::Fixed,
            max_iter: 5000,
            rel_tol: 1e-10,
            accelerate: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub h_hat: Matrix,
    /// Objective after each iteration.
    pub objective_trace: Vec<f64>,
    /// Singular values above `1e-10 · S_max`.
    pub rank: usize,
    pub iterations: usize,
    pub converged: bool,
}

pub const RANK_REL_TOL: f64 = 1e-10;

/// Proximal gradient on `Hᵀ` from `H₀ = 0`:
/// `Hᵀ_k = svt(Hᵀ_{k−1} − (1/t)·X(XᵀHᵀ_{k−1} − X′ᵀ), α/t)`.
/// Stops when the relative objective change drops below `rel_tol`; hitting
/// `max_iter` first returns the iterate with `converged = false`.
pub fn fit_operator(p: &FitProblem, opts: &FitOptions) -> Result<FitResult, FitError> {
    if opts.max_iter == 0 {
        return Err(FitError::NoIterations);
    }
    let n = p.x.rows();
    let lipschitz = {
        let s = svd(&p.x)?.s;
        let top = s.first().copied().unwrap_or(0.0);
        (top * top).max(f64::MIN_POSITIVE)
    };
    let mut ht = Matrix::zeros(n, n);
    let mut prev_ht = ht.clone();
    let mut momentum = 1.0f64;
    let mut t = lipschitz;
    let mut prev = p.objective(&ht.transpose())?;
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    for _ in 0..opts.max_iter {
        iterations += 1;
        let base = if opts.accelerate {
            let next = (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt()) / 2.0;
            let w = (momentum - 1.0) / next;
            momentum = next;
            &ht + &(&ht - &prev_ht).scale(w)
        } else {
            ht.clone()
        };
        let g = p.grad_t(&base);
        let candidate = match opts.step_rule {
            StepRule::Fixed => svt(&(&base - &g.scale(1.0 / t)), p.alpha / t)?,
            StepRule::Backtracking => {
                t = (t * 0.5).max(f64::MIN_POSITIVE);
                let f_base = p.smooth(&base.transpose());
                loop {
                    let c = svt(&(&base - &g.scale(1.0 / t)), p.alpha / t)?;
                    let d = &c - &base;
                    let inner: f64 = d.as_slice().iter().zip(g.as_slice()).map(|(a, b)| a * b).sum();
                    let bound = f_base + inner + 0.5 * t * d.frobenius_norm().powi(2);
                    if p.smooth(&c.transpose()) <= bound * (1.0 + 1e-12) || t >= lipschitz {
                        break c;
                    }
                    t *= 2.0;
                }
            }
        };
        prev_ht = core::mem::replace(&mut ht, candidate);
        let obj = p.objective(&ht.transpose())?;
        trace.push(obj);
        let change = (prev - obj).abs() / prev.abs().max(f64::MIN_POSITIVE);
        prev = obj;
        if change < opts.rel_tol {
            converged = true;
            break;
        }
    }
    let h_hat = ht.transpose();
    let rank = svd(&h_hat)?.rank(RANK_REL_TOL);
    Ok(FitResult {
        h_hat,
        objective_trace: trace,
        rank,
        iterations,
        converged,
    })
}

/// Frobenius-nearest per-symmetric Hankel matrix: each sample is the mean
/// of the entries in its reflection class.
pub fn project_persymmetric_hankel(a: &Matrix) -> Result<HankelOperator, FitError> {
    let (rows, cols) = a.shape();
    if rows != cols {
        return Err(HankelError::NotSquare { rows, cols }.into());
    }
    let n = rows;
    let mut sums = alloc::vec![0.0; n];
    let mut counts = alloc::vec![0usize; n];
    for i in 0..n {
        for j in 0..n {
            let k = rho(i + j, n);
            sums[k] += a[(i, j)];
            counts[k] += 1;
        }
    }
    let samples = sums.iter().zip(&counts).map(|(s, &c)| s / c as f64).collect();
    Ok(HankelOperator::new(samples)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use alloc::vec;

    fn random(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut r = rng::stream(seed, 11);
        Matrix::from_fn(rows, cols, |_, _| rng::uniform(&mut r, -1.0, 1.0))
    }

    #[test]
    fn svt_examples() {
        let a = random(4, 3, 1);
        assert!((&svt(&a, 0.0).unwrap() - &a).frobenius_norm() < 1e-9 * a.frobenius_norm());
        let d = svt(&Matrix::diag(&[3.0, 1.0]), 2.0).unwrap();
        assert!((&d - &Matrix::diag(&[1.0, 0.0])).max_abs() < 1e-14);
        let big = svd(&a).unwrap().s[0] + 0.1;
        assert!(svt(&a, big).unwrap().max_abs() < 1e-15);
    }

    #[test]
    fn identity_data_one_step() {
        let xp = random(3, 3, 2);
        let p = FitProblem::new(Matrix::identity(3), xp.clone(), 0.0).unwrap();
        let r = fit_operator(&p, &FitOptions { max_iter: 1, ..FitOptions::default() }).unwrap();
        assert!((&r.h_hat - &xp).max_abs() < 1e-12);
    }

    #[test]
    fn normal_equations_at_zero_alpha() {
        let x = &Matrix::identity(4) + &random(4, 12, 3).matmul(&random(12, 4, 4)).scale(0.1);
        let xp = random(4, 4, 5).matmul(&x);
        let p = FitProblem::new(x.clone(), xp.clone(), 0.0).unwrap();
        let r = fit_operator(&p, &FitOptions::default()).unwrap();
        let resid = (&r.h_hat.matmul(&x) - &xp).matmul(&x.transpose()).frobenius_norm();
        assert!(resid < 1e-6 * xp.matmul(&x.transpose()).frobenius_norm());
        assert!(monotone(&r.objective_trace));
    }

    /// Non-increasing up to rounding relative to the first value.
    fn monotone(trace: &[f64]) -> bool {
        let slack = 1e-12 * trace[0].abs();
        trace.windows(2).all(|w| w[1] <= w[0] + slack)
    }

    #[test]
    fn backtracking_and_acceleration_reach_the_same_fit() {
        let x = &Matrix::identity(3) + &random(3, 3, 6).scale(0.3);
        let xp = random(3, 3, 7).matmul(&x);
        let p = FitProblem::new(x, xp, 1e-3).unwrap();
        let base = fit_operator(&p, &FitOptions::default()).unwrap();
        let bt = fit_operator(&p, &FitOptions { step_rule: StepRule::Backtracking, ..FitOptions::default() }).unwrap();
        let acc = fit_operator(&p, &FitOptions { accelerate: true, ..FitOptions::default() }).unwrap();
        assert!((&base.h_hat - &bt.h_hat).max_abs() < 1e-5);
        assert!((&base.h_hat - &acc.h_hat).max_abs() < 1e-5);
        assert!(monotone(&bt.objective_trace));
    }

    #[test]
    fn rank_shrinks_with_alpha() {
        let x = &Matrix::identity(5) + &random(5, 5, 8).scale(0.2);
        let xp = random(5, 5, 9).matmul(&x);
        let mut last = usize::MAX;
        for alpha in [0.0, 0.05, 0.2, 0.5, 1.0, 5.0, 50.0] {
            let p = FitProblem::new(x.clone(), xp.clone(), alpha).unwrap();
            let r = fit_operator(&p, &FitOptions::default()).unwrap();
            assert!(r.rank <= last, "alpha {alpha}: {} > {last}", r.rank);
            last = r.rank;
        }
        assert_eq!(last, 0);
    }

    #[test]
    fn svt_is_nonexpansive() {
        for seed in 0..20 {
            let a = random(4, 5, 100 + seed);
            let b = random(4, 5, 200 + seed);
            let d = (&svt(&a, 0.3).unwrap() - &svt(&b, 0.3).unwrap()).frobenius_norm();
            assert!(d <= (&a - &b).frobenius_norm() + 1e-12);
        }
    }

    #[test]
    fn projection_examples() {
        let h = HankelOperator::new(vec![1.0, -2.0, 0.5]).unwrap();
        let p = project_persymmetric_hankel(&h.dense()).unwrap();
        for (a, b) in p.samples().iter().zip(h.samples()) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(project_persymmetric_hankel(&Matrix::identity(2)).unwrap().samples(), &[1.0, 0.0]);
        let a = random(4, 4, 10);
        let once = project_persymmetric_hankel(&a).unwrap();
        let twice = project_persymmetric_hankel(&once.dense()).unwrap();
        for (x, y) in once.samples().iter().zip(twice.samples()) {
            assert!((x - y).abs() < 1e-15);
        }
        assert!(project_persymmetric_hankel(&Matrix::zeros(2, 3)).is_err());
    }
}
