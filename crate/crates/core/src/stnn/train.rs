use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;
use serde::{Deserialize, Serialize};

use super::layout::{block_name, LAYER_WEIGHTS};
use super::model::{forward_raw, materialize_block, output_gradient, regularization, StnnParams, Workspace};
use super::{StnnConfig, StnnError, N, PARAMS_PER_BRANCH};
use crate::linalg::svd;
use crate::lm::{self, LeastSquaresProblem, LmError, NormalEquations, TrainOptions, TrainReport};
use crate::Matrix;

/// Central-difference step for the singular-value residual columns.
const SV_STEP: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchLoss {
    pub data: f64,
    pub regularization: f64,
}

impl BatchLoss {
    pub fn total(&self) -> f64 {
        self.data + self.regularization
    }
}

fn columns(x: &Matrix) -> Result<Vec<[f64; N]>, StnnError> {
    if x.rows() != N {
        return Err(StnnError::DimensionMismatch {
            expected: N,
            got: x.rows(),
        });
    }
    Ok((0..x.cols()).map(|j| core::array::from_fn(|i| x[(i, j)])).collect())
}

fn data_term(cfg: &StnnConfig, theta: &[f64], xs: &[[f64; N]], ys: &[[f64; N]]) -> f64 {
    let mut acc = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        let (pred, _) = forward_raw(cfg, theta, x, None, None);
        for k in 0..N {
            let d = y[k] - pred[k];
            acc += d * d;
        }
    }
    acc / (xs.len() * N) as f64
}

impl StnnParams {
    /// `(1/(m·n))·Σ‖x′ⱼ − f(xⱼ)‖² + Σ_l α_l Σ_b ‖W_l[b]‖_*` over the columns
    /// of `x` and `xp`.
    pub fn loss(&self, x: &Matrix, xp: &Matrix) -> Result<BatchLoss, StnnError> {
        let xs = columns(x)?;
        let ys = columns(xp)?;
        if xs.is_empty() {
            return Err(StnnError::EmptyBatch);
        }
        if xs.len() != ys.len() {
            return Err(StnnError::DimensionMismatch {
                expected: xs.len(),
                got: ys.len(),
            });
        }
        Ok(BatchLoss {
            data: data_term(&self.config, &self.theta, &xs, &ys),
            regularization: regularization(&self.config, &self.theta)?,
        })
    }
}

/// One mini-batch as a sum of squares: scaled prediction residuals plus
/// `√(α_l·σᵢ)` for every singular value of every regularized layer.
pub(crate) struct BatchProblem<'a> {
    cfg: &'a StnnConfig,
    xs: Vec<[f64; N]>,
    ys: Vec<[f64; N]>,
    ws: Workspace,
}

impl<'a> BatchProblem<'a> {
    pub fn new(cfg: &'a StnnConfig, xs: Vec<[f64; N]>, ys: Vec<[f64; N]>) -> Self {
        Self {
            cfg,
            xs,
            ys,
            ws: Workspace::new(cfg.p),
        }
    }

    fn push_regularization(&self, theta: &[f64], ne: &mut NormalEquations) -> Result<(), StnnError> {
        for (l, &alpha) in self.cfg.alpha.iter().enumerate() {
            if alpha == 0.0 {
                continue;
            }
            let range = LAYER_WEIGHTS[l].clone();
            for b in 0..self.cfg.p {
                let off = b * PARAMS_PER_BRANCH;
                let mut t = theta[off..off + PARAMS_PER_BRANCH].to_vec();
                let residuals = |t: &[f64]| -> Result<Vec<f64>, StnnError> {
                    Ok(svd(&materialize_block(t, l + 1))?.s.iter().map(|s| (alpha * s).sqrt()).collect())
                };
                let r0 = residuals(&t)?;
                let mut cols = vec![vec![0.0; range.len()]; r0.len()];
                for (c, j) in range.clone().enumerate() {
                    let keep = t[j];
                    t[j] = keep + SV_STEP;
                    let rp = residuals(&t)?;
                    t[j] = keep - SV_STEP;
                    let rm = residuals(&t)?;
                    t[j] = keep;
                    for i in 0..r0.len() {
                        let d = (rp[i] - rm[i]) / (2.0 * SV_STEP);
                        if !d.is_finite() {
                            return Err(StnnError::NonFiniteJacobian {
                                block: block_name(j),
                                branch: b,
                            });
                        }
                        cols[i][c] = d;
                    }
                }
                for (r, g) in r0.iter().zip(&cols) {
                    ne.push_sparse(*r, off + range.start, g);
                }
            }
        }
        Ok(())
    }
}

impl LeastSquaresProblem for BatchProblem<'_> {
    type Error = StnnError;

    fn n_params(&self) -> usize {
        self.cfg.n_params()
    }

    fn normal_equations(&mut self, theta: &[f64]) -> Result<NormalEquations, StnnError> {
        let mut ne = NormalEquations::new(theta.len());
        let scale = 1.0 / ((self.xs.len() * N) as f64).sqrt();
        for (x, y) in self.xs.iter().zip(&self.ys) {
            let (pred, z4) = forward_raw(self.cfg, theta, x, Some(&mut self.ws.caches), None);
            for k in 0..N {
                output_gradient(self.cfg, theta, &self.ws.caches, &z4, k, &mut self.ws.grad);
                for g in self.ws.grad.iter_mut() {
                    *g *= scale;
                }
                if let Some(i) = self.ws.grad.iter().position(|g| !g.is_finite()) {
                    return Err(StnnError::NonFiniteJacobian {
                        block: block_name(i % PARAMS_PER_BRANCH),
                        branch: i / PARAMS_PER_BRANCH,
                    });
                }
                ne.push((pred[k] - y[k]) * scale, &self.ws.grad);
            }
        }
        self.push_regularization(theta, &mut ne)?;
        Ok(ne)
    }

    fn cost(&mut self, theta: &[f64]) -> Result<f64, StnnError> {
        let data = data_term(self.cfg, theta, &self.xs, &self.ys);
        // Trial points can leave the region where the SVD is defined.
        match regularization(self.cfg, theta) {
            Ok(r) => Ok(data + r),
            Err(_) => Ok(f64::INFINITY),
        }
    }
}

impl From<LmError<StnnError>> for StnnError {
    fn from(e: LmError<StnnError>) -> Self {
        match e {
            LmError::Problem(e) => e,
            LmError::Linalg(e) => e.into(),
            LmError::DampingOverflow {
                lambda_max,
                grad_norm,
                trace,
            } => StnnError::DampingOverflow {
                lambda_max,
                grad_norm,
                trace,
            },
        }
    }
}

/// Mini-batch Levenberg–Marquardt on the loss. `train` and `val` are
/// `(inputs, targets)` with samples as columns; `val` may have no columns.
pub fn train_lm(
    params: &mut StnnParams,
    train: (&Matrix, &Matrix),
    val: (&Matrix, &Matrix),
    opts: &TrainOptions,
) -> Result<TrainReport, StnnError> {
    params.config.validate()?;
    let cfg = params.config.clone();
    let xs = columns(train.0)?;
    let ys = columns(train.1)?;
    if xs.is_empty() || opts.batch_size == 0 {
        return Err(StnnError::EmptyBatch);
    }
    if xs.len() != ys.len() {
        return Err(StnnError::DimensionMismatch {
            expected: xs.len(),
            got: ys.len(),
        });
    }
    if opts.batch_size > xs.len() {
        return Err(StnnError::BatchTooLarge {
            batch: opts.batch_size,
            available: xs.len(),
        });
    }
    let full_loss = |theta: &[f64]| -> Result<f64, StnnError> {
        let l = data_term(&cfg, theta, &xs, &ys) + regularization(&cfg, theta)?;
        if l.is_finite() {
            Ok(l)
        } else {
            Err(StnnError::NonFiniteLoss)
        }
    };
    let initial_loss = full_loss(&params.theta)?;
    let mut loss_trace = Vec::with_capacity(opts.epochs);
    let stats = lm::minibatch(
        &mut params.theta,
        xs.len(),
        opts,
        |idx| {
            BatchProblem::new(
                &cfg,
                idx.iter().map(|&j| xs[j]).collect(),
                idx.iter().map(|&j| ys[j]).collect(),
            )
        },
        |theta| {
            loss_trace.push(full_loss(theta)?);
            Ok(())
        },
    )?;
    let final_val_loss = if val.0.cols() > 0 {
        Some(params.loss(val.0, val.1)?.total())
    } else {
        None
    };
    Ok(TrainReport {
        initial_loss,
        final_train_loss: loss_trace.last().copied().unwrap_or(initial_loss),
        loss_trace,
        final_val_loss,
        lm_damping_trace: stats.damping_trace,
        accepted_steps: stats.accepted,
        rejected_steps: stats.rejected,
        stalled_batches: stats.stalled,
        epochs: opts.epochs,
        wall_time: 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use crate::stnn::{init, Activation};

    fn random_batch(m: usize, seed: u64) -> (Matrix, Matrix) {
        let mut r = rng::stream(seed, 77);
        let x = Matrix::from_fn(N, m, |_, _| rng::uniform(&mut r, -1.0, 1.0));
        let y = Matrix::from_fn(N, m, |_, _| rng::uniform(&mut r, -1.0, 1.0));
        (x, y)
    }

    #[test]
    fn residuals_reproduce_loss() {
        let net = init(&StnnConfig {
            alpha: [0.01, 0.02, 0.0, 0.03],
            ..StnnConfig::with_p(2)
        })
        .unwrap();
        let (x, y) = random_batch(7, 1);
        let xs = columns(&x).unwrap();
        let ys = columns(&y).unwrap();
        let mut prob = BatchProblem::new(&net.config, xs, ys);
        let ne = prob.normal_equations(&net.theta).unwrap();
        let loss = net.loss(&x, &y).unwrap().total();
        assert!((ne.cost - loss).abs() < 1e-12 * loss);
        assert!((prob.cost(&net.theta).unwrap() - loss).abs() < 1e-12 * loss);
    }

    #[test]
    fn gradient_of_loss_matches_finite_differences() {
        // Jᵀr is half the loss gradient.
        let net = init(&StnnConfig {
            alpha: [0.0, 0.05, 0.0, 0.0],
            seed: 8,
            ..StnnConfig::with_p(2)
        })
        .unwrap();
        let (x, y) = random_batch(5, 2);
        let xs = columns(&x).unwrap();
        let ys = columns(&y).unwrap();
        let mut prob = BatchProblem::new(&net.config, xs, ys);
        let ne = prob.normal_equations(&net.theta).unwrap();
        let h = 1e-6;
        for i in 0..net.theta.len() {
            let mut tp = net.theta.clone();
            let mut tm = net.theta.clone();
            tp[i] += h;
            tm[i] -= h;
            let fd = (prob.cost(&tp).unwrap() - prob.cost(&tm).unwrap()) / (2.0 * h);
            assert!((fd - 2.0 * ne.jtr[i]).abs() < 1e-6 * (1.0 + fd.abs()), "param {i}");
        }
    }

    #[test]
    fn loss_is_permutation_invariant() {
        let net = init(&StnnConfig::with_p(2)).unwrap();
        let (x, y) = random_batch(6, 3);
        let perm = [3, 0, 5, 1, 4, 2];
        let a = net.loss(&x, &y).unwrap().total();
        let b = net.loss(&x.select_columns(&perm), &y.select_columns(&perm)).unwrap().total();
        assert!((a - b).abs() < 1e-15);
    }

    #[test]
    fn fits_linear_toy() {
        let cfg = StnnConfig {
            p: 1,
            activations: [Activation::Identity; 4],
            alpha: [0.0; 4],
            seed: 1,
            n: N,
        };
        let mut net = init(&cfg).unwrap();
        let mut r = rng::stream(5, 0);
        let x = Matrix::from_fn(N, 40, |_, _| rng::uniform(&mut r, -1.0, 1.0));
        let y = x.scale(2.0);
        let opts = TrainOptions {
            epochs: 1,
            batch_size: 40,
            steps_per_batch: 50,
            ..TrainOptions::default()
        };
        let empty = Matrix::zeros(N, 0);
        let rep = train_lm(&mut net, (&x, &y), (&empty, &empty), &opts).unwrap();
        assert!(rep.final_train_loss < 1e-8, "loss {}", rep.final_train_loss);
        assert!(rep.accepted_steps <= 50);
    }

    #[test]
    fn rejects_oversized_batch() {
        let mut net = init(&StnnConfig::with_p(1)).unwrap();
        let (x, y) = random_batch(4, 0);
        let opts = TrainOptions {
            batch_size: 5,
            ..TrainOptions::default()
        };
        assert!(matches!(
            train_lm(&mut net, (&x, &y), (&x, &y), &opts),
            Err(StnnError::BatchTooLarge { batch: 5, available: 4 })
        ));
    }
}
