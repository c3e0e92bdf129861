//! Dense feed-forward network trained with the same loss and optimizer as
//! the structured network.

use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;
use serde::{Deserialize, Serialize};

use super::BaselineError;
use crate::bestfit::nuclear_norm;
use crate::flops::{tally, FlopCounter};
use crate::linalg::svd;
use crate::lm::{self, LeastSquaresProblem, LmError, NormalEquations, TrainOptions, TrainReport};
use crate::rng;
use crate::rollout::{rollout_with, Rollout, RolloutPolicy};
use crate::stnn::Activation;
use crate::Matrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FfnnConfig {
    /// Widths from input to output.
    pub sizes: Vec<usize>,
    /// One per weight layer.
    pub activations: Vec<Activation>,
    /// Nuclear-norm weight per weight layer.
    pub alpha: Vec<f64>,
    pub seed: u64,
}

impl Default for FfnnConfig {
    fn default() -> Self {
        Self {
            sizes: vec![3, 30, 30, 30, 3],
            activations: vec![
                Activation::Tanh,
                Activation::LeakyRelu { slope: 0.01 },
                Activation::Relu,
                Activation::Identity,
            ],
            alpha: vec![0.0, 1e-7, 0.0, 0.0],
            seed: 0,
        }
    }
}

impl FfnnConfig {
    pub fn layers(&self) -> usize {
        self.sizes.len().saturating_sub(1)
    }

    pub fn validate(&self) -> Result<(), BaselineError> {
        let l = self.layers();
        if l == 0 || self.sizes.iter().any(|&s| s == 0) {
            return Err(BaselineError::Invalid("layer sizes must be nonzero and at least two"));
        }
        if self.activations.len() != l || self.alpha.len() != l {
            return Err(BaselineError::Invalid("need one activation and one alpha per weight layer"));
        }
        if self.alpha.iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
            return Err(BaselineError::Invalid("alpha entries must be finite and nonnegative"));
        }
        Ok(())
    }

    /// Weights and biases.
    pub fn n_params(&self) -> usize {
        self.sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    /// `Σ 2·in·out`; bias adds are not counted for dense layers.
    pub fn n_flops(&self) -> usize {
        self.sizes.windows(2).map(|w| 2 * w[0] * w[1]).sum()
    }

    /// Offset of layer `l`'s weights (row-major `out × in`), followed by
    /// its bias.
    fn offset(&self, l: usize) -> usize {
        self.sizes[..=l].windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FfnnParams {
    pub config: FfnnConfig,
    pub theta: Vec<f64>,
}

pub fn ffnn_init(cfg: &FfnnConfig) -> Result<FfnnParams, BaselineError> {
    cfg.validate()?;
    let mut theta = Vec::with_capacity(cfg.n_params());
    for (l, w) in cfg.sizes.windows(2).enumerate() {
        let mut r = rng::stream(cfg.seed, l as u64);
        let bound = 1.0 / (w[0] as f64).sqrt();
        for _ in 0..w[0] * w[1] + w[1] {
            theta.push(rng::uniform(&mut r, -bound, bound));
        }
    }
    Ok(FfnnParams {
        config: cfg.clone(),
        theta,
    })
}

/// Pre-activations and activations of every layer.
struct Trace {
    z: Vec<Vec<f64>>,
    a: Vec<Vec<f64>>,
}

fn forward_trace(cfg: &FfnnConfig, theta: &[f64], x: &[f64], mut counter: Option<&mut FlopCounter>) -> Trace {
    let mut a = vec![x.to_vec()];
    let mut z = Vec::with_capacity(cfg.layers());
    for l in 0..cfg.layers() {
        let (n_in, n_out) = (cfg.sizes[l], cfg.sizes[l + 1]);
        let off = cfg.offset(l);
        let w = &theta[off..off + n_in * n_out];
        let b = &theta[off + n_in * n_out..off + n_in * n_out + n_out];
        let input = &a[l];
        let zl: Vec<f64> = (0..n_out)
            .map(|i| w[i * n_in..(i + 1) * n_in].iter().zip(input).map(|(p, q)| p * q).sum::<f64>() + b[i])
            .collect();
        tally(&mut counter, |f| {
            f.dense(n_out, n_in);
            f.bias(n_out);
        });
        a.push(zl.iter().map(|v| cfg.activations[l].apply(*v)).collect());
        z.push(zl);
    }
    Trace { z, a }
}

/// `∂y_k/∂θ` into `g`.
fn output_gradient(cfg: &FfnnConfig, theta: &[f64], tr: &Trace, k: usize, g: &mut [f64]) {
    g.iter_mut().for_each(|v| *v = 0.0);
    let last = cfg.layers() - 1;
    let mut delta = vec![0.0; cfg.sizes[last + 1]];
    delta[k] = cfg.activations[last].derivative(tr.z[last][k]);
    for l in (0..=last).rev() {
        let (n_in, n_out) = (cfg.sizes[l], cfg.sizes[l + 1]);
        let off = cfg.offset(l);
        let input = &tr.a[l];
        for i in 0..n_out {
            if delta[i] == 0.0 {
                continue;
            }
            for j in 0..n_in {
                g[off + i * n_in + j] = delta[i] * input[j];
            }
            g[off + n_in * n_out + i] = delta[i];
        }
        if l == 0 {
            break;
        }
        let w = &theta[off..off + n_in * n_out];
        let mut prev = vec![0.0; n_in];
        for i in 0..n_out {
            if delta[i] == 0.0 {
                continue;
            }
            for j in 0..n_in {
                prev[j] += w[i * n_in + j] * delta[i];
            }
        }
        for j in 0..n_in {
            prev[j] *= cfg.activations[l - 1].derivative(tr.z[l - 1][j]);
        }
        delta = prev;
    }
}

fn weight_matrix(cfg: &FfnnConfig, theta: &[f64], l: usize) -> Matrix {
    let (n_in, n_out) = (cfg.sizes[l], cfg.sizes[l + 1]);
    let off = cfg.offset(l);
    Matrix::from_fn(n_out, n_in, |i, j| theta[off + i * n_in + j])
}

fn regularization(cfg: &FfnnConfig, theta: &[f64]) -> Result<f64, BaselineError> {
    let mut total = 0.0;
    for (l, &a) in cfg.alpha.iter().enumerate() {
        if a > 0.0 {
            total += a * nuclear_norm(&weight_matrix(cfg, theta, l))?;
        }
    }
    Ok(total)
}

fn data_term(cfg: &FfnnConfig, theta: &[f64], x: &Matrix, y: &Matrix) -> f64 {
    let m = x.cols();
    let n = y.rows();
    let mut acc = 0.0;
    for j in 0..m {
        let tr = forward_trace(cfg, theta, &x.column(j), None);
        let out = &tr.a[cfg.layers()];
        for k in 0..n {
            let d = y[(k, j)] - out[k];
            acc += d * d;
        }
    }
    acc / (m * n) as f64
}

impl FfnnParams {
    pub fn forward(&self, x: &[f64], counter: Option<&mut FlopCounter>) -> Result<Vec<f64>, BaselineError> {
        if x.len() != self.config.sizes[0] {
            return Err(BaselineError::DimensionMismatch {
                expected: self.config.sizes[0],
                got: x.len(),
            });
        }
        let mut tr = forward_trace(&self.config, &self.theta, x, counter);
        Ok(tr.a.pop().unwrap_or_default())
    }

    /// `∂output/∂θ` at `x`, one row per output coordinate.
    pub fn jacobian(&self, x: &[f64]) -> Result<Matrix, BaselineError> {
        self.forward(x, None)?;
        let tr = forward_trace(&self.config, &self.theta, x, None);
        let outputs = *self.config.sizes.last().unwrap_or(&0);
        let mut j = Matrix::zeros(outputs, self.theta.len());
        for k in 0..outputs {
            output_gradient(&self.config, &self.theta, &tr, k, j.row_mut(k));
        }
        Ok(j)
    }

    pub fn count_params(&self) -> usize {
        self.theta.len()
    }

    /// Weight matrix of layer `l` (0-based), `out × in`.
    pub fn weight(&self, l: usize) -> Matrix {
        weight_matrix(&self.config, &self.theta, l)
    }

    /// Data term plus nuclear-norm penalties, samples as columns.
    pub fn loss(&self, x: &Matrix, y: &Matrix) -> Result<f64, BaselineError> {
        self.check_batch(x, y)?;
        Ok(data_term(&self.config, &self.theta, x, y) + regularization(&self.config, &self.theta)?)
    }

    fn check_batch(&self, x: &Matrix, y: &Matrix) -> Result<(), BaselineError> {
        let (n_in, n_out) = (self.config.sizes[0], self.config.sizes[self.config.layers()]);
        if x.rows() != n_in || y.rows() != n_out || x.cols() != y.cols() {
            return Err(BaselineError::DimensionMismatch {
                expected: n_in,
                got: x.rows(),
            });
        }
        if x.cols() == 0 {
            return Err(BaselineError::Empty);
        }
        Ok(())
    }

    pub fn rollout(&self, x0: &[f64], steps: usize, policy: &RolloutPolicy) -> Result<Rollout, BaselineError> {
        self.forward(x0, None)?;
        Ok(rollout_with(
            |x| forward_trace(&self.config, &self.theta, x, None).a.pop().unwrap_or_default(),
            x0,
            steps,
            policy,
        ))
    }
}

struct FfnnBatch<'a> {
    cfg: &'a FfnnConfig,
    x: Matrix,
    y: Matrix,
    grad: Vec<f64>,
}

impl LeastSquaresProblem for FfnnBatch<'_> {
    type Error = BaselineError;

    fn n_params(&self) -> usize {
        self.cfg.n_params()
    }

    fn normal_equations(&mut self, theta: &[f64]) -> Result<NormalEquations, BaselineError> {
        let mut ne = NormalEquations::new(theta.len());
        let (m, n) = (self.x.cols(), self.y.rows());
        let scale = 1.0 / ((m * n) as f64).sqrt();
        for j in 0..m {
            let tr = forward_trace(self.cfg, theta, &self.x.column(j), None);
            for k in 0..n {
                output_gradient(self.cfg, theta, &tr, k, &mut self.grad);
                for g in self.grad.iter_mut() {
                    *g *= scale;
                }
                if self.grad.iter().any(|g| !g.is_finite()) {
                    return Err(BaselineError::NonFinite("ffnn Jacobian"));
                }
                ne.push((tr.a[self.cfg.layers()][k] - self.y[(k, j)]) * scale, &self.grad);
            }
        }
        // √(α·σᵢ) residuals; ∂σᵢ/∂W = uᵢvᵢᵀ.
        for (l, &alpha) in self.cfg.alpha.iter().enumerate() {
            if alpha == 0.0 {
                continue;
            }
            let w = weight_matrix(self.cfg, theta, l);
            let d = svd(&w)?;
            let off = self.cfg.offset(l);
            let (rows, cols) = w.shape();
            for (i, &s) in d.s.iter().enumerate() {
                let r = (alpha * s).sqrt();
                let coef = if s > 0.0 { 0.5 * alpha.sqrt() / s.sqrt() } else { 0.0 };
                let g: Vec<f64> = (0..rows * cols).map(|e| coef * d.u[(e / cols, i)] * d.v[(e % cols, i)]).collect();
                ne.push_sparse(r, off, &g);
            }
        }
        Ok(ne)
    }

    fn cost(&mut self, theta: &[f64]) -> Result<f64, BaselineError> {
        let data = data_term(self.cfg, theta, &self.x, &self.y);
        Ok(match regularization(self.cfg, theta) {
            Ok(r) => data + r,
            Err(_) => f64::INFINITY,
        })
    }
}

/// Same schedule and objective as the structured network's trainer.
pub fn ffnn_train_lm(
    params: &mut FfnnParams,
    train: (&Matrix, &Matrix),
    val: (&Matrix, &Matrix),
    opts: &TrainOptions,
) -> Result<TrainReport, BaselineError> {
    params.config.validate()?;
    params.check_batch(train.0, train.1)?;
    let m = train.0.cols();
    if opts.batch_size == 0 || opts.batch_size > m {
        return Err(BaselineError::Invalid("batch size must be between 1 and the training set size"));
    }
    let cfg = params.config.clone();
    let full_loss = |theta: &[f64]| -> Result<f64, BaselineError> {
        let l = data_term(&cfg, theta, train.0, train.1) + regularization(&cfg, theta)?;
        if l.is_finite() {
            Ok(l)
        } else {
            Err(BaselineError::NonFinite("loss"))
        }
    };
    let initial_loss = full_loss(&params.theta)?;
    let mut loss_trace = Vec::new();
    let stats = lm::minibatch(
        &mut params.theta,
        m,
        opts,
        |idx| FfnnBatch {
            cfg: &cfg,
            x: train.0.select_columns(idx),
            y: train.1.select_columns(idx),
            grad: vec![0.0; cfg.n_params()],
        },
        |theta| {
            loss_trace.push(full_loss(theta)?);
            Ok(())
        },
    )
    .map_err(|e| match e {
        LmError::Problem(e) => e,
        LmError::Linalg(e) => e.into(),
        LmError::DampingOverflow { grad_norm, .. } => BaselineError::DampingOverflow { grad_norm },
    })?;
    let final_val_loss = if val.0.cols() > 0 {
        Some(params.loss(val.0, val.1)?)
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

    #[test]
    fn default_counts() {
        let cfg = FfnnConfig::default();
        assert_eq!(cfg.n_params(), 2073);
        assert_eq!(cfg.n_flops(), 3960);
        let net = ffnn_init(&cfg).unwrap();
        assert_eq!(net.count_params(), 2073);
        let mut c = FlopCounter::new();
        net.forward(&[1.0, 2.0, 3.0], Some(&mut c)).unwrap();
        assert_eq!(c.total(), 3960);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let cfg = FfnnConfig {
            sizes: vec![3, 5, 4, 3],
            activations: vec![Activation::Tanh, Activation::Sigmoid, Activation::Tanh],
            alpha: vec![0.0, 0.0, 0.0],
            seed: 2,
        };
        let net = ffnn_init(&cfg).unwrap();
        let x = [0.3, -0.2, 0.9];
        let tr = forward_trace(&cfg, &net.theta, &x, None);
        let mut g = vec![0.0; cfg.n_params()];
        let h = 1e-6;
        for k in 0..3 {
            output_gradient(&cfg, &net.theta, &tr, k, &mut g);
            for i in 0..g.len() {
                let mut tp = net.theta.clone();
                let mut tm = net.theta.clone();
                tp[i] += h;
                tm[i] -= h;
                let yp = forward_trace(&cfg, &tp, &x, None).a[3][k];
                let ym = forward_trace(&cfg, &tm, &x, None).a[3][k];
                let fd = (yp - ym) / (2.0 * h);
                assert!((fd - g[i]).abs() < 1e-7 * (1.0 + fd.abs()), "k {k} param {i}");
            }
        }
    }

    #[test]
    fn regularization_gradient_matches_finite_differences() {
        let cfg = FfnnConfig {
            sizes: vec![2, 3, 2],
            activations: vec![Activation::Tanh, Activation::Identity],
            alpha: vec![0.1, 0.05],
            seed: 4,
        };
        let net = ffnn_init(&cfg).unwrap();
        let x = Matrix::from_rows(&[[0.1, 0.5, -0.4], [0.2, -0.3, 0.8]]);
        let y = Matrix::from_rows(&[[1.0, 0.0, -1.0], [0.5, 0.5, 0.2]]);
        let mut prob = FfnnBatch {
            cfg: &cfg,
            x,
            y,
            grad: vec![0.0; cfg.n_params()],
        };
        let ne = prob.normal_equations(&net.theta).unwrap();
        assert!((ne.cost - prob.cost(&net.theta).unwrap()).abs() < 1e-12);
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
    fn fits_linear_toy() {
        let cfg = FfnnConfig {
            sizes: vec![1, 1],
            activations: vec![Activation::Identity],
            alpha: vec![0.0],
            seed: 0,
        };
        let mut net = ffnn_init(&cfg).unwrap();
        let x = Matrix::from_fn(1, 20, |_, j| j as f64 / 10.0 - 1.0);
        let y = x.scale(2.0);
        let opts = TrainOptions {
            epochs: 1,
            batch_size: 20,
            steps_per_batch: 50,
            ..TrainOptions::default()
        };
        let empty = Matrix::zeros(1, 0);
        let rep = ffnn_train_lm(&mut net, (&x, &y), (&empty, &empty), &opts).unwrap();
        assert!(rep.final_train_loss < 1e-8);
    }
}
