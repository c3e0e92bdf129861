//! Per-coordinate affine transforms used to condition training data.

use alloc::vec::Vec;

use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::Matrix;

/// `z = (x − mean) / scale`, coordinate-wise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn identity(n: usize) -> Self {
        Self {
            mean: alloc::vec![0.0; n],
            scale: alloc::vec![1.0; n],
        }
    }

    /// Fits on the columns of `data` (rows are coordinates). Coordinates in
    /// `keep` are left untouched, as are constant coordinates.
    pub fn fit(data: &Matrix, keep: &[usize]) -> Self {
        let (n, m) = data.shape();
        let mut out = Self::identity(n);
        if m == 0 {
            return out;
        }
        for i in 0..n {
            if keep.contains(&i) {
                continue;
            }
            let row = data.row(i);
            let mean = row.iter().sum::<f64>() / m as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / m as f64;
            let sd = var.sqrt();
            if sd > 1e-12 * mean.abs().max(1.0) {
                out.mean[i] = mean;
                out.scale[i] = sd;
            }
        }
        out
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    pub fn invert(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(v, (m, s))| v * s + m)
            .collect()
    }

    /// Applies the transform to every column.
    pub fn apply_columns(&self, data: &Matrix) -> Matrix {
        Matrix::from_fn(data.rows(), data.cols(), |i, j| (data[(i, j)] - self.mean[i]) / self.scale[i])
    }
}

/// What a one-step model is trained to predict.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetKind {
    /// The next state itself.
    Absolute,
    /// The standardized increment `x′ − x`.
    #[default]
    Increment,
}

/// Maps raw snapshot pairs into the coordinates a network is trained on and
/// back. Only the first `state_dim` coordinates are dynamic; the remaining
/// auxiliary coordinates (padding, time, environment id) are inputs only
/// and their targets are zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairScaling {
    pub state_dim: usize,
    pub target: TargetKind,
    pub input: Standardizer,
    pub output: Standardizer,
}

impl PairScaling {
    /// `x` and `xp` are `n × m` with samples as columns.
    pub fn fit(x: &Matrix, xp: &Matrix, state_dim: usize, target: TargetKind) -> Self {
        let n = x.rows();
        let aux: Vec<usize> = (state_dim..n).filter(|&i| x.row(i).iter().all(|v| *v == 0.0)).collect();
        let input = Standardizer::fit(x, &aux);
        let raw = Self::raw_targets(x, xp, state_dim, target);
        let fixed: Vec<usize> = (state_dim..n).collect();
        let output = Standardizer::fit(&raw, &fixed);
        Self {
            state_dim,
            target,
            input,
            output,
        }
    }

    fn raw_targets(x: &Matrix, xp: &Matrix, state_dim: usize, target: TargetKind) -> Matrix {
        Matrix::from_fn(x.rows(), x.cols(), |i, j| {
            if i >= state_dim {
                0.0
            } else {
                match target {
                    TargetKind::Absolute => xp[(i, j)],
                    TargetKind::Increment => xp[(i, j)] - x[(i, j)],
                }
            }
        })
    }

    /// Network inputs and targets for a batch of pairs.
    pub fn encode(&self, x: &Matrix, xp: &Matrix) -> (Matrix, Matrix) {
        let raw = Self::raw_targets(x, xp, self.state_dim, self.target);
        (self.input.apply_columns(x), self.output.apply_columns(&raw))
    }

    pub fn encode_input(&self, x: &[f64]) -> Vec<f64> {
        self.input.apply(x)
    }

    /// Next raw state from the current raw state and a network output.
    /// Auxiliary coordinates are copied from `x`; callers apply their own
    /// update policy to them.
    pub fn decode_step(&self, x: &[f64], out: &[f64]) -> Vec<f64> {
        let y = self.output.invert(out);
        x.iter()
            .enumerate()
            .map(|(i, &xi)| {
                if i >= self.state_dim {
                    xi
                } else {
                    match self.target {
                        TargetKind::Absolute => y[i],
                        TargetKind::Increment => xi + y[i],
                    }
                }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standardize_round_trip() {
        let data = Matrix::from_rows(&[[1.0, 2.0, 3.0, 4.0], [10.0, 10.0, 10.0, 10.0], [0.0, -2.0, 2.0, 0.0]]);
        let s = Standardizer::fit(&data, &[]);
        assert_eq!(s.scale[1], 1.0);
        let z = s.apply_columns(&data);
        let mean0: f64 = z.row(0).iter().sum::<f64>() / 4.0;
        assert!(mean0.abs() < 1e-15);
        let back = s.invert(&s.apply(&[2.5, 10.0, 1.0]));
        assert!((back[0] - 2.5).abs() < 1e-14 && (back[2] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn increment_decode_inverts_encode() {
        let x = Matrix::from_rows(&[[1.0, 2.0, 4.0], [0.5, 0.1, -0.3], [0.0, 0.0, 0.0]]);
        let xp = Matrix::from_rows(&[[1.1, 2.3, 4.0], [0.4, 0.2, -0.1], [0.0, 0.0, 0.0]]);
        let sc = PairScaling::fit(&x, &xp, 2, TargetKind::Increment);
        let (_, t) = sc.encode(&x, &xp);
        for j in 0..3 {
            let col = x.column(j);
            let next = sc.decode_step(&col, &t.column(j));
            for i in 0..2 {
                assert!((next[i] - xp[(i, j)]).abs() < 1e-12);
            }
            assert_eq!(next[2], 0.0);
            assert_eq!(t[(2, j)], 0.0);
        }
    }
}
