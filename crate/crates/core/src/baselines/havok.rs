//! Linear dynamics on the leading SVD coordinates of a delay embedding.

use alloc::vec::Vec;

use num_traits::Float;
use serde::{Deserialize, Serialize};

use super::BaselineError;
use crate::linalg::{pinv, svd};
use crate::Matrix;

const PINV_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HavokModel {
    pub q: usize,
    pub r: usize,
    /// Leading `r` left singular vectors of the delay matrix, `q × r`.
    pub basis: Matrix,
    pub singular_values: Vec<f64>,
    /// `y_{k+1} = A·y_k` on the coordinates `y = basisᵀ·window`.
    pub a: Matrix,
}

/// `q × (len − q + 1)` matrix with `H[i][j] = series[i + j]`.
pub fn delay_matrix(series: &[f64], q: usize) -> Matrix {
    let cols = series.len() + 1 - q;
    Matrix::from_fn(q, cols, |i, j| series[i + j])
}

pub fn havok_fit(series: &[f64], q: usize, r: usize) -> Result<HavokModel, BaselineError> {
    havok_fit_multi(&[series], q, r)
}

/// Fits one model on several series. Delay columns are pooled for the
/// basis; regression pairs never straddle two series.
pub fn havok_fit_multi(series: &[&[f64]], q: usize, r: usize) -> Result<HavokModel, BaselineError> {
    if r == 0 || q == 0 || r > q {
        return Err(BaselineError::RankTooLarge { rank: r, max: q });
    }
    if series.is_empty() || series.iter().any(|s| s.len() <= q + r) {
        return Err(BaselineError::Invalid("every series must be longer than q + r"));
    }
    let blocks: Vec<Matrix> = series.iter().map(|s| delay_matrix(s, q)).collect();
    let total: usize = blocks.iter().map(|b| b.cols()).sum();
    let mut h = Matrix::zeros(q, total);
    let mut c0 = 0;
    for b in &blocks {
        for i in 0..q {
            h.row_mut(i)[c0..c0 + b.cols()].copy_from_slice(b.row(i));
        }
        c0 += b.cols();
    }
    // Left singular vectors of H from the small q × q Gram matrix.
    let gram = h.matmul(&h.transpose());
    let d = svd(&gram)?;
    let basis = Matrix::from_fn(q, r, |i, j| d.u[(i, j)]);
    let singular_values: Vec<f64> = d.s.iter().take(r).map(|s| s.sqrt()).collect();

    let y = basis.transpose().matmul(&h);
    let mut now = Vec::new();
    let mut next = Vec::new();
    let mut c0 = 0;
    for b in &blocks {
        for j in 0..b.cols() - 1 {
            now.push(c0 + j);
            next.push(c0 + j + 1);
        }
        c0 += b.cols();
    }
    let a = y.select_columns(&next).matmul(&pinv(&y.select_columns(&now), PINV_TOL)?);
    Ok(HavokModel {
        q,
        r,
        basis,
        singular_values,
        a,
    })
}

impl HavokModel {
    /// Continues a series from its last `q` values for `steps` samples.
    pub fn predict(&self, window: &[f64], steps: usize) -> Result<Vec<f64>, BaselineError> {
        if window.len() != self.q {
            return Err(BaselineError::DimensionMismatch {
                expected: self.q,
                got: window.len(),
            });
        }
        let mut y = self.basis.tr_matvec(window);
        let mut out = Vec::with_capacity(steps);
        for _ in 0..steps {
            y = self.a.matvec(&y);
            // Newest sample is the last row of the reconstructed window.
            let last = (0..self.r).map(|j| self.basis[(self.q - 1, j)] * y[j]).sum::<f64>();
            out.push(last);
        }
        Ok(out)
    }

    /// Basis entries plus the regression matrix.
    pub fn param_count(&self) -> usize {
        self.q * self.r + self.r * self.r
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn delay_matrix_has_constant_antidiagonals() {
        let s: Vec<f64> = (0..20).map(|k| (k as f64 * 0.37).sin()).collect();
        let h = delay_matrix(&s, 6);
        for i in 1..6 {
            for j in 0..h.cols() - 1 {
                assert_eq!(h[(i, j)], h[(i - 1, j + 1)]);
            }
        }
    }

    #[test]
    fn sinusoid_is_two_dimensional() {
        let s: Vec<f64> = (0..300).map(|k| (0.13 * k as f64).sin()).collect();
        let m = havok_fit(&s[..250], 32, 2).unwrap();
        let pred = m.predict(&s[250 - 32..250], 1).unwrap();
        assert!((pred[0] - s[250]).abs() < 1e-6, "{}", pred[0] - s[250]);
        let long = m.predict(&s[250 - 32..250], 40).unwrap();
        for (k, p) in long.iter().enumerate() {
            assert!((p - s[250 + k]).abs() < 1e-5);
        }
    }

    #[test]
    fn constant_series() {
        let s = [2.5; 60];
        let m = havok_fit(&s, 10, 1).unwrap();
        for p in m.predict(&s[..10], 20).unwrap() {
            assert!((p - 2.5).abs() < 1e-10);
        }
    }

    #[test]
    fn rejects_rank_above_delay() {
        let s = [1.0; 50];
        assert!(matches!(havok_fit(&s, 4, 5), Err(BaselineError::RankTooLarge { .. })));
    }
}
