//! Per-symmetric Hankel operator built from time-delay samples, with dense,
//! shift-decomposition and circulant/FFT matrix-vector products.
//!
//! For samples `s_0 … s_{n−1}` the operator is `H[i][j] = s_{ρ(i+j)}` with
//! `ρ(k) = k` for `k ≤ n−1` and `ρ(k) = 2(n−1) − k` otherwise, so
//! `Ĩ H Ĩ = Hᵀ` where `Ĩ` is the anti-identity.

use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::flops::tally;
pub use crate::flops::FlopCounter;
use crate::linalg::{self, irfft_counted, rfft_counted, Direction};
use crate::Matrix;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HankelError {
    #[error("a Hankel operator needs at least one sample")]
    Empty,
    #[error("sample {index} is not finite")]
    NonFinite { index: usize },
    #[error("index ({i}, {j}) out of range for n = {n}")]
    OutOfRange { i: usize, j: usize, n: usize },
    #[error("vector length {got} does not match operator size {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
}

/// Reflection of an index sum onto the sample range.
pub fn rho(k: usize, n: usize) -> usize {
    if k < n {
        k
    } else {
        2 * (n - 1) - k
    }
}

/// `C_r` with first column `c`, held in diagonalized form.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CirculantEmbedding {
    pub r: usize,
    pub first_column: Vec<f64>,
    /// Forward DFT of `first_column`, all `r` bins.
    pub eigenvalues: Vec<Complex64>,
}

impl CirculantEmbedding {
    fn new(samples: &[f64]) -> Self {
        let n = samples.len();
        let n_pad = n.next_power_of_two();
        let r = 2 * n_pad;
        let mut c = vec![0.0; r];
        for m in 0..n {
            c[m] = samples[n - 1 - m];
        }
        c[n] = samples[n - 1];
        for k in 0..n.saturating_sub(1) {
            c[r - n + 1 + k] = samples[k];
        }
        let spectrum: Vec<Complex64> = c.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        let eigenvalues = linalg::fft(&spectrum, Direction::Forward).expect("r is a power of two");
        Self {
            r,
            first_column: c,
            eigenvalues,
        }
    }

    /// `C_r v` through the FFT.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        self.apply_counted(v, self.r, None)
    }

    fn apply_counted(&self, v: &[f64], keep: usize, mut counter: Option<&mut FlopCounter>) -> Vec<f64> {
        let mut spec = rfft_counted(v, counter.as_deref_mut());
        for (z, e) in spec.iter_mut().zip(&self.eigenvalues) {
            *z *= e;
        }
        tally(&mut counter, |c| c.complex_mul(spec.len()));
        irfft_counted(&spec, self.r, keep, counter)
    }

    /// Dense `r × r` circulant, for checks.
    pub fn dense(&self) -> Matrix {
        let r = self.r;
        Matrix::from_fn(r, r, |i, j| self.first_column[(i + r - j) % r])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HankelOperator {
    samples: Vec<f64>,
    embedding: CirculantEmbedding,
}

impl HankelOperator {
    pub fn new(samples: Vec<f64>) -> Result<Self, HankelError> {
        if samples.is_empty() {
            return Err(HankelError::Empty);
        }
        if let Some(index) = samples.iter().position(|v| !v.is_finite()) {
            return Err(HankelError::NonFinite { index });
        }
        let embedding = CirculantEmbedding::new(&samples);
        Ok(Self { samples, embedding })
    }

    pub fn n(&self) -> usize {
        self.samples.len()
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn embedding(&self) -> &CirculantEmbedding {
        &self.embedding
    }

    pub fn entry(&self, i: usize, j: usize) -> Result<f64, HankelError> {
        let n = self.n();
        if i >= n || j >= n {
            return Err(HankelError::OutOfRange { i, j, n });
        }
        Ok(self.samples[rho(i + j, n)])
    }

    pub fn dense(&self) -> Matrix {
        let n = self.n();
        Matrix::from_fn(n, n, |i, j| self.samples[rho(i + j, n)])
    }

    fn check(&self, x: &[f64]) -> Result<(), HankelError> {
        if x.len() != self.n() {
            return Err(HankelError::DimensionMismatch {
                expected: self.n(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Plain `O(n²)` product.
    pub fn matvec_dense(&self, x: &[f64]) -> Result<Vec<f64>, HankelError> {
        self.check(x)?;
        let n = self.n();
        Ok((0..n)
            .map(|i| (0..n).map(|j| self.samples[rho(i + j, n)] * x[j]).sum())
            .collect())
    }

    /// Upper anti-triangular factor `H_u = [s, Zs, …, Z^{n−1}s]` and its
    /// reflection `H_l = Ĩ H_uᵀ Ĩ`, so that `H = H_u + H_l − s_{n−1} Ĩ`.
    pub fn shift_factors(&self) -> (Matrix, Matrix) {
        let n = self.n();
        let s = &self.samples;
        let hu = Matrix::from_fn(n, n, |i, j| if i + j < n { s[i + j] } else { 0.0 });
        let hl = Matrix::from_fn(n, n, |i, j| hu[(n - 1 - j, n - 1 - i)]);
        (hu, hl)
    }

    /// `(H_u + H_l − s_{n−1} Ĩ) x` by shift accumulation. Column `j` of
    /// `H_u` is `Z^j s`, so `H_u x` sums shifted copies of the samples; `H_l x`
    /// is the same sum applied to the reversed input and reversed back. The
    /// anti-diagonal is taken from `H_u` only, which realizes the `− s_{n−1} Ĩ`
    /// correction without touching it.
    pub fn matvec_shift(&self, x: &[f64], mut counter: Option<&mut FlopCounter>) -> Result<Vec<f64>, HankelError> {
        self.check(x)?;
        let n = self.n();
        let s = &self.samples;
        let mut y = vec![0.0; n];
        // H_u x, anti-diagonal included.
        for (j, &xj) in x.iter().enumerate() {
            for (yi, sv) in y[..n - j].iter_mut().zip(&s[j..]) {
                *yi += xj * sv;
            }
        }
        // Strict part of Ĩ H_u Ĩ x.
        let mut low = vec![0.0; n];
        for (j, &xj) in x.iter().rev().enumerate() {
            let len = (n - 1).saturating_sub(j);
            for (li, sv) in low[..len].iter_mut().zip(&s[j..]) {
                *li += xj * sv;
            }
        }
        for (i, l) in low.iter().enumerate() {
            y[n - 1 - i] += l;
        }
        tally(&mut counter, |c| {
            let upper = n * (n + 1) / 2;
            let strict = n * (n - 1) / 2;
            c.mul(upper + strict);
            // The first column of H_u initializes y; the strict part
            // accumulates into it.
            c.add(upper - n + strict);
        });
        Ok(y)
    }

    /// `Ĩ_n Jᵀ C_r J x` with the circulant diagonalized by the FFT: one real
    /// forward transform of the padded input, a pointwise product with the
    /// cached eigenvalues, and a real inverse transform of which only the
    /// first `n` samples are formed.
    pub fn matvec_fft(&self, x: &[f64], counter: Option<&mut FlopCounter>) -> Result<Vec<f64>, HankelError> {
        self.check(x)?;
        let n = self.n();
        let mut padded = vec![0.0; self.embedding.r];
        padded[..n].copy_from_slice(x);
        let mut y = self.embedding.apply_counted(&padded, n, counter);
        y.reverse();
        Ok(y)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComplexityRow {
    pub n: usize,
    pub dense: u64,
    pub shift: u64,
    pub fft: u64,
}

/// Measured flop counts of the three matvec paths for each size.
pub fn complexity_report(n_values: &[usize]) -> Vec<ComplexityRow> {
    n_values
        .iter()
        .filter(|&&n| n > 0)
        .map(|&n| {
            let h = HankelOperator::new((0..n).map(|k| 1.0 + k as f64).collect()).expect("finite samples");
            let x = vec![1.0; n];
            let mut dense = FlopCounter::new();
            dense.dense(n, n);
            let mut shift = FlopCounter::new();
            h.matvec_shift(&x, Some(&mut shift)).expect("sizes match");
            let mut fft = FlopCounter::new();
            h.matvec_fft(&x, Some(&mut fft)).expect("sizes match");
            ComplexityRow {
                n,
                dense: dense.total(),
                shift: shift.total(),
                fft: fft.total(),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use proptest::prelude::*;

    fn random_vec(n: usize, seed: u64, idx: u64) -> Vec<f64> {
        let mut r = rng::stream(seed, idx);
        (0..n).map(|_| rng::uniform(&mut r, -1.0, 1.0)).collect()
    }

    #[test]
    fn entries_follow_reflection() {
        let h = HankelOperator::new(vec![10.0, 11.0, 12.0, 13.0]).unwrap();
        assert_eq!(h.entry(0, 0).unwrap(), 10.0);
        assert_eq!(h.entry(3, 3).unwrap(), 10.0);
        assert_eq!(h.entry(1, 3).unwrap(), 12.0);
        assert_eq!(h.entry(4, 0), Err(HankelError::OutOfRange { i: 4, j: 0, n: 4 }));
    }

    #[test]
    fn dense_examples() {
        let s = vec![0.3, -1.2, 2.0, 0.7, 1.1, -0.4, 0.9, 0.05];
        let h = HankelOperator::new(s.clone()).unwrap();
        let mut e1 = vec![0.0; 8];
        e1[0] = 1.0;
        assert_eq!(h.matvec_dense(&e1).unwrap(), s);
        let x = random_vec(8, 1, 0);
        let y = random_vec(8, 1, 1);
        let comb: Vec<f64> = x.iter().zip(&y).map(|(a, b)| 2.0 * a - 3.0 * b).collect();
        let hx = h.matvec_dense(&x).unwrap();
        let hy = h.matvec_dense(&y).unwrap();
        for (i, v) in h.matvec_dense(&comb).unwrap().iter().enumerate() {
            assert!((v - (2.0 * hx[i] - 3.0 * hy[i])).abs() < 1e-12);
        }
        // Double-loop oracle written against the entry rule directly.
        for i in 0..8 {
            let mut acc = 0.0;
            for j in 0..8 {
                let k = i + j;
                let idx = if k <= 7 { k } else { 14 - k };
                acc += s[idx] * x[j];
            }
            assert!((acc - hx[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn shift_factors_two_by_two() {
        let h = HankelOperator::new(vec![5.0, 7.0]).unwrap();
        let (hu, hl) = h.shift_factors();
        assert_eq!(hu, Matrix::from_rows(&[[5.0, 7.0], [7.0, 0.0]]));
        assert_eq!(hl, Matrix::from_rows(&[[0.0, 7.0], [7.0, 5.0]]));
        let anti = Matrix::from_rows(&[[0.0, 1.0], [1.0, 0.0]]);
        let rebuilt = &(&hu + &hl) - &anti.scale(7.0);
        assert_eq!(rebuilt, h.dense());
        assert_eq!(h.matvec_shift(&[0.0, 0.0], None).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn fast_paths_match_dense() {
        for (n, seed) in [(16usize, 3u64), (4, 4), (6, 5), (1, 6), (3, 7)] {
            let h = HankelOperator::new(random_vec(n, seed, 0)).unwrap();
            let x = random_vec(n, seed, 1);
            let d = h.matvec_dense(&x).unwrap();
            let s = h.matvec_shift(&x, None).unwrap();
            let f = h.matvec_fft(&x, None).unwrap();
            for i in 0..n {
                assert!((d[i] - s[i]).abs() < 1e-12, "shift n={n}");
                assert!((d[i] - f[i]).abs() < 1e-10, "fft n={n}");
            }
        }
    }

    #[test]
    fn constant_samples_give_all_ones() {
        let h = HankelOperator::new(vec![1.0; 5]).unwrap();
        let x = [1.0, 2.0, -0.5, 0.25, 3.0];
        let total: f64 = x.iter().sum();
        for v in h.matvec_fft(&x, None).unwrap() {
            assert!((v - total).abs() < 1e-12);
        }
    }

    #[test]
    fn embedding_layout_and_reconstruction() {
        let s = vec![1.0, 2.0, 3.0, 4.0];
        let h = HankelOperator::new(s).unwrap();
        let e = h.embedding();
        assert_eq!(e.r, 8);
        assert_eq!(e.first_column, vec![4.0, 3.0, 2.0, 1.0, 4.0, 1.0, 2.0, 3.0]);
        let c = e.dense();
        let rebuilt = Matrix::from_fn(4, 4, |i, j| c[(3 - i, j)]);
        assert!((&rebuilt - &h.dense()).max_abs() < 1e-10);
        let mut e1 = vec![0.0; 8];
        e1[0] = 1.0;
        for (a, b) in e.apply(&e1).iter().zip(&e.first_column) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn complexity_counts() {
        let rows = complexity_report(&[8, 16, 64]);
        assert_eq!(rows[0].dense, 128);
        assert_eq!(rows[1].dense, 4 * rows[0].dense);
        assert!(rows[2].fft < rows[2].dense);
        for r in &rows {
            assert_eq!(r.shift, (2 * r.n * r.n - r.n) as u64);
            assert!(r.shift < r.dense);
        }
    }

    proptest! {
        #[test]
        fn per_symmetric(s in prop::collection::vec(-5.0..5.0f64, 1..20)) {
            let n = s.len();
            let h = HankelOperator::new(s).unwrap().dense();
            for i in 0..n {
                for j in 0..n {
                    prop_assert_eq!(h[(n - 1 - i, n - 1 - j)], h[(j, i)]);
                }
            }
        }

        #[test]
        fn three_way_equivalence(n in 2usize..=64, seed in 0u64..10_000) {
            let h = HankelOperator::new(random_vec(n, seed, 0)).unwrap();
            let x = random_vec(n, seed, 1);
            let d = h.matvec_dense(&x).unwrap();
            let s = h.matvec_shift(&x, None).unwrap();
            let f = h.matvec_fft(&x, None).unwrap();
            let scale = d.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
            for i in 0..n {
                prop_assert!((d[i] - s[i]).abs() <= 1e-9 * scale);
                prop_assert!((d[i] - f[i]).abs() <= 1e-9 * scale);
            }
        }
    }
}
