use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;
use super::{LinalgError, Matrix};

/// Thin SVD `A = U·diag(S)·Vᵀ` with `k = min(rows, cols)` singular triplets.
#[derive(Clone, Debug)]
pub struct Svd {
    /// `rows × k`, orthonormal columns.
    pub u: Matrix,
    /// Descending, non-negative.
    pub s: Vec<f64>,
    /// `cols × k`, orthonormal columns.
    pub v: Matrix,
}

impl Svd {
    pub fn reconstruct(&self) -> Matrix {
        let us = Matrix::from_fn(self.u.rows(), self.s.len(), |i, j| self.u[(i, j)] * self.s[j]);
        us.matmul(&self.v.transpose())
    }

    /// Number of singular values above `rel_tol · s_max`.
    pub fn rank(&self, rel_tol: f64) -> usize {
        let smax = self.s.first().copied().unwrap_or(0.0);
        self.s.iter().filter(|&&s| s > rel_tol * smax).count()
    }
}

#[derive(Clone, Copy, Debug)]
pub struct SvdOptions {
    pub max_sweeps: usize,
    /// Pairs are rotated while `|aᵢ·aⱼ| > tol·‖aᵢ‖‖aⱼ‖`.
    pub tol: f64,
}

impl Default for SvdOptions {
    fn default() -> Self {
        Self {
            max_sweeps: 100,
            tol: 1e-12,
        }
    }
}

pub fn svd(a: &Matrix) -> Result<Svd, LinalgError> {
    svd_with(a, SvdOptions::default())
}

/// One-sided (Hestenes) Jacobi SVD.
pub fn svd_with(a: &Matrix, opts: SvdOptions) -> Result<Svd, LinalgError> {
    if a.rows() == 0 || a.cols() == 0 {
        return Err(LinalgError::Empty);
    }
    if !a.is_finite() {
        return Err(LinalgError::NonFinite);
    }
    if a.rows() < a.cols() {
        let t = svd_tall(&a.transpose(), opts)?;
        return Ok(Svd {
            u: t.v,
            s: t.s,
            v: t.u,
        });
    }
    svd_tall(a, opts)
}

fn svd_tall(a: &Matrix, opts: SvdOptions) -> Result<Svd, LinalgError> {
    let (m, n) = a.shape();
    // Column-major working copies.
    let mut cols: Vec<Vec<f64>> = (0..n).map(|j| a.column(j)).collect();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            e
        })
        .collect();

    // Columns below this squared norm are numerically zero and left alone.
    let floor = {
        let f = a.frobenius_norm() * f64::EPSILON;
        f * f
    };
    let mut converged = n == 1;
    for _ in 0..opts.max_sweeps {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let (alpha, beta, gamma) = {
                    let (cp, cq) = (&cols[p], &cols[q]);
                    let mut alpha = 0.0;
                    let mut beta = 0.0;
                    let mut gamma = 0.0;
                    for (x, y) in cp.iter().zip(cq) {
                        alpha += x * x;
                        beta += y * y;
                        gamma += x * y;
                    }
                    (alpha, beta, gamma)
                };
                let scale = (alpha * beta).sqrt();
                if gamma == 0.0 || alpha <= floor || beta <= floor || gamma.abs() <= opts.tol * scale {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut cols, p, q, c, s);
                rotate(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(LinalgError::SvdNoConvergence {
            sweeps: opts.max_sweeps,
        });
    }

    let mut triplets: Vec<(f64, Vec<f64>, Vec<f64>)> = cols
        .into_iter()
        .zip(v)
        .map(|(c, vc)| (c.iter().map(|x| x * x).sum::<f64>().sqrt(), c, vc))
        .collect();
    triplets.sort_by(|x, y| y.0.total_cmp(&x.0));

    let smax = triplets[0].0;
    let cutoff = smax * (m as f64) * f64::EPSILON;
    let mut u_cols: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut deficient = Vec::new();
    for (k, (s, c, _)) in triplets.iter().enumerate() {
        if *s > cutoff && *s > 0.0 {
            u_cols.push(c.iter().map(|x| x / s).collect());
        } else {
            u_cols.push(vec![0.0; m]);
            deficient.push(k);
        }
    }
    complete_basis(&mut u_cols, &deficient);

    let s: Vec<f64> = triplets.iter().map(|t| t.0).collect();
    let u = Matrix::from_columns(&u_cols);
    let v = Matrix::from_columns(&triplets.iter().map(|t| t.2.clone()).collect::<Vec<_>>());
    Ok(Svd { u, s, v })
}

fn rotate(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (lo, hi) = cols.split_at_mut(q);
    for (x, y) in lo[p].iter_mut().zip(hi[0].iter_mut()) {
        let xp = *x;
        let yq = *y;
        *x = c * xp - s * yq;
        *y = s * xp + c * yq;
    }
}

/// Fills the listed columns with unit vectors orthogonal to all others.
fn complete_basis(cols: &mut [Vec<f64>], missing: &[usize]) {
    if missing.is_empty() {
        return;
    }
    let m = cols[0].len();
    let mut filled: Vec<bool> = (0..cols.len()).map(|k| !missing.contains(&k)).collect();
    for &k in missing {
        let mut best: Option<Vec<f64>> = None;
        let mut best_norm = 0.0;
        for e in 0..m {
            let mut cand = vec![0.0; m];
            cand[e] = 1.0;
            for _ in 0..2 {
                for (j, c) in cols.iter().enumerate() {
                    if !filled[j] {
                        continue;
                    }
                    let d: f64 = c.iter().zip(&cand).map(|(a, b)| a * b).sum();
                    for (x, y) in cand.iter_mut().zip(c) {
                        *x -= d * y;
                    }
                }
            }
            let norm = cand.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > best_norm {
                best_norm = norm;
                best = Some(cand);
            }
            if best_norm > 0.5 {
                break;
            }
        }
        if let Some(b) = best {
            cols[k] = b.iter().map(|x| x / best_norm).collect();
            filled[k] = true;
        }
    }
}
