//! Sparse regression onto a polynomial library (sequentially thresholded
//! least squares).

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;
use serde::{Deserialize, Serialize};

use super::BaselineError;
use crate::dynsys::{rk4, OdeModel};
use crate::linalg::lstsq;
use crate::rollout::{rollout_with, Rollout, RolloutPolicy};
use crate::Matrix;

const LSTSQ_TOL: f64 = 1e-12;

/// A library term: the product of the listed coordinates (empty for the
/// constant).
pub type Monomial = Vec<usize>;

/// Monomials of degree ≤ 2 in `n` variables: `1`, then `x_i`, then
/// `x_i·x_j` for `i ≤ j` in lexicographic order. For three variables this
/// is `[1, x, y, z, x², xy, xz, y², yz, z²]`.
pub fn polynomial_library(n: usize) -> Vec<Monomial> {
    let mut lib = vec![Vec::new()];
    lib.extend((0..n).map(|i| vec![i]));
    for i in 0..n {
        for j in i..n {
            lib.push(vec![i, j]);
        }
    }
    lib
}

pub fn term_name(term: &Monomial, names: &[&str]) -> String {
    if term.is_empty() {
        return String::from("1");
    }
    let mut s = String::new();
    let mut k = 0;
    while k < term.len() {
        let run = term[k..].iter().take_while(|&&v| v == term[k]).count();
        s.push_str(names.get(term[k]).copied().unwrap_or("?"));
        if run > 1 {
            s.push_str(&alloc::format!("^{run}"));
        }
        k += run;
    }
    s
}

fn evaluate(lib: &[Monomial], x: &[f64], out: &mut [f64]) {
    for (o, t) in out.iter_mut().zip(lib) {
        *o = t.iter().map(|&i| x[i]).product();
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SindyModel {
    pub n: usize,
    pub library: Vec<Monomial>,
    /// `library × n`: column `i` holds the terms of `ẋ_i`.
    pub xi: Matrix,
    pub threshold: f64,
    /// Active-set size after each thresholding pass.
    pub active_history: Vec<usize>,
}

/// Fourth-order central differences in the interior; the two samples at
/// each end use the one-sided fourth-order stencils.
pub fn derivatives(states: &[Vec<f64>], dt: f64) -> Result<Vec<Vec<f64>>, BaselineError> {
    let m = states.len();
    if m < 5 {
        return Err(BaselineError::Invalid("derivative estimation needs at least 5 samples"));
    }
    let n = states[0].len();
    let c = 1.0 / (12.0 * dt);
    let stencil = |w: [f64; 5], start: usize| -> Vec<f64> {
        (0..n)
            .map(|i| c * w.iter().enumerate().map(|(o, wo)| wo * states[start + o][i]).sum::<f64>())
            .collect()
    };
    let mut d = Vec::with_capacity(m);
    d.push(stencil([-25.0, 48.0, -36.0, 16.0, -3.0], 0));
    d.push(stencil([-3.0, -10.0, 18.0, -6.0, 1.0], 0));
    for k in 2..m - 2 {
        d.push(stencil([1.0, -8.0, 0.0, 8.0, -1.0], k - 2));
    }
    d.push(stencil([-1.0, 6.0, -18.0, 10.0, 3.0], m - 5));
    d.push(stencil([3.0, -16.0, 36.0, -48.0, 25.0], m - 5));
    Ok(d)
}

/// Fits `ẋ ≈ Θ(x)·Ξ` on one or more trajectories sampled every `dt`.
pub fn sindy_fit(
    trajectories: &[&[Vec<f64>]],
    dt: f64,
    threshold: f64,
    max_iter: usize,
) -> Result<SindyModel, BaselineError> {
    if !(dt > 0.0) || !(threshold >= 0.0) {
        return Err(BaselineError::Invalid("dt must be positive and the threshold nonnegative"));
    }
    let n = trajectories.first().and_then(|t| t.first()).map_or(0, |s| s.len());
    if n == 0 {
        return Err(BaselineError::Empty);
    }
    let library = polynomial_library(n);
    let nl = library.len();
    let mut rows = Vec::new();
    let mut dx = Vec::new();
    for tr in trajectories {
        rows.extend(tr.iter().cloned());
        dx.extend(derivatives(tr, dt)?);
    }
    let m = rows.len();
    let mut theta = Matrix::zeros(m, nl);
    for (j, x) in rows.iter().enumerate() {
        evaluate(&library, x, theta.row_mut(j));
    }

    let mut xi = Matrix::zeros(nl, n);
    let mut active: Vec<Vec<bool>> = vec![vec![true; nl]; n];
    let mut active_history = Vec::new();
    for pass in 0..=max_iter {
        let mut changed = false;
        for i in 0..n {
            let cols: Vec<usize> = (0..nl).filter(|&k| active[i][k]).collect();
            if cols.is_empty() {
                return Err(BaselineError::EmptyActiveSet { state: i, threshold });
            }
            let rhs: Vec<f64> = dx.iter().map(|d| d[i]).collect();
            let coef = lstsq(&theta.select_columns(&cols), &rhs, LSTSQ_TOL)?;
            for k in 0..nl {
                xi[(k, i)] = 0.0;
            }
            for (&k, c) in cols.iter().zip(&coef) {
                xi[(k, i)] = *c;
            }
            if pass == max_iter {
                continue;
            }
            for &k in &cols {
                if xi[(k, i)].abs() < threshold {
                    active[i][k] = false;
                    xi[(k, i)] = 0.0;
                    changed = true;
                }
            }
        }
        active_history.push(active.iter().flatten().filter(|a| **a).count());
        if !changed {
            break;
        }
    }
    Ok(SindyModel {
        n,
        library,
        xi,
        threshold,
        active_history,
    })
}

impl SindyModel {
    pub fn nonzeros(&self) -> usize {
        self.xi.as_slice().iter().filter(|v| **v != 0.0).count()
    }

    pub fn param_count(&self) -> usize {
        self.nonzeros()
    }

    /// `(term, state) → coefficient` for the nonzero entries.
    pub fn sparsity(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for k in 0..self.library.len() {
            for i in 0..self.n {
                if self.xi[(k, i)] != 0.0 {
                    out.push((k, i, self.xi[(k, i)]));
                }
            }
        }
        out
    }
}

impl OdeModel for SindyModel {
    fn name(&self) -> &str {
        "sindy"
    }

    fn dimension(&self) -> usize {
        self.n
    }

    fn parameters(&self) -> BTreeMap<String, f64> {
        let names = ["x", "y", "z", "w"];
        let mut p = BTreeMap::new();
        for (k, i, c) in self.sparsity() {
            let state = names.get(i).copied().unwrap_or("?");
            p.insert(alloc::format!("d{state}/dt:{}", term_name(&self.library[k], &names)), c);
        }
        p
    }

    fn rhs(&self, _t: f64, x: &[f64], dx: &mut [f64]) {
        let mut th = vec![0.0; self.library.len()];
        evaluate(&self.library, x, &mut th);
        for (i, d) in dx.iter_mut().enumerate() {
            *d = th.iter().enumerate().map(|(k, v)| v * self.xi[(k, i)]).sum();
        }
    }
}

/// RK4 integration of the identified system, one sample per step.
pub fn sindy_simulate(model: &SindyModel, x0: &[f64], steps: usize, dt: f64) -> Result<Rollout, BaselineError> {
    if x0.len() != model.n {
        return Err(BaselineError::DimensionMismatch {
            expected: model.n,
            got: x0.len(),
        });
    }
    Ok(rollout_with(
        |x| rk4(model, x, 0.0, dt, 1).states.pop().unwrap_or_default(),
        x0,
        steps,
        &RolloutPolicy::Free,
    ))
}
