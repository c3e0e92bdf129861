//! Exact dynamic mode decomposition.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::BaselineError;
use crate::linalg::{eigenvalues, pinv, svd, Complex64};
use crate::rollout::{rollout_with, Rollout, RolloutPolicy};
use crate::Matrix;

const PINV_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DmdModel {
    /// Full-space operator `x_{k+1} = A·x_k`.
    pub a: Matrix,
    pub rank: usize,
    /// Eigenvalues of the reduced operator, `rank` of them.
    pub eigenvalues: Vec<Complex64>,
}

/// `A = X′·X⁺`, or with `rank = Some(r)` the projected operator
/// `U_r·(U_rᵀ·X′·V_r·Σ_r⁻¹)·U_rᵀ`.
pub fn dmd_fit(x: &Matrix, xp: &Matrix, rank: Option<usize>) -> Result<DmdModel, BaselineError> {
    let (n, m) = x.shape();
    if xp.shape() != (n, m) {
        return Err(BaselineError::DimensionMismatch {
            expected: n,
            got: xp.rows(),
        });
    }
    if m < n {
        return Err(BaselineError::Invalid("DMD needs at least as many snapshots as state dimensions"));
    }
    match rank {
        None => {
            let a = xp.matmul(&pinv(x, PINV_TOL)?);
            let eigenvalues = eigenvalues(&a)?;
            Ok(DmdModel { a, rank: n, eigenvalues })
        }
        Some(r) => {
            if r == 0 || r > n.min(m) {
                return Err(BaselineError::RankTooLarge { rank: r, max: n.min(m) });
            }
            let d = svd(x)?;
            if d.s[r - 1] <= PINV_TOL * d.s[0] {
                return Err(BaselineError::Invalid("requested rank exceeds the numerical rank of X"));
            }
            let ur = Matrix::from_fn(n, r, |i, j| d.u[(i, j)]);
            let vs = Matrix::from_fn(m, r, |i, j| d.v[(i, j)] / d.s[j]);
            let reduced = ur.transpose().matmul(xp).matmul(&vs);
            let a = ur.matmul(&reduced).matmul(&ur.transpose());
            let eigenvalues = eigenvalues(&reduced)?;
            Ok(DmdModel { a, rank: r, eigenvalues })
        }
    }
}

impl DmdModel {
    pub fn predict(&self, x: &[f64]) -> Vec<f64> {
        self.a.matvec(x)
    }

    pub fn rollout(&self, x0: &[f64], steps: usize) -> Rollout {
        rollout_with(|x| self.predict(x), x0, steps, &RolloutPolicy::Free)
    }

    /// `n² + n·rank`: the operator plus one mode per eigenvalue.
    pub fn param_count(&self) -> usize {
        let n = self.a.rows();
        n * n + n * self.rank
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn recovers_planted_operator() {
        let a_true = Matrix::from_rows(&[[0.9, -0.2, 0.1], [0.3, 0.8, 0.0], [0.05, 0.1, 0.7]]);
        let mut r = rng::stream(7, 0);
        let x = Matrix::from_fn(3, 20, |_, _| rng::uniform(&mut r, -1.0, 1.0));
        let xp = a_true.matmul(&x);
        let m = dmd_fit(&x, &xp, None).unwrap();
        let err = (&m.a - &a_true).frobenius_norm();
        assert!(err < 1e-8 * a_true.frobenius_norm(), "{err}");
        assert_eq!(m.eigenvalues.len(), 3);
    }

    #[test]
    fn identity_dynamics_has_unit_eigenvalues() {
        let mut r = rng::stream(1, 0);
        let x = Matrix::from_fn(3, 10, |_, _| rng::uniform(&mut r, -1.0, 1.0));
        let m = dmd_fit(&x, &x, Some(3)).unwrap();
        for l in &m.eigenvalues {
            assert!((l - Complex64::new(1.0, 0.0)).norm() < 1e-10);
        }
        assert_eq!(m.param_count(), 18);
    }

    #[test]
    fn rank_checks() {
        let x = Matrix::identity(3);
        assert!(matches!(dmd_fit(&x, &x, Some(4)), Err(BaselineError::RankTooLarge { .. })));
        assert!(dmd_fit(&Matrix::zeros(3, 2), &Matrix::zeros(3, 2), None).is_err());
    }
}
