use alloc::vec::Vec;


use num_traits::Float;
use super::{svd, LinalgError, Matrix};

/// Solves `(JtJ + damping·I) δ = rhs` by Cholesky factorization.
///
/// Fails with [`LinalgError::NotPositiveDefinite`] when the damped system
/// has a non-positive pivot, which for a singular `JtJ` means the damping
/// must be raised.
pub fn solve_damped_normal(jtj: &Matrix, damping: f64, rhs: &[f64]) -> Result<Vec<f64>, LinalgError> {
    let n = jtj.rows();
    if jtj.cols() != n {
        return Err(LinalgError::NotSquare {
            rows: n,
            cols: jtj.cols(),
        });
    }
    if rhs.len() != n {
        return Err(LinalgError::DimensionMismatch {
            expected: n,
            got: rhs.len(),
        });
    }
    let mut a = jtj.clone();
    for i in 0..n {
        a[(i, i)] += damping;
    }
    cholesky_solve(a, rhs).map_err(|e| match e {
        LinalgError::NotPositiveDefinite { .. } => LinalgError::NotPositiveDefinite { damping },
        other => other,
    })
}

/// Cholesky solve of a symmetric positive definite system. Only the lower
/// triangle of `a` is read.
pub fn cholesky_solve(mut a: Matrix, rhs: &[f64]) -> Result<Vec<f64>, LinalgError> {
    let n = a.rows();
    let scale = (0..n).fold(0.0f64, |m, i| m.max(a[(i, i)].abs()));
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= a[(j, k)] * a[(j, k)];
        }
        if !(d > scale * 1e-15) || !d.is_finite() {
            return Err(LinalgError::NotPositiveDefinite { damping: 0.0 });
        }
        let d = d.sqrt();
        a[(j, j)] = d;
        for i in j + 1..n {
            let mut s = a[(i, j)];
            let (ri, rj) = (a.row(i), a.row(j));
            for k in 0..j {
                s -= ri[k] * rj[k];
            }
            a[(i, j)] = s / d;
        }
    }
    let mut y = rhs.to_vec();
    for i in 0..n {
        let row = a.row(i);
        let mut s = y[i];
        for k in 0..i {
            s -= row[k] * y[k];
        }
        y[i] = s / row[i];
    }
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in i + 1..n {
            s -= a[(k, i)] * y[k];
        }
        y[i] = s / a[(i, i)];
    }
    Ok(y)
}

/// Moore–Penrose pseudoinverse; singular values below `rel_tol · s_max`
/// are treated as zero.
pub fn pinv(a: &Matrix, rel_tol: f64) -> Result<Matrix, LinalgError> {
    let d = svd(a)?;
    let smax = d.s.first().copied().unwrap_or(0.0);
    let inv: Vec<f64> = d
        .s
        .iter()
        .map(|&s| if s > rel_tol * smax && s > 0.0 { 1.0 / s } else { 0.0 })
        .collect();
    let vs = Matrix::from_fn(d.v.rows(), inv.len(), |i, j| d.v[(i, j)] * inv[j]);
    Ok(vs.matmul(&d.u.transpose()))
}

/// Minimum-norm least-squares solution of `A x ≈ b` through the SVD.
pub fn lstsq(a: &Matrix, b: &[f64], rel_tol: f64) -> Result<Vec<f64>, LinalgError> {
    if b.len() != a.rows() {
        return Err(LinalgError::DimensionMismatch {
            expected: a.rows(),
            got: b.len(),
        });
    }
    let d = svd(a)?;
    let smax = d.s.first().copied().unwrap_or(0.0);
    let utb = d.u.tr_matvec(b);
    let coeffs: Vec<f64> = utb
        .iter()
        .zip(&d.s)
        .map(|(c, &s)| if s > rel_tol * smax && s > 0.0 { c / s } else { 0.0 })
        .collect();
    Ok(d.v.matvec(&coeffs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn random(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut r = rng::stream(seed, 7);
        Matrix::from_fn(rows, cols, |_, _| rng::uniform(&mut r, -1.0, 1.0))
    }

    #[test]
    fn damped_trivial_cases() {
        let b = [1.0, -2.0, 3.0];
        assert_eq!(solve_damped_normal(&Matrix::identity(3), 0.0, &b).unwrap(), b.to_vec());
        let x = solve_damped_normal(&Matrix::zeros(1, 1), 2.0, &[4.0]).unwrap();
        assert!((x[0] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn singular_without_damping_fails() {
        let err = solve_damped_normal(&Matrix::zeros(2, 2), 0.0, &[1.0, 1.0]).unwrap_err();
        assert_eq!(err, LinalgError::NotPositiveDefinite { damping: 0.0 });
    }

    #[test]
    fn random_spd_residual() {
        let b = random(10, 10, 1);
        let spd = &b.transpose().matmul(&b) + &Matrix::identity(10).scale(0.1);
        let rhs: Vec<f64> = (0..10).map(|i| i as f64 - 4.5).collect();
        let x = solve_damped_normal(&spd, 0.0, &rhs).unwrap();
        let r: Vec<f64> = spd.matvec(&x).iter().zip(&rhs).map(|(a, b)| a - b).collect();
        let rn = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        let bn = rhs.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(rn / bn < 1e-10, "{}", rn / bn);
    }

    #[test]
    fn pinv_trivial() {
        assert!((&pinv(&Matrix::identity(3), 1e-12).unwrap() - &Matrix::identity(3)).max_abs() < 1e-15);
        let p = pinv(&Matrix::diag(&[2.0, 0.0]), 1e-12).unwrap();
        assert!((&p - &Matrix::diag(&[0.5, 0.0])).max_abs() < 1e-15);
    }

    #[test]
    fn penrose_identities() {
        let a = random(5, 3, 9);
        let p = pinv(&a, 1e-12).unwrap();
        let apa = a.matmul(&p).matmul(&a);
        let pap = p.matmul(&a).matmul(&p);
        let ap = a.matmul(&p);
        let pa = p.matmul(&a);
        assert!((&apa - &a).max_abs() < 1e-8);
        assert!((&pap - &p).max_abs() < 1e-8);
        assert!((&ap - &ap.transpose()).max_abs() < 1e-8);
        assert!((&pa - &pa.transpose()).max_abs() < 1e-8);
    }

    #[test]
    fn least_squares_recovers_exact_fit() {
        let a = random(20, 4, 3);
        let truth = [1.0, -2.0, 0.5, 3.0];
        let b = a.matvec(&truth);
        let x = lstsq(&a, &b, 1e-12).unwrap();
        for (u, v) in x.iter().zip(truth) {
            assert!((u - v).abs() < 1e-12);
        }
    }
}
