use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;
use num_complex::Complex64;

use super::{LinalgError, Matrix};

const MAX_ITS: usize = 30;

/// Eigenvalues of a real square matrix: Hessenberg reduction by stabilized
/// elimination followed by the Francis double-shift QR iteration.
/// Complex eigenvalues come in conjugate pairs; order is unspecified.
pub fn eigenvalues(m: &Matrix) -> Result<Vec<Complex64>, LinalgError> {
    let n = m.rows();
    if m.cols() != n {
        return Err(LinalgError::NotSquare { rows: n, cols: m.cols() });
    }
    if n == 0 {
        return Err(LinalgError::Empty);
    }
    if !m.is_finite() {
        return Err(LinalgError::NonFinite);
    }
    let mut a: Vec<Vec<f64>> = (0..n).map(|i| m.row(i).to_vec()).collect();
    hessenberg(&mut a);
    hqr(&mut a)
}

fn hessenberg(a: &mut [Vec<f64>]) {
    let n = a.len();
    for m in 1..n.saturating_sub(1) {
        let mut x = 0.0;
        let mut piv = m;
        for j in m..n {
            if a[j][m - 1].abs() > x.abs() {
                x = a[j][m - 1];
                piv = j;
            }
        }
        if piv != m {
            a.swap(piv, m);
            for row in a.iter_mut() {
                row.swap(piv, m);
            }
        }
        if x != 0.0 {
            for i in m + 1..n {
                let mut y = a[i][m - 1];
                if y != 0.0 {
                    y /= x;
                    a[i][m - 1] = y;
                    for j in m..n {
                        a[i][j] -= y * a[m][j];
                    }
                    for row in a.iter_mut() {
                        row[m] += y * row[i];
                    }
                }
            }
        }
    }
    for i in 2..n {
        for j in 0..i - 1 {
            a[i][j] = 0.0;
        }
    }
}

fn sign(a: f64, b: f64) -> f64 {
    if b >= 0.0 {
        a.abs()
    } else {
        -a.abs()
    }
}

#[allow(clippy::many_single_char_names, unused_assignments)]
fn hqr(a: &mut [Vec<f64>]) -> Result<Vec<Complex64>, LinalgError> {
    let n = a.len() as isize;
    let mut w = vec![Complex64::new(0.0, 0.0); n as usize];
    let eps = f64::EPSILON;
    let mut anorm = 0.0;
    for i in 0..n {
        for j in (i - 1).max(0)..n {
            anorm += a[i as usize][j as usize].abs();
        }
    }
    macro_rules! at {
        ($i:expr, $j:expr) => {
            a[($i) as usize][($j) as usize]
        };
    }

    let mut nn = n - 1;
    let mut t = 0.0;
    let (mut p, mut q, mut r) = (0.0, 0.0, 0.0);
    while nn >= 0 {
        let mut its = 0;
        loop {
            let mut l = nn;
            while l > 0 {
                let mut s = at!(l - 1, l - 1).abs() + at!(l, l).abs();
                if s == 0.0 {
                    s = anorm;
                }
                if at!(l, l - 1).abs() <= eps * s {
                    at!(l, l - 1) = 0.0;
                    break;
                }
                l -= 1;
            }
            let mut x = at!(nn, nn);
            if l == nn {
                w[nn as usize] = Complex64::new(x + t, 0.0);
                nn -= 1;
            } else {
                let mut y = at!(nn - 1, nn - 1);
                let mut ww = at!(nn, nn - 1) * at!(nn - 1, nn);
                if l == nn - 1 {
                    p = 0.5 * (y - x);
                    q = p * p + ww;
                    let mut z = q.abs().sqrt();
                    x += t;
                    if q >= 0.0 {
                        z = p + sign(z, p);
                        w[(nn - 1) as usize] = Complex64::new(x + z, 0.0);
                        w[nn as usize] = Complex64::new(x + z, 0.0);
                        if z != 0.0 {
                            w[nn as usize] = Complex64::new(x - ww / z, 0.0);
                        }
                    } else {
                        w[nn as usize] = Complex64::new(x + p, -z);
                        w[(nn - 1) as usize] = Complex64::new(x + p, z);
                    }
                    nn -= 2;
                } else {
                    if its == MAX_ITS {
                        return Err(LinalgError::EigNoConvergence { iterations: its });
                    }
                    if its == 10 || its == 20 {
                        t += x;
                        for i in 0..=nn {
                            at!(i, i) -= x;
                        }
                        let s = at!(nn, nn - 1).abs() + at!(nn - 1, nn - 2).abs();
                        x = 0.75 * s;
                        y = x;
                        ww = -0.4375 * s * s;
                    }
                    its += 1;
                    let mut m = nn - 2;
                    let mut z;
                    loop {
                        z = at!(m, m);
                        r = x - z;
                        let s0 = y - z;
                        p = (r * s0 - ww) / at!(m + 1, m) + at!(m, m + 1);
                        q = at!(m + 1, m + 1) - z - r - s0;
                        r = at!(m + 2, m + 1);
                        let s = p.abs() + q.abs() + r.abs();
                        p /= s;
                        q /= s;
                        r /= s;
                        if m == l {
                            break;
                        }
                        let u = at!(m, m - 1).abs() * (q.abs() + r.abs());
                        let v = p.abs() * (at!(m - 1, m - 1).abs() + z.abs() + at!(m + 1, m + 1).abs());
                        if u <= eps * v {
                            break;
                        }
                        m -= 1;
                    }
                    for i in m..nn - 1 {
                        at!(i + 2, i) = 0.0;
                        if i != m {
                            at!(i + 2, i - 1) = 0.0;
                        }
                    }
                    let mut k = m;
                    while k < nn {
                        if k != m {
                            p = at!(k, k - 1);
                            q = at!(k + 1, k - 1);
                            r = 0.0;
                            if k + 1 != nn {
                                r = at!(k + 2, k - 1);
                            }
                            x = p.abs() + q.abs() + r.abs();
                            if x != 0.0 {
                                p /= x;
                                q /= x;
                                r /= x;
                            }
                        }
                        let s = sign((p * p + q * q + r * r).sqrt(), p);
                        if s != 0.0 {
                            if k == m {
                                if l != m {
                                    at!(k, k - 1) = -at!(k, k - 1);
                                }
                            } else {
                                at!(k, k - 1) = -s * x;
                            }
                            p += s;
                            x = p / s;
                            y = q / s;
                            z = r / s;
                            q /= p;
                            r /= p;
                            for j in k..=nn {
                                p = at!(k, j) + q * at!(k + 1, j);
                                if k + 1 != nn {
                                    p += r * at!(k + 2, j);
                                    at!(k + 2, j) -= p * z;
                                }
                                at!(k + 1, j) -= p * y;
                                at!(k, j) -= p * x;
                            }
                            let mmin = if nn < k + 3 { nn } else { k + 3 };
                            for i in l..=mmin {
                                p = x * at!(i, k) + y * at!(i, k + 1);
                                if k + 1 != nn {
                                    p += z * at!(i, k + 2);
                                    at!(i, k + 2) -= p * r;
                                }
                                at!(i, k + 1) -= p * q;
                                at!(i, k) -= p;
                            }
                        }
                        k += 1;
                    }
                }
            }
            if l >= nn - 1 {
                break;
            }
        }
    }
    Ok(w)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sorted(mut v: Vec<Complex64>) -> Vec<Complex64> {
        v.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
        v
    }

    #[test]
    fn diagonal_and_triangular() {
        let e = sorted(eigenvalues(&Matrix::diag(&[3.0, -1.0, 2.0])).unwrap());
        let expect = [-1.0, 2.0, 3.0];
        for (a, b) in e.iter().zip(expect) {
            assert!((a.re - b).abs() < 1e-12 && a.im.abs() < 1e-12);
        }
    }

    #[test]
    fn rotation_has_complex_pair() {
        let th = 0.3f64;
        let m = Matrix::from_rows(&[[th.cos(), -th.sin(), 0.0], [th.sin(), th.cos(), 0.0], [0.0, 0.0, 0.5]]);
        let e = eigenvalues(&m).unwrap();
        let mut unit = 0;
        for z in &e {
            if z.im.abs() > 1e-9 {
                assert!((z.norm() - 1.0).abs() < 1e-12);
                assert!((z.im.abs() - th.sin()).abs() < 1e-12);
                unit += 1;
            } else {
                assert!((z.re - 0.5).abs() < 1e-12);
            }
        }
        assert_eq!(unit, 2);
    }

    #[test]
    fn trace_and_determinant_of_random_matrix() {
        let m = Matrix::from_rows(&[
            [0.2, -1.3, 0.7, 2.0, 0.1],
            [1.1, 0.4, -0.6, 0.3, 0.9],
            [-0.5, 0.8, 1.7, -1.2, 0.0],
            [0.3, 0.3, 0.2, -0.9, 1.4],
            [2.2, -0.4, 0.6, 0.5, 0.8],
        ]);
        let e = eigenvalues(&m).unwrap();
        let tr: Complex64 = e.iter().sum();
        assert!((tr.re - m.trace()).abs() < 1e-10 && tr.im.abs() < 1e-10);
        // Each eigenvalue is a root of det(A - zI): check via the product of
        // (A - zI) singular values being tiny relative to the matrix scale.
        for z in e.iter().filter(|z| z.im.abs() < 1e-12) {
            let shifted = Matrix::from_fn(5, 5, |i, j| m[(i, j)] - if i == j { z.re } else { 0.0 });
            let s = crate::linalg::svd(&shifted).unwrap().s;
            assert!(s[4] < 1e-10, "{}", s[4]);
        }
    }
}
