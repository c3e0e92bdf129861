//! The length-8 structured factor `F₈ = P₈ᵀ·blkdiag(F₄⁽⁰⁾, F₄⁽¹⁾)·H₈` with
//! `H₈ = [[I₄, I₄], [Ď₄, −Ď₄]]` and `F₄⁽ⁱ⁾ = P₄ᵀ·blkdiag(F₂⁽ⁱ⁾, F₂⁽ⁱ⁾)·H₄⁽ⁱ⁾`.
//!
//! Parameter layout (16 scalars): `F₂⁽⁰⁾` row-major at 0..4, `F₂⁽¹⁾` at
//! 4..8, `Ď₄` at 8..12, `Ď₂⁽⁰⁾` at 12..14, `Ď₂⁽¹⁾` at 14..16. `P_kᵀ`
//! interleaves the two halves of its input.

use crate::flops::{tally, FlopCounter};
use crate::Matrix;

pub const PARAMS: usize = 16;
/// Flops of one application under the static convention.
pub const FLOPS: usize = 56;

const F2: [usize; 2] = [0, 4];
const H8: usize = 8;
const H4: [usize; 2] = [12, 14];

/// Intermediates kept for the backward pass.
#[derive(Clone, Copy, Debug, Default)]
pub struct Cache {
    /// `v_top − v_bot`.
    diff8: [f64; 4],
    /// `(w_top + w_bot, w_top − w_bot)` inside each `F₄`.
    sum4: [[f64; 2]; 2],
    diff4: [[f64; 2]; 2],
}

fn f2(theta: &[f64], i: usize) -> [f64; 4] {
    let o = F2[i];
    [theta[o], theta[o + 1], theta[o + 2], theta[o + 3]]
}

pub fn apply(theta: &[f64], v: &[f64; 8], cache: Option<&mut Cache>, mut counter: Option<&mut FlopCounter>) -> [f64; 8] {
    let mut c = Cache::default();
    let mut u = [0.0; 8];
    for k in 0..4 {
        let d = v[k] - v[k + 4];
        c.diff8[k] = d;
        u[k] = v[k] + v[k + 4];
        u[k + 4] = theta[H8 + k] * d;
    }
    let mut y = [0.0; 8];
    for i in 0..2 {
        let w = &u[4 * i..4 * i + 4];
        let m = f2(theta, i);
        let h = &theta[H4[i]..H4[i] + 2];
        let a = [w[0] + w[2], w[1] + w[3]];
        let dw = [w[0] - w[2], w[1] - w[3]];
        let b = [h[0] * dw[0], h[1] * dw[1]];
        c.sum4[i] = a;
        c.diff4[i] = dw;
        let cc = [m[0] * a[0] + m[1] * a[1], m[2] * a[0] + m[3] * a[1]];
        let dd = [m[0] * b[0] + m[1] * b[1], m[2] * b[0] + m[3] * b[1]];
        let out4 = [cc[0], dd[0], cc[1], dd[1]];
        for k in 0..4 {
            y[2 * k + i] = out4[k];
        }
    }
    if let Some(slot) = cache {
        *slot = c;
    }
    tally(&mut counter, |f| {
        // H₈: 8 sums and differences, 4 diagonal products.
        f.add(8);
        f.diag(4);
        // Each F₄: 4 sums/differences, 2 diagonal products, two 2×2 blocks.
        for _ in 0..2 {
            f.add(4);
            f.diag(2);
            f.dense(2, 2);
            f.dense(2, 2);
        }
    });
    y
}

/// Reverse pass: given `∂/∂y`, accumulates `∂/∂θ` into `g_theta` and
/// returns `∂/∂v`. `u` is recomputed from the cache and `θ`.
pub fn backward(theta: &[f64], cache: &Cache, gy: &[f64; 8], g_theta: &mut [f64]) -> [f64; 8] {
    let mut gu = [0.0; 8];
    for i in 0..2 {
        let m = f2(theta, i);
        let h = &theta[H4[i]..H4[i] + 2];
        let a = cache.sum4[i];
        let dw = cache.diff4[i];
        let b = [h[0] * dw[0], h[1] * dw[1]];
        // out4 = [c0, d0, c1, d1] sits at y[2k + i].
        let gc = [gy[i], gy[4 + i]];
        let gd = [gy[2 + i], gy[6 + i]];
        let o = F2[i];
        g_theta[o] += gc[0] * a[0] + gd[0] * b[0];
        g_theta[o + 1] += gc[0] * a[1] + gd[0] * b[1];
        g_theta[o + 2] += gc[1] * a[0] + gd[1] * b[0];
        g_theta[o + 3] += gc[1] * a[1] + gd[1] * b[1];
        let ga = [m[0] * gc[0] + m[2] * gc[1], m[1] * gc[0] + m[3] * gc[1]];
        let gb = [m[0] * gd[0] + m[2] * gd[1], m[1] * gd[0] + m[3] * gd[1]];
        for k in 0..2 {
            g_theta[H4[i] + k] += gb[k] * dw[k];
            let hb = h[k] * gb[k];
            gu[4 * i + k] = ga[k] + hb;
            gu[4 * i + k + 2] = ga[k] - hb;
        }
    }
    let mut gv = [0.0; 8];
    for k in 0..4 {
        g_theta[H8 + k] += gu[k + 4] * cache.diff8[k];
        let hb = theta[H8 + k] * gu[k + 4];
        gv[k] = gu[k] + hb;
        gv[k + 4] = gu[k] - hb;
    }
    gv
}

/// `H_{2k} = [[I_k, I_k], [D, −D]]`.
fn h_block(d: &[f64]) -> Matrix {
    let k = d.len();
    Matrix::from_fn(2 * k, 2 * k, |i, j| match (i < k, j < k) {
        (true, _) => {
            if i == j % k {
                1.0
            } else {
                0.0
            }
        }
        (false, left) => {
            if i - k == j % k {
                if left {
                    d[i - k]
                } else {
                    -d[i - k]
                }
            } else {
                0.0
            }
        }
    })
}

/// `P_{2k}ᵀ`: output `2j + h` takes input `h·k + j`.
fn interleave(size: usize) -> Matrix {
    let k = size / 2;
    Matrix::from_fn(size, size, |i, j| if j == (i % 2) * k + i / 2 { 1.0 } else { 0.0 })
}

fn blkdiag(a: &Matrix, b: &Matrix) -> Matrix {
    let (r1, c1) = a.shape();
    let (r2, c2) = b.shape();
    Matrix::from_fn(r1 + r2, c1 + c2, |i, j| {
        if i < r1 && j < c1 {
            a[(i, j)]
        } else if i >= r1 && j >= c1 {
            b[(i - r1, j - c1)]
        } else {
            0.0
        }
    })
}

/// The factors `(H₈, blkdiag(F₄⁽⁰⁾, F₄⁽¹⁾), P₈ᵀ)` as dense matrices; their
/// product right to left is `F₈`.
pub fn factors(theta: &[f64]) -> (Matrix, Matrix, Matrix) {
    let f4 = |i: usize| {
        let m = f2(theta, i);
        let f = Matrix::from_rows(&[[m[0], m[1]], [m[2], m[3]]]);
        interleave(4)
            .matmul(&blkdiag(&f, &f))
            .matmul(&h_block(&theta[H4[i]..H4[i] + 2]))
    };
    (h_block(&theta[H8..H8 + 4]), blkdiag(&f4(0), &f4(1)), interleave(8))
}

/// Dense `F₈`.
pub fn dense(theta: &[f64]) -> Matrix {
    let (h, b, p) = factors(theta);
    p.matmul(&b).matmul(&h)
}
