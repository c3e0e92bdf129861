use alloc::vec::Vec;
use core::f64::consts::PI;

use num_traits::Float;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::LinalgError;
use crate::flops::{tally, FlopCounter};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    /// `X_k = Σ_l v_l w^{kl}` with `w = exp(-2πi/n)`, unnormalized.
    Forward,
    /// Conjugate sum divided by `n`.
    Inverse,
}

/// Radix-2 FFT. The length must be a power of two; callers own padding.
pub fn fft(input: &[Complex64], direction: Direction) -> Result<Vec<Complex64>, LinalgError> {
    check_len(input.len())?;
    let mut buf = input.to_vec();
    fft_in_place(&mut buf, direction, None);
    Ok(buf)
}

/// Spectrum bins `0..=n/2` of a real signal of even power-of-two length.
pub fn rfft(input: &[f64]) -> Result<Vec<Complex64>, LinalgError> {
    check_len(input.len())?;
    if input.len() < 2 {
        return Ok(alloc::vec![Complex64::new(input[0], 0.0)]);
    }
    Ok(rfft_counted(input, None))
}

/// Inverse of [`rfft`]: rebuilds a real signal of length `n` from bins
/// `0..=n/2` of a Hermitian spectrum.
pub fn irfft(half: &[Complex64], n: usize) -> Result<Vec<f64>, LinalgError> {
    check_len(n)?;
    if half.len() != n / 2 + 1 {
        return Err(LinalgError::DimensionMismatch {
            expected: n / 2 + 1,
            got: half.len(),
        });
    }
    if n < 2 {
        return Ok(alloc::vec![half[0].re]);
    }
    Ok(irfft_counted(half, n, n, None))
}

fn check_len(len: usize) -> Result<(), LinalgError> {
    if len == 0 {
        return Err(LinalgError::Empty);
    }
    if !len.is_power_of_two() {
        return Err(LinalgError::NotPowerOfTwo {
            len,
            padded: len.next_power_of_two(),
        });
    }
    Ok(())
}

fn twiddle(k: usize, n: usize, sign: f64) -> Complex64 {
    let theta = sign * 2.0 * PI * (k as f64) / (n as f64);
    Complex64::new(theta.cos(), theta.sin())
}

/// In-place iterative radix-2 transform with bit-reversed input ordering.
/// Butterflies with a unit twiddle skip the complex multiply.
pub(crate) fn fft_in_place(
    buf: &mut [Complex64],
    direction: Direction,
    mut counter: Option<&mut FlopCounter>,
) {
    let n = buf.len();
    transform_unscaled(buf, direction, counter.as_deref_mut());
    if direction == Direction::Inverse && n > 1 {
        let inv = 1.0 / n as f64;
        for v in buf.iter_mut() {
            *v *= inv;
        }
        tally(&mut counter, |c| c.mul(2 * n));
    }
}

fn transform_unscaled(
    buf: &mut [Complex64],
    direction: Direction,
    mut counter: Option<&mut FlopCounter>,
) {
    let n = buf.len();
    debug_assert!(n.is_power_of_two());
    if n == 1 {
        return;
    }
    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = i.reverse_bits() >> (usize::BITS - bits);
        if j > i {
            buf.swap(i, j);
        }
    }
    let sign = match direction {
        Direction::Forward => -1.0,
        Direction::Inverse => 1.0,
    };
    let table: Vec<Complex64> = (0..n / 2).map(|k| twiddle(k, n, sign)).collect();

    let mut len = 2;
    while len <= n {
        let half = len / 2;
        let stride = n / len;
        for start in (0..n).step_by(len) {
            for j in 0..half {
                let a = buf[start + j];
                let b = if j == 0 {
                    buf[start + j + half]
                } else {
                    buf[start + j + half] * table[j * stride]
                };
                buf[start + j] = a + b;
                buf[start + j + half] = a - b;
            }
        }
        let butterflies = n / 2;
        let unit = n / len;
        tally(&mut counter, |c| {
            c.complex_mul(butterflies - unit);
            c.complex_add(2 * butterflies);
        });
        len *= 2;
    }
}

/// Real forward transform through a half-length complex FFT of the packed
/// even/odd samples.
pub(crate) fn rfft_counted(input: &[f64], mut counter: Option<&mut FlopCounter>) -> Vec<Complex64> {
    let n = input.len();
    let m = n / 2;
    let mut z: Vec<Complex64> = (0..m)
        .map(|k| Complex64::new(input[2 * k], input[2 * k + 1]))
        .collect();
    fft_in_place(&mut z, Direction::Forward, counter.as_deref_mut());

    let mut out = Vec::with_capacity(m + 1);
    for k in 0..=m {
        let zk = z[k % m];
        let zc = z[(m - k) % m].conj();
        let even = (zk + zc) * 0.5;
        // (zk - zc) / 2i
        let d = zk - zc;
        let odd = Complex64::new(d.im * 0.5, -d.re * 0.5);
        out.push(even + twiddle(k, n, -1.0) * odd);
    }
    tally(&mut counter, |c| {
        c.complex_add(3 * (m + 1));
        c.mul(4 * (m + 1));
        c.complex_mul(m + 1);
    });
    out
}

/// Real inverse transform producing only the first `keep` samples.
pub(crate) fn irfft_counted(
    half: &[Complex64],
    n: usize,
    keep: usize,
    mut counter: Option<&mut FlopCounter>,
) -> Vec<f64> {
    let m = n / 2;
    let mut z: Vec<Complex64> = (0..m)
        .map(|k| {
            let xk = half[k];
            let xc = half[m - k].conj();
            let even = (xk + xc) * 0.5;
            let odd = (xk - xc) * twiddle(k, n, 1.0) * 0.5;
            even + Complex64::new(-odd.im, odd.re)
        })
        .collect();
    tally(&mut counter, |c| {
        c.complex_add(3 * m);
        c.mul(4 * m);
        c.complex_mul(m);
    });

    // Unnormalized inverse, then scale only the samples we keep.
    transform_unscaled(&mut z, Direction::Inverse, counter.as_deref_mut());

    let scale = 1.0 / m as f64;
    let mut out = Vec::with_capacity(keep);
    for i in 0..keep {
        let zk = z[i / 2];
        out.push(if i % 2 == 0 { zk.re } else { zk.im } * scale);
    }
    tally(&mut counter, |c| c.mul(keep));
    out
}
