use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;
use serde::{Deserialize, Serialize};

use super::{DynError, OdeModel};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub initial_condition: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.initial_condition.len()
    }

    /// Values of one coordinate over time.
    pub fn coordinate(&self, i: usize) -> Vec<f64> {
        self.states.iter().map(|s| s[i]).collect()
    }
}

// Dormand–Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
// Difference between the fifth- and fourth-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

struct Dopri<'a, M: OdeModel + ?Sized> {
    model: &'a M,
    tol: f64,
    k: [Vec<f64>; 7],
    tmp: Vec<f64>,
    err: Vec<f64>,
}

impl<'a, M: OdeModel + ?Sized> Dopri<'a, M> {
    fn new(model: &'a M, tol: f64) -> Self {
        let n = model.dimension();
        Self {
            model,
            tol,
            k: core::array::from_fn(|_| vec![0.0; n]),
            tmp: vec![0.0; n],
            err: vec![0.0; n],
        }
    }

    /// One trial step from `(t, y)` with `k[0] = f(t, y)` already set.
    /// Writes the candidate into `out` and returns the scaled error norm.
    fn trial(&mut self, t: f64, y: &[f64], h: f64, out: &mut [f64]) -> f64 {
        let n = y.len();
        for s in 1..7 {
            for i in 0..n {
                let mut acc = 0.0;
                for (j, a) in A[s][..s].iter().enumerate() {
                    acc += a * self.k[j][i];
                }
                self.tmp[i] = y[i] + h * acc;
            }
            let (_, rest) = self.k.split_at_mut(s);
            self.model.rhs(t + C[s] * h, &self.tmp, &mut rest[0]);
        }
        // Stage 7 was evaluated at the fifth-order solution.
        out.copy_from_slice(&self.tmp);
        let mut sum = 0.0;
        for i in 0..n {
            let mut e = 0.0;
            for (s, w) in E.iter().enumerate() {
                e += w * self.k[s][i];
            }
            self.err[i] = h * e;
            let sc = self.tol + self.tol * y[i].abs().max(out[i].abs());
            let r = self.err[i] / sc;
            sum += r * r;
        }
        (sum / n as f64).sqrt()
    }
}

/// Adaptive Dormand–Prince 5(4) integration sampled at `t0 + k·dt` for
/// `k = 0, 1, …` while the sample time lies before `t1` (end exclusive;
/// the sample count is `round((t1 − t0)/dt)`). Steps are shortened to land
/// exactly on each sample time; `tol` is used as both relative and
/// absolute tolerance.
pub fn integrate<M: OdeModel + ?Sized>(
    model: &M,
    x0: &[f64],
    t_span: (f64, f64),
    dt_sample: f64,
    tol: f64,
) -> Result<Trajectory, DynError> {
    let (t0, t1) = t_span;
    if !(t1 > t0) || !(dt_sample > 0.0) || !t0.is_finite() || !t1.is_finite() {
        return Err(DynError::InvalidSpan { t0, t1, dt: dt_sample });
    }
    if !(tol > 0.0) {
        return Err(DynError::InvalidTolerance(tol));
    }
    let n = model.dimension();
    if x0.len() != n {
        return Err(DynError::DimensionMismatch {
            expected: n,
            got: x0.len(),
        });
    }
    let count = ((t1 - t0) / dt_sample).round() as usize;
    if count == 0 {
        return Err(DynError::InvalidSpan { t0, t1, dt: dt_sample });
    }

    let mut times = Vec::with_capacity(count);
    let mut states = Vec::with_capacity(count);
    times.push(t0);
    states.push(x0.to_vec());

    let mut solver = Dopri::new(model, tol);
    let mut y = x0.to_vec();
    let mut t = t0;
    let mut cand = vec![0.0; n];
    let mut h = (dt_sample).min(1e-3 * (t1 - t0).max(dt_sample));
    model.rhs(t, &y, &mut solver.k[0]);

    for k in 1..count {
        let target = t0 + k as f64 * dt_sample;
        while t < target {
            let remaining = target - t;
            let landing = h >= remaining * (1.0 - 1e-12);
            let step = if landing { remaining } else { h };
            if step < 1e-14 * t.abs().max(1.0) {
                return Err(DynError::StepUnderflow { t });
            }
            let err = solver.trial(t, &y, step, &mut cand);
            if !err.is_finite() {
                if step <= 1e-14 * t.abs().max(1.0) {
                    return Err(DynError::NonFinite { t });
                }
                h = step * 0.2;
                continue;
            }
            let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            if err <= 1.0 {
                t = if landing { target } else { t + step };
                y.copy_from_slice(&cand);
                // First-same-as-last: stage 7 is f at the new point.
                let last = solver.k[6].clone();
                solver.k[0].copy_from_slice(&last);
                if !landing || factor < 1.0 {
                    h = step * factor;
                }
            } else {
                h = step * factor;
            }
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(DynError::NonFinite { t });
        }
        times.push(target);
        states.push(y.clone());
    }
    Ok(Trajectory {
        times,
        states,
        initial_condition: x0.to_vec(),
    })
}

/// Classical fixed-step fourth-order Runge–Kutta, returning `steps + 1`
/// samples spaced by `h`.
pub fn rk4<M: OdeModel + ?Sized>(model: &M, x0: &[f64], t0: f64, h: f64, steps: usize) -> Trajectory {
    let n = x0.len();
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    let mut y = x0.to_vec();
    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    times.push(t0);
    states.push(y.clone());
    for s in 0..steps {
        let t = t0 + s as f64 * h;
        model.rhs(t, &y, &mut k1);
        for i in 0..n {
            tmp[i] = y[i] + 0.5 * h * k1[i];
        }
        model.rhs(t + 0.5 * h, &tmp, &mut k2);
        for i in 0..n {
            tmp[i] = y[i] + 0.5 * h * k2[i];
        }
        model.rhs(t + 0.5 * h, &tmp, &mut k3);
        for i in 0..n {
            tmp[i] = y[i] + h * k3[i];
        }
        model.rhs(t + h, &tmp, &mut k4);
        for i in 0..n {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        times.push(t0 + (s + 1) as f64 * h);
        states.push(y.clone());
    }
    Trajectory {
        times,
        states,
        initial_condition: x0.to_vec(),
    }
}
