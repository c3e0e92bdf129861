//! Autoregressive rollout of one-step models.

use alloc::vec::Vec;

use num_traits::Float;
use serde::{Deserialize, Serialize};

/// States whose Euclidean norm exceeds this are treated as divergent.
pub const DIVERGENCE_NORM: f64 = 1e6;

/// How auxiliary coordinates are updated between steps.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RolloutPolicy {
    /// Feed the output back unchanged.
    #[default]
    Free,
    /// Lorenz states padded as `(x, y, z, 0)`: the padding is reset to 0.
    PaddedLorenz,
    /// Lotka–Volterra rows `(x, y, t, env)`: time advances by `dt`, the
    /// environment id is held.
    LotkaVolterra { dt: f64 },
}

impl RolloutPolicy {
    pub fn fix(&self, prev: &[f64], next: &mut [f64]) {
        match self {
            RolloutPolicy::Free => {}
            RolloutPolicy::PaddedLorenz => {
                if let Some(pad) = next.get_mut(3) {
                    *pad = 0.0;
                }
            }
            RolloutPolicy::LotkaVolterra { dt } => {
                next[2] = prev[2] + dt;
                next[3] = prev[3];
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rollout {
    /// `states[0]` is the initial condition.
    pub states: Vec<Vec<f64>>,
    /// Step at which the state left the finite ball, if it did.
    pub diverged_at: Option<usize>,
}

impl Rollout {
    pub fn steps(&self) -> usize {
        self.states.len() - 1
    }
}

/// Iterates `step` from `x0` for `steps` steps. Stops early, flagging the
/// step, when a state becomes non-finite or its norm exceeds
/// [`DIVERGENCE_NORM`].
pub fn rollout_with<F>(mut step: F, x0: &[f64], steps: usize, policy: &RolloutPolicy) -> Rollout
where
    F: FnMut(&[f64]) -> Vec<f64>,
{
    let mut states = Vec::with_capacity(steps + 1);
    states.push(x0.to_vec());
    for k in 1..=steps {
        let prev = &states[k - 1];
        let mut next = step(prev);
        policy.fix(prev, &mut next);
        let norm = next.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !norm.is_finite() || norm > DIVERGENCE_NORM {
            return Rollout {
                states,
                diverged_at: Some(k),
            };
        }
        states.push(next);
    }
    Rollout {
        states,
        diverged_at: None,
    }
}

/// Mean squared error over every coordinate of `pred` against `truth`,
/// both given as sequences of equal-length states. Only the overlapping
/// prefix is compared.
pub fn mse(pred: &[Vec<f64>], truth: &[Vec<f64>], dims: usize) -> f64 {
    let k = pred.len().min(truth.len());
    if k == 0 {
        return f64::NAN;
    }
    let mut acc = 0.0;
    for (p, t) in pred[..k].iter().zip(&truth[..k]) {
        for i in 0..dims {
            let d = p[i] - t[i];
            acc += d * d;
        }
    }
    acc / (k * dims) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn linear_map_matches_powers() {
        let r = rollout_with(|x| vec![0.5 * x[0], 2.0 * x[1]], &[1.0, 1.0], 4, &RolloutPolicy::Free);
        assert_eq!(r.states[4], vec![0.0625, 16.0]);
        assert_eq!(r.diverged_at, None);
    }

    #[test]
    fn divergence_is_flagged() {
        let r = rollout_with(|x| vec![x[0] * 100.0], &[1.0], 10, &RolloutPolicy::Free);
        assert_eq!(r.diverged_at, Some(4));
        assert_eq!(r.steps(), 3);
    }

    #[test]
    fn policies_fix_auxiliary_coordinates() {
        let r = rollout_with(|x| x.iter().map(|v| v + 1.0).collect(), &[0.0; 4], 2, &RolloutPolicy::PaddedLorenz);
        assert_eq!(r.states[2], vec![2.0, 2.0, 2.0, 0.0]);
        let lv = RolloutPolicy::LotkaVolterra { dt: 0.5 };
        let r = rollout_with(|x| x.iter().map(|v| v * 3.0).collect(), &[1.0, 1.0, 0.0, 7.0], 2, &lv);
        assert_eq!(r.states[2], vec![9.0, 9.0, 1.0, 7.0]);
    }

    #[test]
    fn mse_naive() {
        let p = vec![vec![1.0, 2.0], vec![3.0, 4.0]];
        let t = vec![vec![1.0, 0.0], vec![0.0, 4.0]];
        assert_eq!(mse(&p, &t, 2), (4.0 + 9.0) / 4.0);
    }
}
