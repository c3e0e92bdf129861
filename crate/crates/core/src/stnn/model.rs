use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;
use serde::{Deserialize, Serialize};

use super::butterfly::{self, Cache};
use super::layout::*;
use super::{Activation, StnnConfig, StnnError, N, PARAMS_PER_BRANCH, R};
use crate::bestfit::nuclear_norm;
use crate::flops::{tally, FlopCounter};
use crate::rng;
use crate::rollout::{rollout_with, Rollout, RolloutPolicy};
use crate::Matrix;

/// Configuration plus the flat trainable vector, branch-major with the
/// per-branch order of [`super::layout`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StnnParams {
    pub config: StnnConfig,
    pub theta: Vec<f64>,
}

/// Draws every trainable scalar from `U(−1/√fan_in, 1/√fan_in)`, where
/// `fan_in` is the input width of the enclosing factor (2 for `F₂`, 1 for
/// diagonals, the layer input width for biases). Branch `b` uses its own
/// random stream, so a branch does not depend on `p`.
pub fn init(cfg: &StnnConfig) -> Result<StnnParams, StnnError> {
    cfg.validate()?;
    let mut theta = Vec::with_capacity(cfg.n_params());
    for b in 0..cfg.p {
        let mut r = rng::stream(cfg.seed, b as u64);
        let mut draw = |count: usize, fan_in: f64, out: &mut Vec<f64>| {
            let bound = 1.0 / fan_in.sqrt();
            for _ in 0..count {
                out.push(rng::uniform(&mut r, -bound, bound));
            }
        };
        // Butterfly: two F₂ blocks, then the Ď₄, Ď₂⁽⁰⁾, Ď₂⁽¹⁾ diagonals.
        draw(8, 2.0, &mut theta);
        draw(8, 1.0, &mut theta);
        draw(BIAS1.len(), N as f64, &mut theta);
        draw(DHAT.len(), 1.0, &mut theta);
        draw(8, 2.0, &mut theta);
        draw(8, 1.0, &mut theta);
        draw(BIAS2.len(), R as f64, &mut theta);
        draw(BIAS3.len(), N as f64, &mut theta);
        draw(DOUT.len(), 1.0, &mut theta);
        draw(BIAS4.len(), N as f64, &mut theta);
    }
    debug_assert_eq!(theta.len(), cfg.n_params());
    Ok(StnnParams { config: cfg.clone(), theta })
}

pub fn count_params(params: &StnnParams) -> usize {
    params.theta.len()
}

/// `148p − 4`: per branch 64 + 68 + 4 + 8, plus `4(p − 1)` adds to sum
/// the branch outputs.
pub fn count_flops(cfg: &StnnConfig) -> usize {
    148 * cfg.p - 4
}

/// Forward intermediates of one branch.
#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct BranchCache {
    bf1: Cache,
    z1: [f64; R],
    a1: [f64; R],
    bf2: Cache,
    z2: [f64; N],
    a3: [f64; N],
    z3: [f64; N],
}

fn branch_forward(
    acts: &[Activation; 4],
    t: &[f64],
    x: &[f64; N],
    cache: Option<&mut BranchCache>,
    mut counter: Option<&mut FlopCounter>,
) -> [f64; N] {
    let mut c = BranchCache::default();
    let mut v = [0.0; R];
    v[..N].copy_from_slice(x);
    let y1 = butterfly::apply(&t[BUTTERFLY1], &v, Some(&mut c.bf1), counter.as_deref_mut());
    for k in 0..R {
        c.z1[k] = y1[k] + t[BIAS1.start + k];
        c.a1[k] = acts[0].apply(c.z1[k]);
    }
    tally(&mut counter, |f| f.bias(R));

    let mut s = [0.0; R];
    for k in 0..R {
        s[k] = t[DHAT.start + k] * c.a1[k];
    }
    tally(&mut counter, |f| f.diag(R));
    let y2 = butterfly::apply(&t[BUTTERFLY2], &s, Some(&mut c.bf2), counter.as_deref_mut());
    let mut a2 = [0.0; N];
    for k in 0..N {
        c.z2[k] = y2[k] + t[BIAS2.start + k];
        a2[k] = acts[1].apply(c.z2[k]);
    }
    tally(&mut counter, |f| f.bias(N));

    let mut out = [0.0; N];
    for k in 0..N {
        c.z3[k] = a2[N - 1 - k] + t[BIAS3.start + k];
        c.a3[k] = acts[2].apply(c.z3[k]);
        out[k] = t[DOUT.start + k] * c.a3[k] + t[BIAS4.start + k];
    }
    tally(&mut counter, |f| {
        f.bias(N);
        f.diag(N);
        f.bias(N);
    });
    if let Some(slot) = cache {
        *slot = c;
    }
    out
}

/// Output and pre-activation of the last layer. When `caches` is given it
/// must hold `p` slots.
pub(crate) fn forward_raw(
    cfg: &StnnConfig,
    theta: &[f64],
    x: &[f64; N],
    mut caches: Option<&mut [BranchCache]>,
    mut counter: Option<&mut FlopCounter>,
) -> ([f64; N], [f64; N]) {
    let mut z4 = [0.0; N];
    for b in 0..cfg.p {
        let t = &theta[b * PARAMS_PER_BRANCH..(b + 1) * PARAMS_PER_BRANCH];
        let slot = caches.as_deref_mut().map(|c| &mut c[b]);
        let out = branch_forward(&cfg.activations, t, x, slot, counter.as_deref_mut());
        for k in 0..N {
            z4[k] += out[k];
        }
    }
    tally(&mut counter, |f| f.add(N * (cfg.p - 1)));
    let mut y = [0.0; N];
    for k in 0..N {
        y[k] = cfg.activations[3].apply(z4[k]);
    }
    (y, z4)
}

/// `∂y_k/∂θ` written into `g` (length `64p`, overwritten).
pub(crate) fn output_gradient(
    cfg: &StnnConfig,
    theta: &[f64],
    caches: &[BranchCache],
    z4: &[f64; N],
    k: usize,
    g: &mut [f64],
) {
    g.iter_mut().for_each(|v| *v = 0.0);
    let gz4 = cfg.activations[3].derivative(z4[k]);
    let acts = &cfg.activations;
    for (b, c) in caches.iter().enumerate().take(cfg.p) {
        let off = b * PARAMS_PER_BRANCH;
        let t = &theta[off..off + PARAMS_PER_BRANCH];
        let gb = &mut g[off..off + PARAMS_PER_BRANCH];
        gb[BIAS4.start + k] = gz4;
        gb[DOUT.start + k] = gz4 * c.a3[k];
        // Only coordinate k of a₃ receives gradient.
        let gz3 = gz4 * t[DOUT.start + k] * acts[2].derivative(c.z3[k]);
        gb[BIAS3.start + k] = gz3;
        let j = N - 1 - k;
        let gz2 = gz3 * acts[1].derivative(c.z2[j]);
        gb[BIAS2.start + j] = gz2;
        let mut gy2 = [0.0; R];
        gy2[j] = gz2;
        let gs = butterfly::backward(&t[BUTTERFLY2], &c.bf2, &gy2, &mut gb[BUTTERFLY2]);
        let mut gz1 = [0.0; R];
        for i in 0..R {
            gb[DHAT.start + i] = gs[i] * c.a1[i];
            gz1[i] = gs[i] * t[DHAT.start + i] * acts[0].derivative(c.z1[i]);
            gb[BIAS1.start + i] = gz1[i];
        }
        butterfly::backward(&t[BUTTERFLY1], &c.bf1, &gz1, &mut gb[BUTTERFLY1]);
    }
}

/// Dense matrix of layer `layer ∈ 1..=4` in branch `b` from a branch
/// parameter block.
pub(crate) fn materialize_block(t: &[f64], layer: usize) -> Matrix {
    match layer {
        1 => {
            let f = butterfly::dense(&t[BUTTERFLY1]);
            Matrix::from_fn(R, N, |i, j| f[(i, j)])
        }
        2 => {
            let f = butterfly::dense(&t[BUTTERFLY2]);
            Matrix::from_fn(N, R, |i, j| f[(i, j)] * t[DHAT.start + j])
        }
        3 => Matrix::from_fn(N, N, |i, j| if i + j == N - 1 { 1.0 } else { 0.0 }),
        4 => Matrix::diag(&t[DOUT]),
        _ => panic!("layer index {layer} out of range 1..=4"),
    }
}

/// `Σ_l α_l Σ_b ‖W_l[b]‖_*`.
pub(crate) fn regularization(cfg: &StnnConfig, theta: &[f64]) -> Result<f64, StnnError> {
    let mut total = 0.0;
    for (l, &a) in cfg.alpha.iter().enumerate() {
        if a == 0.0 {
            continue;
        }
        for b in 0..cfg.p {
            let t = &theta[b * PARAMS_PER_BRANCH..(b + 1) * PARAMS_PER_BRANCH];
            total += a * nuclear_norm(&materialize_block(t, l + 1))?;
        }
    }
    Ok(total)
}

fn as_state(x: &[f64]) -> Result<[f64; N], StnnError> {
    x.try_into().map_err(|_| StnnError::DimensionMismatch {
        expected: N,
        got: x.len(),
    })
}

impl StnnParams {
    pub fn new(config: StnnConfig, theta: Vec<f64>) -> Result<Self, StnnError> {
        config.validate()?;
        if theta.len() != config.n_params() {
            return Err(StnnError::ParamCount {
                expected: config.n_params(),
                got: theta.len(),
            });
        }
        Ok(Self { config, theta })
    }

    pub fn p(&self) -> usize {
        self.config.p
    }

    pub fn branch(&self, b: usize) -> &[f64] {
        &self.theta[b * PARAMS_PER_BRANCH..(b + 1) * PARAMS_PER_BRANCH]
    }

    pub fn forward(&self, x: &[f64], counter: Option<&mut FlopCounter>) -> Result<Vec<f64>, StnnError> {
        let x = as_state(x)?;
        Ok(forward_raw(&self.config, &self.theta, &x, None, counter).0.to_vec())
    }

    /// `∂output/∂θ` at `x`, one row per output coordinate.
    pub fn jacobian(&self, x: &[f64]) -> Result<Matrix, StnnError> {
        let x = as_state(x)?;
        let mut ws = Workspace::new(self.p());
        let (_, z4) = forward_raw(&self.config, &self.theta, &x, Some(&mut ws.caches), None);
        let mut j = Matrix::zeros(N, self.theta.len());
        for k in 0..N {
            output_gradient(&self.config, &self.theta, &ws.caches, &z4, k, &mut ws.grad);
            j.row_mut(k).copy_from_slice(&ws.grad);
        }
        Ok(j)
    }

    /// Dense layer matrix `w_{l,l−1}` of branch `b`: `8×4`, `4×8`, `4×4`,
    /// `4×4` for `l = 1..=4`.
    pub fn materialize(&self, layer: usize, b: usize) -> Matrix {
        materialize_block(self.branch(b), layer)
    }

    /// The dense factors `(H₈, blkdiag(F₄, F₄), P₈ᵀ)` of the butterfly in
    /// layer 1 or 2 of branch `b`.
    pub fn butterfly_factors(&self, layer: usize, b: usize) -> (Matrix, Matrix, Matrix) {
        let range = if layer == 1 { BUTTERFLY1 } else { BUTTERFLY2 };
        butterfly::factors(&self.branch(b)[range])
    }

    /// Nuclear-norm term of the loss.
    pub fn regularization(&self) -> Result<f64, StnnError> {
        regularization(&self.config, &self.theta)
    }

    /// Same network with branches reordered: new branch `i` is old
    /// branch `perm[i]`.
    pub fn permute_branches(&self, perm: &[usize]) -> Self {
        let mut theta = Vec::with_capacity(self.theta.len());
        for &b in perm {
            theta.extend_from_slice(self.branch(b));
        }
        Self {
            config: self.config.clone(),
            theta,
        }
    }

    /// Feeds outputs back as inputs.
    pub fn rollout(&self, x0: &[f64], steps: usize, policy: &RolloutPolicy) -> Result<Rollout, StnnError> {
        as_state(x0)?;
        Ok(rollout_with(
            |x| {
                let s: [f64; N] = x.try_into().unwrap_or([f64::NAN; N]);
                forward_raw(&self.config, &self.theta, &s, None, None).0.to_vec()
            },
            x0,
            steps,
            policy,
        ))
    }
}

/// Buffers reused across forward/backward calls.
pub(crate) struct Workspace {
    pub caches: Vec<BranchCache>,
    pub grad: Vec<f64>,
}

impl Workspace {
    pub fn new(p: usize) -> Self {
        Self {
            caches: vec![BranchCache::default(); p],
            grad: vec![0.0; p * PARAMS_PER_BRANCH],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::svd;

    fn params(p: usize, seed: u64) -> StnnParams {
        init(&StnnConfig {
            seed,
            ..StnnConfig::with_p(p)
        })
        .unwrap()
    }

    #[test]
    fn counts_match_closed_forms() {
        for p in [1, 2, 4, 6, 8] {
            let net = params(p, 3);
            assert_eq!(count_params(&net), 64 * p);
            let mut c = FlopCounter::with_bias_adds();
            net.forward(&[0.1, 0.2, 0.3, 0.0], Some(&mut c)).unwrap();
            assert_eq!(c.total() as usize, count_flops(&net.config));
            assert_eq!(count_flops(&net.config), 148 * p - 4);
        }
        assert_eq!(count_flops(&StnnConfig::with_p(6)), 884);
        assert_eq!(count_flops(&StnnConfig::with_p(1)), 144);
    }

    #[test]
    fn init_bounds_and_determinism() {
        let a = params(3, 11);
        assert_eq!(a, params(3, 11));
        assert_ne!(a.theta, params(3, 12).theta);
        // Branch 0 does not depend on p.
        assert_eq!(a.branch(0), params(1, 11).branch(0));
        for b in 0..3 {
            let t = a.branch(b);
            assert!(t[0..8].iter().all(|v| v.abs() <= 1.0 / 2f64.sqrt()));
            assert!(t[BIAS2].iter().all(|v| v.abs() <= 1.0 / 8f64.sqrt()));
            assert!(t.iter().all(|v| v.abs() <= 1.0));
        }
    }

    #[test]
    fn zero_network_outputs_zero() {
        let mut net = params(2, 1);
        net.theta.iter_mut().for_each(|v| *v = 0.0);
        assert_eq!(net.forward(&[1.0, -2.0, 3.0, 0.5], None).unwrap(), vec![0.0; 4]);
    }

    #[test]
    fn forward_matches_materialized_layers() {
        let net = params(2, 5);
        let x = [0.3, -0.7, 1.1, 0.0];
        let acts = &net.config.activations;
        let mut y = [0.0; N];
        for b in 0..2 {
            let t = net.branch(b);
            let z1: Vec<f64> = net.materialize(1, b).matvec(&x).iter().zip(&t[BIAS1]).map(|(a, c)| a + c).collect();
            let a1: Vec<f64> = z1.iter().map(|v| acts[0].apply(*v)).collect();
            let a2: Vec<f64> = net
                .materialize(2, b)
                .matvec(&a1)
                .iter()
                .zip(&t[BIAS2])
                .map(|(a, c)| acts[1].apply(a + c))
                .collect();
            let a3: Vec<f64> = net
                .materialize(3, b)
                .matvec(&a2)
                .iter()
                .zip(&t[BIAS3])
                .map(|(a, c)| acts[2].apply(a + c))
                .collect();
            let o = net.materialize(4, b).matvec(&a3);
            for k in 0..N {
                y[k] += o[k] + t[BIAS4.start + k];
            }
        }
        let got = net.forward(&x, None).unwrap();
        for k in 0..N {
            assert!((got[k] - y[k]).abs() < 1e-13);
        }
    }

    #[test]
    fn regularization_is_sum_of_singular_values() {
        let net = params(3, 2);
        let mut expected = 0.0;
        for b in 0..3 {
            expected += svd(&net.materialize(2, b)).unwrap().s.iter().sum::<f64>();
        }
        assert!((net.regularization().unwrap() - 1e-7 * expected).abs() < 1e-20);
    }

    #[test]
    fn branch_permutation_is_invisible() {
        let net = params(4, 9);
        let perm = net.permute_branches(&[2, 0, 3, 1]);
        let x = [0.5, 0.25, -1.0, 0.0];
        let a = net.forward(&x, None).unwrap();
        let b = perm.forward(&x, None).unwrap();
        for k in 0..N {
            assert!((a[k] - b[k]).abs() < 1e-14);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut cfg = StnnConfig::with_p(2);
        cfg.activations = [
            Activation::Tanh,
            Activation::Sigmoid,
            Activation::LeakyRelu { slope: 0.1 },
            Activation::Tanh,
        ];
        let net = init(&cfg).unwrap();
        let x = [0.4, -0.3, 0.8, 0.1];
        let mut ws = Workspace::new(2);
        let (_, z4) = forward_raw(&cfg, &net.theta, &x, Some(&mut ws.caches), None);
        let h = 1e-6;
        for k in 0..N {
            output_gradient(&cfg, &net.theta, &ws.caches, &z4, k, &mut ws.grad);
            for i in 0..net.theta.len() {
                let mut tp = net.theta.clone();
                let mut tm = net.theta.clone();
                tp[i] += h;
                tm[i] -= h;
                let fd = (forward_raw(&cfg, &tp, &x, None, None).0[k] - forward_raw(&cfg, &tm, &x, None, None).0[k]) / (2.0 * h);
                assert!((fd - ws.grad[i]).abs() < 1e-7 * (1.0 + fd.abs()), "k {k} param {i}: {fd} vs {}", ws.grad[i]);
            }
        }
    }

    #[test]
    fn rollout_one_step_is_forward() {
        let net = params(2, 4);
        let x0 = [0.2, 0.1, -0.3, 0.0];
        let r = net.rollout(&x0, 1, &RolloutPolicy::Free).unwrap();
        assert_eq!(r.states[1], net.forward(&x0, None).unwrap());
    }

    #[test]
    fn rejects_wrong_width() {
        let net = params(1, 0);
        assert!(matches!(
            net.forward(&[1.0, 2.0, 3.0], None),
            Err(StnnError::DimensionMismatch { expected: 4, got: 3 })
        ));
    }
}
