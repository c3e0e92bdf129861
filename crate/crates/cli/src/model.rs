//! Trained models behind one rollout interface, and their checkpoint
//! format.
//!
//! Rows are in the system's native layout: `(x, y, z)` for Lorenz and
//! `(x, y, t, env)` for Lotka–Volterra. The structured network works on
//! width 4, so Lorenz rows are padded with a zero on the way in.

use serde::{Deserialize, Serialize};
use stnn_core::baselines::{DmdModel, FfnnParams, HavokModel, SindyModel};
use stnn_core::dynsys::rk4;
use stnn_core::rollout::{rollout_with, Rollout, RolloutPolicy};
use stnn_core::scaling::PairScaling;
use stnn_core::stnn::StnnParams;
use stnn_core::FlopCounter;

use crate::config::System;
use crate::error::{CliError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Model {
    /// `scaling` acts on padded width-4 rows.
    Stnn { scaling: PairScaling, params: StnnParams },
    Ffnn { scaling: PairScaling, params: FfnnParams },
    Dmd { model: DmdModel },
    /// One model per environment.
    Sindy { models: Vec<SindyModel> },
    /// Per environment, one model per state coordinate.
    Havok { models: Vec<Vec<HavokModel>> },
}

/// `model.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub system: Option<System>,
    pub dt: f64,
    /// Leading coordinates that evolve; the rest are inputs only.
    pub state_dim: usize,
    pub width: usize,
    /// Coordinate holding the environment id, if any.
    pub env_coord: Option<usize>,
    pub policy: RolloutPolicy,
    pub model: Model,
}

fn pad4(x: &[f64]) -> [f64; 4] {
    let mut out = [0.0; 4];
    out[..x.len()].copy_from_slice(x);
    out
}

/// RK4 stage combinations: three `x + c·k` updates and the weighted sum.
const RK4_COMBINE_PER_DIM: usize = 13;

impl Checkpoint {
    pub fn label(&self) -> String {
        match &self.model {
            Model::Stnn { params, .. } => format!("stnn_p{}", params.p()),
            Model::Ffnn { .. } => "ffnn".into(),
            Model::Dmd { .. } => "dmd".into(),
            Model::Sindy { .. } => "sindy".into(),
            Model::Havok { .. } => "havok".into(),
        }
    }

    /// Checks shapes after loading from disk.
    pub fn validate(&self) -> Result<()> {
        if self.state_dim == 0 || self.state_dim > self.width || !(self.dt > 0.0) {
            return Err(CliError::config("checkpoint has an inconsistent state layout"));
        }
        match &self.model {
            Model::Stnn { params, .. } => {
                StnnParams::new(params.config.clone(), params.theta.clone())?;
                if self.width > 4 {
                    return Err(CliError::config("the structured network takes at most 4 coordinates"));
                }
            }
            Model::Ffnn { params, .. } => {
                params.config.validate()?;
                if params.theta.len() != params.config.n_params() || params.config.sizes[0] != self.width {
                    return Err(CliError::config("ffnn checkpoint does not match its configuration"));
                }
            }
            Model::Dmd { model } => {
                if model.a.shape() != (self.width, self.width) {
                    return Err(CliError::config("dmd operator does not match the state width"));
                }
            }
            Model::Sindy { models } => {
                if models.is_empty() || models.iter().any(|m| m.n != self.state_dim) {
                    return Err(CliError::config("sindy checkpoint does not match the state width"));
                }
            }
            Model::Havok { models } => {
                if models.is_empty() || models.iter().any(|m| m.len() != self.state_dim) {
                    return Err(CliError::config("havok checkpoint needs one model per state coordinate"));
                }
            }
        }
        Ok(())
    }

    /// Delay samples needed before the first forecast.
    pub fn history_len(&self) -> usize {
        match &self.model {
            Model::Havok { models } => models.iter().flatten().map(|m| m.q).max().unwrap_or(1),
            _ => 1,
        }
    }

    fn env(&self, x: &[f64]) -> usize {
        self.env_coord.map_or(0, |c| x[c].round().max(0.0) as usize)
    }

    fn pick<'a, T>(&self, per_env: &'a [T], x: &[f64]) -> Result<&'a T> {
        let e = self.env(x);
        per_env
            .get(e)
            .ok_or_else(|| CliError::config(format!("no model for environment {e}")))
    }

    /// One step of a one-step model. Auxiliary coordinates are copied;
    /// the rollout policy updates them.
    pub fn step(&self, x: &[f64]) -> Result<Vec<f64>> {
        let out = match &self.model {
            Model::Stnn { scaling, params } => {
                let xp = pad4(x);
                let y = params.forward(&scaling.encode_input(&xp), None)?;
                let mut next = scaling.decode_step(&xp, &y);
                next.truncate(self.width);
                next
            }
            Model::Ffnn { scaling, params } => {
                let y = params.forward(&scaling.encode_input(x), None)?;
                scaling.decode_step(x, &y)
            }
            Model::Dmd { model } => model.predict(x),
            Model::Sindy { models } => {
                let m = self.pick(models, x)?;
                let mut next = x.to_vec();
                let tr = rk4(m, &x[..self.state_dim], 0.0, self.dt, 1);
                next[..self.state_dim].copy_from_slice(&tr.states[1]);
                next
            }
            Model::Havok { .. } => {
                return Err(CliError::config("havok needs a delay history; use forecast"));
            }
        };
        Ok(out)
    }

    /// Forecasts `steps` samples after the last row of `history`. The
    /// returned rollout starts at that row.
    pub fn forecast(&self, history: &[Vec<f64>], steps: usize) -> Result<Rollout> {
        let x0 = history.last().ok_or_else(|| CliError::config("empty history"))?;
        if x0.len() != self.width {
            return Err(CliError::config(format!(
                "initial state has {} coordinates, the model expects {}",
                x0.len(),
                self.width
            )));
        }
        if let Model::Havok { models } = &self.model {
            let per_coord = self.pick(models, x0)?;
            let mut states = vec![x0.clone(); steps + 1];
            for (c, m) in per_coord.iter().enumerate() {
                if history.len() < m.q {
                    return Err(CliError::config(format!("havok needs {} history samples, got {}", m.q, history.len())));
                }
                let window: Vec<f64> = history[history.len() - m.q..].iter().map(|s| s[c]).collect();
                for (k, v) in m.predict(&window, steps)?.into_iter().enumerate() {
                    states[k + 1][c] = v;
                }
            }
            for k in 1..=steps {
                let (prev, next) = states.split_at_mut(k);
                self.policy.fix(&prev[k - 1], &mut next[0]);
            }
            let diverged_at = states
                .iter()
                .position(|s| s.iter().any(|v| !v.is_finite()) || s.iter().map(|v| v * v).sum::<f64>().sqrt() > stnn_core::rollout::DIVERGENCE_NORM);
            if let Some(k) = diverged_at {
                states.truncate(k);
            }
            return Ok(Rollout { states, diverged_at });
        }
        let mut failure = None;
        let r = rollout_with(
            |x| match self.step(x) {
                Ok(v) => v,
                Err(e) => {
                    failure.get_or_insert(e);
                    vec![f64::NAN; x.len()]
                }
            },
            x0,
            steps,
            &self.policy,
        );
        match failure {
            Some(e) => Err(e),
            None => Ok(r),
        }
    }

    pub fn param_count(&self) -> usize {
        match &self.model {
            Model::Stnn { params, .. } => stnn_core::stnn::count_params(params),
            Model::Ffnn { params, .. } => params.count_params(),
            Model::Dmd { model } => model.param_count(),
            Model::Sindy { models } => models.iter().map(|m| m.param_count()).sum(),
            Model::Havok { models } => models.iter().flatten().map(|m| m.param_count()).sum(),
        }
    }

    /// Flops of one forecast step, from instrumented forward passes where a
    /// counter exists. For the fitted baselines the count is static:
    /// `2n²` for DMD; per RK4 step four library evaluations plus
    /// `2·nnz` for SINDy; `2r² + 2r` per coordinate for HAVOK.
    pub fn flops_per_step(&self) -> Result<u64> {
        Ok(match &self.model {
            Model::Stnn { params, .. } => {
                let mut c = FlopCounter::with_bias_adds();
                params.forward(&[0.0; 4], Some(&mut c))?;
                c.total()
            }
            Model::Ffnn { params, .. } => {
                let mut c = FlopCounter::new();
                params.forward(&vec![0.0; params.config.sizes[0]], Some(&mut c))?;
                c.total()
            }
            Model::Dmd { model } => {
                let n = model.a.rows();
                (2 * n * n) as u64
            }
            Model::Sindy { models } => {
                // Environments differ in sparsity; report the costliest.
                let per_model = |m: &SindyModel| {
                    let products: usize = m.library.iter().map(|t| t.len().saturating_sub(1)).sum();
                    (4 * (products + 2 * m.nonzeros()) + RK4_COMBINE_PER_DIM * m.n) as u64
                };
                models.iter().map(per_model).max().unwrap_or(0)
            }
            Model::Havok { models } => models[0].iter().map(|m| (2 * m.r * m.r + 2 * m.r) as u64).sum(),
        })
    }
}
