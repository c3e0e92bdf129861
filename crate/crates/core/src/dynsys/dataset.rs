use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use num_traits::Float;
use serde::{Deserialize, Serialize};

use super::{integrate, DynError, Lorenz, LotkaVolterra, OdeModel, Trajectory};
use crate::{rng, Matrix};

/// Nominal Lorenz initial condition that the dataset perturbs.
pub const LORENZ_NOMINAL_IC: [f64; 3] = [0.0, 1.0, 20.0];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub model: String,
    pub params: BTreeMap<String, f64>,
    pub seed: u64,
    pub n_traj: usize,
}

/// Snapshot pairs: column `j` of `xp` is column `j` of `x` advanced by
/// `delta_t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryDataset {
    pub x: Matrix,
    pub xp: Matrix,
    pub delta_t: f64,
    pub meta: DatasetMeta,
}

impl TrajectoryDataset {
    pub fn len(&self) -> usize {
        self.x.cols()
    }

    pub fn is_empty(&self) -> bool {
        self.x.cols() == 0
    }

    pub fn select(&self, columns: &[usize]) -> Self {
        Self {
            x: self.x.select_columns(columns),
            xp: self.xp.select_columns(columns),
            delta_t: self.delta_t,
            meta: self.meta.clone(),
        }
    }
}

/// Consecutive-sample pairs within each trajectory, never across
/// trajectory boundaries. Returns `(X, X′)` with samples as columns.
pub fn pairs_from_trajectories(trajectories: &[Trajectory]) -> (Matrix, Matrix) {
    let n = trajectories.first().map_or(0, |t| t.dimension());
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for tr in trajectories {
        for w in tr.states.windows(2) {
            xs.push(w[0].clone());
            ys.push(w[1].clone());
        }
    }
    let cols = xs.len();
    let x = Matrix::from_fn(n, cols, |i, j| xs[j][i]);
    let xp = Matrix::from_fn(n, cols, |i, j| ys[j][i]);
    (x, xp)
}

/// Lorenz trajectories from the nominal initial condition plus uniform
/// noise in `[−noise_mag, noise_mag]³`. Trajectory `k` draws its noise
/// from its own stream of `seed`.
pub fn generate_lorenz_trajectories(
    n_traj: usize,
    noise_mag: f64,
    seed: u64,
    dt: f64,
    t_final: f64,
    tol: f64,
) -> Result<Vec<Trajectory>, DynError> {
    if n_traj == 0 {
        return Err(DynError::Invalid("at least one trajectory is required"));
    }
    let model = Lorenz::default();
    (0..n_traj)
        .map(|k| {
            let mut r = rng::stream(seed, k as u64);
            let x0: Vec<f64> = LORENZ_NOMINAL_IC
                .iter()
                .map(|c| c + rng::uniform(&mut r, -noise_mag, noise_mag))
                .collect();
            integrate(&model, &x0, (0.0, t_final), dt, tol)
        })
        .collect()
}

pub fn generate_lorenz_dataset(
    n_traj: usize,
    noise_mag: f64,
    seed: u64,
    dt: f64,
    t_final: f64,
) -> Result<TrajectoryDataset, DynError> {
    let trajs = generate_lorenz_trajectories(n_traj, noise_mag, seed, dt, t_final, 1e-12)?;
    let (x, xp) = pairs_from_trajectories(&trajs);
    Ok(TrajectoryDataset {
        x,
        xp,
        delta_t: dt,
        meta: DatasetMeta {
            model: String::from("lorenz"),
            params: Lorenz::default().parameters(),
            seed,
            n_traj,
        },
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub id: usize,
    pub params: LotkaVolterra,
}

/// `count` environments with each parameter uniform in `range`.
pub fn lv_environments(count: usize, seed: u64, range: (f64, f64)) -> Vec<Environment> {
    (0..count)
        .map(|id| {
            let mut r = rng::stream(seed, id as u64);
            let mut draw = || rng::uniform(&mut r, range.0, range.1);
            let params = LotkaVolterra {
                alpha: draw(),
                beta: draw(),
                gamma: draw(),
                delta: draw(),
            };
            Environment { id, params }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LvOptions {
    pub n_train_traj: usize,
    pub n_test_traj: usize,
    pub dt: f64,
    pub points: usize,
    pub ic_range: (f64, f64),
    pub tol: f64,
}

impl Default for LvOptions {
    fn default() -> Self {
        Self {
            n_train_traj: 8,
            n_test_traj: 32,
            dt: 0.5,
            points: 20,
            ic_range: (1.0, 3.0),
            tol: 1e-10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LvEnvironmentData {
    pub env: Environment,
    pub train: TrajectoryDataset,
    pub test: TrajectoryDataset,
    /// Rows `(x, y, t, env_id)` per sample.
    pub train_trajectories: Vec<Trajectory>,
    pub test_trajectories: Vec<Trajectory>,
}

fn augmented(tr: &Trajectory, env_id: usize) -> Trajectory {
    let states = tr
        .states
        .iter()
        .zip(&tr.times)
        .map(|(s, &t)| alloc::vec![s[0], s[1], t, env_id as f64])
        .collect::<Vec<_>>();
    Trajectory {
        times: tr.times.clone(),
        initial_condition: states[0].clone(),
        states,
    }
}

/// Per-environment train and test pairs. Rows are `(x, y, t, env_id)` and
/// map to `(x′, y′, t′, env_id)` at the next sample time.
pub fn generate_lv_dataset(
    environments: &[Environment],
    opts: &LvOptions,
    seed: u64,
) -> Result<Vec<LvEnvironmentData>, DynError> {
    if environments.is_empty() {
        return Err(DynError::Invalid("at least one environment is required"));
    }
    let t1 = opts.dt * opts.points as f64;
    let per_env = (opts.n_train_traj + opts.n_test_traj) as u64;
    environments
        .iter()
        .map(|env| {
            let mut run = |k: usize| -> Result<Trajectory, DynError> {
                let mut r = rng::stream(seed, env.id as u64 * per_env + k as u64);
                let x0 = [
                    rng::uniform(&mut r, opts.ic_range.0, opts.ic_range.1),
                    rng::uniform(&mut r, opts.ic_range.0, opts.ic_range.1),
                ];
                let tr = integrate(&env.params, &x0, (0.0, t1), opts.dt, opts.tol)?;
                Ok(augmented(&tr, env.id))
            };
            let train_trajectories = (0..opts.n_train_traj).map(&mut run).collect::<Result<Vec<_>, _>>()?;
            let test_trajectories = (opts.n_train_traj..opts.n_train_traj + opts.n_test_traj)
                .map(&mut run)
                .collect::<Result<Vec<_>, _>>()?;
            let meta = |n| DatasetMeta {
                model: String::from("lotka_volterra"),
                params: env.params.parameters(),
                seed,
                n_traj: n,
            };
            let (x, xp) = pairs_from_trajectories(&train_trajectories);
            let train = TrajectoryDataset {
                x,
                xp,
                delta_t: opts.dt,
                meta: meta(opts.n_train_traj),
            };
            let (x, xp) = pairs_from_trajectories(&test_trajectories);
            let test = TrajectoryDataset {
                x,
                xp,
                delta_t: opts.dt,
                meta: meta(opts.n_test_traj),
            };
            Ok(LvEnvironmentData {
                env: *env,
                train,
                test,
                train_trajectories,
                test_trajectories,
            })
        })
        .collect()
}

/// Random permutation split; the first `round(frac · m)` permuted pairs
/// form the training half.
pub fn train_validation_split(
    ds: &TrajectoryDataset,
    train_frac: f64,
    seed: u64,
) -> Result<(TrajectoryDataset, TrajectoryDataset), DynError> {
    let m = ds.len();
    let k = (train_frac * m as f64).round() as usize;
    if !(train_frac > 0.0 && train_frac < 1.0) || k == 0 || k >= m {
        return Err(DynError::EmptySplit {
            frac: train_frac,
            total: m,
        });
    }
    let mut idx: Vec<usize> = (0..m).collect();
    let mut r = rng::stream(seed, u64::MAX);
    rng::shuffle(&mut r, &mut idx);
    Ok((ds.select(&idx[..k]), ds.select(&idx[k..])))
}
