//! generate → split → train/fit → rollout-evaluate.

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use stnn_core::baselines::{dmd_fit, ffnn_init, ffnn_train_lm, havok_fit_multi, sindy_fit, FfnnConfig};
use stnn_core::dynsys::{
    generate_lorenz_trajectories, generate_lv_dataset, lv_environments, pairs_from_trajectories,
    train_validation_split, DatasetMeta, LvOptions, Trajectory, TrajectoryDataset,
};
use stnn_core::lm::{TrainOptions, TrainReport};
use stnn_core::rollout::{mse, RolloutPolicy};
use stnn_core::scaling::PairScaling;
use stnn_core::stnn::{init, train_lm, StnnConfig};
use stnn_core::Matrix;

use crate::config::{ExperimentConfig, ModelKind, System};
use crate::error::{CliError, Result};
use crate::io;
use crate::model::{Checkpoint, Model};

const INTEGRATION_TOL: f64 = 1e-12;
const LV_INTEGRATION_TOL: f64 = 1e-10;

/// One rollout to score: the samples up to and including the initial
/// state, and the reference samples after it.
#[derive(Clone, Debug)]
pub struct EvalCase {
    pub env: usize,
    pub times: Vec<f64>,
    pub history: Vec<Vec<f64>>,
    pub truth: Vec<Vec<f64>>,
}

/// Everything a model is trained and scored on.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub dt: f64,
    pub state_dim: usize,
    pub width: usize,
    pub env_coord: Option<usize>,
    pub policy: RolloutPolicy,
    pub train: TrajectoryDataset,
    pub val: TrajectoryDataset,
    /// Training trajectories grouped by environment.
    pub groups: Vec<Vec<Trajectory>>,
    pub eval: Vec<EvalCase>,
    pub meta: Vec<DatasetMeta>,
}

fn hcat(ms: &[&Matrix]) -> Matrix {
    let rows = ms.first().map_or(0, |m| m.rows());
    let cols: usize = ms.iter().map(|m| m.cols()).sum();
    let mut out = Matrix::zeros(rows, cols);
    let mut c0 = 0;
    for m in ms {
        for i in 0..rows {
            out.row_mut(i)[c0..c0 + m.cols()].copy_from_slice(m.row(i));
        }
        c0 += m.cols();
    }
    out
}

fn cases(tr: &Trajectory, env: usize, history: usize, steps: usize) -> Result<EvalCase> {
    if tr.len() < history + steps {
        return Err(CliError::config(format!(
            "evaluation needs {} samples per trajectory, only {} available",
            history + steps,
            tr.len()
        )));
    }
    Ok(EvalCase {
        env,
        times: tr.times[history - 1..history + steps].to_vec(),
        history: tr.states[..history].to_vec(),
        truth: tr.states[history..history + steps].to_vec(),
    })
}

pub fn prepare(cfg: &ExperimentConfig) -> Result<Prepared> {
    let ev = &cfg.eval;
    match cfg.system {
        System::Lorenz => {
            let d = &cfg.lorenz;
            let trajs = generate_lorenz_trajectories(d.n_traj, d.noise, cfg.seed, d.dt, d.t_final, INTEGRATION_TOL)?;
            let (x, xp) = pairs_from_trajectories(&trajs);
            let meta = DatasetMeta {
                model: "lorenz".into(),
                params: stnn_core::dynsys::OdeModel::parameters(&stnn_core::dynsys::Lorenz::default()),
                seed: cfg.seed,
                n_traj: d.n_traj,
            };
            let all = TrajectoryDataset {
                x,
                xp,
                delta_t: d.dt,
                meta: meta.clone(),
            };
            let (train, val) = train_validation_split(&all, d.train_frac, cfg.seed)?;
            let t_eval = (ev.history + ev.rollout_steps) as f64 * d.dt;
            let eval_trajs = generate_lorenz_trajectories(ev.n_eval_trajectories, d.noise, ev.seed, d.dt, t_eval, INTEGRATION_TOL)?;
            let eval = eval_trajs
                .iter()
                .map(|t| cases(t, 0, ev.history, ev.rollout_steps))
                .collect::<Result<Vec<_>>>()?;
            Ok(Prepared {
                dt: d.dt,
                state_dim: 3,
                width: 3,
                env_coord: None,
                policy: RolloutPolicy::Free,
                train,
                val,
                groups: vec![trajs],
                eval,
                meta: vec![meta],
            })
        }
        System::LotkaVolterra => {
            let d = &cfg.lotka_volterra;
            let envs = lv_environments(d.n_env, cfg.seed, d.param_range);
            let opts = LvOptions {
                n_train_traj: d.n_train_traj,
                n_test_traj: d.n_test_traj,
                dt: d.dt,
                points: d.points,
                ic_range: d.ic_range,
                tol: LV_INTEGRATION_TOL,
            };
            let data = generate_lv_dataset(&envs, &opts, cfg.seed)?;
            let xs: Vec<&Matrix> = data.iter().map(|e| &e.train.x).collect();
            let ys: Vec<&Matrix> = data.iter().map(|e| &e.train.xp).collect();
            let vxs: Vec<&Matrix> = data.iter().map(|e| &e.test.x).collect();
            let vys: Vec<&Matrix> = data.iter().map(|e| &e.test.xp).collect();
            let meta: Vec<DatasetMeta> = data.iter().map(|e| e.train.meta.clone()).collect();
            let mut eval = Vec::new();
            for e in &data {
                for t in &e.test_trajectories {
                    eval.push(cases(t, e.env.id, ev.history, ev.rollout_steps)?);
                }
            }
            let pooled = |x: Matrix, xp: Matrix| TrajectoryDataset {
                x,
                xp,
                delta_t: d.dt,
                meta: meta[0].clone(),
            };
            Ok(Prepared {
                dt: d.dt,
                state_dim: 2,
                width: 4,
                env_coord: Some(3),
                policy: RolloutPolicy::LotkaVolterra { dt: d.dt },
                train: pooled(hcat(&xs), hcat(&ys)),
                val: pooled(hcat(&vxs), hcat(&vys)),
                groups: data.iter().map(|e| e.train_trajectories.clone()).collect(),
                eval,
                meta,
            })
        }
    }
}

fn pad(m: &Matrix, width: usize) -> Matrix {
    Matrix::from_fn(width, m.cols(), |i, j| if i < m.rows() { m[(i, j)] } else { 0.0 })
}

fn train_options(cfg: &ExperimentConfig, m: usize) -> TrainOptions {
    TrainOptions {
        epochs: cfg.training.epochs,
        batch_size: cfg.training.batch_size.map_or(m, |b| b.min(m)),
        steps_per_batch: cfg.training.steps_per_batch,
        lm: cfg.training.lm,
        seed: cfg.seed,
    }
}

/// Result of the train/fit stage.
pub struct Fitted {
    pub checkpoint: Checkpoint,
    /// Regularized training loss for networks; one-step training MSE in
    /// state units for the fitted baselines.
    pub train_error: f64,
    pub report: Option<TrainReport>,
}

fn one_step_mse(ck: &Checkpoint, p: &Prepared) -> Result<f64> {
    if let Model::Havok { .. } = ck.model {
        let q = ck.history_len();
        let mut pred = Vec::new();
        let mut truth = Vec::new();
        for tr in p.groups.iter().flatten() {
            for k in q..tr.len() {
                let r = ck.forecast(&tr.states[k - q..k], 1)?;
                pred.push(r.states[1].clone());
                truth.push(tr.states[k].clone());
            }
        }
        return Ok(mse(&pred, &truth, p.state_dim));
    }
    let mut pred = Vec::with_capacity(p.train.len());
    let mut truth = Vec::with_capacity(p.train.len());
    for j in 0..p.train.len() {
        pred.push(ck.step(&p.train.x.column(j))?);
        truth.push(p.train.xp.column(j));
    }
    Ok(mse(&pred, &truth, p.state_dim))
}

pub fn fit(cfg: &ExperimentConfig, p: &Prepared) -> Result<Fitted> {
    let shell = |model| Checkpoint {
        system: Some(cfg.system),
        dt: p.dt,
        state_dim: p.state_dim,
        width: p.width,
        env_coord: p.env_coord,
        policy: p.policy.clone(),
        model,
    };
    let target = cfg.target.into();
    match cfg.model {
        ModelKind::Stnn => {
            let (x, xp) = (pad(&p.train.x, 4), pad(&p.train.xp, 4));
            let scaling = PairScaling::fit(&x, &xp, p.state_dim, target);
            let (xi, yi) = scaling.encode(&x, &xp);
            let (vx, vy) = scaling.encode(&pad(&p.val.x, 4), &pad(&p.val.xp, 4));
            let mut params = init(&StnnConfig {
                n: 4,
                p: cfg.stnn.p,
                activations: cfg.stnn.activations,
                alpha: cfg.stnn.alpha,
                seed: cfg.seed,
            })?;
            let report = train_lm(&mut params, (&xi, &yi), (&vx, &vy), &train_options(cfg, xi.cols()))?;
            Ok(Fitted {
                train_error: report.final_train_loss,
                checkpoint: shell(Model::Stnn { scaling, params }),
                report: Some(report),
            })
        }
        ModelKind::Ffnn => {
            let scaling = PairScaling::fit(&p.train.x, &p.train.xp, p.state_dim, target);
            let (xi, yi) = scaling.encode(&p.train.x, &p.train.xp);
            let (vx, vy) = scaling.encode(&p.val.x, &p.val.xp);
            let mut sizes = vec![p.width];
            sizes.extend(&cfg.ffnn.hidden);
            sizes.push(p.width);
            let mut params = ffnn_init(&FfnnConfig {
                sizes,
                activations: cfg.ffnn.activations.clone(),
                alpha: cfg.ffnn.alpha.clone(),
                seed: cfg.seed,
            })?;
            let report = ffnn_train_lm(&mut params, (&xi, &yi), (&vx, &vy), &train_options(cfg, xi.cols()))?;
            Ok(Fitted {
                train_error: report.final_train_loss,
                checkpoint: shell(Model::Ffnn { scaling, params }),
                report: Some(report),
            })
        }
        ModelKind::Dmd => {
            let model = dmd_fit(&p.train.x, &p.train.xp, cfg.dmd.rank)?;
            let ck = shell(Model::Dmd { model });
            Ok(Fitted {
                train_error: one_step_mse(&ck, p)?,
                checkpoint: ck,
                report: None,
            })
        }
        ModelKind::Sindy => {
            let models = p
                .groups
                .iter()
                .map(|g| {
                    let states: Vec<Vec<Vec<f64>>> = g
                        .iter()
                        .map(|t| t.states.iter().map(|s| s[..p.state_dim].to_vec()).collect())
                        .collect();
                    let refs: Vec<&[Vec<f64>]> = states.iter().map(|s| s.as_slice()).collect();
                    sindy_fit(&refs, p.dt, cfg.sindy.threshold, cfg.sindy.max_iter)
                })
                .collect::<std::result::Result<Vec<_>, _>>()?;
            let ck = shell(Model::Sindy { models });
            Ok(Fitted {
                train_error: one_step_mse(&ck, p)?,
                checkpoint: ck,
                report: None,
            })
        }
        ModelKind::Havok => {
            let mut models = Vec::new();
            for g in &p.groups {
                let mut per_coord = Vec::new();
                for c in 0..p.state_dim {
                    let series: Vec<Vec<f64>> = g.iter().map(|t| t.coordinate(c)).collect();
                    let refs: Vec<&[f64]> = series.iter().map(|s| s.as_slice()).collect();
                    per_coord.push(havok_fit_multi(&refs, cfg.havok.q, cfg.havok.r)?);
                }
                models.push(per_coord);
            }
            let ck = shell(Model::Havok { models });
            Ok(Fitted {
                train_error: one_step_mse(&ck, p)?,
                checkpoint: ck,
                report: None,
            })
        }
    }
}

/// Per-case predictions and the environment-averaged rollout MSE.
pub struct Evaluation {
    pub test_mse: f64,
    pub predictions: Vec<Vec<Vec<f64>>>,
}

/// Rollout MSE over every step and state coordinate, averaged over the
/// cases of each environment and then over environments. A rollout that
/// leaves the finite ball is a numerical failure.
pub fn evaluate(ck: &Checkpoint, p: &Prepared) -> Result<Evaluation> {
    let n_env = p.eval.iter().map(|c| c.env + 1).max().unwrap_or(0);
    let mut sums = vec![0.0; n_env];
    let mut counts = vec![0usize; n_env];
    let mut predictions = Vec::with_capacity(p.eval.len());
    for (i, case) in p.eval.iter().enumerate() {
        let r = ck.forecast(&case.history, case.truth.len())?;
        if let Some(k) = r.diverged_at {
            return Err(CliError::numerical(format!("rollout of evaluation trajectory {i} diverged at step {k}")));
        }
        let pred = r.states[1..].to_vec();
        sums[case.env] += mse(&pred, &case.truth, p.state_dim);
        counts[case.env] += 1;
        predictions.push(pred);
    }
    let per_env: Vec<f64> = sums.iter().zip(&counts).filter(|(_, &c)| c > 0).map(|(s, &c)| s / c as f64).collect();
    Ok(Evaluation {
        test_mse: per_env.iter().sum::<f64>() / per_env.len() as f64,
        predictions,
    })
}

/// Median wall time of one forecast step: 1000 timed calls after 100
/// warmup calls.
pub fn inference_time(ck: &Checkpoint, case: &EvalCase) -> Result<f64> {
    let call = || ck.forecast(&case.history, 1).map(|r| std::hint::black_box(r));
    for _ in 0..100 {
        call()?;
    }
    let mut times = Vec::with_capacity(1000);
    for _ in 0..1000 {
        let t0 = Instant::now();
        call()?;
        times.push(t0.elapsed().as_secs_f64());
    }
    times.sort_by(f64::total_cmp);
    Ok(0.5 * (times[499] + times[500]))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub model: String,
    /// Regularized loss for networks, one-step MSE otherwise.
    pub train_error: f64,
    pub params: usize,
    pub flops: u64,
    pub test_mse: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub model: String,
    /// Seconds spent in the train/fit stage.
    pub train_time: f64,
    /// Median seconds per forecast step.
    pub inference_time: f64,
}

pub struct RunOutput {
    pub metrics: MetricsRow,
    pub timing: TimingRow,
    pub split: String,
}

fn stage<T>(name: &'static str, hash: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| e.at(name, hash))
}

fn trajectory_header(state_dim: usize) -> Vec<String> {
    let names: Vec<String> = match state_dim {
        2 => vec!["x".into(), "y".into()],
        3 => vec!["x".into(), "y".into(), "z".into()],
        n => (1..=n).map(|i| format!("x{i}")).collect(),
    };
    let mut h = vec!["t".to_string()];
    h.extend(names.iter().map(|n| format!("{n}_true")));
    h.extend(names.iter().map(|n| format!("{n}_pred")));
    h
}

/// Predicted against true states of one case, initial state included.
pub fn write_comparison(path: &Path, case: &EvalCase, pred: &[Vec<f64>], state_dim: usize) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(trajectory_header(state_dim))?;
    let x0 = case.history.last().expect("nonempty history");
    let truth = std::iter::once(x0).chain(&case.truth);
    let pred = std::iter::once(x0).chain(pred);
    for ((t, a), b) in case.times.iter().zip(truth).zip(pred) {
        let mut row = vec![t.to_string()];
        row.extend(a[..state_dim].iter().map(|v| v.to_string()));
        row.extend(b[..state_dim].iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Runs one experiment and writes `config.json`, `model.json`,
/// `metrics.csv`, `timing.csv`, `trajectory.csv` and, for networks,
/// `train_report.json` under `out_dir`.
pub fn run(cfg: &ExperimentConfig, out_dir: &Path, model_path: Option<&Path>) -> Result<RunOutput> {
    let hash = cfg.hash();
    io::ensure_dir(out_dir)?;
    io::write_json(&out_dir.join("config.json"), cfg)?;
    let p = stage("generate", &hash, prepare(cfg))?;
    let t0 = Instant::now();
    let fitted = stage("train", &hash, fit(cfg, &p))?;
    let train_time = t0.elapsed().as_secs_f64();
    let ck = &fitted.checkpoint;
    io::write_json(model_path.unwrap_or(&out_dir.join("model.json")), ck)?;
    if let Some(rep) = &fitted.report {
        let mut rep = rep.clone();
        rep.wall_time = train_time;
        io::write_json(&out_dir.join("train_report.json"), &rep)?;
    }
    let ev = stage("rollout", &hash, evaluate(ck, &p))?;
    write_comparison(&out_dir.join("trajectory.csv"), &p.eval[0], &ev.predictions[0], p.state_dim)?;
    let flops = stage("count", &hash, ck.flops_per_step())?;
    let metrics = MetricsRow {
        model: ck.label(),
        train_error: fitted.train_error,
        params: ck.param_count(),
        flops,
        test_mse: ev.test_mse,
    };
    if !metrics.train_error.is_finite() || !metrics.test_mse.is_finite() {
        return Err(CliError::numerical("non-finite metrics").at("evaluate", &hash));
    }
    let timing = TimingRow {
        model: ck.label(),
        train_time,
        inference_time: stage("bench", &hash, inference_time(ck, &p.eval[0]))?,
    };
    write_rows(&out_dir.join("metrics.csv"), std::slice::from_ref(&metrics))?;
    write_rows(&out_dir.join("timing.csv"), std::slice::from_ref(&timing))?;
    Ok(RunOutput {
        metrics,
        timing,
        split: cfg.split_fingerprint(),
    })
}
