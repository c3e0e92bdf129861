//! Command-line surface.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use stnn_core::baselines::FfnnConfig;
use stnn_core::bestfit::{fit_operator, project_persymmetric_hankel, FitOptions, FitProblem};
use stnn_core::dynsys::{pairs_from_trajectories, DatasetMeta, TrajectoryDataset};
use stnn_core::hankel::complexity_report;
use stnn_core::rollout::RolloutPolicy;
use stnn_core::stnn::{init, StnnConfig};
use stnn_core::FlopCounter;

use crate::compare::{compare, saving};
use crate::config::{ExperimentArgs, ExperimentConfig, ModelKind, System};
use crate::error::{CliError, Result};
use crate::experiment::{self, fit, prepare, Prepared};
use crate::io;
use crate::model::Checkpoint;

#[derive(Parser, Debug)]
#[command(name = "stnn", version, about = "Structured networks and baselines for learning dynamical systems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Network {
    Stnn,
    Ffnn,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Baseline {
    Dmd,
    Sindy,
    Havok,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum BenchKind {
    /// Flops of the dense, shift and FFT Hankel matvecs.
    Hankel,
    /// Parameters and flops of the structured network against the FFNN.
    Stnn,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Simulate the datasets of an experiment and write them as CSV.
    Generate {
        #[command(flatten)]
        exp: ExperimentArgs,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
    /// Train a network and evaluate its rollout.
    Train {
        #[arg(value_enum)]
        model: Network,
        #[command(flatten)]
        exp: ExperimentArgs,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
        /// Checkpoint path; defaults to `<out-dir>/model.json`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit a baseline. With `--input`, fit on the given trajectory files
    /// and only write the checkpoint.
    Fit {
        #[arg(value_enum)]
        model: Baseline,
        /// Trajectory CSV (`t,x1,...,xn`); repeatable.
        #[arg(long)]
        input: Vec<PathBuf>,
        #[command(flatten)]
        exp: ExperimentArgs,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Regularized best-fit operator from snapshot pairs.
    FitHankel {
        /// Pairs CSV with header `x1..xn,y1..yn`.
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 0.0)]
        alpha: f64,
        #[arg(long)]
        out: PathBuf,
        /// Report path; defaults to the output path with `.json`.
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long, default_value_t = 5000)]
        max_iter: usize,
        /// Replace the estimate by its nearest per-symmetric Hankel matrix.
        #[arg(long)]
        project: bool,
    },
    /// Forecast from a checkpoint.
    Rollout {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        steps: usize,
        /// Initial state, comma separated.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        ic: Option<Vec<f64>>,
        /// Trajectory CSV whose samples precede the forecast.
        #[arg(long)]
        history: Option<PathBuf>,
        /// Environment id for Lotka–Volterra checkpoints.
        #[arg(long, default_value_t = 0)]
        env: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Static cost tables.
    Bench {
        #[arg(value_enum)]
        kind: BenchKind,
        #[arg(long, value_delimiter = ',', default_value = "2,4,8,16,32,64,128,256")]
        sizes: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "1,2,4,6,8")]
        p: Vec<usize>,
        /// CSV path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run several configs on a shared split and tabulate savings.
    Compare {
        /// Experiment config JSON; at least two.
        #[arg(long = "config", required = true)]
        configs: Vec<PathBuf>,
        /// Instantiate models for counts without training or evaluation.
        #[arg(long)]
        counts_only: bool,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
}

pub fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate { exp, out_dir } => generate(&exp.resolve(None)?, &out_dir),
        Command::Train { model, exp, out_dir, out } => {
            let kind = match model {
                Network::Stnn => ModelKind::Stnn,
                Network::Ffnn => ModelKind::Ffnn,
            };
            let cfg = exp.resolve(Some(kind))?;
            report(experiment::run(&cfg, &out_dir, out.as_deref())?);
            Ok(())
        }
        Command::Fit { model, input, exp, out_dir, out } => {
            let kind = match model {
                Baseline::Dmd => ModelKind::Dmd,
                Baseline::Sindy => ModelKind::Sindy,
                Baseline::Havok => ModelKind::Havok,
            };
            let cfg = exp.resolve(Some(kind))?;
            if input.is_empty() {
                report(experiment::run(&cfg, &out_dir, out.as_deref())?);
                Ok(())
            } else {
                fit_files(&cfg, &input, &out.unwrap_or_else(|| out_dir.join("model.json")))
            }
        }
        Command::FitHankel { input, alpha, out, report, max_iter, project } => {
            fit_hankel(&input, alpha, &out, report.as_deref(), max_iter, project)
        }
        Command::Rollout { model, steps, ic, history, env, out } => rollout(&model, steps, ic, history.as_deref(), env, &out),
        Command::Bench { kind, sizes, p, out } => bench(kind, &sizes, &p, out.as_deref()),
        Command::Compare { configs, counts_only, out_dir } => {
            let cfgs = configs
                .iter()
                .map(|path| {
                    ExperimentArgs {
                        config: Some(path.clone()),
                        ..Default::default()
                    }
                    .resolve(None)
                })
                .collect::<Result<Vec<_>>>()?;
            let c = compare(&cfgs, &out_dir, counts_only)?;
            for r in &c.rows {
                println!(
                    "{:<10} params {:>6} ({:>6.1}%)  flops {:>6} ({:>6.1}%)",
                    r.model, r.params, r.param_saving, r.flops, r.flop_saving
                );
            }
            for f in &c.footnotes {
                println!("note: {f}");
            }
            Ok(())
        }
    }
}

fn report(out: experiment::RunOutput) {
    let m = &out.metrics;
    println!(
        "{}: train_error {:e}  test_mse {:e}  params {}  flops {}  train_time {:.2}s  inference {:.3e}s",
        m.model, m.train_error, m.test_mse, m.params, m.flops, out.timing.train_time, out.timing.inference_time
    );
}

#[derive(Serialize)]
struct Manifest<'a> {
    system: System,
    seed: u64,
    dt: f64,
    train_trajectories: usize,
    eval_trajectories: usize,
    train_pairs: usize,
    val_pairs: usize,
    environments: &'a [DatasetMeta],
}

/// Writes `dataset.json`, `pairs.csv` (training pairs), every training
/// trajectory and every evaluation trajectory.
pub fn generate(cfg: &ExperimentConfig, out_dir: &Path) -> Result<()> {
    let p = prepare(cfg).map_err(|e| e.at("generate", &cfg.hash()))?;
    io::ensure_dir(out_dir)?;
    io::write_json(&out_dir.join("config.json"), cfg)?;
    let lv = p.env_coord.is_some();
    let prefix = |env: usize| if lv { format!("env{env:02}_") } else { String::new() };
    for (e, group) in p.groups.iter().enumerate() {
        for (k, tr) in group.iter().enumerate() {
            let path = out_dir.join(format!("{}train_{k:03}.csv", prefix(e)));
            io::write_trajectory(&path, &tr.times, &tr.states, p.state_dim)?;
        }
    }
    let mut per_env = vec![0usize; p.groups.len()];
    for case in &p.eval {
        let k = per_env[case.env];
        per_env[case.env] += 1;
        let states: Vec<Vec<f64>> = case.history.iter().chain(&case.truth).cloned().collect();
        let times: Vec<f64> = (0..states.len()).map(|i| i as f64 * p.dt).collect();
        let path = out_dir.join(format!("{}eval_{k:03}.csv", prefix(case.env)));
        io::write_trajectory(&path, &times, &states, p.state_dim)?;
    }
    io::write_pairs(&out_dir.join("pairs.csv"), &p.train.x, &p.train.xp)?;
    io::write_json(
        &out_dir.join("dataset.json"),
        &Manifest {
            system: cfg.system,
            seed: cfg.seed,
            dt: p.dt,
            train_trajectories: p.groups.iter().map(|g| g.len()).sum(),
            eval_trajectories: p.eval.len(),
            train_pairs: p.train.len(),
            val_pairs: p.val.len(),
            environments: &p.meta,
        },
    )?;
    println!(
        "wrote {} training trajectories, {} evaluation trajectories, {} training pairs to {}",
        p.groups.iter().map(|g| g.len()).sum::<usize>(),
        p.eval.len(),
        p.train.len(),
        out_dir.display()
    );
    Ok(())
}

fn fit_files(cfg: &ExperimentConfig, inputs: &[PathBuf], out: &Path) -> Result<()> {
    let trajs = inputs.iter().map(|p| io::read_trajectory(p)).collect::<Result<Vec<_>>>()?;
    let dt = io::sample_interval(&trajs[0])?;
    let n = trajs[0].dimension();
    for t in &trajs {
        if t.dimension() != n || (io::sample_interval(t)? - dt).abs() > 1e-9 * dt {
            return Err(CliError::config("input trajectories must share dimension and sample interval"));
        }
    }
    let (x, xp) = pairs_from_trajectories(&trajs);
    let ds = TrajectoryDataset {
        x,
        xp,
        delta_t: dt,
        meta: DatasetMeta {
            model: "input".into(),
            params: Default::default(),
            seed: cfg.seed,
            n_traj: trajs.len(),
        },
    };
    let p = Prepared {
        dt,
        state_dim: n,
        width: n,
        env_coord: None,
        policy: RolloutPolicy::Free,
        val: ds.select(&[]),
        train: ds,
        groups: vec![trajs],
        eval: Vec::new(),
        meta: Vec::new(),
    };
    let fitted = fit(cfg, &p).map_err(|e| e.at("fit", &cfg.hash()))?;
    let mut ck = fitted.checkpoint;
    ck.system = None;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        io::ensure_dir(dir)?;
    }
    io::write_json(out, &ck)?;
    println!("{}: one-step training MSE {:e}, {} params", ck.label(), fitted.train_error, ck.param_count());
    Ok(())
}

#[derive(Serialize)]
struct HankelReport {
    alpha: f64,
    objective_trace: Vec<f64>,
    rank: usize,
    iterations: usize,
    converged: bool,
    /// Defining samples when the estimate was projected.
    hankel_samples: Option<Vec<f64>>,
}

fn fit_hankel(input: &Path, alpha: f64, out: &Path, report: Option<&Path>, max_iter: usize, project: bool) -> Result<()> {
    let (x, xp) = io::read_pairs(input)?;
    let problem = FitProblem::new(x, xp, alpha)?;
    let opts = FitOptions {
        max_iter,
        ..Default::default()
    };
    let res = fit_operator(&problem, &opts)?;
    let (h, samples) = if project {
        let op = project_persymmetric_hankel(&res.h_hat)?;
        (op.dense(), Some(op.samples().to_vec()))
    } else {
        (res.h_hat.clone(), None)
    };
    io::write_matrix(out, &h)?;
    let report_path = report.map(Path::to_path_buf).unwrap_or_else(|| out.with_extension("json"));
    io::write_json(
        &report_path,
        &HankelReport {
            alpha,
            objective_trace: res.objective_trace,
            rank: res.rank,
            iterations: res.iterations,
            converged: res.converged,
            hankel_samples: samples,
        },
    )?;
    println!("rank {} after {} iterations (converged: {})", res.rank, res.iterations, res.converged);
    Ok(())
}

fn rollout(model: &Path, steps: usize, ic: Option<Vec<f64>>, history: Option<&Path>, env: usize, out: &Path) -> Result<()> {
    let ck: Checkpoint = io::read_json(model)?;
    ck.validate()?;
    if steps == 0 {
        return Err(CliError::config("--steps must be positive"));
    }
    let complete = |mut x: Vec<f64>| -> Result<Vec<f64>> {
        if x.len() == ck.state_dim && ck.width > ck.state_dim {
            // Lotka–Volterra rows carry time and environment.
            x.resize(ck.width, 0.0);
            if let Some(c) = ck.env_coord {
                x[c] = env as f64;
            }
        }
        if x.len() != ck.width {
            return Err(CliError::config(format!("state must have {} coordinates, got {}", ck.state_dim, x.len())));
        }
        Ok(x)
    };
    let (hist, t0) = match (ic, history) {
        (Some(x), None) => (vec![complete(x)?], 0.0),
        (None, Some(path)) => {
            let tr = io::read_trajectory(path)?;
            let t0 = *tr.times.last().expect("nonempty");
            let mut rows = tr.states.into_iter().map(&complete).collect::<Result<Vec<_>>>()?;
            if let RolloutPolicy::LotkaVolterra { .. } = ck.policy {
                for (row, t) in rows.iter_mut().zip(&tr.times) {
                    row[2] = *t;
                }
            }
            (rows, t0)
        }
        _ => return Err(CliError::config("give exactly one of --ic and --history")),
    };
    let r = ck.forecast(&hist, steps)?;
    if let Some(k) = r.diverged_at {
        return Err(CliError::numerical(format!("rollout diverged at step {k}")));
    }
    let times: Vec<f64> = (0..r.states.len()).map(|k| t0 + k as f64 * ck.dt).collect();
    io::write_trajectory(out, &times, &r.states, ck.state_dim)?;
    Ok(())
}

#[derive(Serialize)]
struct StnnBenchRow {
    p: usize,
    params: usize,
    flops: u64,
    ffnn_params: usize,
    ffnn_flops: u64,
    param_saving: f64,
    flop_saving: f64,
}

fn bench(kind: BenchKind, sizes: &[usize], ps: &[usize], out: Option<&Path>) -> Result<()> {
    let mut w: csv::Writer<Box<dyn std::io::Write>> = csv::Writer::from_writer(match out {
        Some(path) => Box::new(std::fs::File::create(path)?),
        None => Box::new(std::io::stdout()),
    });
    match kind {
        BenchKind::Hankel => {
            for row in complexity_report(sizes) {
                w.serialize(row)?;
            }
        }
        BenchKind::Stnn => {
            let ffnn = stnn_core::baselines::ffnn_init(&FfnnConfig::default())?;
            let mut c = FlopCounter::new();
            ffnn.forward(&[0.0; 3], Some(&mut c))?;
            let ffnn_flops = c.total();
            for &p in ps {
                let net = init(&StnnConfig::with_p(p))?;
                let mut c = FlopCounter::with_bias_adds();
                net.forward(&[0.0; 4], Some(&mut c))?;
                let params = net.theta.len();
                w.serialize(StnnBenchRow {
                    p,
                    params,
                    flops: c.total(),
                    ffnn_params: ffnn.count_params(),
                    ffnn_flops,
                    param_saving: saving(params as f64, ffnn.count_params() as f64),
                    flop_saving: saving(c.total() as f64, ffnn_flops as f64),
                })?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Loads a CSV written by [`crate::experiment::write_rows`].
pub fn read_rows<T: for<'de> serde::Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(CliError::from)).collect()
}
