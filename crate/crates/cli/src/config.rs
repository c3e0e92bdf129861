//! Experiment configuration: defaults per system, a JSON file merged on
//! top, then command-line overrides.

use std::path::PathBuf;

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use stnn_core::lm::LmSettings;
use stnn_core::scaling::TargetKind;
use stnn_core::stnn::Activation;

use crate::error::{CliError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum System {
    Lorenz,
    LotkaVolterra,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Stnn,
    Ffnn,
    Dmd,
    Sindy,
    Havok,
}

impl ModelKind {
    pub fn is_network(self) -> bool {
        matches!(self, ModelKind::Stnn | ModelKind::Ffnn)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Absolute,
    Increment,
}

impl From<Target> for TargetKind {
    fn from(t: Target) -> Self {
        match t {
            Target::Absolute => TargetKind::Absolute,
            Target::Increment => TargetKind::Increment,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StnnSettings {
    pub p: usize,
    pub activations: [Activation; 4],
    pub alpha: [f64; 4],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FfnnSettings {
    /// Hidden widths; input and output widths follow the system.
    pub hidden: Vec<usize>,
    pub activations: Vec<Activation>,
    pub alpha: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DmdSettings {
    /// `null` for exact DMD.
    pub rank: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SindySettings {
    pub threshold: f64,
    pub max_iter: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HavokSettings {
    pub q: usize,
    pub r: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LorenzData {
    pub n_traj: usize,
    pub noise: f64,
    pub dt: f64,
    pub t_final: f64,
    /// Fraction of snapshot pairs used for training; the rest validate.
    pub train_frac: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LvData {
    pub n_env: usize,
    pub param_range: (f64, f64),
    pub n_train_traj: usize,
    pub n_test_traj: usize,
    pub dt: f64,
    pub points: usize,
    pub ic_range: (f64, f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingSettings {
    pub epochs: usize,
    /// `null`, or anything above the training-set size, means full batch.
    pub batch_size: Option<usize>,
    pub steps_per_batch: usize,
    pub lm: LmSettings,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSettings {
    /// Samples before the rollout start; the last one is the initial state.
    pub history: usize,
    pub rollout_steps: usize,
    /// Lorenz only; Lotka–Volterra evaluates every test trajectory.
    pub n_eval_trajectories: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system: System,
    pub model: ModelKind,
    /// Drives data generation, initialization and shuffling.
    pub seed: u64,
    pub target: Target,
    pub stnn: StnnSettings,
    pub ffnn: FfnnSettings,
    pub dmd: DmdSettings,
    pub sindy: SindySettings,
    pub havok: HavokSettings,
    pub lorenz: LorenzData,
    pub lotka_volterra: LvData,
    pub training: TrainingSettings,
    pub eval: EvalSettings,
}

fn default_activations() -> [Activation; 4] {
    [
        Activation::Tanh,
        Activation::LeakyRelu { slope: 0.01 },
        Activation::Relu,
        Activation::Identity,
    ]
}

impl ExperimentConfig {
    /// Desk-scale defaults.
    pub fn defaults(system: System, model: ModelKind) -> Self {
        let (training, eval) = match system {
            System::Lorenz => (
                TrainingSettings {
                    epochs: 5,
                    batch_size: Some(1000),
                    steps_per_batch: 20,
                    lm: LmSettings::default(),
                },
                EvalSettings {
                    history: 100,
                    rollout_steps: 500,
                    n_eval_trajectories: 1,
                    seed: 999,
                },
            ),
            System::LotkaVolterra => (
                TrainingSettings {
                    epochs: 20,
                    batch_size: None,
                    steps_per_batch: 20,
                    lm: LmSettings::default(),
                },
                EvalSettings {
                    history: 1,
                    rollout_steps: 19,
                    n_eval_trajectories: 1,
                    seed: 999,
                },
            ),
        };
        Self {
            system,
            model,
            seed: 0,
            target: Target::Increment,
            stnn: StnnSettings {
                p: 6,
                activations: default_activations(),
                alpha: [0.0, 1e-7, 0.0, 0.0],
            },
            ffnn: FfnnSettings {
                hidden: vec![30, 30, 30],
                activations: default_activations().to_vec(),
                alpha: vec![0.0, 1e-7, 0.0, 0.0],
            },
            dmd: DmdSettings { rank: None },
            sindy: SindySettings {
                threshold: 0.1,
                max_iter: 10,
            },
            havok: HavokSettings { q: 100, r: 15 },
            lorenz: LorenzData {
                n_traj: 10,
                noise: 1.0,
                dt: 0.01,
                t_final: 8.0,
                train_frac: 0.8,
            },
            lotka_volterra: LvData {
                n_env: 10,
                param_range: (0.25, 1.25),
                n_train_traj: 8,
                n_test_traj: 32,
                dt: 0.5,
                points: 20,
                ic_range: (1.0, 3.0),
            },
            training,
            eval,
        }
    }

    /// Full-scale data and training budget.
    pub fn apply_full(&mut self) {
        match self.system {
            System::Lorenz => {
                self.lorenz.n_traj = 100;
                self.training.epochs = 20;
            }
            System::LotkaVolterra => {
                self.training.epochs = 100;
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(CliError::config(m.to_string()));
        if self.stnn.p == 0 {
            return bad("stnn.p must be at least 1");
        }
        if self.ffnn.activations.len() != self.ffnn.hidden.len() + 1 || self.ffnn.alpha.len() != self.ffnn.hidden.len() + 1 {
            return bad("ffnn needs one activation and one alpha per weight layer (hidden + 1)");
        }
        if self.training.epochs == 0 || self.training.batch_size == Some(0) || self.training.steps_per_batch == 0 {
            return bad("training epochs, batch_size and steps_per_batch must be positive");
        }
        if self.eval.history == 0 || self.eval.rollout_steps == 0 {
            return bad("eval.history and eval.rollout_steps must be positive");
        }
        if self.havok.r == 0 || self.havok.r > self.havok.q {
            return bad("havok needs 1 <= r <= q");
        }
        if self.model == ModelKind::Havok && self.havok.q > self.eval.history {
            return bad("havok.q exceeds eval.history: the rollout has no full delay window");
        }
        if !(self.sindy.threshold >= 0.0) {
            return bad("sindy.threshold must be nonnegative");
        }
        match self.system {
            System::Lorenz => {
                let d = &self.lorenz;
                if d.n_traj == 0 || !(d.dt > 0.0) || !(d.t_final > d.dt) || !(d.noise >= 0.0) {
                    return bad("lorenz needs n_traj >= 1, dt > 0, t_final > dt and noise >= 0");
                }
                if !(d.train_frac > 0.0 && d.train_frac < 1.0) {
                    return bad("lorenz.train_frac must lie in (0, 1)");
                }
                if self.eval.n_eval_trajectories == 0 {
                    return bad("eval.n_eval_trajectories must be positive");
                }
            }
            System::LotkaVolterra => {
                let d = &self.lotka_volterra;
                if d.n_env == 0 || d.n_train_traj == 0 || d.n_test_traj == 0 || !(d.dt > 0.0) || d.points < 2 {
                    return bad("lotka_volterra needs n_env, n_train_traj, n_test_traj >= 1, dt > 0 and points >= 2");
                }
                if self.eval.history + self.eval.rollout_steps > d.points {
                    return bad("eval.history + eval.rollout_steps exceeds lotka_volterra.points");
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// First 16 hex digits of the SHA-256 of the canonical JSON.
    pub fn hash(&self) -> String {
        hex16(serde_json::to_string(self).expect("config serializes").as_bytes())
    }

    /// Identifies the data and evaluation protocol, independent of the
    /// model. Runs can only be compared when these agree.
    pub fn split_fingerprint(&self) -> String {
        let data = match self.system {
            System::Lorenz => serde_json::to_value(&self.lorenz),
            System::LotkaVolterra => serde_json::to_value(&self.lotka_volterra),
        }
        .expect("config serializes");
        let v = serde_json::json!({
            "system": self.system,
            "seed": self.seed,
            "data": data,
            "eval": self.eval,
        });
        hex16(v.to_string().as_bytes())
    }
}

fn hex16(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().take(8).map(|b| format!("{b:02x}")).collect()
}

/// Recursively overlays `top` onto `base`.
fn merge(base: &mut Value, top: Value) {
    match (base, top) {
        (Value::Object(b), Value::Object(t)) => {
            for (k, v) in t {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Flags shared by every experiment-running subcommand.
#[derive(Args, Clone, Debug, Default)]
pub struct ExperimentArgs {
    /// JSON config; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub system: Option<System>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Full-scale data and training budget instead of desk scale.
    #[arg(long)]
    pub full: bool,
    #[arg(long, value_enum)]
    pub target: Option<Target>,
    /// StNN branch count.
    #[arg(long)]
    pub p: Option<usize>,
    /// FFNN hidden widths, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub steps_per_batch: Option<usize>,
    #[arg(long)]
    pub n_traj: Option<usize>,
    #[arg(long)]
    pub n_env: Option<usize>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub t_final: Option<f64>,
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub train_frac: Option<f64>,
    #[arg(long)]
    pub history: Option<usize>,
    #[arg(long)]
    pub rollout_steps: Option<usize>,
    #[arg(long)]
    pub n_eval: Option<usize>,
    #[arg(long)]
    pub eval_seed: Option<u64>,
    /// DMD truncation rank.
    #[arg(long)]
    pub rank: Option<usize>,
    /// SINDy threshold.
    #[arg(long)]
    pub threshold: Option<f64>,
    /// HAVOK delay length.
    #[arg(long)]
    pub q: Option<usize>,
    /// HAVOK rank.
    #[arg(long)]
    pub r: Option<usize>,
}

fn peek<T: for<'de> Deserialize<'de>>(file: &Value, key: &str) -> Result<Option<T>> {
    file.get(key)
        .map(|v| serde_json::from_value(v.clone()).map_err(|e| CliError::config(format!("{key}: {e}"))))
        .transpose()
}

impl ExperimentArgs {
    /// Defaults ← file ← `--full` ← flags. `model` from the subcommand
    /// wins over the file when given.
    pub fn resolve(&self, model: Option<ModelKind>) -> Result<ExperimentConfig> {
        let file = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
                let v: Value = serde_json::from_str(&text)
                    .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
                if !v.is_object() {
                    return Err(CliError::config("config file must hold a JSON object"));
                }
                v
            }
            None => Value::Object(Default::default()),
        };
        let system = match self.system {
            Some(s) => s,
            None => peek(&file, "system")?.unwrap_or(System::Lorenz),
        };
        let model = match model {
            Some(m) => m,
            None => peek(&file, "model")?.unwrap_or(ModelKind::Stnn),
        };
        let mut base = serde_json::to_value(ExperimentConfig::defaults(system, model))?;
        merge(&mut base, file);
        let mut cfg: ExperimentConfig =
            serde_json::from_value(base).map_err(|e| CliError::config(format!("config: {e}")))?;
        cfg.system = system;
        cfg.model = model;
        if self.full {
            cfg.apply_full();
        }
        self.apply(&mut cfg);
        cfg.validate()?;
        Ok(cfg)
    }

    fn apply(&self, c: &mut ExperimentConfig) {
        macro_rules! set {
            ($flag:expr => $($field:tt)+) => {
                if let Some(v) = $flag.clone() {
                    c.$($field)+ = v;
                }
            };
        }
        set!(self.seed => seed);
        set!(self.target => target);
        set!(self.p => stnn.p);
        set!(self.hidden => ffnn.hidden);
        set!(self.epochs => training.epochs);
        if let Some(b) = self.batch {
            c.training.batch_size = Some(b);
        }
        set!(self.steps_per_batch => training.steps_per_batch);
        set!(self.n_traj => lorenz.n_traj);
        set!(self.n_env => lotka_volterra.n_env);
        set!(self.t_final => lorenz.t_final);
        set!(self.noise => lorenz.noise);
        set!(self.train_frac => lorenz.train_frac);
        set!(self.history => eval.history);
        set!(self.rollout_steps => eval.rollout_steps);
        set!(self.n_eval => eval.n_eval_trajectories);
        set!(self.eval_seed => eval.seed);
        set!(self.threshold => sindy.threshold);
        set!(self.q => havok.q);
        set!(self.r => havok.r);
        if let Some(dt) = self.dt {
            match c.system {
                System::Lorenz => c.lorenz.dt = dt,
                System::LotkaVolterra => c.lotka_volterra.dt = dt,
            }
        }
        if let Some(r) = self.rank {
            c.dmd.rank = Some(r);
        }
    }
}
