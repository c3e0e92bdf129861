//! Side-by-side runs with parameter and flop savings.

use std::path::Path;

use serde::{Deserialize, Serialize};
use stnn_core::baselines::ffnn_init;
use stnn_core::baselines::FfnnConfig;
use stnn_core::scaling::{PairScaling, Standardizer};
use stnn_core::stnn::{init, StnnConfig};

use crate::config::{ExperimentConfig, ModelKind};
use crate::error::{CliError, Result};
use crate::experiment::{self, fit, prepare, write_rows, MetricsRow};
use crate::model::{Checkpoint, Model};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub model: String,
    pub params: usize,
    pub flops: u64,
    /// `100·(1 − params/reference params)`.
    pub param_saving: f64,
    pub flop_saving: f64,
    /// Empty when only counts were requested.
    pub train_error: Option<f64>,
    pub test_mse: Option<f64>,
}

/// Savings of `value` against `reference`, in percent.
pub fn saving(value: f64, reference: f64) -> f64 {
    100.0 * (1.0 - value / reference)
}

/// An untrained checkpoint, enough for static counts.
fn untrained(cfg: &ExperimentConfig) -> Result<Checkpoint> {
    let p = prepare(cfg)?;
    let identity = |w: usize| PairScaling {
        state_dim: p.state_dim,
        target: cfg.target.into(),
        input: Standardizer::identity(w),
        output: Standardizer::identity(w),
    };
    let model = match cfg.model {
        ModelKind::Stnn => Model::Stnn {
            scaling: identity(4),
            params: init(&StnnConfig {
                n: 4,
                p: cfg.stnn.p,
                activations: cfg.stnn.activations,
                alpha: cfg.stnn.alpha,
                seed: cfg.seed,
            })?,
        },
        ModelKind::Ffnn => {
            let mut sizes = vec![p.width];
            sizes.extend(&cfg.ffnn.hidden);
            sizes.push(p.width);
            Model::Ffnn {
                scaling: identity(p.width),
                params: ffnn_init(&FfnnConfig {
                    sizes,
                    activations: cfg.ffnn.activations.clone(),
                    alpha: cfg.ffnn.alpha.clone(),
                    seed: cfg.seed,
                })?,
            }
        }
        _ => return Ok(fit(cfg, &p)?.checkpoint),
    };
    Ok(Checkpoint {
        system: Some(cfg.system),
        dt: p.dt,
        state_dim: p.state_dim,
        width: p.width,
        env_coord: p.env_coord,
        policy: p.policy.clone(),
        model,
    })
}

pub struct Comparison {
    pub rows: Vec<CompareRow>,
    pub footnotes: Vec<String>,
}

/// Runs (or, with `counts_only`, just instantiates) every config and
/// tabulates savings against the first FFNN config, or the first config
/// when there is no FFNN. All configs must share the evaluation split.
pub fn compare(cfgs: &[ExperimentConfig], out_dir: &Path, counts_only: bool) -> Result<Comparison> {
    if cfgs.len() < 2 {
        return Err(CliError::config("compare needs at least two configs"));
    }
    let split = cfgs[0].split_fingerprint();
    if let Some((i, _)) = cfgs.iter().enumerate().find(|(_, c)| c.split_fingerprint() != split) {
        return Err(CliError::config(format!(
            "config {i} uses a different evaluation split than config 0; comparisons must share the split"
        )));
    }
    crate::io::ensure_dir(out_dir)?;
    let mut metrics: Vec<(MetricsRow, bool)> = Vec::new();
    for (i, cfg) in cfgs.iter().enumerate() {
        if counts_only {
            let hash = cfg.hash();
            let ck = untrained(cfg).map_err(|e| e.at("count", &hash))?;
            let flops = ck.flops_per_step().map_err(|e| e.at("count", &hash))?;
            metrics.push((
                MetricsRow {
                    model: ck.label(),
                    train_error: f64::NAN,
                    params: ck.param_count(),
                    flops,
                    test_mse: f64::NAN,
                },
                false,
            ));
        } else {
            let dir = out_dir.join(format!("run{i:02}"));
            let out = experiment::run(cfg, &dir, None)?;
            metrics.push((out.metrics, true));
        }
    }
    let ref_idx = cfgs.iter().position(|c| c.model == ModelKind::Ffnn).unwrap_or(0);
    let reference = metrics[ref_idx].0.clone();
    let rows: Vec<CompareRow> = metrics
        .iter()
        .map(|(m, trained)| CompareRow {
            model: m.model.clone(),
            params: m.params,
            flops: m.flops,
            param_saving: saving(m.params as f64, reference.params as f64),
            flop_saving: saving(m.flops as f64, reference.flops as f64),
            train_error: trained.then_some(m.train_error),
            test_mse: trained.then_some(m.test_mse),
        })
        .collect();

    let mut footnotes = vec![format!(
        "savings are 100*(1 - value/reference) against row {ref_idx} ({}, {} params, {} flops)",
        reference.model, reference.params, reference.flops
    )];
    if cfgs[ref_idx].model == ModelKind::Ffnn {
        for (cfg, row) in cfgs.iter().zip(&rows) {
            if cfg.model != ModelKind::Stnn {
                continue;
            }
            match cfg.stnn.p {
                6 => footnotes.push(format!(
                    "{}: computed {:.1}% params, {:.1}% flops; reference figures 81% params, 76% and 78% flops",
                    row.model, row.param_saving, row.flop_saving
                )),
                1 => footnotes.push(format!(
                    "{}: computed {:.1}% params; reference figure 96% params",
                    row.model, row.param_saving
                )),
                _ => {}
            }
        }
    }
    write_rows(&out_dir.join("comparison.csv"), &rows)?;
    if !counts_only {
        let m: Vec<MetricsRow> = metrics.into_iter().map(|(m, _)| m).collect();
        write_rows(&out_dir.join("metrics.csv"), &m)?;
    }
    let mut notes = footnotes.join("\n");
    notes.push('\n');
    std::fs::write(out_dir.join("footnotes.txt"), notes)?;
    Ok(Comparison { rows, footnotes })
}
