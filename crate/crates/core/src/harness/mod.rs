//! Experiment orchestration: attack-rate sweeps over folds and seeds,
//! defense comparisons, and report files.

mod config;
mod report;

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use config::{parse_rates, DatasetSource, DefenseKind, ExperimentConfig};
pub use report::{
    emit_csv, emit_plot, emit_summary_csv, emit_timings, load_csv, metadata, summarize, write_csv, RateSummary,
    Summary, SummaryRow,
};

use crate::attacks::{run_attack, AttackResult};
use crate::data::{generate_synthetic, kfold, load_dataset, standardize, stratified_split, stratified_subsample};
use crate::data::{Dataset, Label, SplitSpec};
use crate::defense::{compute_weights, AttackInfo, DefenseConfig, DefenseMode};
use crate::dsvm::{comm_report, train_distributed};
use crate::error::Result;
use crate::rng::derive_seed;
use crate::svm::{error_rate, train_ln_svm, train_ls_svm, train_weighted_svm, SvmConfig, TrainedModel};

const SPLIT_TAG: u64 = 0x5917;
const ATTACK_TAG: u64 = 0xa77a;
const DEFENSE_TAG: u64 = 0xdef0;
const DSVM_TAG: u64 = 0xd5;

/// One (cell, fold, seed, defense) outcome. `runtime_seconds` is kept out of
/// the results CSV so reruns stay byte-identical; see [`emit_timings`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub dataset: String,
    pub attack: String,
    pub rate: f64,
    pub defense: String,
    pub fold: usize,
    pub seed: u64,
    pub error_rate: Option<f64>,
    pub n_support: Option<usize>,
    pub comm_points_up: Option<usize>,
    pub comm_points_down: Option<usize>,
    pub gamma_star_pos: Option<f64>,
    pub gamma_star_neg: Option<f64>,
    /// Empty on success, the failure message otherwise.
    pub error: String,
    #[serde(skip)]
    pub runtime_seconds: f64,
}

impl ResultRow {
    pub fn failed(&self) -> bool {
        !self.error.is_empty()
    }
}

struct Fold {
    seed: u64,
    fold: usize,
    split: std::result::Result<(Dataset, Dataset), String>,
}

/// Loads the pool for one seed (synthetic data is regenerated per seed).
fn pool(cfg: &ExperimentConfig, base: Option<&Dataset>, seed: u64) -> Result<Dataset> {
    let ds = match &cfg.dataset {
        DatasetSource::Synthetic(kind) => generate_synthetic(*kind, cfg.synthetic_n, cfg.synthetic_noise, seed)?,
        DatasetSource::File(_) => base.expect("file data loaded up front").clone(),
    };
    match cfg.subsample {
        Some(size) if size < ds.len() => stratified_subsample(&ds, size, derive_seed(seed, &[SPLIT_TAG, 1])),
        _ => Ok(ds),
    }
}

fn folds_for(cfg: &ExperimentConfig, base: Option<&Dataset>, seed: u64) -> Vec<Fold> {
    let splits: Result<Vec<(Dataset, Dataset)>> = pool(cfg, base, seed).and_then(|ds| {
        let split_seed = derive_seed(seed, &[SPLIT_TAG]);
        let raw = if cfg.folds == 1 {
            let spec = SplitSpec {
                train_fraction: cfg.train_fraction,
                folds: 1,
                seed: split_seed,
            };
            vec![stratified_split(&ds, &spec)?]
        } else {
            kfold(&ds, cfg.folds, split_seed)?
        };
        raw.into_iter()
            .map(|(train, test)| {
                if cfg.standardize {
                    let (train, mut others, _) = standardize(&train, &[test])?;
                    Ok((train, others.remove(0)))
                } else {
                    Ok((train, test))
                }
            })
            .collect()
    });
    match splits {
        Ok(v) => v
            .into_iter()
            .enumerate()
            .map(|(fold, s)| Fold {
                seed,
                fold,
                split: Ok(s),
            })
            .collect(),
        Err(e) => (0..cfg.folds)
            .map(|fold| Fold {
                seed,
                fold,
                split: Err(e.to_string()),
            })
            .collect(),
    }
}

struct Trained {
    model: TrainedModel,
    gamma_pos: Option<f64>,
    gamma_neg: Option<f64>,
    beta: Vec<f64>,
}

fn defense_weights(
    attacked: &AttackResult,
    mode: DefenseMode,
    dcfg: &DefenseConfig,
    seed: u64,
) -> Result<(Vec<f64>, Option<f64>, Option<f64>)> {
    let info = match mode {
        DefenseMode::Oracle => AttackInfo::Oracle {
            mask: attacked.mask.clone(),
        },
        DefenseMode::SelfSimulated => AttackInfo::SelfSimulated {
            rate: dcfg.self_sim_rate,
        },
    };
    let mut dcfg = dcfg.clone();
    dcfg.lid.seed = derive_seed(seed, &[DEFENSE_TAG]);
    let (beta, profile) = compute_weights(&attacked.dataset, &info, &dcfg)?;
    Ok((
        beta,
        profile.gamma_star(Label::Positive),
        profile.gamma_star(Label::Negative),
    ))
}

fn train_defense(
    kind: DefenseKind,
    cfg: &ExperimentConfig,
    svm: &SvmConfig,
    attacked: &AttackResult,
    seed: u64,
) -> Result<Trained> {
    let ds = &attacked.dataset;
    let ones = || vec![1.0; ds.len()];
    let plain = |model| Trained {
        model,
        gamma_pos: None,
        gamma_neg: None,
        beta: ones(),
    };
    Ok(match kind {
        DefenseKind::Svm => plain(train_weighted_svm(ds, &ones(), svm)?),
        DefenseKind::LsSvm => plain(train_ls_svm(ds, svm)?),
        DefenseKind::LnSvm => plain(train_ln_svm(ds, svm, cfg.ln_mu)?),
        DefenseKind::KlidSvm => {
            let (beta, gamma_pos, gamma_neg) = defense_weights(attacked, cfg.mode, &cfg.defense, seed)?;
            Trained {
                model: train_weighted_svm(ds, &beta, svm)?,
                gamma_pos,
                gamma_neg,
                beta,
            }
        }
    })
}

fn run_cell(cfg: &ExperimentConfig, svm: &SvmConfig, dataset: &str, fold: &Fold, rate: f64) -> Vec<ResultRow> {
    let row = |defense: String| ResultRow {
        dataset: dataset.to_string(),
        attack: cfg.attack.name().to_string(),
        rate,
        defense,
        fold: fold.fold,
        seed: fold.seed,
        error_rate: None,
        n_support: None,
        comm_points_up: None,
        comm_points_down: None,
        gamma_star_pos: None,
        gamma_star_neg: None,
        error: String::new(),
        runtime_seconds: 0.0,
    };
    let mut names: Vec<(DefenseKind, bool)> = cfg.defenses.iter().map(|&d| (d, false)).collect();
    if cfg.dsvm.is_some() {
        names.extend(cfg.defenses.iter().filter(|d| d.distributable()).map(|&d| (d, true)));
    }
    let label = |d: DefenseKind, distributed: bool| {
        if distributed {
            format!("dsvm-{}", d.name())
        } else {
            d.name().to_string()
        }
    };
    let cell_seed = derive_seed(fold.seed, &[fold.fold as u64, rate.to_bits()]);
    let attacked = fold.split.as_ref().map_err(Clone::clone).and_then(|(train, _)| {
        run_attack(
            cfg.attack,
            train,
            rate,
            svm,
            Some(train),
            &cfg.attack_params,
            derive_seed(cell_seed, &[ATTACK_TAG]),
        )
        .map_err(|e| e.to_string())
    });
    // a failed split surfaces through `attacked`
    let (attacked, test) = match (attacked, &fold.split) {
        (Ok(a), Ok((_, test))) => (a, test),
        (Ok(_), Err(e)) => unreachable!("attack ran on a failed split: {e}"),
        (Err(e), _) => {
            let e = e.as_str();
            return names
                .iter()
                .map(|&(d, dist)| ResultRow {
                    error: e.to_string(),
                    ..row(label(d, dist))
                })
                .collect();
        }
    };

    names
        .iter()
        .map(|&(kind, distributed)| {
            let start = Instant::now();
            let mut out = row(label(kind, distributed));
            let result = train_defense(kind, cfg, svm, &attacked, cell_seed).and_then(|t| {
                out.gamma_star_pos = t.gamma_pos;
                out.gamma_star_neg = t.gamma_neg;
                if distributed {
                    let dcfg = cfg.dsvm.as_ref().expect("dsvm rows only when configured");
                    let (models, trace) = train_distributed(
                        &attacked.dataset,
                        &t.beta,
                        dcfg,
                        svm,
                        &attacked.dataset,
                        derive_seed(cell_seed, &[DSVM_TAG]),
                    )?;
                    let comm = comm_report(&trace);
                    out.comm_points_up = Some(comm.total_up);
                    out.comm_points_down = Some(comm.total_down);
                    out.n_support = trace.rounds.last().map(|r| r.n_support);
                    error_rate(&models[0], test)
                } else {
                    out.n_support = Some(t.model.n_support());
                    error_rate(&t.model, test)
                }
            });
            match result {
                Ok(err) => out.error_rate = Some(err),
                Err(e) => out.error = e.to_string(),
            }
            out.runtime_seconds = start.elapsed().as_secs_f64();
            out
        })
        .collect()
}

fn defense_order(name: &str) -> (bool, usize) {
    let distributed = name.starts_with("dsvm-");
    let base = name.trim_start_matches("dsvm-");
    let idx = DefenseKind::ALL
        .iter()
        .position(|d| d.name() == base)
        .unwrap_or(usize::MAX);
    (distributed, idx)
}

/// Runs the full sweep. Cell failures become rows with a non-empty `error`
/// field; only an invalid configuration or unreadable data file aborts.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    cfg.validate()?;
    let svm = cfg.svm()?;
    let base = match &cfg.dataset {
        DatasetSource::File(path) => {
            let format = cfg.format.unwrap_or_else(|| DatasetSource::infer_format(path));
            Some(load_dataset(path, format)?)
        }
        DatasetSource::Synthetic(_) => None,
    };
    let dataset = cfg.dataset.name();
    let folds: Vec<Fold> = cfg
        .seeds
        .par_iter()
        .flat_map_iter(|&seed| folds_for(cfg, base.as_ref(), seed))
        .collect();
    let cells: Vec<(&Fold, f64)> = folds
        .iter()
        .flat_map(|f| cfg.rates.iter().map(move |&r| (f, r)))
        .collect();
    let mut rows: Vec<ResultRow> = cells
        .par_iter()
        .flat_map_iter(|&(fold, rate)| run_cell(cfg, &svm, &dataset, fold, rate))
        .collect();
    rows.sort_by(|a, b| {
        a.rate
            .total_cmp(&b.rate)
            .then(a.seed.cmp(&b.seed))
            .then(a.fold.cmp(&b.fold))
            .then(defense_order(&a.defense).cmp(&defense_order(&b.defense)))
    });
    Ok(rows)
}
