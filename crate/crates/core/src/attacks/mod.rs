//! Training-time attacks: five label-flip strategies and three feature
//! poisoning strategies. Every attack returns the contaminated dataset and
//! the exact rows it altered.

pub mod flips;
pub mod poison;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Label};
use crate::error::{Error, Result};
use crate::svm::SvmConfig;

pub use flips::{alfa, alfa_tilt, flip_farfirst, flip_nearest, flip_random, tilt};
pub use poison::{poison_cg, poison_pa, poison_ra};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackMeta {
    pub name: String,
    pub params: serde_json::Value,
    pub seed: u64,
    /// False when an iterative attack stopped on its budget rather than
    /// on its own criterion.
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackResult {
    pub dataset: Dataset,
    /// Altered (or appended) row indices, ascending.
    pub mask: Vec<usize>,
    pub meta: AttackMeta,
    /// Per attack point, the objective after every accepted step (PA: the
    /// validation hinge loss, CG: the attacker utility). Empty otherwise.
    pub traces: Vec<Vec<f64>>,
}

impl AttackResult {
    pub(crate) fn new(
        dataset: Dataset,
        mut mask: Vec<usize>,
        name: &str,
        params: serde_json::Value,
        seed: u64,
    ) -> Self {
        mask.sort_unstable();
        Self {
            dataset,
            mask,
            meta: AttackMeta {
                name: name.to_string(),
                params,
                seed,
                converged: true,
            },
            traces: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttackKind {
    None,
    Random,
    Nearest,
    Farfirst,
    Alfa,
    AlfaTilt,
    Pa,
    Ra,
    Cg,
}

impl AttackKind {
    pub const ALL: [AttackKind; 9] = [
        AttackKind::None,
        AttackKind::Random,
        AttackKind::Nearest,
        AttackKind::Farfirst,
        AttackKind::Alfa,
        AttackKind::AlfaTilt,
        AttackKind::Pa,
        AttackKind::Ra,
        AttackKind::Cg,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AttackKind::None => "none",
            AttackKind::Random => "random",
            AttackKind::Nearest => "nearest",
            AttackKind::Farfirst => "farfirst",
            AttackKind::Alfa => "alfa",
            AttackKind::AlfaTilt => "alfa-tilt",
            AttackKind::Pa => "pa",
            AttackKind::Ra => "ra",
            AttackKind::Cg => "cg",
        }
    }

    pub fn is_flip(self) -> bool {
        matches!(
            self,
            AttackKind::Random | AttackKind::Nearest | AttackKind::Farfirst | AttackKind::Alfa | AttackKind::AlfaTilt
        )
    }
}

impl fmt::Display for AttackKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AttackKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        AttackKind::ALL
            .into_iter()
            .find(|k| k.name() == lower || (lower == "alfa_tilt" && *k == AttackKind::AlfaTilt))
            .ok_or_else(|| Error::validation(format!("unknown attack '{s}'")))
    }
}

/// Parameters of the poisoning attacks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PoisonParams {
    /// RA discount factor `C_xi`.
    pub discount_factor: f64,
    /// RA severity `f_attack`.
    pub severity: f64,
    /// PA ascent steps per point.
    pub steps: usize,
    /// PA initial step length, in feature units.
    pub step_size: f64,
    /// CG modification-cost weight.
    pub lambda_cost: f64,
    /// CG coordinate updates per point.
    pub max_iters: usize,
    /// Class whose points RA and CG move.
    pub malicious: Label,
}

impl Default for PoisonParams {
    fn default() -> Self {
        Self {
            discount_factor: 0.3,
            severity: 0.5,
            steps: 50,
            step_size: 0.5,
            lambda_cost: 0.1,
            max_iters: 100,
            malicious: Label::Negative,
        }
    }
}

impl PoisonParams {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64, name: &str| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::validation(format!("{name} must lie in [0, 1], got {v}")))
            }
        };
        unit(self.discount_factor, "discount factor")?;
        unit(self.severity, "severity")?;
        if !(self.step_size.is_finite() && self.step_size > 0.0) {
            return Err(Error::validation(format!(
                "step size must be positive, got {}",
                self.step_size
            )));
        }
        if !(self.lambda_cost.is_finite() && self.lambda_cost >= 0.0) {
            return Err(Error::validation(format!(
                "lambda_cost must be >= 0, got {}",
                self.lambda_cost
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AttackConfig {
    pub alfa_iterations: usize,
    pub tilt_trials: usize,
    pub poison: PoisonParams,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            alfa_iterations: 5,
            tilt_trials: 20,
            poison: PoisonParams::default(),
        }
    }
}

/// `floor(rate * n)`.
pub fn budget(rate: f64, n: usize) -> Result<usize> {
    if !(0.0..=0.5).contains(&rate) {
        return Err(Error::validation(format!(
            "attack rate must lie in [0, 0.5], got {rate}"
        )));
    }
    Ok((rate * n as f64 + 1e-9).floor() as usize)
}

/// Runs `kind` at `rate` on `ds`. PA needs a `validation` set; the other
/// attacks ignore it. Poisoning budgets are `floor(rate * n)` points.
pub fn run_attack(
    kind: AttackKind,
    ds: &Dataset,
    rate: f64,
    svm: &SvmConfig,
    validation: Option<&Dataset>,
    cfg: &AttackConfig,
    seed: u64,
) -> Result<AttackResult> {
    let count = budget(rate, ds.len())?;
    match kind {
        AttackKind::None => Ok(AttackResult::new(
            ds.clone(),
            Vec::new(),
            "none",
            serde_json::json!({}),
            seed,
        )),
        AttackKind::Random => flip_random(ds, rate, seed),
        AttackKind::Nearest => flip_nearest(ds, rate, svm, seed),
        AttackKind::Farfirst => flip_farfirst(ds, rate, svm, seed),
        AttackKind::Alfa => alfa(ds, rate, svm, cfg.alfa_iterations, seed),
        AttackKind::AlfaTilt => alfa_tilt(ds, rate, svm, cfg.tilt_trials, seed),
        AttackKind::Pa => {
            let val = validation.ok_or_else(|| Error::validation("the PA attack needs a validation set"))?;
            poison_pa(ds, count, svm, val, &cfg.poison, seed)
        }
        AttackKind::Ra => poison_ra(ds, count, &cfg.poison, seed),
        AttackKind::Cg => poison_cg(
            ds,
            count,
            svm,
            cfg.poison.lambda_cost,
            cfg.poison.max_iters,
            &cfg.poison,
            seed,
        ),
    }
}

#[inline]
pub(crate) fn hinge(y: f64, f: f64) -> f64 {
    (1.0 - y * f).max(0.0)
}
