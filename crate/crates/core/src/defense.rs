//! K-LID sample weighting.
//!
//! For each class the pipeline picks the kernel width whose cross-class
//! K-LID values best separate benign from attacked samples (largest KL
//! divergence between their densities), turns density ratios into target
//! weights, and fits a decreasing tanh curve mapping K-LID to a weight in
//! `[0.1, 1]`. The curve, not the raw ratio, produces the final `beta`.

use serde::{Deserialize, Serialize};

use crate::data::{sample_indices, Dataset, Label};
use crate::error::{Error, Result};
use crate::kernel::KernelSpec;
use crate::lid::{KlidRecord, LidConfig, Neighborhoods};
use crate::optim::{nelder_mead, NelderMead};
use crate::rng;
use crate::stats::{self, kde_fit_with, kl_divergence, BandwidthRule, Density};
use crate::svm::tuning::pow2_grid;

pub const W_MIN: f64 = 0.1;
pub const W_MAX: f64 = 1.0;
const LR_FLOOR: f64 = 1e-12;
/// `tanh(20)` rounds to exactly 1.0, so this offset saturates the curve.
const B_SATURATE: f64 = 20.0;

/// `w(z) = 0.55 - 0.45 tanh(a z - b)`; `a >= 0` unless fitted with [`Orientation::Free`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightFunction {
    pub a: f64,
    pub b: f64,
    pub class_label: Label,
}

impl WeightFunction {
    pub fn eval(&self, z: f64) -> f64 {
        (0.55 - 0.45 * (self.a * z - self.b).tanh()).clamp(W_MIN, W_MAX)
    }

    /// Constant curve at `level` (clamped to `[0.1, 1]`).
    pub fn constant(level: f64, class_label: Label) -> Self {
        let t = ((level.clamp(W_MIN, W_MAX) - 0.55) / 0.45).clamp(-1.0, 1.0);
        Self {
            a: 0.0,
            b: t.atanh().clamp(-B_SATURATE, B_SATURATE),
            class_label,
        }
    }
}

/// How the attacked population used for density estimation is obtained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttackInfo {
    /// Row indices known to be attacked.
    Oracle { mask: Vec<usize> },
    /// Flip this extra fraction of labels at random and treat those as attacked.
    SelfSimulated { rate: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DefenseMode {
    Oracle,
    SelfSimulated,
}

impl std::fmt::Display for DefenseMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DefenseMode::Oracle => "oracle",
            DefenseMode::SelfSimulated => "self-simulated",
        })
    }
}

impl std::str::FromStr for DefenseMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "oracle" | "grey-box" => Ok(DefenseMode::Oracle),
            "self-simulated" | "self" | "simulated" => Ok(DefenseMode::SelfSimulated),
            other => Err(Error::validation(format!("unknown defense mode '{other}'"))),
        }
    }
}

/// Sign constraint on the tanh slope `a`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Orientation {
    /// `a >= 0`: weights never increase with K-LID.
    Decreasing,
    /// `a` of either sign. Which side of the K-LID axis attacked samples
    /// fall on depends on the attack rate relative to `k`, so this is the
    /// default.
    #[default]
    Free,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DefenseConfig {
    pub lid: LidConfig,
    pub gamma_grid: Vec<f64>,
    pub clip_quantile: f64,
    pub kl_grid: usize,
    pub bandwidth: BandwidthRule,
    /// Minimum attacked and benign samples per class for density estimation.
    pub min_group: usize,
    pub self_sim_rate: f64,
    pub orientation: Orientation,
}

impl Default for DefenseConfig {
    fn default() -> Self {
        Self {
            lid: LidConfig::default(),
            gamma_grid: pow2_grid(-10, 4),
            clip_quantile: 0.95,
            kl_grid: stats::DEFAULT_GRID,
            bandwidth: BandwidthRule::Silverman,
            min_group: 5,
            self_sim_rate: 0.10,
            orientation: Orientation::Free,
        }
    }
}

impl DefenseConfig {
    pub fn validate(&self) -> Result<()> {
        self.lid.validate()?;
        if self.gamma_grid.is_empty() {
            return Err(Error::validation("empty gamma grid"));
        }
        for &g in &self.gamma_grid {
            KernelSpec::rbf(g)?;
        }
        if !(self.clip_quantile > 0.0 && self.clip_quantile <= 1.0) {
            return Err(Error::validation(format!(
                "clip quantile must lie in (0, 1], got {}",
                self.clip_quantile
            )));
        }
        if self.kl_grid < stats::MIN_GRID {
            return Err(Error::validation(format!(
                "KL grid must have at least {} points",
                stats::MIN_GRID
            )));
        }
        if !(self.self_sim_rate > 0.0 && self.self_sim_rate <= 0.5) {
            return Err(Error::validation(format!(
                "self-simulation rate must lie in (0, 0.5], got {}",
                self.self_sim_rate
            )));
        }
        Ok(())
    }
}

/// Outcome of the kernel-width search for one class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaSelection {
    pub gamma_star: f64,
    pub kl: f64,
    /// Records of the class's samples at `gamma_star`.
    pub records: Vec<KlidRecord>,
    pub benign_density: Density,
    pub attacked_density: Density,
    /// KL score at every grid point, in ascending gamma order.
    pub scores: Vec<(f64, f64)>,
}

/// Per-class part of a [`KLidProfile`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassProfile {
    pub label: Label,
    /// `None` when the class lacked attack signal and all weights are 1.
    pub gamma_star: Option<f64>,
    pub kl: Option<f64>,
    pub benign_density: Option<Density>,
    pub attacked_density: Option<Density>,
    pub weight_fn: WeightFunction,
    pub attacked: usize,
    pub benign: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KLidProfile {
    pub mode: DefenseMode,
    pub classes: Vec<ClassProfile>,
    /// Records on the given labels, in row order, each at its class's
    /// `gamma_star` (absent for a class without attack signal).
    pub records: Vec<Option<KlidRecord>>,
}

impl KLidProfile {
    pub fn class(&self, label: Label) -> &ClassProfile {
        self.classes
            .iter()
            .find(|c| c.label == label)
            .expect("both classes present")
    }

    pub fn gamma_star(&self, label: Label) -> Option<f64> {
        self.class(label).gamma_star
    }

    /// Compact JSON summary: gamma*, fit parameters and KL per class.
    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "mode": self.mode.to_string(),
            "classes": self.classes.iter().map(|c| serde_json::json!({
                "label": i8::from(c.label),
                "gamma_star": c.gamma_star,
                "kl": c.kl,
                "a": c.weight_fn.a,
                "b": c.weight_fn.b,
                "attacked": c.attacked,
                "benign": c.benign,
            })).collect::<Vec<_>>(),
        })
    }
}

fn sorted_grid(grid: &[f64]) -> Vec<f64> {
    let mut g = grid.to_vec();
    g.sort_by(f64::total_cmp);
    g.dedup();
    g
}

fn class_split(ds: &Dataset, attacked: &[bool], label: Label) -> (Vec<usize>, Vec<usize>) {
    ds.class_indices(label).into_iter().partition(|&i| attacked[i])
}

fn mask_flags(n: usize, mask: &[usize]) -> Result<Vec<bool>> {
    let mut flags = vec![false; n];
    for &i in mask {
        if i >= n {
            return Err(Error::validation(format!(
                "mask index {i} out of range for {n} samples"
            )));
        }
        flags[i] = true;
    }
    Ok(flags)
}

fn select_with(
    nb: &Neighborhoods,
    ds: &Dataset,
    attacked: &[bool],
    label: Label,
    cfg: &DefenseConfig,
) -> Result<(GammaSelection, Vec<usize>)> {
    let (att, ben) = class_split(ds, attacked, label);
    if att.len() < cfg.min_group || ben.len() < cfg.min_group {
        return Err(Error::InsufficientAttackSignal {
            class: label,
            attacked: att.len(),
            benign: ben.len(),
            required: cfg.min_group,
        });
    }
    let class_idx = ds.class_indices(label);
    let mut best: Option<GammaSelection> = None;
    let mut scores = Vec::new();
    for gamma in sorted_grid(&cfg.gamma_grid) {
        let spec = KernelSpec::rbf(gamma)?;
        let records = nb.records_for(&spec, &class_idx)?;
        let pick = |rows: &[usize]| -> Vec<f64> {
            rows.iter()
                .map(|r| records[class_idx.binary_search(r).expect("class row")].cross_class)
                .collect()
        };
        let benign_density = kde_fit_with(&pick(&ben), cfg.bandwidth)?;
        let attacked_density = kde_fit_with(&pick(&att), cfg.bandwidth)?;
        let kl = kl_divergence(&benign_density, &attacked_density, cfg.kl_grid)?;
        scores.push((gamma, kl));
        if best.as_ref().is_none_or(|b| kl > b.kl) {
            best = Some(GammaSelection {
                gamma_star: gamma,
                kl,
                records,
                benign_density,
                attacked_density,
                scores: Vec::new(),
            });
        }
    }
    let mut sel = best.expect("non-empty grid");
    sel.scores = scores;
    Ok((sel, class_idx))
}

/// Searches `grid` for the kernel width maximizing KL(benign || attacked)
/// of the class's cross-class K-LID densities. Ties go to the smaller
/// gamma. `attacked_mask` holds row indices.
pub fn select_gamma_star(
    ds: &Dataset,
    attacked_mask: &[usize],
    grid: &[f64],
    cfg: &LidConfig,
    class_label: Label,
) -> Result<GammaSelection> {
    let dcfg = DefenseConfig {
        lid: *cfg,
        gamma_grid: grid.to_vec(),
        ..DefenseConfig::default()
    };
    dcfg.validate()?;
    let nb = Neighborhoods::build(ds, cfg)?;
    let flags = mask_flags(ds.len(), attacked_mask)?;
    Ok(select_with(&nb, ds, &flags, class_label, &dcfg)?.0)
}

/// `p_n(v) / max(p_f(v), 1e-12)` at each record's cross-class value.
pub fn likelihood_ratios(records: &[KlidRecord], benign: &Density, attacked: &Density) -> Vec<f64> {
    records
        .iter()
        .map(|r| benign.evaluate(r.cross_class) / attacked.evaluate(r.cross_class).max(LR_FLOOR))
        .collect()
}

/// Clips at the `clip_quantile` empirical quantile, then maps min to 0.1
/// and max to 1.0. Constant input maps to all 1.0.
pub fn clip_and_scale(lrs: &[f64], clip_quantile: f64) -> Result<Vec<f64>> {
    if lrs.is_empty() {
        return Err(Error::validation("no likelihood ratios to scale"));
    }
    if !(clip_quantile > 0.0 && clip_quantile <= 1.0) {
        return Err(Error::validation(format!(
            "clip quantile must lie in (0, 1], got {clip_quantile}"
        )));
    }
    let mut sorted = lrs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let thr = stats::quantile_sorted(&sorted, clip_quantile);
    let clipped: Vec<f64> = lrs.iter().map(|&v| v.min(thr)).collect();
    let lo = sorted[0];
    let hi = thr;
    let span = hi - lo;
    if !(span > 0.0) || !span.is_finite() {
        return Ok(vec![W_MAX; lrs.len()]);
    }
    Ok(clipped
        .iter()
        .map(|&v| (W_MIN + (W_MAX - W_MIN) * (v - lo) / span).clamp(W_MIN, W_MAX))
        .collect())
}

fn sse(klids: &[f64], targets: &[f64], a: f64, b: f64) -> f64 {
    klids
        .iter()
        .zip(targets)
        .map(|(&z, &t)| {
            let r = 0.55 - 0.45 * (a * z - b).tanh() - t;
            r * r
        })
        .sum()
}

/// Least-squares fit of `0.55 - 0.45 tanh(a z - b)` with `a >= 0`.
///
/// Nelder-Mead from `a = 1/std(z)`, `b = a * median(z)`, then once more
/// from `(a/10, b)`; the constant curve at the mean target is used when
/// it fits at least as well or the search fails.
pub fn fit_weight_function(klids: &[f64], scaled_lrs: &[f64], class_label: Label) -> Result<WeightFunction> {
    fit_weight_function_with(klids, scaled_lrs, class_label, Orientation::Decreasing)
}

/// [`fit_weight_function`] with a choice of slope constraint. Under
/// [`Orientation::Free`] the search also starts from the mirrored points
/// `(-a, -b)`.
pub fn fit_weight_function_with(
    klids: &[f64],
    scaled_lrs: &[f64],
    class_label: Label,
    orientation: Orientation,
) -> Result<WeightFunction> {
    if klids.len() != scaled_lrs.len() {
        return Err(Error::DimensionMismatch {
            expected: klids.len(),
            found: scaled_lrs.len(),
        });
    }
    if klids.len() < 5 {
        return Err(Error::validation(format!(
            "weight fit needs at least 5 points, got {}",
            klids.len()
        )));
    }
    if klids.iter().chain(scaled_lrs).any(|v| !v.is_finite()) {
        return Err(Error::validation("non-finite value in weight-fit input"));
    }
    let mean = scaled_lrs.iter().sum::<f64>() / scaled_lrs.len() as f64;
    let fallback = WeightFunction::constant(mean, class_label);
    let fallback_sse = sse(klids, scaled_lrs, fallback.a, fallback.b);

    let sd = stats::sample_std(klids);
    if !(sd > 0.0) || !sd.is_finite() {
        return Ok(fallback);
    }
    let a0 = 1.0 / sd;
    let b0 = a0 * stats::median(klids);
    let f = |p: &[f64]| sse(klids, scaled_lrs, p[0], p[1]);
    let free = orientation == Orientation::Free;
    let project = |p: &mut [f64]| {
        if !free {
            p[0] = p[0].max(0.0)
        }
    };
    let opts = NelderMead::default();
    let mut starts = vec![[a0, b0], [a0 / 10.0, b0]];
    if free {
        starts.extend([[-a0, -b0], [-a0 / 10.0, -b0]]);
    }
    let best = starts
        .iter()
        .map(|s| nelder_mead(f, project, s, &opts))
        .min_by(|x, y| x.value.total_cmp(&y.value))
        .expect("at least one start");
    if !best.value.is_finite() || !best.x.iter().all(|v| v.is_finite()) || best.value >= fallback_sse {
        return Ok(fallback);
    }
    Ok(WeightFunction {
        a: best.x[0],
        b: best.x[1],
        class_label,
    })
}

/// Fits one class: gamma search, ratios, scaling, tanh curve.
fn fit_class(
    nb: &Neighborhoods,
    ds: &Dataset,
    attacked: &[bool],
    label: Label,
    cfg: &DefenseConfig,
) -> Result<ClassProfile> {
    let (att, ben) = class_split(ds, attacked, label);
    match select_with(nb, ds, attacked, label, cfg) {
        Ok((sel, _)) => {
            let lrs = likelihood_ratios(&sel.records, &sel.benign_density, &sel.attacked_density);
            let scaled = clip_and_scale(&lrs, cfg.clip_quantile)?;
            let klids: Vec<f64> = sel.records.iter().map(|r| r.cross_class).collect();
            let weight_fn = fit_weight_function_with(&klids, &scaled, label, cfg.orientation)?;
            Ok(ClassProfile {
                label,
                gamma_star: Some(sel.gamma_star),
                kl: Some(sel.kl),
                benign_density: Some(sel.benign_density),
                attacked_density: Some(sel.attacked_density),
                weight_fn,
                attacked: att.len(),
                benign: ben.len(),
            })
        }
        // without an attacked population both hypotheses share one density,
        // every ratio is 1 and the curve is the constant 1
        Err(Error::InsufficientAttackSignal { .. }) => Ok(ClassProfile {
            label,
            gamma_star: None,
            kl: None,
            benign_density: None,
            attacked_density: None,
            weight_fn: WeightFunction::constant(W_MAX, label),
            attacked: att.len(),
            benign: ben.len(),
        }),
        Err(e) => Err(e),
    }
}

/// Per-sample weights `beta` for `ds` and the profile that produced them.
pub fn compute_weights(ds: &Dataset, info: &AttackInfo, cfg: &DefenseConfig) -> Result<(Vec<f64>, KLidProfile)> {
    cfg.validate()?;
    ds.ensure_trainable()?;
    let n = ds.len();
    let given_nb = Neighborhoods::build(ds, &cfg.lid)?;
    let (mode, classes) = match info {
        AttackInfo::Oracle { mask } => {
            let flags = mask_flags(n, mask)?;
            let classes = Label::BOTH
                .iter()
                .map(|&l| fit_class(&given_nb, ds, &flags, l, cfg))
                .collect::<Result<Vec<_>>>()?;
            (DefenseMode::Oracle, classes)
        }
        AttackInfo::SelfSimulated { rate } => {
            if !(*rate > 0.0 && *rate <= 0.5) {
                return Err(Error::validation(format!(
                    "self-simulation rate must lie in (0, 0.5], got {rate}"
                )));
            }
            let mut rng = rng::child_rng(cfg.lid.seed, &[0x5e1f]);
            let count = ((rate * n as f64).floor() as usize).max(1);
            let picks = sample_indices(&mut rng, n, count);
            let mut labels = ds.labels().to_vec();
            for &i in &picks {
                labels[i] = labels[i].flipped();
            }
            let sim = ds.with_labels(labels)?;
            let sim_nb = Neighborhoods::build(&sim, &cfg.lid)?;
            let flags = mask_flags(n, &picks)?;
            let classes = Label::BOTH
                .iter()
                .map(|&l| fit_class(&sim_nb, &sim, &flags, l, cfg))
                .collect::<Result<Vec<_>>>()?;
            (DefenseMode::SelfSimulated, classes)
        }
    };

    let mut beta = vec![W_MAX; n];
    let mut records = vec![None; n];
    for class in &classes {
        let idx = ds.class_indices(class.label);
        let Some(gamma) = class.gamma_star else { continue };
        let recs = given_nb.records_for(&KernelSpec::rbf(gamma)?, &idx)?;
        for (&i, r) in idx.iter().zip(recs) {
            beta[i] = class.weight_fn.eval(r.cross_class);
            records[i] = Some(r);
        }
    }
    Ok((beta, KLidProfile { mode, classes, records }))
}
