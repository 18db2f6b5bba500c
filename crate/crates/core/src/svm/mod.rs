//! Weighted kernel SVM training and prediction.
//!
//! The weighted dual caps each `alpha_i` at `C * beta_i`, so a sample with
//! weight `beta_i < 1` can pull the boundary less. Baselines (LS-SVM and
//! LN-SVM) live in [`baselines`]; hyperparameter search in [`tuning`].

pub mod baselines;
pub mod smo;
pub mod tuning;

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Label};
use crate::error::{Error, Result};
use crate::kernel::{self, KernelSpec};

pub use baselines::{train_ln_svm, train_ls_svm};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmConfig {
    pub c: f64,
    pub kernel: KernelSpec,
    pub kkt_tolerance: f64,
    /// Pair-update cap; 0 selects `max(10^6, 100 n)`.
    pub max_iter: usize,
}

impl SvmConfig {
    pub fn new(c: f64, gamma: f64) -> Result<Self> {
        let cfg = Self {
            c,
            kernel: KernelSpec::rbf(gamma)?,
            kkt_tolerance: 1e-3,
            max_iter: 0,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c.is_finite() && self.c > 0.0) {
            return Err(Error::validation(format!("C must be positive, got {}", self.c)));
        }
        if !(self.kkt_tolerance.is_finite() && self.kkt_tolerance > 0.0) {
            return Err(Error::validation(format!(
                "KKT tolerance must be positive, got {}",
                self.kkt_tolerance
            )));
        }
        Ok(())
    }

    pub fn with_tolerance(mut self, tol: f64) -> Self {
        self.kkt_tolerance = tol;
        self
    }

    /// Support-vector threshold `1e-8 * C`.
    pub fn sv_threshold(&self) -> f64 {
        1e-8 * self.c
    }

    fn iteration_cap(&self, n: usize) -> usize {
        if self.max_iter > 0 {
            self.max_iter
        } else {
            (100 * n).max(1_000_000)
        }
    }
}

/// A trained kernel classifier `f(x) = sum_i coef_i k(sv_i, x) + bias`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub kernel: KernelSpec,
    pub c: f64,
    /// Dual coefficients, one per training row.
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub bias: f64,
    /// Row positions of the support vectors in the training set.
    pub support_idx: Vec<usize>,
    /// Dataset ids of the support vectors.
    pub support_ids: Vec<usize>,
    pub sv_features: Array2<f64>,
    /// `alpha_i * y_i` for each support vector.
    pub sv_coef: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub kkt_violation: f64,
    /// Dual objective value at `alpha`, when the model came from the dual solver.
    pub objective: Option<f64>,
}

impl TrainedModel {
    /// Assembles a model from per-row coefficients. Rows with
    /// `|alpha_i| <= threshold` are dropped from the expansion.
    #[allow(clippy::too_many_arguments)]
    pub fn from_alpha(
        ds: &Dataset,
        alpha: Vec<f64>,
        beta: Vec<f64>,
        bias: f64,
        kernel: KernelSpec,
        c: f64,
        threshold: f64,
    ) -> TrainedModel {
        let support_idx: Vec<usize> = (0..alpha.len()).filter(|&i| alpha[i].abs() > threshold).collect();
        let sv_features = ds.features().select(Axis(0), &support_idx);
        let sv_coef = support_idx.iter().map(|&i| alpha[i] * ds.label(i).sign()).collect();
        let support_ids = support_idx.iter().map(|&i| ds.ids()[i]).collect();
        TrainedModel {
            kernel,
            c,
            alpha,
            beta,
            bias,
            support_idx,
            support_ids,
            sv_features,
            sv_coef,
            converged: true,
            iterations: 0,
            kkt_violation: 0.0,
            objective: None,
        }
    }

    pub fn n_support(&self) -> usize {
        self.support_idx.len()
    }

    pub fn decision(&self, x: ArrayView1<f64>) -> f64 {
        self.sv_features
            .rows()
            .into_iter()
            .zip(&self.sv_coef)
            .map(|(sv, &c)| c * self.kernel.eval(sv, x))
            .sum::<f64>()
            + self.bias
    }

    pub fn decision_values(&self, x: ArrayView2<f64>) -> Vec<f64> {
        (0..x.nrows())
            .into_par_iter()
            .map(|i| self.decision(x.row(i)))
            .collect()
    }

    pub fn predict(&self, x: ArrayView1<f64>) -> Label {
        Label::from_score(self.decision(x))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// `f(x)` for one feature vector.
pub fn decision_function(model: &TrainedModel, x: ArrayView1<f64>) -> Result<f64> {
    if x.len() != model.sv_features.ncols() && model.n_support() > 0 {
        return Err(Error::DimensionMismatch {
            expected: model.sv_features.ncols(),
            found: x.len(),
        });
    }
    Ok(model.decision(x))
}

/// Fraction of `test` misclassified by `sign(f)`, with `sign(0) = +1`.
pub fn error_rate(model: &TrainedModel, test: &Dataset) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::validation("error rate of an empty test set"));
    }
    let f = model.decision_values(test.features().view());
    Ok(misclassified(&f, test.labels()) as f64 / test.len() as f64)
}

pub(crate) fn misclassified(f: &[f64], labels: &[Label]) -> usize {
    f.iter()
        .zip(labels)
        .filter(|(&v, &l)| Label::from_score(v) != l)
        .count()
}

fn check_beta(beta: &[f64], n: usize) -> Result<()> {
    if beta.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: beta.len(),
        });
    }
    if let Some(b) = beta.iter().find(|&&b| !(b > 0.0 && b <= 1.0)) {
        return Err(Error::validation(format!("sample weights must lie in (0, 1], got {b}")));
    }
    Ok(())
}

/// `Q_ij = y_i y_j K_ij`.
pub fn signed_gram(gram: &Array2<f64>, y: &[f64]) -> Array2<f64> {
    let mut q = gram.clone();
    for ((i, j), v) in q.indexed_iter_mut() {
        *v *= y[i] * y[j];
    }
    q
}

/// Trains the weighted dual on an already computed Gram matrix of `ds`.
/// `init` warm-starts the solver and must satisfy the constraints.
pub fn train_with_gram(
    ds: &Dataset,
    gram: &Array2<f64>,
    beta: &[f64],
    cfg: &SvmConfig,
    init: Option<&[f64]>,
) -> Result<TrainedModel> {
    let y = ds.signs();
    let q = signed_gram(gram, &y);
    train_with_q(ds, &q, beta, cfg, init)
}

pub(crate) fn train_with_q(
    ds: &Dataset,
    q: &Array2<f64>,
    beta: &[f64],
    cfg: &SvmConfig,
    init: Option<&[f64]>,
) -> Result<TrainedModel> {
    cfg.validate()?;
    ds.ensure_trainable()?;
    check_beta(beta, ds.len())?;
    let y = ds.signs();
    let upper: Vec<f64> = beta.iter().map(|b| cfg.c * b).collect();
    let init = init.map(|a| {
        a.iter()
            .zip(&upper)
            .map(|(&ai, &u)| ai.clamp(0.0, u))
            .collect::<Vec<_>>()
    });
    let sol = smo::solve(
        q,
        &y,
        &upper,
        cfg.kkt_tolerance,
        cfg.iteration_cap(ds.len()),
        init.as_deref(),
    );
    let objective = -sol
        .alpha
        .iter()
        .zip(&sol.grad)
        .map(|(a, g)| 0.5 * a * (g - 1.0))
        .sum::<f64>();
    let mut model = TrainedModel::from_alpha(
        ds,
        sol.alpha,
        beta.to_vec(),
        sol.bias,
        cfg.kernel,
        cfg.c,
        cfg.sv_threshold(),
    );
    model.converged = sol.converged;
    model.iterations = sol.iterations;
    model.kkt_violation = sol.kkt_violation;
    model.objective = Some(objective);
    Ok(model)
}

/// Weighted SVM with per-sample box `0 <= alpha_i <= C beta_i`.
pub fn train_weighted_svm(ds: &Dataset, beta: &[f64], cfg: &SvmConfig) -> Result<TrainedModel> {
    cfg.validate()?;
    let gram = kernel::self_gram(&cfg.kernel, ds.features().view());
    train_with_gram(ds, &gram, beta, cfg, None)
}

pub fn train_svm(ds: &Dataset, cfg: &SvmConfig) -> Result<TrainedModel> {
    train_weighted_svm(ds, &vec![1.0; ds.len()], cfg)
}
