//! Baseline defenses: least-squares SVM and label-noise-corrected SVM.

use nalgebra::{DMatrix, DVector};

use super::{train_with_q, SvmConfig, TrainedModel};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::kernel;

const RIDGE: f64 = 1e-10;
pub const DEFAULT_MU: f64 = 0.15;

/// Solves `[[0, y'], [y, Omega + I/C]] [b; alpha] = [0; 1]` with
/// `Omega_ij = y_i y_j K_ij`. Every sample is kept in the expansion and
/// `alpha` may be negative.
pub fn train_ls_svm(ds: &Dataset, cfg: &SvmConfig) -> Result<TrainedModel> {
    cfg.validate()?;
    ds.ensure_trainable()?;
    let n = ds.len();
    let y = ds.signs();
    let gram = kernel::self_gram(&cfg.kernel, ds.features().view());
    let mut a = DMatrix::zeros(n + 1, n + 1);
    for i in 0..n {
        a[(0, i + 1)] = y[i];
        a[(i + 1, 0)] = y[i];
        for j in 0..n {
            a[(i + 1, j + 1)] = y[i] * y[j] * gram[[i, j]];
        }
        a[(i + 1, i + 1)] += 1.0 / cfg.c;
    }
    let mut rhs = DVector::from_element(n + 1, 1.0);
    rhs[0] = 0.0;
    let sol = match a.clone().lu().solve(&rhs) {
        Some(s) if s.iter().all(|v| v.is_finite()) => s,
        _ => {
            for i in 0..=n {
                a[(i, i)] += RIDGE;
            }
            a.lu()
                .solve(&rhs)
                .filter(|s| s.iter().all(|v| v.is_finite()))
                .ok_or(Error::Singular)?
        }
    };
    let alpha: Vec<f64> = sol.iter().skip(1).copied().collect();
    let mut model = TrainedModel::from_alpha(ds, alpha, vec![1.0; n], sol[0], cfg.kernel, cfg.c, -1.0);
    model.kkt_violation = ls_residual(ds, cfg, &model)?;
    Ok(model)
}

/// Euclidean norm of the LS-SVM system residual for `model`.
pub fn ls_residual(ds: &Dataset, cfg: &SvmConfig, model: &TrainedModel) -> Result<f64> {
    let n = ds.len();
    if model.alpha.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: model.alpha.len(),
        });
    }
    let y = ds.signs();
    let gram = kernel::self_gram(&cfg.kernel, ds.features().view());
    let first: f64 = y.iter().zip(&model.alpha).map(|(y, a)| y * a).sum();
    let mut sq = first * first;
    for i in 0..n {
        let mut r = y[i] * model.bias + model.alpha[i] / cfg.c - 1.0;
        for j in 0..n {
            r += y[i] * y[j] * gram[[i, j]] * model.alpha[j];
        }
        sq += r * r;
    }
    Ok(sq.sqrt())
}

/// Label-noise-corrected matrix: off-diagonal entries scaled by
/// `(1 - 2 mu)^2`, the diagonal left at `K_ii`.
pub fn ln_corrected_q(gram: &ndarray::Array2<f64>, y: &[f64], mu: f64) -> ndarray::Array2<f64> {
    let s = (1.0 - 2.0 * mu).powi(2);
    let mut q = gram.clone();
    for ((i, j), v) in q.indexed_iter_mut() {
        if i != j {
            *v *= s * y[i] * y[j];
        }
    }
    q
}

/// SVM dual trained on the label-noise-corrected matrix with `beta = 1`.
pub fn train_ln_svm(ds: &Dataset, cfg: &SvmConfig, mu: f64) -> Result<TrainedModel> {
    if !(0.0..0.5).contains(&mu) {
        return Err(Error::validation(format!("mu must lie in [0, 0.5), got {mu}")));
    }
    cfg.validate()?;
    let gram = kernel::self_gram(&cfg.kernel, ds.features().view());
    let q = ln_corrected_q(&gram, &ds.signs(), mu);
    train_with_q(ds, &q, &vec![1.0; ds.len()], cfg, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, Label, SyntheticKind};
    use crate::svm::train_svm;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn ls_svm_symmetric_pair() {
        // by hand: alpha_1 = alpha_2 = 1 / (1 - k + 1/C), b = 0
        let ds = Dataset::new(array![[1.0], [-1.0]], vec![Label::Positive, Label::Negative]).unwrap();
        let cfg = SvmConfig::new(2.0, 0.25).unwrap();
        let m = train_ls_svm(&ds, &cfg).unwrap();
        let k = (-1.0f64).exp();
        assert_abs_diff_eq!(m.alpha[0], 1.0 / (1.0 - k + 0.5), epsilon = 1e-12);
        assert_abs_diff_eq!(m.alpha[1], m.alpha[0], epsilon = 1e-12);
        assert_abs_diff_eq!(m.bias, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn ls_svm_keeps_every_sample() {
        let ds = generate_synthetic(SyntheticKind::TwoMoons, 60, 0.3, 2).unwrap();
        let cfg = SvmConfig::new(4.0, 0.5).unwrap();
        let m = train_ls_svm(&ds, &cfg).unwrap();
        assert_eq!(m.n_support(), 60);
        assert!(ls_residual(&ds, &cfg, &m).unwrap() <= 1e-8);
    }

    #[test]
    fn ln_svm_with_zero_mu_is_plain_svm() {
        let ds = generate_synthetic(SyntheticKind::TwoGaussians, 50, 0.8, 4).unwrap();
        let cfg = SvmConfig::new(1.0, 0.5).unwrap().with_tolerance(1e-8);
        let a = train_ln_svm(&ds, &cfg, 0.0).unwrap();
        let b = train_svm(&ds, &cfg).unwrap();
        for (x, y) in a.alpha.iter().zip(&b.alpha) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-6);
        }
    }

    #[test]
    fn ln_correction_factor() {
        let g = array![[1.0, 0.5], [0.5, 1.0]];
        let q = ln_corrected_q(&g, &[1.0, -1.0], 0.15);
        assert_abs_diff_eq!(q[[0, 1]], -0.49 * 0.5, epsilon = 1e-15);
        assert_eq!(q[[0, 1]], q[[1, 0]]);
        assert_eq!(q[[0, 0]], 1.0);
        assert!(train_ln_svm(
            &Dataset::new(array![[0.0], [1.0]], vec![Label::Positive, Label::Negative]).unwrap(),
            &SvmConfig::new(1.0, 1.0).unwrap(),
            0.5
        )
        .is_err());
    }
}
