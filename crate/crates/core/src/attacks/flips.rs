//! Label-flip attacks.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;

use super::{budget, hinge, AttackResult};
use crate::data::{sample_indices, Dataset};
use crate::error::Result;
use crate::kernel;
use crate::rng;
use crate::svm::{train_with_gram, SvmConfig, TrainedModel};

fn flipped(ds: &Dataset, rows: &[usize]) -> Result<Dataset> {
    let mut labels = ds.labels().to_vec();
    for &i in rows {
        labels[i] = labels[i].flipped();
    }
    ds.with_labels(labels)
}

/// Decision values of `model` on the training rows, via the cached Gram.
fn train_decisions(model: &TrainedModel, gram: &Array2<f64>) -> Vec<f64> {
    let n = gram.nrows();
    (0..n)
        .map(|j| {
            model
                .support_idx
                .iter()
                .zip(&model.sv_coef)
                .map(|(&i, &c)| c * gram[[i, j]])
                .sum::<f64>()
                + model.bias
        })
        .collect()
}

/// Trains on `ds` with flipped `rows`; returns the model and its training
/// decision values.
fn fit_flipped(ds: &Dataset, gram: &Array2<f64>, rows: &[usize], cfg: &SvmConfig) -> Result<(TrainedModel, Vec<f64>)> {
    let tainted = flipped(ds, rows)?;
    let model = train_with_gram(&tainted, gram, &vec![1.0; ds.len()], cfg, None)?;
    let f = train_decisions(&model, gram);
    Ok((model, f))
}

/// Mean hinge loss of decision values `f` against the labels of `ds`.
fn hinge_risk(ds: &Dataset, f: &[f64]) -> f64 {
    ds.labels().iter().zip(f).map(|(l, &v)| hinge(l.sign(), v)).sum::<f64>() / ds.len() as f64
}

/// Top `l` rows by descending `score`, ties to the lower sample id.
fn top_by(ds: &Dataset, score: &[f64], l: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..ds.len()).collect();
    order.sort_by(|&a, &b| score[b].total_cmp(&score[a]).then(ds.ids()[a].cmp(&ds.ids()[b])));
    order.truncate(l);
    order.sort_unstable();
    order
}

fn result(ds: &Dataset, rows: Vec<usize>, name: &str, params: serde_json::Value, seed: u64) -> Result<AttackResult> {
    Ok(AttackResult::new(flipped(ds, &rows)?, rows, name, params, seed))
}

/// Flips `floor(rate * n)` labels chosen uniformly at random.
pub fn flip_random(ds: &Dataset, rate: f64, seed: u64) -> Result<AttackResult> {
    let l = budget(rate, ds.len())?;
    let rows = sample_indices(&mut rng::rng_from(seed), ds.len(), l);
    result(ds, rows, "random", serde_json::json!({ "rate": rate }), seed)
}

fn clean_margins(ds: &Dataset, cfg: &SvmConfig) -> Result<Vec<f64>> {
    let gram = kernel::self_gram(&cfg.kernel, ds.features().view());
    let model = train_with_gram(ds, &gram, &vec![1.0; ds.len()], cfg, None)?;
    Ok(train_decisions(&model, &gram).iter().map(|f| f.abs()).collect())
}

/// Flips the samples closest to the clean decision boundary.
pub fn flip_nearest(ds: &Dataset, rate: f64, cfg: &SvmConfig, seed: u64) -> Result<AttackResult> {
    let l = budget(rate, ds.len())?;
    if l == 0 {
        return result(ds, Vec::new(), "nearest", serde_json::json!({ "rate": rate }), seed);
    }
    let neg: Vec<f64> = clean_margins(ds, cfg)?.iter().map(|m| -m).collect();
    result(
        ds,
        top_by(ds, &neg, l),
        "nearest",
        serde_json::json!({ "rate": rate }),
        seed,
    )
}

/// Flips the samples furthest from the clean decision boundary.
pub fn flip_farfirst(ds: &Dataset, rate: f64, cfg: &SvmConfig, seed: u64) -> Result<AttackResult> {
    let l = budget(rate, ds.len())?;
    if l == 0 {
        return result(ds, Vec::new(), "farfirst", serde_json::json!({ "rate": rate }), seed);
    }
    let margins = clean_margins(ds, cfg)?;
    result(
        ds,
        top_by(ds, &margins, l),
        "farfirst",
        serde_json::json!({ "rate": rate }),
        seed,
    )
}

/// Greedy flip-set search and the flip sets of all iterates with their
/// original-label hinge risks.
struct AlfaSearch {
    best: Vec<usize>,
    converged: bool,
}

fn alfa_search(ds: &Dataset, gram: &Array2<f64>, l: usize, cfg: &SvmConfig, iterations: usize) -> Result<AlfaSearch> {
    let y = ds.signs();
    let mut current: Vec<usize> = Vec::new();
    let mut f = fit_flipped(ds, gram, &current, cfg)?.1;
    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut converged = false;
    for _ in 0..iterations.max(1) {
        // hinge-loss gain of assigning the opposite of the original label
        let gain: Vec<f64> = (0..ds.len()).map(|i| hinge(-y[i], f[i]) - hinge(y[i], f[i])).collect();
        let next = top_by(ds, &gain, l);
        if next == current {
            converged = true;
            break;
        }
        current = next;
        f = fit_flipped(ds, gram, &current, cfg)?.1;
        let risk = hinge_risk(ds, &f);
        if best.as_ref().is_none_or(|(r, _)| risk > *r) {
            best = Some((risk, current.clone()));
        }
    }
    Ok(AlfaSearch {
        best: best.map(|b| b.1).unwrap_or(current),
        converged,
    })
}

/// Alternating greedy search for the budget-`L` flip set that maximizes the
/// original-label hinge risk of the retrained SVM.
///
/// Each iteration re-scores every sample by how much hinge loss the current
/// tainted model would suffer on its flipped label, flips the top `L`
/// (earlier flips may be undone), and retrains. The iterate with the
/// highest risk on the original labels is returned.
pub fn alfa(ds: &Dataset, rate: f64, cfg: &SvmConfig, iterations: usize, seed: u64) -> Result<AttackResult> {
    let l = budget(rate, ds.len())?;
    let params = serde_json::json!({ "rate": rate, "iterations": iterations });
    if l == 0 {
        return result(ds, Vec::new(), "alfa", params, seed);
    }
    let gram = kernel::self_gram(&cfg.kernel, ds.features().view());
    let search = alfa_search(ds, &gram, l, cfg, iterations)?;
    let mut res = result(ds, search.best, "alfa", params, seed)?;
    res.meta.converged = search.converged;
    Ok(res)
}

/// `1 - pearson(a, b)`; 0 for identical vectors, and 1 when either is
/// constant.
pub fn tilt(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    if saa == 0.0 || sbb == 0.0 {
        return 1.0;
    }
    1.0 - sab / (saa * sbb).sqrt()
}

/// Randomized search maximizing the tilt between clean and tainted decision
/// values. Trial 0 is the greedy alfa set; later trials swap a random part
/// of it for unflipped samples.
pub fn alfa_tilt(ds: &Dataset, rate: f64, cfg: &SvmConfig, trials: usize, seed: u64) -> Result<AttackResult> {
    let l = budget(rate, ds.len())?;
    let params = serde_json::json!({ "rate": rate, "trials": trials });
    if l == 0 {
        return result(ds, Vec::new(), "alfa-tilt", params, seed);
    }
    let gram = kernel::self_gram(&cfg.kernel, ds.features().view());
    let f_clean = fit_flipped(ds, &gram, &[], cfg)?.1;
    let seed_set = alfa_search(ds, &gram, l, cfg, 5)?.best;
    let mut rng = rng::child_rng(seed, &[0x7117]);
    let mut best: Option<(f64, Vec<usize>)> = None;
    for t in 0..trials.max(1) {
        let candidate = if t == 0 {
            seed_set.clone()
        } else {
            perturb(&seed_set, ds.len(), &mut rng)
        };
        let f = fit_flipped(ds, &gram, &candidate, cfg)?.1;
        let score = tilt(&f_clean, &f);
        if best.as_ref().is_none_or(|(s, _)| score > *s) {
            best = Some((score, candidate));
        }
    }
    let (score, rows) = best.expect("at least one trial");
    let mut res = result(ds, rows, "alfa-tilt", params, seed)?;
    res.meta.params["tilt"] = serde_json::json!(score);
    Ok(res)
}

/// Replaces a random fraction (up to half) of `set` with outside rows.
fn perturb<R: Rng>(set: &[usize], n: usize, rng: &mut R) -> Vec<usize> {
    let mut inside = set.to_vec();
    let mut outside: Vec<usize> = (0..n).filter(|i| set.binary_search(i).is_err()).collect();
    if outside.is_empty() || inside.is_empty() {
        return inside;
    }
    let max_swap = (inside.len() / 2).max(1).min(outside.len());
    let swaps = rng.random_range(1..=max_swap);
    inside.shuffle(rng);
    outside.shuffle(rng);
    for k in 0..swaps {
        inside[k] = outside[k];
    }
    inside.sort_unstable();
    inside
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, SyntheticKind};

    #[test]
    fn tilt_identities() {
        let a = [1.0, -2.0, 0.5];
        assert!(tilt(&a, &a).abs() < 1e-12);
        let neg: Vec<f64> = a.iter().map(|v| -v).collect();
        assert!((tilt(&a, &neg) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn perturb_keeps_size_and_uniqueness() {
        let mut rng = rng::rng_from(1);
        let set = vec![1, 4, 7, 9];
        for _ in 0..20 {
            let p = perturb(&set, 12, &mut rng);
            assert_eq!(p.len(), 4);
            let mut d = p.clone();
            d.dedup();
            assert_eq!(d, p);
            assert_ne!(p, set);
        }
    }

    #[test]
    fn random_budget() {
        let ds = generate_synthetic(SyntheticKind::TwoGaussians, 10, 0.5, 1).unwrap();
        let r = flip_random(&ds, 0.2, 3).unwrap();
        assert_eq!(r.mask.len(), 2);
        assert_eq!(r, flip_random(&ds, 0.2, 3).unwrap());
        assert_eq!(flip_random(&ds, 0.0, 3).unwrap().dataset, ds);
    }
}
