//! Feature-poisoning attacks: gradient ascent on validation loss (PA),
//! restrained movement toward the other class (RA), and greedy coordinate
//! moves toward benign appearance (CG).

use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng;

use super::{hinge, AttackResult, PoisonParams};
use crate::data::{sample_indices, Dataset, Label};
use crate::error::{Error, Result};
use crate::kernel::{self, sq_dist};
use crate::rng;
use crate::svm::{train_svm, train_with_gram, SvmConfig, TrainedModel};

/// Largest training set PA will retrain on.
pub const PA_MAX_N: usize = 1000;

fn malicious_sources(ds: &Dataset, count: usize, class: Label, seed: u64) -> Result<Vec<usize>> {
    let pool = ds.class_indices(class);
    if count > pool.len() {
        return Err(Error::validation(format!(
            "{count} poisoning points requested but class {class} has only {} samples",
            pool.len()
        )));
    }
    let mut picks: Vec<usize> = sample_indices(&mut rng::rng_from(seed), pool.len(), count)
        .into_iter()
        .map(|k| pool[k])
        .collect();
    picks.sort_unstable();
    Ok(picks)
}

fn project(x: &mut Array1<f64>, bounds: &[(f64, f64)]) {
    for (v, &(lo, hi)) in x.iter_mut().zip(bounds) {
        *v = v.clamp(lo, hi);
    }
}

/// Training set plus a cached Gram matrix, extended one point at a time.
struct Growing<'a> {
    ds: Dataset,
    gram: Array2<f64>,
    alpha: Vec<f64>,
    cfg: &'a SvmConfig,
    validation: &'a Dataset,
}

impl Growing<'_> {
    fn gram_with(&self, x: ArrayView1<f64>) -> Array2<f64> {
        let n = self.ds.len();
        let mut g = Array2::zeros((n + 1, n + 1));
        g.slice_mut(ndarray::s![..n, ..n]).assign(&self.gram);
        for j in 0..n {
            let k = self.cfg.kernel.eval(x, self.ds.row(j));
            g[[n, j]] = k;
            g[[j, n]] = k;
        }
        g[[n, n]] = 1.0;
        g
    }

    fn train_with(&self, x: ArrayView1<f64>, label: Label) -> Result<(TrainedModel, Dataset, Array2<f64>)> {
        let row = x.to_owned().insert_axis(ndarray::Axis(0));
        let ds = self.ds.append_rows(&row, &[label])?;
        let gram = self.gram_with(x);
        let mut init = self.alpha.clone();
        init.push(0.0);
        let model = train_with_gram(&ds, &gram, &vec![1.0; ds.len()], self.cfg, Some(&init))?;
        Ok((model, ds, gram))
    }

    fn val_loss(&self, x: ArrayView1<f64>, label: Label) -> Result<f64> {
        let (model, _, _) = self.train_with(x, label)?;
        let f = model.decision_values(self.validation.features().view());
        Ok(self
            .validation
            .labels()
            .iter()
            .zip(&f)
            .map(|(l, &v)| hinge(l.sign(), v))
            .sum::<f64>()
            / self.validation.len() as f64)
    }

    fn accept(&mut self, x: ArrayView1<f64>, label: Label) -> Result<()> {
        let (model, ds, gram) = self.train_with(x, label)?;
        self.ds = ds;
        self.gram = gram;
        self.alpha = model.alpha;
        Ok(())
    }
}

/// Gradient-ascent poisoning on the validation hinge loss.
///
/// Each of `count` points starts as a copy of a random training point with
/// the opposite label and climbs the validation loss along a central
/// finite-difference gradient, retraining (warm-started) at every probe.
/// A step is kept only if the loss rises; otherwise the step halves.
/// Features stay inside the training data's bounding box. Points are
/// appended, so the mask holds rows `n..n+count`.
pub fn poison_pa(
    ds: &Dataset,
    count: usize,
    cfg: &SvmConfig,
    validation: &Dataset,
    params: &PoisonParams,
    seed: u64,
) -> Result<AttackResult> {
    params.validate()?;
    if ds.len() + count > PA_MAX_N {
        return Err(Error::validation(format!(
            "PA retrains the SVM per probe and is limited to {PA_MAX_N} samples, got {}",
            ds.len() + count
        )));
    }
    if validation.dim() != ds.dim() {
        return Err(Error::DimensionMismatch {
            expected: ds.dim(),
            found: validation.dim(),
        });
    }
    let meta = serde_json::json!({ "count": count, "steps": params.steps, "step_size": params.step_size });
    if count == 0 {
        return Ok(AttackResult::new(ds.clone(), Vec::new(), "pa", meta, seed));
    }
    let bounds = ds.feature_bounds();
    let probe: Vec<f64> = bounds
        .iter()
        .map(|(lo, hi)| 0.01 * if hi > lo { hi - lo } else { 1.0 })
        .collect();
    let clean = train_svm(ds, cfg)?;
    let mut state = Growing {
        ds: ds.clone(),
        gram: kernel::self_gram(&cfg.kernel, ds.features().view()),
        alpha: clean.alpha,
        cfg,
        validation,
    };
    let mut rng = rng::rng_from(seed);
    let mut traces = Vec::with_capacity(count);
    let mut converged = true;
    for _ in 0..count {
        let src = rng.random_range(0..ds.len());
        let label = ds.label(src).flipped();
        let mut x = ds.row(src).to_owned();
        let mut loss = state.val_loss(x.view(), label)?;
        let mut trace = vec![loss];
        let mut eta = params.step_size;
        let mut done = false;
        for _ in 0..params.steps {
            let mut grad = Array1::zeros(ds.dim());
            for j in 0..ds.dim() {
                let mut up = x.clone();
                up[j] += probe[j];
                project(&mut up, &bounds);
                let mut down = x.clone();
                down[j] -= probe[j];
                project(&mut down, &bounds);
                let span = up[j] - down[j];
                if span > 0.0 {
                    grad[j] = (state.val_loss(up.view(), label)? - state.val_loss(down.view(), label)?) / span;
                }
            }
            let norm = grad.dot(&grad).sqrt();
            if norm == 0.0 {
                done = true;
                break;
            }
            let mut cand = &x + &(grad * (eta / norm));
            project(&mut cand, &bounds);
            let cand_loss = state.val_loss(cand.view(), label)?;
            if cand_loss > loss {
                x = cand;
                loss = cand_loss;
                trace.push(loss);
            } else {
                eta *= 0.5;
                if eta < 1e-3 * params.step_size {
                    done = true;
                    break;
                }
            }
        }
        converged &= done;
        state.accept(x.view(), label)?;
        traces.push(trace);
    }
    let mask = (ds.len()..ds.len() + count).collect();
    let mut res = AttackResult::new(state.ds, mask, "pa", meta, seed);
    res.meta.converged = converged;
    res.traces = traces;
    Ok(res)
}

/// Moves `count` malicious-class points part of the way toward their
/// nearest opposite-class neighbour: `x + f_attack (1 - C_xi) (x_t - x)`.
/// Labels are kept.
pub fn poison_ra(ds: &Dataset, count: usize, params: &PoisonParams, seed: u64) -> Result<AttackResult> {
    params.validate()?;
    ds.ensure_trainable()?;
    let sources = malicious_sources(ds, count, params.malicious, seed)?;
    let step = params.severity * (1.0 - params.discount_factor);
    let targets = ds.class_indices(params.malicious.flipped());
    let mut features = ds.features().clone();
    for &i in &sources {
        let x = ds.row(i);
        let t = *targets
            .iter()
            .min_by(|&&a, &&b| sq_dist(x, ds.row(a)).total_cmp(&sq_dist(x, ds.row(b))).then(a.cmp(&b)))
            .expect("both classes present");
        let moved = &x + &((&ds.row(t) - &x) * step);
        features.row_mut(i).assign(&moved);
    }
    let meta = serde_json::json!({
        "count": count,
        "discount_factor": params.discount_factor,
        "severity": params.severity,
        "malicious": i8::from(params.malicious),
    });
    Ok(AttackResult::new(
        ds.with_features(features)?,
        sources,
        "ra",
        meta,
        seed,
    ))
}

/// Coordinate-greedy poisoning. Each malicious point repeatedly picks a
/// random feature, tries 21 evenly spaced values across that feature's
/// training range, and keeps the best if it raises
/// `U(x') = -y f_clean(x') - lambda |x' - x_0|^2`.
pub fn poison_cg(
    ds: &Dataset,
    count: usize,
    cfg: &SvmConfig,
    lambda_cost: f64,
    max_iters: usize,
    params: &PoisonParams,
    seed: u64,
) -> Result<AttackResult> {
    if !(lambda_cost >= 0.0) {
        return Err(Error::validation(format!(
            "lambda_cost must be >= 0, got {lambda_cost}"
        )));
    }
    let meta = serde_json::json!({
        "count": count,
        "lambda_cost": lambda_cost,
        "max_iters": max_iters,
        "malicious": i8::from(params.malicious),
    });
    let sources = malicious_sources(ds, count, params.malicious, seed)?;
    if count == 0 {
        return Ok(AttackResult::new(ds.clone(), sources, "cg", meta, seed));
    }
    let clean = train_svm(ds, cfg)?;
    let bounds = ds.feature_bounds();
    let mut rng = rng::child_rng(seed, &[0xc6]);
    let mut features = ds.features().clone();
    let mut traces = Vec::with_capacity(count);
    for &i in &sources {
        let y = ds.label(i).sign();
        let x0 = ds.row(i).to_owned();
        let utility = |x: &Array1<f64>| -y * clean.decision(x.view()) - lambda_cost * sq_dist(x.view(), x0.view());
        let mut x = x0.clone();
        let mut u = utility(&x);
        let mut trace = vec![u];
        for _ in 0..max_iters {
            let j = rng.random_range(0..ds.dim());
            let (lo, hi) = bounds[j];
            let mut best = (u, x[j]);
            for g in 0..21 {
                let mut cand = x.clone();
                cand[j] = lo + (hi - lo) * g as f64 / 20.0;
                let cu = utility(&cand);
                if cu > best.0 {
                    best = (cu, cand[j]);
                }
            }
            if best.0 > u {
                x[j] = best.1;
                u = best.0;
                trace.push(u);
            }
        }
        features.row_mut(i).assign(&x);
        traces.push(trace);
    }
    let mut res = AttackResult::new(ds.with_features(features)?, sources, "cg", meta, seed);
    res.traces = traces;
    Ok(res)
}
