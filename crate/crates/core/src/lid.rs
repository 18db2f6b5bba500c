//! Local intrinsic dimensionality: the maximum-likelihood estimator, its
//! kernel-distance variant (K-LID), and class-conditional records.
//!
//! The k nearest neighbours under the RBF kernel distance are the k
//! nearest under Euclidean distance, since `t = expm1(gamma * d^2)` is
//! monotone in `d`. [`Neighborhoods`] exploits this: mini-batches are
//! drawn and ranked once, and records for any `gamma` are derived from
//! the cached squared distances.

use ndarray::{ArrayView1, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{sample_indices, Dataset, Label};
use crate::error::{Error, Result};
use crate::kernel::{sq_dist, KernelSpec};
use crate::rng;

pub const LID_MIN: f64 = 1e-3;
pub const LID_CAP: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct LidConfig {
    pub k_neighbors: usize,
    pub minibatch_size: usize,
    pub seed: u64,
}

impl Default for LidConfig {
    fn default() -> Self {
        Self {
            k_neighbors: 20,
            minibatch_size: 100,
            seed: 0,
        }
    }
}

impl LidConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_neighbors < 2 || self.k_neighbors >= self.minibatch_size {
            return Err(Error::validation(format!(
                "need 2 <= k_neighbors < minibatch_size, got k = {} and minibatch = {}",
                self.k_neighbors, self.minibatch_size
            )));
        }
        Ok(())
    }
}

/// LID estimates of one sample against its own and the opposite class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KlidRecord {
    pub sample_id: usize,
    pub in_class: f64,
    pub out_class: f64,
    /// `in_class / out_class`.
    pub cross_class: f64,
}

/// `-(mean_i ln(r_i / r_max))^-1`, clamped to `[LID_MIN, LID_CAP]`.
///
/// When every distance equals the maximum the estimator is undefined and
/// `LID_CAP` is returned.
pub fn lid_mle(distances: &[f64]) -> Result<f64> {
    if distances.len() < 2 {
        return Err(Error::validation(format!(
            "LID needs at least 2 distances, got {}",
            distances.len()
        )));
    }
    if let Some(&bad) = distances.iter().find(|&&r| !(r > 0.0) || !r.is_finite()) {
        return Err(Error::NonPositiveDistance(bad));
    }
    let r_max = distances.iter().copied().fold(f64::MIN, f64::max);
    let mean = distances.iter().map(|&r| (r / r_max).ln()).sum::<f64>() / distances.len() as f64;
    if mean == 0.0 {
        return Ok(LID_CAP);
    }
    Ok((-1.0 / mean).clamp(LID_MIN, LID_CAP))
}

/// LID from the `k` smallest finite entries of `log_distances`.
///
/// Working with `ln r` keeps kernel distances exact where `r` itself would
/// overflow. Zero distances (`-inf`, exact duplicates of the query) carry
/// no scale information and are skipped. Fewer than two positive distances
/// is treated as a degenerate neighbourhood.
fn lid_from_log_distances(log_distances: &mut Vec<f64>, k: usize) -> Result<f64> {
    log_distances.retain(|l| l.is_finite());
    if log_distances.len() < 2 {
        return Ok(LID_CAP);
    }
    let k = k.min(log_distances.len());
    if k < log_distances.len() {
        log_distances.select_nth_unstable_by(k - 1, f64::total_cmp);
        log_distances.truncate(k);
    }
    let l_max = log_distances.iter().copied().fold(f64::MIN, f64::max);
    let mean = log_distances.iter().map(|l| l - l_max).sum::<f64>() / k as f64;
    if mean == 0.0 {
        return Ok(LID_CAP);
    }
    Ok((-1.0 / mean).clamp(LID_MIN, LID_CAP))
}

/// K-LID of `x` against the rows of `neighbors` (which must not contain `x`
/// itself): kernel distances, the `k` smallest, then [`lid_mle`].
pub fn klid_mle(spec: &KernelSpec, x: ArrayView1<f64>, neighbors: ArrayView2<f64>, cfg: &LidConfig) -> Result<f64> {
    if neighbors.ncols() != x.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            found: neighbors.ncols(),
        });
    }
    if neighbors.nrows() < cfg.k_neighbors {
        return Err(Error::validation(format!(
            "{} neighbours supplied, k = {}",
            neighbors.nrows(),
            cfg.k_neighbors
        )));
    }
    let mut t: Vec<f64> = neighbors
        .rows()
        .into_iter()
        .map(|row| spec.log_distance_from_sq(sq_dist(x, row)))
        .collect();
    lid_from_log_distances(&mut t, cfg.k_neighbors)
}

/// Exact k-NN Euclidean LID of every row of `points` against all other rows.
pub fn euclidean_lids(points: ArrayView2<f64>, k: usize) -> Result<Vec<f64>> {
    if k < 2 || k >= points.nrows() {
        return Err(Error::validation(format!(
            "need 2 <= k < n, got k = {k}, n = {}",
            points.nrows()
        )));
    }
    (0..points.nrows())
        .into_par_iter()
        .map(|i| {
            let mut d: Vec<f64> = (0..points.nrows())
                .filter(|&j| j != i)
                .map(|j| 0.5 * sq_dist(points.row(i), points.row(j)).ln())
                .collect();
            lid_from_log_distances(&mut d, k)
        })
        .collect()
}

/// Cached k-nearest squared distances for each sample, against a
/// same-class and an opposite-class mini-batch.
#[derive(Debug, Clone)]
pub struct Neighborhoods {
    sample_ids: Vec<usize>,
    in_sq: Vec<Vec<f64>>,
    out_sq: Vec<Vec<f64>>,
}

impl Neighborhoods {
    /// Draws the mini-batches. Sample `i`'s batches are seeded by
    /// `(cfg.seed, i)`, so results do not depend on evaluation order.
    pub fn build(ds: &Dataset, cfg: &LidConfig) -> Result<Self> {
        cfg.validate()?;
        let by_class = [ds.class_indices(Label::Positive), ds.class_indices(Label::Negative)];
        for (label, idx) in Label::BOTH.iter().zip(&by_class) {
            if idx.len() < cfg.k_neighbors + 1 {
                return Err(Error::validation(format!(
                    "class {label} has {} samples, K-LID with k = {} needs at least {}",
                    idx.len(),
                    cfg.k_neighbors,
                    cfg.k_neighbors + 1
                )));
            }
        }
        let x = ds.features();
        let k = cfg.k_neighbors;
        let per_sample: Vec<(Vec<f64>, Vec<f64>)> = (0..ds.len())
            .into_par_iter()
            .map(|i| {
                let own = usize::from(ds.label(i) == Label::Negative);
                let mut rng = rng::child_rng(cfg.seed, &[i as u64]);
                let same: Vec<usize> = by_class[own].iter().copied().filter(|&j| j != i).collect();
                let other = &by_class[1 - own];
                let pick_same = sample_indices(&mut rng, same.len(), cfg.minibatch_size);
                let pick_other = sample_indices(&mut rng, other.len(), cfg.minibatch_size);
                let nearest = |pool: &[usize], picks: Vec<usize>| {
                    let mut d: Vec<f64> = picks
                        .into_iter()
                        .map(|p| sq_dist(x.row(i), x.row(pool[p])))
                        .filter(|&d| d > 0.0)
                        .collect();
                    if d.len() > k {
                        d.select_nth_unstable_by(k - 1, f64::total_cmp);
                        d.truncate(k);
                    }
                    d
                };
                (nearest(&same, pick_same), nearest(other, pick_other))
            })
            .collect();
        let (in_sq, out_sq) = per_sample.into_iter().unzip();
        Ok(Self {
            sample_ids: ds.ids().to_vec(),
            in_sq,
            out_sq,
        })
    }

    pub fn len(&self) -> usize {
        self.sample_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sample_ids.is_empty()
    }

    /// Class-conditional K-LID records under kernel `spec`.
    pub fn records(&self, spec: &KernelSpec) -> Result<Vec<KlidRecord>> {
        self.records_for(spec, &(0..self.len()).collect::<Vec<_>>())
    }

    /// Records for the given rows only, in the order given.
    pub fn records_for(&self, spec: &KernelSpec, rows: &[usize]) -> Result<Vec<KlidRecord>> {
        let k = usize::MAX;
        rows.iter()
            .map(|&i| {
                let mut t_in: Vec<f64> = self.in_sq[i].iter().map(|&d| spec.log_distance_from_sq(d)).collect();
                let mut t_out: Vec<f64> = self.out_sq[i].iter().map(|&d| spec.log_distance_from_sq(d)).collect();
                let in_class = lid_from_log_distances(&mut t_in, k)?;
                let out_class = lid_from_log_distances(&mut t_out, k)?;
                Ok(KlidRecord {
                    sample_id: self.sample_ids[i],
                    in_class,
                    out_class,
                    cross_class: in_class / out_class,
                })
            })
            .collect()
    }
}

/// One [`KlidRecord`] per sample of `ds`, in row order.
pub fn class_conditional_klid(ds: &Dataset, spec: &KernelSpec, cfg: &LidConfig) -> Result<Vec<KlidRecord>> {
    Neighborhoods::build(ds, cfg)?.records(spec)
}
