//! Distributed SVM simulation: `M` nodes each own a shard, optimize their
//! block of a penalized dual, and exchange support vectors through a
//! fusion center.
//!
//! The equality constraint `sum_i alpha_i y_i = 0` is relaxed into the
//! quadratic penalty `-(M Z / 2) (sum_i alpha_i y_i)^2`, so the global
//! objective is
//!
//! ```text
//! F(a) = sum_i a_i - 1/2 sum_ij a_i a_j y_i y_j K_ij - (M Z / 2) S^2,   S = sum_i a_i y_i
//! ```
//!
//! and one coordinate update has the closed form
//! `a_i <- clip(a_i + g_i / (K_ii + M Z), 0, C beta_i)`.
//!
//! Nodes step in parallel from the same broadcast state. Independent block
//! steps can overshoot along the shared penalty, so the fusion center
//! scales the combined step by the largest `theta` in `1, 1/2, 1/4, ...,
//! 1/M` that does not lower `F`; `theta = 1/M` always qualifies because
//! `F` is concave and each block step alone is an ascent step.

use std::collections::{HashMap, HashSet};

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Label};
use crate::error::{Error, Result};
use crate::kernel::{self, KernelSpec};
use crate::rng;
use crate::svm::{error_rate, smo, train_weighted_svm, SvmConfig, TrainedModel};

const PARTITION_RETRIES: u64 = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DsvmConfig {
    pub nodes: usize,
    /// Penalty weight `Z`.
    pub z: f64,
    pub rounds_max: usize,
    pub convergence_tol: f64,
    /// Rounds in a row the validation error must stay within tolerance.
    pub patience: usize,
    pub min_rounds: usize,
    /// Coordinate sweeps per node per round.
    pub sweeps: usize,
    /// Support threshold; `None` means `1e-8 * C`.
    pub sv_threshold: Option<f64>,
}

impl Default for DsvmConfig {
    fn default() -> Self {
        Self {
            nodes: 5,
            z: 10.0,
            rounds_max: 50,
            convergence_tol: 1e-3,
            patience: 2,
            min_rounds: 5,
            sweeps: 5,
            sv_threshold: None,
        }
    }
}

impl DsvmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.nodes == 0 {
            return Err(Error::validation("DSVM needs at least one node"));
        }
        if !(self.z.is_finite() && self.z > 0.0) {
            return Err(Error::validation(format!(
                "penalty weight Z must be positive, got {}",
                self.z
            )));
        }
        if self.sweeps == 0 {
            return Err(Error::validation("DSVM needs at least one sweep per round"));
        }
        Ok(())
    }

    fn threshold(&self, svm: &SvmConfig) -> f64 {
        self.sv_threshold.unwrap_or_else(|| svm.sv_threshold())
    }

    fn penalty(&self) -> f64 {
        self.nodes as f64 * self.z
    }
}

/// A support vector as transmitted between nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvTriple {
    pub id: usize,
    pub x: Vec<f64>,
    pub y: Label,
    pub alpha: f64,
}

#[derive(Debug, Clone)]
pub struct NodeState {
    pub node_id: usize,
    pub shard: Dataset,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    /// Support vectors of the other nodes, as last broadcast.
    pub received: Vec<SvTriple>,
    gram: Array2<f64>,
}

impl NodeState {
    pub fn new(node_id: usize, shard: Dataset, beta: Vec<f64>, kernel: &KernelSpec) -> Result<Self> {
        if beta.len() != shard.len() {
            return Err(Error::DimensionMismatch {
                expected: shard.len(),
                found: beta.len(),
            });
        }
        let gram = kernel::self_gram(kernel, shard.features().view());
        Ok(Self {
            node_id,
            alpha: vec![0.0; shard.len()],
            beta,
            received: Vec::new(),
            shard,
            gram,
        })
    }

    /// `sum_j alpha_j y_j K(x_i, x_j)` over own points and received SVs.
    fn expansion(&self, kernel: &KernelSpec) -> Vec<f64> {
        let y = self.shard.signs();
        (0..self.shard.len())
            .map(|i| {
                let own: f64 = (0..self.shard.len())
                    .map(|j| self.alpha[j] * y[j] * self.gram[[i, j]])
                    .sum();
                let xi = self.shard.row(i);
                let other: f64 = self
                    .received
                    .iter()
                    .map(|sv| sv.alpha * sv.y.sign() * kernel.eval(xi, ndarray::ArrayView1::from(&sv.x)))
                    .sum();
                own + other
            })
            .collect()
    }
}

/// Ascent on the node's block of the penalized objective, other nodes held
/// fixed. `global_sum` is the broadcast `sum_j alpha_j y_j` over all nodes.
///
/// Each sweep is one pass of closed-form single-coordinate updates followed
/// by up to `n_e` maximal-violating-pair updates along `y_i e_i - y_j e_j`.
/// Pair steps leave the penalty unchanged, so they stay well conditioned
/// when `M Z` dominates the kernel. Coefficients that end at or below the
/// support threshold are set to zero.
pub fn node_local_step(node: &NodeState, global_sum: f64, cfg: &DsvmConfig, svm: &SvmConfig) -> NodeState {
    let mz = cfg.penalty();
    let y = node.shard.signs();
    let n = y.len();
    let upper: Vec<f64> = node.beta.iter().map(|b| svm.c * b).collect();
    let mut h = node.expansion(&svm.kernel);
    let mut alpha = node.alpha.clone();
    let mut s = global_sum;
    let gram = &node.gram;
    let apply = |alpha: &mut [f64], h: &mut [f64], s: &mut f64, i: usize, delta: f64| {
        alpha[i] += delta;
        *s += delta * y[i];
        for (t, ht) in h.iter_mut().enumerate() {
            *ht += delta * y[i] * gram[[t, i]];
        }
    };
    for _ in 0..cfg.sweeps {
        for i in 0..n {
            let g = 1.0 - y[i] * h[i] - mz * y[i] * s;
            let new = (alpha[i] + g / (gram[[i, i]] + mz)).clamp(0.0, upper[i]);
            let delta = new - alpha[i];
            if delta != 0.0 {
                apply(&mut alpha, &mut h, &mut s, i, delta);
            }
        }
        for _ in 0..n {
            // y_t * (ascent gradient) = y_t - h_t - MZ s
            let score = |t: usize| y[t] - h[t] - mz * s;
            let up = (0..n)
                .filter(|&t| {
                    if y[t] > 0.0 {
                        alpha[t] < upper[t]
                    } else {
                        alpha[t] > 0.0
                    }
                })
                .max_by(|&a, &b| score(a).total_cmp(&score(b)));
            let low = (0..n)
                .filter(|&t| {
                    if y[t] > 0.0 {
                        alpha[t] > 0.0
                    } else {
                        alpha[t] < upper[t]
                    }
                })
                .min_by(|&a, &b| score(a).total_cmp(&score(b)));
            let (Some(i), Some(j)) = (up, low) else { break };
            let gap = score(i) - score(j);
            if i == j || gap < svm.kkt_tolerance {
                break;
            }
            let curv = (gram[[i, i]] + gram[[j, j]] - 2.0 * gram[[i, j]]).max(1e-12);
            // move y_i a_i up and y_j a_j down by the same amount
            let lo_i = if y[i] > 0.0 { upper[i] - alpha[i] } else { alpha[i] };
            let lo_j = if y[j] > 0.0 { alpha[j] } else { upper[j] - alpha[j] };
            let t = (gap / curv).min(lo_i).min(lo_j);
            apply(&mut alpha, &mut h, &mut s, i, t * y[i]);
            apply(&mut alpha, &mut h, &mut s, j, -t * y[j]);
            alpha[i] = alpha[i].clamp(0.0, upper[i]);
            alpha[j] = alpha[j].clamp(0.0, upper[j]);
        }
    }
    let thr = cfg.threshold(svm);
    for a in alpha.iter_mut() {
        if *a <= thr {
            *a = 0.0;
        }
    }
    NodeState { alpha, ..node.clone() }
}

/// Shuffles and cuts `ds` into `m` contiguous shards whose sizes differ by
/// at most one, reshuffling until every shard holds both classes.
pub fn partition(ds: &Dataset, m: usize, seed: u64) -> Result<Vec<Dataset>> {
    if m == 0 || m > ds.len() {
        return Err(Error::validation(format!(
            "cannot split {} samples over {m} nodes",
            ds.len()
        )));
    }
    if m == 1 {
        return Ok(vec![ds.clone()]);
    }
    for attempt in 0..PARTITION_RETRIES {
        let mut order: Vec<usize> = (0..ds.len()).collect();
        order.shuffle(&mut rng::child_rng(seed, &[attempt]));
        let bounds: Vec<usize> = (0..=m).map(|k| k * ds.len() / m).collect();
        let shards: Vec<Vec<usize>> = bounds.windows(2).map(|w| order[w[0]..w[1]].to_vec()).collect();
        let mixed = shards.iter().all(|s| {
            let pos = s.iter().filter(|&&i| ds.label(i) == Label::Positive).count();
            pos > 0 && pos < s.len()
        });
        if mixed {
            return shards.iter().map(|s| ds.subset(s)).collect();
        }
    }
    Err(Error::validation(format!(
        "no partition into {m} shards with both classes in each after {PARTITION_RETRIES} attempts"
    )))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundStats {
    pub round: usize,
    /// Penalized objective after the fusion step.
    pub objective: f64,
    pub validation_error: f64,
    pub points_sent_up: usize,
    pub points_sent_down: usize,
    /// Step scale chosen by the fusion center.
    pub theta: f64,
    pub n_support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DsvmTrace {
    pub rounds: Vec<RoundStats>,
    pub converged: bool,
    pub n: usize,
    pub nodes: usize,
    /// Support vectors of the centralized SVM on the same data and weights.
    pub centralized_sv: usize,
    pub bias: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommReport {
    pub total_up: usize,
    pub total_down: usize,
    pub total: usize,
    pub per_round_up: Vec<usize>,
    pub per_round_down: Vec<usize>,
    /// `n + M * |SV_centralized|`: all points up, the SVs down to each node.
    pub centralized_baseline: usize,
    /// `1 - total / baseline`.
    pub reduction: f64,
}

pub fn comm_report(trace: &DsvmTrace) -> CommReport {
    let per_round_up: Vec<usize> = trace.rounds.iter().map(|r| r.points_sent_up).collect();
    let per_round_down: Vec<usize> = trace.rounds.iter().map(|r| r.points_sent_down).collect();
    let total_up: usize = per_round_up.iter().sum();
    let total_down: usize = per_round_down.iter().sum();
    let total = total_up + total_down;
    let centralized_baseline = if trace.rounds.is_empty() {
        0
    } else {
        trace.n + trace.nodes * trace.centralized_sv
    };
    let reduction = if centralized_baseline > 0 {
        1.0 - total as f64 / centralized_baseline as f64
    } else {
        0.0
    };
    CommReport {
        total_up,
        total_down,
        total,
        per_round_up,
        per_round_down,
        centralized_baseline,
        reduction,
    }
}

/// Global view the fusion center keeps: every point's coefficient, indexed
/// by (node, local row).
struct Fusion<'a> {
    shards: &'a [Dataset],
    offsets: Vec<usize>,
    y: Vec<f64>,
    kernel: KernelSpec,
    mz: f64,
}

impl Fusion<'_> {
    fn row(&self, g: usize) -> ndarray::ArrayView1<'_, f64> {
        let node = self.offsets.partition_point(|&o| o <= g) - 1;
        self.shards[node].row(g - self.offsets[node])
    }

    /// Penalized objective over the nonzero coefficients.
    fn objective(&self, alpha: &[f64]) -> f64 {
        let nz: Vec<usize> = (0..alpha.len()).filter(|&i| alpha[i] != 0.0).collect();
        let quad: f64 = nz
            .par_iter()
            .map(|&i| {
                let xi = self.row(i);
                nz.iter()
                    .map(|&j| alpha[j] * self.y[j] * self.kernel.eval(xi, self.row(j)))
                    .sum::<f64>()
                    * alpha[i]
                    * self.y[i]
            })
            .sum();
        let s: f64 = alpha.iter().zip(&self.y).map(|(a, y)| a * y).sum();
        alpha.iter().sum::<f64>() - 0.5 * quad - 0.5 * self.mz * s * s
    }

    /// Shared bias from the free support vectors (midpoint rule otherwise).
    fn bias(&self, alpha: &[f64], upper: &[f64]) -> f64 {
        let nz: Vec<usize> = (0..alpha.len()).filter(|&i| alpha[i] != 0.0).collect();
        let grad: Vec<f64> = (0..alpha.len())
            .into_par_iter()
            .map(|i| {
                let xi = self.row(i);
                let f: f64 = nz
                    .iter()
                    .map(|&j| alpha[j] * self.y[j] * self.kernel.eval(xi, self.row(j)))
                    .sum();
                self.y[i] * f - 1.0
            })
            .collect();
        smo::bias_from_gradient(alpha, &grad, &self.y, upper)
    }
}

fn triples(nodes: &[NodeState], alpha: &[f64], offsets: &[usize], thr: f64) -> Vec<Vec<SvTriple>> {
    nodes
        .iter()
        .enumerate()
        .map(|(e, node)| {
            (0..node.shard.len())
                .filter(|&i| alpha[offsets[e] + i] > thr)
                .map(|i| SvTriple {
                    id: node.shard.ids()[i],
                    x: node.shard.row(i).to_vec(),
                    y: node.shard.label(i),
                    alpha: alpha[offsets[e] + i],
                })
                .collect()
        })
        .collect()
}

fn node_model(node: &NodeState, bias: f64, svm: &SvmConfig, thr: f64) -> TrainedModel {
    let own: Vec<usize> = (0..node.alpha.len()).filter(|&i| node.alpha[i] > thr).collect();
    let d = node.shard.dim();
    let mut rows = node.shard.features().select(Axis(0), &own).into_raw_vec_and_offset().0;
    let mut coef: Vec<f64> = own
        .iter()
        .map(|&i| node.alpha[i] * node.shard.label(i).sign())
        .collect();
    let mut ids: Vec<usize> = own.iter().map(|&i| node.shard.ids()[i]).collect();
    for sv in &node.received {
        rows.extend_from_slice(&sv.x);
        coef.push(sv.alpha * sv.y.sign());
        ids.push(sv.id);
    }
    let sv_features = Array2::from_shape_vec((coef.len(), d), rows).expect("rows of width d");
    TrainedModel {
        kernel: svm.kernel,
        c: svm.c,
        alpha: node.alpha.clone(),
        beta: node.beta.clone(),
        bias,
        support_idx: own,
        support_ids: ids,
        sv_features,
        sv_coef: coef,
        converged: true,
        iterations: 0,
        kkt_violation: 0.0,
        objective: None,
    }
}

/// Trains the distributed SVM. Returns one model per node and the round
/// trace. Communication counts only feature vectors a receiver has not
/// seen before: coefficient refreshes for known points, and a node's own
/// points, are not counted.
pub fn train_distributed(
    ds: &Dataset,
    beta: &[f64],
    cfg: &DsvmConfig,
    svm: &SvmConfig,
    validation: &Dataset,
    seed: u64,
) -> Result<(Vec<TrainedModel>, DsvmTrace)> {
    cfg.validate()?;
    svm.validate()?;
    ds.ensure_trainable()?;
    if beta.len() != ds.len() {
        return Err(Error::DimensionMismatch {
            expected: ds.len(),
            found: beta.len(),
        });
    }
    let m = cfg.nodes;
    let thr = cfg.threshold(svm);
    let shards = partition(ds, m, seed)?;
    let id_to_row: HashMap<usize, usize> = ds.ids().iter().enumerate().map(|(r, &id)| (id, r)).collect();
    let mut nodes: Vec<NodeState> = shards
        .iter()
        .enumerate()
        .map(|(e, s)| {
            let b = s.ids().iter().map(|id| beta[id_to_row[id]]).collect();
            NodeState::new(e, s.clone(), b, &svm.kernel)
        })
        .collect::<Result<_>>()?;
    let mut offsets = vec![0];
    for s in &shards {
        offsets.push(offsets.last().unwrap() + s.len());
    }
    let fusion = Fusion {
        shards: &shards,
        offsets: offsets.clone(),
        y: shards.iter().flat_map(|s| s.signs()).collect(),
        kernel: svm.kernel,
        mz: cfg.penalty(),
    };
    let upper: Vec<f64> = nodes.iter().flat_map(|n| n.beta.iter().map(|b| svm.c * b)).collect();
    let centralized_sv = train_weighted_svm(ds, beta, svm)?.n_support();

    let n = ds.len();
    let mut alpha = vec![0.0; n];
    let mut objective = 0.0;
    let mut at_fusion: HashSet<usize> = HashSet::new();
    let mut delivered: Vec<HashSet<usize>> = vec![HashSet::new(); m];
    let mut rounds = Vec::new();
    let mut converged = false;
    let mut stable = 0;
    let mut last_error: Option<f64> = None;
    let mut bias = 0.0;

    for round in 0..cfg.rounds_max {
        let s: f64 = alpha.iter().zip(&fusion.y).map(|(a, y)| a * y).sum();
        let proposals: Vec<NodeState> = nodes
            .par_iter()
            .map(|node| node_local_step(node, s, cfg, svm))
            .collect();

        // uplink: proposed support vectors the fusion center has not seen
        let mut up = 0;
        for (e, p) in proposals.iter().enumerate() {
            for (i, &a) in p.alpha.iter().enumerate() {
                if a > thr && at_fusion.insert(offsets[e] + i) {
                    up += 1;
                }
            }
        }
        let step: Vec<f64> = proposals
            .iter()
            .enumerate()
            .flat_map(|(e, p)| (0..p.alpha.len()).map(move |i| (e, i)))
            .map(|(e, i)| proposals[e].alpha[i] - alpha[offsets[e] + i])
            .collect();
        let mut thetas = Vec::new();
        let mut t = 1.0;
        while t > 1.0 / m as f64 {
            thetas.push(t);
            t *= 0.5;
        }
        thetas.push(1.0 / m as f64);
        let mut chosen = (0.0, alpha.clone(), objective);
        for &theta in &thetas {
            let cand: Vec<f64> = alpha
                .iter()
                .zip(&step)
                .zip(&upper)
                .map(|((a, d), u)| (a + theta * d).clamp(0.0, *u))
                .collect();
            let f = fusion.objective(&cand);
            if f >= objective {
                chosen = (theta, cand, f);
                break;
            }
        }
        let (theta, new_alpha, new_obj) = chosen;
        alpha = new_alpha;
        objective = new_obj;

        // downlink: each node receives the other nodes' support vectors
        let svs = triples(&nodes, &alpha, &offsets, thr);
        let mut down = 0;
        for (e, node) in nodes.iter_mut().enumerate() {
            node.alpha = alpha[offsets[e]..offsets[e + 1]].to_vec();
            node.received = svs
                .iter()
                .enumerate()
                .filter(|&(o, _)| o != e)
                .flat_map(|(_, v)| v.iter().cloned())
                .collect();
            for sv in &node.received {
                if delivered[e].insert(sv.id) {
                    down += 1;
                }
            }
        }

        bias = fusion.bias(&alpha, &upper);
        let model = node_model(&nodes[0], bias, svm, thr);
        let err = error_rate(&model, validation)?;
        rounds.push(RoundStats {
            round,
            objective,
            validation_error: err,
            points_sent_up: up,
            points_sent_down: down,
            theta,
            n_support: alpha.iter().filter(|&&a| a > thr).count(),
        });
        if let Some(prev) = last_error {
            if (err - prev).abs() < cfg.convergence_tol {
                stable += 1;
            } else {
                stable = 0;
            }
        }
        last_error = Some(err);
        if round + 1 >= cfg.min_rounds && stable >= cfg.patience {
            converged = true;
            break;
        }
    }

    let models = nodes.iter().map(|node| node_model(node, bias, svm, thr)).collect();
    let trace = DsvmTrace {
        rounds,
        converged,
        n,
        nodes: m,
        centralized_sv,
        bias,
    };
    Ok((models, trace))
}
