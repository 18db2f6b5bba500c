//! SMO with second-order working-set selection for
//!
//! ```text
//! min 0.5 a'Qa - e'a   s.t.  y'a = 0,  0 <= a_i <= u_i
//! ```
//!
//! `Q` is passed in precomputed, which lets the LN-SVM baseline reuse the
//! solver with its corrected matrix.

use ndarray::Array2;

const TAU: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct DualSolution {
    pub alpha: Vec<f64>,
    /// Gradient `Qa - e` at `alpha`.
    pub grad: Vec<f64>,
    pub bias: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Maximal violating pair gap at exit.
    pub kkt_violation: f64,
}

/// Dual objective in maximization form, `e'a - 0.5 a'Qa`.
pub fn dual_objective(q: &Array2<f64>, alpha: &[f64]) -> f64 {
    let n = alpha.len();
    let mut quad = 0.0;
    for i in 0..n {
        if alpha[i] == 0.0 {
            continue;
        }
        let row = q.row(i);
        let s: f64 = (0..n).map(|j| row[j] * alpha[j]).sum();
        quad += alpha[i] * s;
    }
    alpha.iter().sum::<f64>() - 0.5 * quad
}

/// Solves the dual. `init` must be feasible when given (the caller's
/// responsibility; used for warm starts).
pub fn solve(
    q: &Array2<f64>,
    y: &[f64],
    upper: &[f64],
    tol: f64,
    max_iter: usize,
    init: Option<&[f64]>,
) -> DualSolution {
    let n = y.len();
    let mut alpha = init.map_or_else(|| vec![0.0; n], <[f64]>::to_vec);
    let mut grad = vec![-1.0; n];
    for i in 0..n {
        if alpha[i] != 0.0 {
            let a = alpha[i];
            for (g, qij) in grad.iter_mut().zip(q.row(i)) {
                *g += qij * a;
            }
        }
    }
    let is_upper = |a: f64, u: f64| a >= u;
    let is_lower = |a: f64| a <= 0.0;

    let mut iterations = 0;
    let mut converged = false;
    let mut gap;
    loop {
        // select i
        let mut gmax = f64::NEG_INFINITY;
        let mut i_sel = None;
        for t in 0..n {
            let in_up = if y[t] > 0.0 {
                !is_upper(alpha[t], upper[t])
            } else {
                !is_lower(alpha[t])
            };
            if in_up && -y[t] * grad[t] >= gmax {
                gmax = -y[t] * grad[t];
                i_sel = Some(t);
            }
        }
        // select j by second-order gain
        let mut gmin = f64::INFINITY;
        let mut j_sel = None;
        let mut best_gain = f64::INFINITY;
        if let Some(i) = i_sel {
            let qi = q.row(i);
            for t in 0..n {
                let in_low = if y[t] > 0.0 {
                    !is_lower(alpha[t])
                } else {
                    !is_upper(alpha[t], upper[t])
                };
                if !in_low {
                    continue;
                }
                let v = -y[t] * grad[t];
                gmin = gmin.min(v);
                let b = gmax - v;
                if b > 0.0 {
                    let mut a = qi[i] + q[[t, t]] - 2.0 * y[i] * y[t] * qi[t];
                    if a <= 0.0 {
                        a = TAU;
                    }
                    let gain = -(b * b) / a;
                    if gain <= best_gain {
                        best_gain = gain;
                        j_sel = Some(t);
                    }
                }
            }
        }
        gap = gmax - gmin;
        let (i, j) = match (i_sel, j_sel) {
            (Some(i), Some(j)) if gap >= tol => (i, j),
            _ => {
                converged = true;
                break;
            }
        };
        if iterations >= max_iter {
            break;
        }
        iterations += 1;

        let (old_i, old_j) = (alpha[i], alpha[j]);
        let (ui, uj) = (upper[i], upper[j]);
        let qij = q[[i, j]];
        let mut a = q[[i, i]] + q[[j, j]] - 2.0 * y[i] * y[j] * qij;
        if a <= 0.0 {
            a = TAU;
        }
        if y[i] != y[j] {
            let delta = (-grad[i] - grad[j]) / a;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > ui - uj {
                if alpha[i] > ui {
                    alpha[i] = ui;
                    alpha[j] = ui - diff;
                }
            } else if alpha[j] > uj {
                alpha[j] = uj;
                alpha[i] = uj + diff;
            }
        } else {
            let delta = (grad[i] - grad[j]) / a;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > ui {
                if alpha[i] > ui {
                    alpha[i] = ui;
                    alpha[j] = sum - ui;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > uj {
                if alpha[j] > uj {
                    alpha[j] = uj;
                    alpha[i] = sum - uj;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        // q already carries the label signs
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        let (qi, qj) = (q.row(i), q.row(j));
        for t in 0..n {
            grad[t] += qi[t] * di + qj[t] * dj;
        }
    }

    let bias = bias_from_gradient(&alpha, &grad, y, upper);
    DualSolution {
        alpha,
        grad,
        bias,
        iterations,
        converged,
        kkt_violation: gap.max(0.0),
    }
}

/// `b` as the mean of `-y_i G_i` over free variables, else the midpoint of
/// the interval the bounded variables allow.
pub fn bias_from_gradient(alpha: &[f64], grad: &[f64], y: &[f64], upper: &[f64]) -> f64 {
    let mut free_sum = 0.0;
    let mut free = 0usize;
    let mut ub = f64::INFINITY;
    let mut lb = f64::NEG_INFINITY;
    for t in 0..alpha.len() {
        let yg = y[t] * grad[t];
        if alpha[t] >= upper[t] {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free += 1;
            free_sum += yg;
        }
    }
    let rho = if free > 0 {
        free_sum / free as f64
    } else if ub.is_finite() && lb.is_finite() {
        0.5 * (ub + lb)
    } else if ub.is_finite() {
        ub
    } else if lb.is_finite() {
        lb
    } else {
        0.0
    };
    -rho
}
