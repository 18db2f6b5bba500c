#![allow(dead_code)]

use klid_svm::data::{Dataset, Label};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random 2-class instance with `n` points in `d` dims, both classes present.
pub fn random_instance(seed: u64, n: usize, d: usize) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = Array2::from_shape_fn((n, d), |_| rng.random_range(-2.0..2.0));
    let labels = (0..n)
        .map(|i| {
            let s: f64 = x.row(i).sum() + rng.random_range(-1.0..1.0);
            if i == 0 || (i != 1 && s > 0.0) {
                Label::Positive
            } else {
                Label::Negative
            }
        })
        .collect();
    Dataset::new(x, labels).unwrap()
}

pub fn random_beta(seed: u64, n: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xbe7a);
    (0..n).map(|_| rng.random_range(0.1..=1.0)).collect()
}

/// Euclidean projection onto `{a : y'a = 0, 0 <= a <= u}` by bisection on
/// the multiplier of the equality constraint.
fn project(v: &[f64], y: &[f64], u: &[f64]) -> Vec<f64> {
    let at = |lam: f64| -> Vec<f64> {
        v.iter()
            .zip(y)
            .zip(u)
            .map(|((vi, yi), ui)| (vi - lam * yi).clamp(0.0, *ui))
            .collect()
    };
    let h = |lam: f64| at(lam).iter().zip(y).map(|(a, yi)| a * yi).sum::<f64>();
    let (mut lo, mut hi) = (-1e6, 1e6);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if h(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    at(0.5 * (lo + hi))
}

/// Maximization-form dual objective `e'a - a'Qa/2`.
pub fn dual_value(q: &Array2<f64>, a: &[f64]) -> f64 {
    let n = a.len();
    let mut quad = 0.0;
    for i in 0..n {
        for j in 0..n {
            quad += a[i] * a[j] * q[[i, j]];
        }
    }
    a.iter().sum::<f64>() - 0.5 * quad
}

/// Accelerated projected gradient on the SVM dual, run far past the
/// point where the objective stops moving.
pub fn projected_gradient_dual(q: &Array2<f64>, y: &[f64], u: &[f64]) -> (Vec<f64>, f64) {
    let n = y.len();
    let lip = (0..n)
        .map(|i| q.row(i).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let step = 1.0 / lip;
    let mut a = vec![0.0; n];
    let mut z = a.clone();
    let mut t = 1.0f64;
    let mut best = (a.clone(), dual_value(q, &a));
    for it in 0..200_000 {
        let grad: Vec<f64> = (0..n)
            .map(|i| 1.0 - (0..n).map(|j| q[[i, j]] * z[j]).sum::<f64>())
            .collect();
        let v: Vec<f64> = z.iter().zip(&grad).map(|(zi, g)| zi + step * g).collect();
        let next = project(&v, y, u);
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        z = next
            .iter()
            .zip(&a)
            .map(|(nx, ax)| nx + (t - 1.0) / t_next * (nx - ax))
            .collect();
        a = next;
        t = t_next;
        if it % 1000 == 999 {
            let f = dual_value(q, &a);
            if f <= best.1 + 1e-14 && it > 20_000 {
                break;
            }
            if f > best.1 {
                best = (a.clone(), f);
            }
            // restart momentum periodically for strongly convex stretches
            t = 1.0;
            z = a.clone();
        }
    }
    let f = dual_value(q, &a);
    if f > best.1 {
        (a, f)
    } else {
        best
    }
}
