//! Gaussian kernel density estimates over scalars and the KL divergence
//! between two of them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SQRT_2PI: f64 = 2.506_628_274_631_000_5;
/// Floor added to every discretized probability before renormalizing.
pub const PROB_FLOOR: f64 = 1e-12;
pub const DEFAULT_GRID: usize = 512;
pub const MIN_GRID: usize = 64;

/// How the KDE bandwidth is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum BandwidthRule {
    #[default]
    Silverman,
    /// Leave-one-out likelihood over multiples of the Silverman bandwidth.
    CrossValidated,
    Fixed(f64),
}

/// Gaussian-kernel density estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Density {
    points: Vec<f64>,
    bandwidth: f64,
}

impl Density {
    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn evaluate(&self, x: f64) -> f64 {
        let h = self.bandwidth;
        let s: f64 = self
            .points
            .iter()
            .map(|&v| {
                let z = (x - v) / h;
                (-0.5 * z * z).exp()
            })
            .sum();
        s / (self.points.len() as f64 * h * SQRT_2PI)
    }

    /// `[min - 3h, max + 3h]`.
    pub fn support(&self) -> (f64, f64) {
        let (lo, hi) = min_max(&self.points);
        (lo - 3.0 * self.bandwidth, hi + 3.0 * self.bandwidth)
    }

    /// Trapezoidal integral over [`Density::support`].
    pub fn integral(&self, grid_size: usize) -> f64 {
        let (lo, hi) = self.support();
        let step = (hi - lo) / (grid_size - 1) as f64;
        let ys: Vec<f64> = (0..grid_size).map(|i| self.evaluate(lo + step * i as f64)).collect();
        step * (ys.iter().sum::<f64>() - 0.5 * (ys[0] + ys[grid_size - 1]))
    }
}

fn min_max(v: &[f64]) -> (f64, f64) {
    v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
        (lo.min(x), hi.max(x))
    })
}

/// Type-7 (linear interpolation) quantile of ascending-sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn sample_std(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0).max(1.0)).sqrt()
}

pub fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    quantile_sorted(&s, 0.5)
}

fn bandwidth_floor(values: &[f64]) -> f64 {
    let (lo, hi) = min_max(values);
    let range = hi - lo;
    1e-6 * if range > 0.0 { range } else { 1.0 }
}

/// `0.9 * min(sigma, IQR / 1.34) * n^(-1/5)`. A zero IQR falls back to
/// sigma alone; the result is floored at `1e-6 * (range or 1)`.
pub fn silverman_bandwidth(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let sigma = sample_std(values);
    let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
    let spread = if iqr > 0.0 { sigma.min(iqr / 1.34) } else { sigma };
    let h = 0.9 * spread * (values.len() as f64).powf(-0.2);
    h.max(bandwidth_floor(values))
}

fn loo_log_likelihood(values: &[f64], h: f64) -> f64 {
    let n = values.len();
    let norm = ((n - 1) as f64 * h * SQRT_2PI).ln();
    values
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let s: f64 = values
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, &v)| (-0.5 * ((x - v) / h).powi(2)).exp())
                .sum();
            s.max(f64::MIN_POSITIVE).ln() - norm
        })
        .sum()
}

/// Maximizes the leave-one-out log likelihood over 40 log-spaced
/// multiples (0.05x to 5x) of the Silverman bandwidth.
pub fn cv_bandwidth(values: &[f64]) -> f64 {
    let base = silverman_bandwidth(values);
    let floor = bandwidth_floor(values);
    let mut best = (f64::NEG_INFINITY, base);
    for i in 0..40 {
        let h = (base * 0.05 * 100f64.powf(i as f64 / 39.0)).max(floor);
        let ll = loo_log_likelihood(values, h);
        if ll > best.0 {
            best = (ll, h);
        }
    }
    best.1
}

/// Fits a Gaussian KDE, with an explicit bandwidth or Silverman's rule.
pub fn kde_fit(values: &[f64], bandwidth: Option<f64>) -> Result<Density> {
    kde_fit_with(values, bandwidth.map_or(BandwidthRule::Silverman, BandwidthRule::Fixed))
}

pub fn kde_fit_with(values: &[f64], rule: BandwidthRule) -> Result<Density> {
    if values.len() < 2 {
        return Err(Error::validation(format!(
            "KDE needs at least 2 values, got {}",
            values.len()
        )));
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::validation(format!("KDE input contains {v}")));
    }
    let bandwidth = match rule {
        BandwidthRule::Silverman => silverman_bandwidth(values),
        BandwidthRule::CrossValidated => cv_bandwidth(values),
        BandwidthRule::Fixed(h) if h.is_finite() && h > 0.0 => h,
        BandwidthRule::Fixed(h) => return Err(Error::validation(format!("bandwidth must be positive, got {h}"))),
    };
    Ok(Density {
        points: values.to_vec(),
        bandwidth,
    })
}

/// `sum_i p_i ln(p_i / q_i)` for probability vectors of equal length.
pub fn discrete_kl(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(&pi, _)| pi > 0.0)
        .map(|(&pi, &qi)| pi * (pi / qi).ln())
        .sum()
}

fn discretize(d: &Density, grid: &[f64]) -> Vec<f64> {
    let raw: Vec<f64> = grid.iter().map(|&x| d.evaluate(x)).collect();
    let total: f64 = raw.iter().sum();
    let mut p: Vec<f64> = raw
        .iter()
        .map(|&v| if total > 0.0 { v / total } else { 0.0 } + PROB_FLOOR)
        .collect();
    let z: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= z);
    p
}

/// KL(p || q) after discretizing both densities on a shared uniform grid
/// spanning the union of their supports.
pub fn kl_divergence(p: &Density, q: &Density, grid_size: usize) -> Result<f64> {
    if grid_size < MIN_GRID {
        return Err(Error::validation(format!(
            "KL grid needs at least {MIN_GRID} points, got {grid_size}"
        )));
    }
    let (plo, phi) = p.support();
    let (qlo, qhi) = q.support();
    let (lo, hi) = (plo.min(qlo), phi.max(qhi));
    let step = (hi - lo) / (grid_size - 1) as f64;
    let grid: Vec<f64> = (0..grid_size).map(|i| lo + step * i as f64).collect();
    Ok(discrete_kl(&discretize(p, &grid), &discretize(q, &grid)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn center_of_two_equal_points() {
        for h in [0.1, 1.0, 3.0] {
            let d = kde_fit(&[0.0, 0.0], Some(h)).unwrap();
            assert_abs_diff_eq!(d.evaluate(0.0), 1.0 / (h * SQRT_2PI), epsilon = 1e-12);
        }
    }

    #[test]
    fn identical_values_get_floor_bandwidth() {
        let d = kde_fit(&[2.0; 5], None).unwrap();
        assert_eq!(d.bandwidth(), 1e-6);
        assert!(d.evaluate(2.0).is_finite());
    }

    #[test]
    fn silverman_hand_value() {
        // sigma = sqrt(2.5), IQR = 2 (type 7), n = 5
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        let expected = 0.9 * (2.5f64.sqrt()).min(2.0 / 1.34) * 5f64.powf(-0.2);
        assert_abs_diff_eq!(silverman_bandwidth(&v), expected, epsilon = 1e-15);
    }

    #[test]
    fn zero_iqr_falls_back_to_sigma() {
        let v = [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 10.0];
        assert!(silverman_bandwidth(&v) > 1.0);
    }

    #[test]
    fn discrete_kl_unit_value() {
        assert_abs_diff_eq!(discrete_kl(&[0.5, 0.5], &[0.25, 0.75]), 0.143841036, epsilon = 1e-6);
    }

    #[test]
    fn symmetric_input_gives_symmetric_density() {
        let d = kde_fit(&[-2.0, -0.5, 0.5, 2.0], None).unwrap();
        for x in [0.1, 0.7, 1.9, 4.0] {
            assert_abs_diff_eq!(d.evaluate(x), d.evaluate(-x), epsilon = 1e-9);
        }
    }

    #[test]
    fn moving_q_away_increases_kl() {
        let p = kde_fit(&[0.0, 0.3, 0.5, 1.0, 1.1], None).unwrap();
        let mut last = 0.0;
        for shift in [0.5, 1.0, 2.0, 4.0] {
            let vals: Vec<f64> = p.points().iter().map(|v| v + shift).collect();
            let q = kde_fit(&vals, Some(p.bandwidth())).unwrap();
            let kl = kl_divergence(&p, &q, DEFAULT_GRID).unwrap();
            assert!(kl > last, "shift {shift}: {kl} <= {last}");
            last = kl;
        }
    }

    #[test]
    fn widening_q_away_from_p_increases_kl() {
        let p = kde_fit(&[0.0, 0.2, 0.4], Some(0.2)).unwrap();
        let q_vals = [3.0, 3.2, 3.4];
        let mut last = f64::INFINITY;
        // a wider q reaches further into p's support, so KL falls as h grows
        for h in [0.3, 0.6, 1.2, 2.4] {
            let q = kde_fit(&q_vals, Some(h)).unwrap();
            let kl = kl_divergence(&p, &q, DEFAULT_GRID).unwrap();
            assert!(kl < last);
            last = kl;
        }
    }

    #[test]
    fn cv_bandwidth_is_positive() {
        let v: Vec<f64> = (0..50)
            .map(|i| (i as f64 * 0.7).sin() * 3.0 + i as f64 * 0.01)
            .collect();
        let d = kde_fit_with(&v, BandwidthRule::CrossValidated).unwrap();
        assert!(d.bandwidth() > 0.0 && d.bandwidth().is_finite());
    }

    #[test]
    fn rejects_bad_input() {
        assert!(kde_fit(&[1.0], None).is_err());
        assert!(kde_fit(&[1.0, f64::NAN], None).is_err());
        let d = kde_fit(&[1.0, 2.0], None).unwrap();
        assert!(kl_divergence(&d, &d, 10).is_err());
    }

    proptest! {
        #[test]
        fn integrates_to_one(v in proptest::collection::vec(-50.0f64..50.0, 2..60)) {
            let d = kde_fit(&v, None).unwrap();
            let grid = 20_000;
            let i = d.integral(grid);
            prop_assert!((0.99..=1.01).contains(&i), "integral {i}, h {}", d.bandwidth());
        }

        #[test]
        fn kl_nonnegative_and_zero_on_self(
            a in proptest::collection::vec(-5.0f64..5.0, 2..40),
            b in proptest::collection::vec(-5.0f64..5.0, 2..40),
        ) {
            let p = kde_fit(&a, None).unwrap();
            let q = kde_fit(&b, None).unwrap();
            prop_assert!(kl_divergence(&p, &q, DEFAULT_GRID).unwrap() >= -1e-9);
            prop_assert!(kl_divergence(&p, &p, DEFAULT_GRID).unwrap().abs() <= 1e-9);
        }

        #[test]
        fn grid_refinement_is_stable(a in proptest::collection::vec(-5.0f64..5.0, 5..30), shift in 0.5f64..3.0) {
            let p = kde_fit(&a, Some(1.0)).unwrap();
            let b: Vec<f64> = a.iter().map(|v| v * 0.8 + shift).collect();
            let q = kde_fit(&b, Some(1.0)).unwrap();
            let k1 = kl_divergence(&p, &q, 512).unwrap();
            let k2 = kl_divergence(&p, &q, 1024).unwrap();
            prop_assert!((k1 - k2).abs() <= 0.01 * k1.max(1e-6), "{k1} vs {k2}");
        }
    }
}
