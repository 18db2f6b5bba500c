//! Hyperparameter selection by stratified k-fold grid search, and the
//! fixed per-dataset presets used in the benchmark runs.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{error_rate, train_svm, SvmConfig};
use crate::data::{kfold, Dataset};
use crate::error::{Error, Result};

/// `2^lo, 2^(lo+1), ..., 2^hi`.
pub fn pow2_grid(lo: i32, hi: i32) -> Vec<f64> {
    (lo..=hi).map(|e| 2f64.powi(e)).collect()
}

pub fn default_c_grid() -> Vec<f64> {
    pow2_grid(-2, 10)
}

pub fn default_gamma_grid() -> Vec<f64> {
    pow2_grid(-10, 4)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub c: f64,
    pub gamma: f64,
    pub cv_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningResult {
    pub best: GridPoint,
    pub grid: Vec<GridPoint>,
}

/// Picks `(C, gamma)` with the lowest mean k-fold validation error. Ties go
/// to the smaller C, then the smaller gamma.
pub fn grid_search(ds: &Dataset, c_grid: &[f64], gamma_grid: &[f64], folds: usize, seed: u64) -> Result<TuningResult> {
    if c_grid.is_empty() || gamma_grid.is_empty() {
        return Err(Error::validation("empty hyperparameter grid"));
    }
    let splits = kfold(ds, folds, seed)?;
    let cells: Vec<(f64, f64)> = c_grid
        .iter()
        .flat_map(|&c| gamma_grid.iter().map(move |&g| (c, g)))
        .collect();
    let grid = cells
        .par_iter()
        .map(|&(c, gamma)| {
            let cfg = SvmConfig::new(c, gamma)?;
            let mut total = 0.0;
            for (train, val) in &splits {
                total += error_rate(&train_svm(train, &cfg)?, val)?;
            }
            Ok(GridPoint {
                c,
                gamma,
                cv_error: total / splits.len() as f64,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let best = grid
        .iter()
        .min_by(|a, b| {
            a.cv_error
                .total_cmp(&b.cv_error)
                .then(a.c.total_cmp(&b.c))
                .then(a.gamma.total_cmp(&b.gamma))
        })
        .cloned()
        .expect("non-empty grid");
    Ok(TuningResult { best, grid })
}

/// Published `(C, gamma)` per benchmark dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Mnist,
    Acoustic,
    Ijcnn1,
    Seismic,
    Splice,
    Omnet,
}

impl Preset {
    pub const ALL: [Preset; 6] = [
        Preset::Mnist,
        Preset::Acoustic,
        Preset::Ijcnn1,
        Preset::Seismic,
        Preset::Splice,
        Preset::Omnet,
    ];

    pub fn c_gamma(self) -> (f64, f64) {
        match self {
            Preset::Mnist => (1.47, 0.0197),
            Preset::Acoustic | Preset::Seismic | Preset::Splice => (1024.0, 0.0078),
            Preset::Ijcnn1 => (64.0, 0.12),
            Preset::Omnet => (0.3969, 0.7937),
        }
    }

    /// `(train, test)` sample counts.
    pub fn sizes(self) -> (usize, usize) {
        match self {
            Preset::Mnist => (1500, 500),
            Preset::Omnet => (364, 91),
            _ => (500, 500),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Preset::Mnist => "mnist",
            Preset::Acoustic => "acoustic",
            Preset::Ijcnn1 => "ijcnn1",
            Preset::Seismic => "seismic",
            Preset::Splice => "splice",
            Preset::Omnet => "omnet",
        }
    }
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::validation(format!("unknown preset '{s}'")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, SyntheticKind};

    #[test]
    fn grids() {
        let c = default_c_grid();
        assert_eq!((c.len(), c[0], c[12]), (13, 0.25, 1024.0));
        let g = default_gamma_grid();
        assert_eq!((g.len(), g[0], g[14]), (15, 2f64.powi(-10), 16.0));
    }

    #[test]
    fn preset_values() {
        assert_eq!("Splice".parse::<Preset>().unwrap().c_gamma(), (1024.0, 0.0078));
        assert_eq!(Preset::Mnist.sizes(), (1500, 500));
    }

    #[test]
    fn search_picks_grid_minimum() {
        let ds = generate_synthetic(SyntheticKind::TwoMoons, 80, 0.25, 1).unwrap();
        let r = grid_search(&ds, &[0.25, 4.0], &[0.0625, 2.0], 4, 3).unwrap();
        assert_eq!(r.grid.len(), 4);
        assert!(r.grid.iter().all(|p| p.cv_error >= r.best.cv_error));
    }
}
