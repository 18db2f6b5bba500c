use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::attacks::{AttackConfig, AttackKind};
use crate::data::{DataFormat, SyntheticKind};
use crate::defense::{DefenseConfig, DefenseMode};
use crate::dsvm::DsvmConfig;
use crate::error::{Error, Result};
use crate::svm::{baselines, SvmConfig};

/// Where the samples come from: `synthetic:<kind>` or a file path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum DatasetSource {
    Synthetic(SyntheticKind),
    File(PathBuf),
}

impl DatasetSource {
    /// Short name used in result rows.
    pub fn name(&self) -> String {
        match self {
            DatasetSource::Synthetic(kind) => format!("synthetic:{kind}"),
            DatasetSource::File(path) => path
                .file_stem()
                .map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned()),
        }
    }

    /// Format from the extension: `.csv` is CSV, everything else libsvm.
    pub fn infer_format(path: &Path) -> DataFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => DataFormat::Csv,
            _ => DataFormat::Libsvm,
        }
    }
}

impl FromStr for DatasetSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.strip_prefix("synthetic:") {
            Some(kind) => Ok(DatasetSource::Synthetic(kind.parse()?)),
            None if s.is_empty() => Err(Error::validation("empty dataset path")),
            None => Ok(DatasetSource::File(PathBuf::from(s))),
        }
    }
}

impl TryFrom<String> for DatasetSource {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<DatasetSource> for String {
    fn from(d: DatasetSource) -> String {
        d.to_string()
    }
}

impl fmt::Display for DatasetSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DatasetSource::Synthetic(kind) => write!(f, "synthetic:{kind}"),
            DatasetSource::File(path) => write!(f, "{}", path.display()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DefenseKind {
    Svm,
    KlidSvm,
    LsSvm,
    LnSvm,
}

impl DefenseKind {
    pub const ALL: [DefenseKind; 4] = [
        DefenseKind::Svm,
        DefenseKind::KlidSvm,
        DefenseKind::LsSvm,
        DefenseKind::LnSvm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DefenseKind::Svm => "svm",
            DefenseKind::KlidSvm => "klid-svm",
            DefenseKind::LsSvm => "ls-svm",
            DefenseKind::LnSvm => "ln-svm",
        }
    }

    /// Whether the defense can be trained by the distributed solver.
    pub fn distributable(self) -> bool {
        matches!(self, DefenseKind::Svm | DefenseKind::KlidSvm)
    }
}

impl fmt::Display for DefenseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DefenseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase().replace('_', "-");
        DefenseKind::ALL
            .into_iter()
            .find(|d| d.name() == lower)
            .ok_or_else(|| Error::validation(format!("unknown defense '{s}'")))
    }
}

/// Parses `start:stop:step` (inclusive stop) or a comma-separated list.
pub fn parse_rates(s: &str) -> Result<Vec<f64>> {
    let num = |t: &str| {
        t.trim()
            .parse::<f64>()
            .map_err(|_| Error::validation(format!("bad rate '{t}'")))
    };
    let parts: Vec<&str> = s.split(':').collect();
    match parts.as_slice() {
        [start, stop, step] => {
            let (start, stop, step) = (num(start)?, num(stop)?, num(step)?);
            if !(step > 0.0) || stop < start {
                return Err(Error::validation(format!("bad rate range '{s}'")));
            }
            let count = ((stop - start) / step + 1e-9).floor() as usize;
            // round to 1e-12 so 0.1 + 0.2 style drift does not leak into the CSV
            Ok((0..=count)
                .map(|i| ((start + i as f64 * step) * 1e12).round() / 1e12)
                .collect())
        }
        [_] => s.split(',').map(num).collect(),
        _ => Err(Error::validation(format!("bad rate spec '{s}'"))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub dataset: DatasetSource,
    /// Overrides the extension-based format guess.
    pub format: Option<DataFormat>,
    /// Size of generated synthetic data (per seed).
    pub synthetic_n: usize,
    pub synthetic_noise: f64,
    /// Stratified subsample of the pool drawn per seed before splitting.
    pub subsample: Option<usize>,
    /// Train share when `folds == 1` (a single stratified split).
    pub train_fraction: f64,
    /// z-score features with statistics of the clean training fold.
    pub standardize: bool,
    pub attack: AttackKind,
    pub attack_params: AttackConfig,
    pub rates: Vec<f64>,
    pub defenses: Vec<DefenseKind>,
    pub mode: DefenseMode,
    pub folds: usize,
    pub seeds: Vec<u64>,
    pub c: f64,
    pub gamma: f64,
    pub defense: DefenseConfig,
    pub ln_mu: f64,
    pub dsvm: Option<DsvmConfig>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetSource::Synthetic(SyntheticKind::TwoGaussians),
            format: None,
            synthetic_n: 400,
            synthetic_noise: 0.7,
            subsample: None,
            train_fraction: 0.5,
            standardize: true,
            attack: AttackKind::Alfa,
            attack_params: AttackConfig::default(),
            rates: parse_rates("0:0.30:0.05").expect("valid default"),
            defenses: DefenseKind::ALL.to_vec(),
            mode: DefenseMode::Oracle,
            folds: 5,
            seeds: (0..5).collect(),
            c: 1.0,
            gamma: 0.5,
            defense: DefenseConfig::default(),
            ln_mu: baselines::DEFAULT_MU,
            dsvm: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::validation(format!("config: {e}")))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::validation(format!("config: {e}")))
    }

    pub fn svm(&self) -> Result<SvmConfig> {
        SvmConfig::new(self.c, self.gamma)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rates.is_empty() {
            return Err(Error::validation("no attack rates"));
        }
        if let Some(r) = self.rates.iter().find(|r| !(0.0..=0.5).contains(*r)) {
            return Err(Error::validation(format!("attack rate {r} outside [0, 0.5]")));
        }
        if self.defenses.is_empty() {
            return Err(Error::validation("no defenses selected"));
        }
        if self.seeds.is_empty() {
            return Err(Error::validation("no seeds"));
        }
        if self.folds == 0 {
            return Err(Error::validation("folds must be >= 1"));
        }
        if self.folds == 1 && !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::validation(format!(
                "train fraction must lie in (0, 1), got {}",
                self.train_fraction
            )));
        }
        if !(0.0..0.5).contains(&self.ln_mu) {
            return Err(Error::validation(format!(
                "LN-SVM mu must lie in [0, 0.5), got {}",
                self.ln_mu
            )));
        }
        self.svm()?;
        self.defense.validate()?;
        self.attack_params.poison.validate()?;
        if let Some(d) = &self.dsvm {
            d.validate()?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rate_ranges() {
        assert_eq!(
            parse_rates("0:0.30:0.05").unwrap(),
            vec![0.0, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3]
        );
        assert_eq!(parse_rates("0.1,0.2").unwrap(), vec![0.1, 0.2]);
        assert!(parse_rates("0:0.3:0").is_err());
        assert!(parse_rates("a").is_err());
    }

    #[test]
    fn sources_and_defenses_parse() {
        assert_eq!(
            "synthetic:two-moons".parse::<DatasetSource>().unwrap(),
            DatasetSource::Synthetic(SyntheticKind::TwoMoons)
        );
        let file: DatasetSource = "data/splice.libsvm".parse().unwrap();
        assert_eq!(file.name(), "splice");
        assert!("synthetic:cubes".parse::<DatasetSource>().is_err());
        assert_eq!("KLID_SVM".parse::<DefenseKind>().unwrap(), DefenseKind::KlidSvm);
        assert_eq!(DatasetSource::infer_format(Path::new("a.CSV")), DataFormat::Csv);
    }

    #[test]
    fn toml_round_trip_and_partial_override() {
        let cfg = ExperimentConfig::default();
        let back = ExperimentConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg);
        let partial = ExperimentConfig::from_toml(
            "attack = \"farfirst\"\nfolds = 3\n[defense.lid]\nk_neighbors = 10\n[dsvm]\nnodes = 4\n",
        )
        .unwrap();
        assert_eq!(partial.attack, AttackKind::Farfirst);
        assert_eq!(partial.defense.lid.k_neighbors, 10);
        assert_eq!(partial.defense.lid.minibatch_size, 100);
        assert_eq!(partial.dsvm.unwrap().nodes, 4);
        assert_eq!(partial.seeds, cfg.seeds);
    }

    #[test]
    fn validation_rejects_bad_configs() {
        let ok = ExperimentConfig::default();
        assert!(ok.validate().is_ok());
        for bad in [
            ExperimentConfig {
                rates: vec![0.6],
                ..ok.clone()
            },
            ExperimentConfig {
                defenses: vec![],
                ..ok.clone()
            },
            ExperimentConfig {
                seeds: vec![],
                ..ok.clone()
            },
            ExperimentConfig { c: -1.0, ..ok.clone() },
        ] {
            assert!(bad.validate().is_err());
        }
    }
}
