//! Labelled datasets: ingestion, synthetic generation, scaling, splitting.
//!
//! Labels are canonicalized to {+1, -1} on the way in so that every
//! downstream routine can use `y_i * y_j` products directly. Storage is
//! dense; sparse libsvm rows are densified with zeros.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use ndarray::{Array2, ArrayView1, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Binary class label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "i8", try_from = "i8")]
pub enum Label {
    Negative,
    Positive,
}

impl Label {
    /// Both labels, positive first (the order classes are processed in).
    pub const BOTH: [Label; 2] = [Label::Positive, Label::Negative];

    pub fn sign(self) -> f64 {
        match self {
            Label::Positive => 1.0,
            Label::Negative => -1.0,
        }
    }

    pub fn flipped(self) -> Label {
        match self {
            Label::Positive => Label::Negative,
            Label::Negative => Label::Positive,
        }
    }

    /// `sign(0)` maps to the positive class.
    pub fn from_score(score: f64) -> Label {
        if score >= 0.0 {
            Label::Positive
        } else {
            Label::Negative
        }
    }
}

impl From<Label> for i8 {
    fn from(l: Label) -> i8 {
        match l {
            Label::Positive => 1,
            Label::Negative => -1,
        }
    }
}

impl TryFrom<i8> for Label {
    type Error = String;

    fn try_from(v: i8) -> std::result::Result<Self, String> {
        match v {
            1 => Ok(Label::Positive),
            -1 => Ok(Label::Negative),
            other => Err(format!("label must be +1 or -1, got {other}")),
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Positive => f.write_str("+1"),
            Label::Negative => f.write_str("-1"),
        }
    }
}

/// Feature matrix plus binary labels and stable sample identifiers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    features: Array2<f64>,
    labels: Vec<Label>,
    ids: Vec<usize>,
}

impl Dataset {
    /// Builds a dataset with ids `0..n`.
    pub fn new(features: Array2<f64>, labels: Vec<Label>) -> Result<Self> {
        let ids = (0..labels.len()).collect();
        Self::with_ids(features, labels, ids)
    }

    pub fn with_ids(features: Array2<f64>, labels: Vec<Label>, ids: Vec<usize>) -> Result<Self> {
        let n = features.nrows();
        if n == 0 {
            return Err(Error::validation("dataset has no samples"));
        }
        if labels.len() != n || ids.len() != n {
            return Err(Error::validation(format!(
                "{} feature rows but {} labels and {} ids",
                n,
                labels.len(),
                ids.len()
            )));
        }
        if let Some(((r, c), v)) = features.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::validation(format!(
                "non-finite feature value {v} at row {r}, column {c}"
            )));
        }
        let mut seen = HashSet::with_capacity(n);
        if let Some(dup) = ids.iter().find(|id| !seen.insert(**id)) {
            return Err(Error::validation(format!("duplicate sample id {dup}")));
        }
        Ok(Self { features, labels, ids })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.features.row(i)
    }

    pub fn label(&self, i: usize) -> Label {
        self.labels[i]
    }

    /// Labels as `+1.0 / -1.0`.
    pub fn signs(&self) -> Vec<f64> {
        self.labels.iter().map(|l| l.sign()).collect()
    }

    pub fn class_indices(&self, label: Label) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.labels[i] == label).collect()
    }

    /// `(positives, negatives)`.
    pub fn class_counts(&self) -> (usize, usize) {
        let pos = self.labels.iter().filter(|&&l| l == Label::Positive).count();
        (pos, self.len() - pos)
    }

    pub fn ensure_trainable(&self) -> Result<()> {
        let (pos, neg) = self.class_counts();
        if self.len() < 2 || pos == 0 || neg == 0 {
            return Err(Error::validation(format!(
                "training needs both classes: {pos} positive, {neg} negative"
            )));
        }
        Ok(())
    }

    /// Rows `indices` in the given order, keeping their ids.
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        let features = self.features.select(Axis(0), indices);
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        let ids = indices.iter().map(|&i| self.ids[i]).collect();
        Dataset::with_ids(features, labels, ids)
    }

    pub fn with_labels(&self, labels: Vec<Label>) -> Result<Dataset> {
        Dataset::with_ids(self.features.clone(), labels, self.ids.clone())
    }

    pub fn with_features(&self, features: Array2<f64>) -> Result<Dataset> {
        if features.dim() != self.features.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.features.len(),
                found: features.len(),
            });
        }
        Dataset::with_ids(features, self.labels.clone(), self.ids.clone())
    }

    /// Appends rows, assigning fresh ids above the current maximum.
    pub fn append_rows(&self, rows: &Array2<f64>, labels: &[Label]) -> Result<Dataset> {
        if rows.ncols() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: rows.ncols(),
            });
        }
        let features = ndarray::concatenate(Axis(0), &[self.features.view(), rows.view()])
            .map_err(|e| Error::validation(e.to_string()))?;
        let mut all_labels = self.labels.clone();
        all_labels.extend_from_slice(labels);
        let next = self.ids.iter().max().map_or(0, |m| m + 1);
        let mut ids = self.ids.clone();
        ids.extend(next..next + rows.nrows());
        Dataset::with_ids(features, all_labels, ids)
    }

    /// Per-column `(min, max)` of the features.
    pub fn feature_bounds(&self) -> Vec<(f64, f64)> {
        self.features
            .columns()
            .into_iter()
            .map(|c| {
                c.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                    (lo.min(v), hi.max(v))
                })
            })
            .collect()
    }
}

/// On-disk dataset formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataFormat {
    /// `label idx:value ...` with 1-based indices.
    Libsvm,
    /// Headerless, label in the last column.
    Csv,
}

impl FromStr for DataFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "libsvm" | "svmlight" => Ok(DataFormat::Libsvm),
            "csv" => Ok(DataFormat::Csv),
            other => Err(Error::validation(format!("unknown data format '{other}'"))),
        }
    }
}

pub fn load_dataset(path: impl AsRef<Path>, format: DataFormat) -> Result<Dataset> {
    let file = File::open(path.as_ref())?;
    read_dataset(BufReader::new(file), format)
}

pub fn read_dataset<R: Read>(reader: R, format: DataFormat) -> Result<Dataset> {
    let (rows, raw_labels, dim) = match format {
        DataFormat::Libsvm => parse_libsvm(BufReader::new(reader))?,
        DataFormat::Csv => parse_csv(reader)?,
    };
    let labels = canonical_labels(&raw_labels)?;
    if labels.len() < 2 {
        return Err(Error::validation("a dataset needs at least two samples"));
    }
    let mut features = Array2::zeros((rows.len(), dim));
    for (i, row) in rows.into_iter().enumerate() {
        for (j, v) in row {
            features[[i, j]] = v;
        }
    }
    Dataset::new(features, labels)
}

type SparseRows = Vec<Vec<(usize, f64)>>;

fn parse_libsvm<R: BufRead>(reader: R) -> Result<(SparseRows, Vec<f64>, usize)> {
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    let mut dim = 0;
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let line_no = lineno + 1;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut tokens = content.split_whitespace();
        let label_tok = tokens.next().unwrap_or_default();
        let label = parse_number(label_tok, line_no)?;
        let mut row = Vec::new();
        for tok in tokens {
            let (idx, val) = tok.split_once(':').ok_or_else(|| Error::Parse {
                line: line_no,
                message: format!("expected index:value, got '{tok}'"),
            })?;
            let idx: usize = idx.parse().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("bad feature index '{idx}'"),
            })?;
            if idx == 0 {
                return Err(Error::Parse {
                    line: line_no,
                    message: "feature indices are 1-based".into(),
                });
            }
            let val = parse_number(val, line_no)?;
            dim = dim.max(idx);
            row.push((idx - 1, val));
        }
        rows.push(row);
        labels.push(label);
    }
    Ok((rows, labels, dim))
}

fn parse_csv<R: Read>(reader: R) -> Result<(SparseRows, Vec<f64>, usize)> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    let mut dim = None;
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let line_no = record.position().map_or(i + 1, |p| p.line() as usize);
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        if record.len() < 2 {
            return Err(Error::Parse {
                line: line_no,
                message: "need at least one feature and a label".into(),
            });
        }
        let d = record.len() - 1;
        match dim {
            None => dim = Some(d),
            Some(expected) if expected != d => {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("expected {expected} features, found {d}"),
                })
            }
            _ => {}
        }
        let mut row = Vec::with_capacity(d);
        for (j, field) in record.iter().take(d).enumerate() {
            row.push((j, parse_number(field, line_no)?));
        }
        labels.push(parse_number(&record[d], line_no)?);
        rows.push(row);
    }
    Ok((rows, labels, dim.unwrap_or(0)))
}

fn parse_number(tok: &str, line: usize) -> Result<f64> {
    let v: f64 = tok.trim_start_matches('+').parse().map_err(|_| Error::Parse {
        line,
        message: format!("not a number: '{tok}'"),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            line,
            message: format!("non-finite value '{tok}'"),
        });
    }
    Ok(v)
}

/// Maps a two-valued label column onto {+1, -1}.
///
/// `{-1, 1}` and `{0, 1}` keep 1 as the positive class; any other pair
/// `a < b` (e.g. `{1, 2}`) maps `a -> +1` and `b -> -1`.
fn canonical_labels(raw: &[f64]) -> Result<Vec<Label>> {
    let distinct: BTreeSet<i64> = raw
        .iter()
        .map(|&v| {
            if v.fract() != 0.0 {
                Err(Error::validation(format!("label {v} is not an integer")))
            } else {
                Ok(v as i64)
            }
        })
        .collect::<Result<_>>()?;
    let values: Vec<i64> = distinct.into_iter().collect();
    let positive = match values.as_slice() {
        [_] | [] => {
            return Err(Error::validation(format!(
                "labels must take exactly two values, found {values:?}"
            )))
        }
        [-1, 1] | [0, 1] => 1,
        [lo, _] => *lo,
        _ => {
            return Err(Error::validation(format!(
                "multiclass labels are not supported: {values:?}"
            )))
        }
    };
    Ok(raw
        .iter()
        .map(|&v| {
            if v as i64 == positive {
                Label::Positive
            } else {
                Label::Negative
            }
        })
        .collect())
}

/// Writes `ds` in `format`. Values use shortest round-trip formatting, so
/// reading the file back reproduces the matrix bit for bit.
pub fn write_dataset(ds: &Dataset, path: impl AsRef<Path>, format: DataFormat) -> Result<()> {
    let mut w = BufWriter::new(File::create(path.as_ref())?);
    emit_dataset(ds, &mut w, format)?;
    w.flush()?;
    Ok(())
}

pub fn emit_dataset<W: Write>(ds: &Dataset, w: &mut W, format: DataFormat) -> Result<()> {
    let d = ds.dim();
    for (i, row) in ds.features().rows().into_iter().enumerate() {
        match format {
            DataFormat::Libsvm => {
                write!(w, "{}", ds.label(i))?;
                for (j, &v) in row.iter().enumerate() {
                    // the last column is always written so the dimension survives
                    if v != 0.0 || j + 1 == d {
                        write!(w, " {}:{}", j + 1, v)?;
                    }
                }
            }
            DataFormat::Csv => {
                for &v in row.iter() {
                    write!(w, "{v},")?;
                }
                write!(w, "{}", i8::from(ds.label(i)))?;
            }
        }
        writeln!(w)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SyntheticKind {
    /// Isotropic Gaussian blobs centred at (1, 1) and (-1, -1).
    TwoGaussians,
    /// Two interleaved half circles.
    TwoMoons,
}

impl FromStr for SyntheticKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "two-gaussians" | "gaussians" | "clusters" => Ok(SyntheticKind::TwoGaussians),
            "two-moons" | "moons" => Ok(SyntheticKind::TwoMoons),
            other => Err(Error::validation(format!("unknown synthetic dataset '{other}'"))),
        }
    }
}

impl fmt::Display for SyntheticKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SyntheticKind::TwoGaussians => "two-gaussians",
            SyntheticKind::TwoMoons => "two-moons",
        })
    }
}

/// Balanced 2-D toy data. Rows alternate `+1, -1, +1, ...`.
pub fn generate_synthetic(kind: SyntheticKind, n: usize, noise: f64, seed: u64) -> Result<Dataset> {
    if n < 4 {
        return Err(Error::validation(format!("synthetic data needs n >= 4, got {n}")));
    }
    if !(noise.is_finite() && noise >= 0.0) {
        return Err(Error::validation(format!("noise must be finite and >= 0, got {noise}")));
    }
    let mut rng = rng::rng_from(seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let n_pos = n.div_ceil(2);
    let n_neg = n / 2;
    let mut features = Array2::zeros((n, 2));
    let mut labels = Vec::with_capacity(n);
    let (mut ip, mut ineg) = (0, 0);
    for i in 0..n {
        let label = if i % 2 == 0 { Label::Positive } else { Label::Negative };
        let (cx, cy) = match kind {
            SyntheticKind::TwoGaussians => (label.sign(), label.sign()),
            SyntheticKind::TwoMoons => {
                let (k, count) = match label {
                    Label::Positive => (ip, n_pos),
                    Label::Negative => (ineg, n_neg),
                };
                let t = std::f64::consts::PI * k as f64 / (count.max(2) - 1) as f64;
                match label {
                    Label::Positive => (t.cos(), t.sin()),
                    Label::Negative => (1.0 - t.cos(), 0.5 - t.sin()),
                }
            }
        };
        match label {
            Label::Positive => ip += 1,
            Label::Negative => ineg += 1,
        }
        features[[i, 0]] = cx + noise * normal.sample(&mut rng);
        features[[i, 1]] = cy + noise * normal.sample(&mut rng);
        labels.push(label);
    }
    Dataset::new(features, labels)
}

/// Column means and sample standard deviations of a training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Scaler {
    pub const STD_FLOOR: f64 = 1e-12;

    /// Sample standard deviation (divisor `n - 1`), floored at `STD_FLOOR`.
    pub fn fit(ds: &Dataset) -> Scaler {
        let n = ds.len() as f64;
        let mut mean = Vec::with_capacity(ds.dim());
        let mut std = Vec::with_capacity(ds.dim());
        for col in ds.features().columns() {
            let m = col.sum() / n;
            let ss: f64 = col.iter().map(|v| (v - m).powi(2)).sum();
            let s = (ss / (n - 1.0).max(1.0)).sqrt();
            mean.push(m);
            std.push(s.max(Self::STD_FLOOR));
        }
        Scaler { mean, std }
    }

    pub fn transform(&self, ds: &Dataset) -> Result<Dataset> {
        if ds.dim() != self.mean.len() {
            return Err(Error::DimensionMismatch {
                expected: self.mean.len(),
                found: ds.dim(),
            });
        }
        let mut features = ds.features().clone();
        for (j, mut col) in features.columns_mut().into_iter().enumerate() {
            let (m, s) = (self.mean[j], self.std[j]);
            col.mapv_inplace(|v| (v - m) / s);
        }
        ds.with_features(features)
    }
}

/// Standardizes `train` and applies the same transform to `others`.
pub fn standardize(train: &Dataset, others: &[Dataset]) -> Result<(Dataset, Vec<Dataset>, Scaler)> {
    let scaler = Scaler::fit(train);
    let train_std = scaler.transform(train)?;
    let others_std = others.iter().map(|d| scaler.transform(d)).collect::<Result<Vec<_>>>()?;
    Ok((train_std, others_std, scaler))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub folds: usize,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_fraction: 0.5,
            folds: 5,
            seed: 0,
        }
    }
}

/// Per-class shuffled index lists, positives first.
fn shuffled_classes(ds: &Dataset, seed: u64) -> [Vec<usize>; 2] {
    let mut rng = rng::rng_from(seed);
    Label::BOTH.map(|l| {
        let mut idx = ds.class_indices(l);
        idx.shuffle(&mut rng);
        idx
    })
}

/// Class-stratified train/test split. Each class contributes
/// `round(train_fraction * class_size)` training samples, clamped so both
/// sides keep at least one sample of every class.
pub fn stratified_split(ds: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset)> {
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(Error::validation(format!(
            "train_fraction must lie in (0, 1), got {}",
            spec.train_fraction
        )));
    }
    let classes = shuffled_classes(ds, spec.seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (label, idx) in Label::BOTH.iter().zip(classes) {
        if idx.len() < 2 {
            return Err(Error::validation(format!(
                "class {label} has {} samples, a split needs at least 2",
                idx.len()
            )));
        }
        let k = ((spec.train_fraction * idx.len() as f64).round() as usize).clamp(1, idx.len() - 1);
        train.extend_from_slice(&idx[..k]);
        test.extend_from_slice(&idx[k..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((ds.subset(&train)?, ds.subset(&test)?))
}

/// Class-stratified random subset of exactly `size` samples.
pub fn stratified_subsample(ds: &Dataset, size: usize, seed: u64) -> Result<Dataset> {
    if size == 0 || size > ds.len() {
        return Err(Error::validation(format!(
            "cannot draw {size} samples from a dataset of {}",
            ds.len()
        )));
    }
    let classes = shuffled_classes(ds, seed);
    let n = ds.len() as f64;
    let mut take: Vec<usize> = classes
        .iter()
        .map(|c| ((size as f64) * c.len() as f64 / n).floor() as usize)
        .collect();
    // hand out the remainder to the class with the larger fractional share
    while take.iter().sum::<usize>() < size {
        let j = (0..2)
            .filter(|&j| take[j] < classes[j].len())
            .max_by(|&a, &b| {
                let ra = size as f64 * classes[a].len() as f64 / n - take[a] as f64;
                let rb = size as f64 * classes[b].len() as f64 / n - take[b] as f64;
                ra.total_cmp(&rb)
            })
            .expect("size <= n");
        take[j] += 1;
    }
    let mut idx: Vec<usize> = classes
        .iter()
        .zip(&take)
        .flat_map(|(c, &k)| c[..k].iter().copied())
        .collect();
    idx.sort_unstable();
    ds.subset(&idx)
}

/// Validation index sets of a stratified k-fold partition.
///
/// Per-class shuffled indices are concatenated and dealt round-robin, so
/// fold sizes differ by at most one and so do per-class counts.
pub fn kfold_indices(ds: &Dataset, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::validation(format!("k-fold needs k >= 2, got {k}")));
    }
    if k > ds.len() {
        return Err(Error::validation(format!(
            "k = {k} exceeds the number of samples {}",
            ds.len()
        )));
    }
    let classes = shuffled_classes(ds, seed);
    let mut folds = vec![Vec::new(); k];
    for (pos, i) in classes.iter().flatten().enumerate() {
        folds[pos % k].push(*i);
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(folds)
}

/// Stratified k-fold `(train, validation)` pairs.
pub fn kfold(ds: &Dataset, k: usize, seed: u64) -> Result<Vec<(Dataset, Dataset)>> {
    let folds = kfold_indices(ds, k, seed)?;
    folds
        .iter()
        .map(|val| {
            let in_val: HashSet<usize> = val.iter().copied().collect();
            let train: Vec<usize> = (0..ds.len()).filter(|i| !in_val.contains(i)).collect();
            Ok((ds.subset(&train)?, ds.subset(val)?))
        })
        .collect()
}

/// Uniformly random subset of `k` distinct indices from `0..n`.
pub(crate) fn sample_indices<R: Rng>(rng: &mut R, n: usize, k: usize) -> Vec<usize> {
    rand::seq::index::sample(rng, n, k.min(n)).into_vec()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn libsvm_line_densifies() {
        let text = "+1 1:0.5 3:2.0\n-1 2:1\n";
        let ds = read_dataset(text.as_bytes(), DataFormat::Libsvm).unwrap();
        assert_eq!(ds.dim(), 3);
        assert_eq!(ds.row(0).to_vec(), vec![0.5, 0.0, 2.0]);
        assert_eq!(ds.label(0), Label::Positive);
        assert_eq!(ds.label(1), Label::Negative);
    }

    #[test]
    fn csv_label_last() {
        let ds = read_dataset("0.1,0.2,-1\n0.3,0.4,1\n".as_bytes(), DataFormat::Csv).unwrap();
        assert_eq!(ds.row(0).to_vec(), vec![0.1, 0.2]);
        assert_eq!(ds.label(0), Label::Negative);
        assert_eq!(ds.label(1), Label::Positive);
    }

    #[test]
    fn label_schemes_are_remapped() {
        let ds = read_dataset("1 1:1\n2 1:2\n".as_bytes(), DataFormat::Libsvm).unwrap();
        assert_eq!(ds.labels(), &[Label::Positive, Label::Negative]);
        let ds = read_dataset("0 1:1\n1 1:2\n".as_bytes(), DataFormat::Libsvm).unwrap();
        assert_eq!(ds.labels(), &[Label::Negative, Label::Positive]);
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let err = read_dataset("+1 1:0.5\n-1 2-0.3\n".as_bytes(), DataFormat::Libsvm).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        let err = read_dataset("1,2,1\n1,x,-1\n".as_bytes(), DataFormat::Csv).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn single_class_file_is_rejected() {
        let err = read_dataset("+1 1:1\n+1 1:2\n".as_bytes(), DataFormat::Libsvm).unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
    }

    #[test]
    fn round_trip_keeps_trailing_zero_columns() {
        let ds = Dataset::new(
            array![[0.1, 0.0, 0.0], [1.0 / 3.0, -2.5, 0.0]],
            vec![Label::Positive, Label::Negative],
        )
        .unwrap();
        for fmt in [DataFormat::Libsvm, DataFormat::Csv] {
            let mut buf = Vec::new();
            emit_dataset(&ds, &mut buf, fmt).unwrap();
            let back = read_dataset(buf.as_slice(), fmt).unwrap();
            assert_eq!(back, ds);
        }
    }

    #[test]
    fn synthetic_is_balanced_and_deterministic() {
        let a = generate_synthetic(SyntheticKind::TwoGaussians, 100, 0.0, 1).unwrap();
        assert_eq!(a.class_counts(), (50, 50));
        let b = generate_synthetic(SyntheticKind::TwoGaussians, 100, 0.0, 1).unwrap();
        assert_eq!(a, b);
        let m = generate_synthetic(SyntheticKind::TwoMoons, 40, 0.1, 3).unwrap();
        assert_eq!(m.class_counts(), (20, 20));
        assert!(generate_synthetic(SyntheticKind::TwoMoons, 3, 0.1, 3).is_err());
    }

    #[test]
    fn standardize_uses_sample_std() {
        let ds = Dataset::new(
            array![[1.0, 5.0], [2.0, 5.0], [3.0, 5.0]],
            vec![Label::Positive, Label::Negative, Label::Positive],
        )
        .unwrap();
        let (train, _, scaler) = standardize(&ds, &[]).unwrap();
        assert_eq!(train.features().column(0).to_vec(), vec![-1.0, 0.0, 1.0]);
        assert_eq!(train.features().column(1).to_vec(), vec![0.0, 0.0, 0.0]);
        assert_eq!(scaler.transform(&ds).unwrap(), train);
    }

    #[test]
    fn split_of_ten() {
        let ds = generate_synthetic(SyntheticKind::TwoGaussians, 10, 0.3, 2).unwrap();
        let spec = SplitSpec {
            train_fraction: 0.8,
            folds: 5,
            seed: 9,
        };
        let (train, test) = stratified_split(&ds, &spec).unwrap();
        assert_eq!(train.class_counts(), (4, 4));
        assert_eq!(test.class_counts(), (1, 1));
        let mut ids: Vec<_> = train.ids().iter().chain(test.ids()).copied().collect();
        ids.sort_unstable();
        assert_eq!(ids, (0..10).collect::<Vec<_>>());
        assert_eq!(stratified_split(&ds, &spec).unwrap(), (train, test));
    }

    #[test]
    fn split_rejects_tiny_class() {
        let ds = Dataset::new(
            array![[0.0], [1.0], [2.0]],
            vec![Label::Positive, Label::Positive, Label::Negative],
        )
        .unwrap();
        assert!(stratified_split(&ds, &SplitSpec::default()).is_err());
    }

    #[test]
    fn kfold_of_ten() {
        let ds = generate_synthetic(SyntheticKind::TwoGaussians, 10, 0.3, 2).unwrap();
        let folds = kfold(&ds, 5, 1).unwrap();
        assert_eq!(folds.len(), 5);
        let mut all = Vec::new();
        for (train, val) in &folds {
            assert_eq!(val.len(), 2);
            assert_eq!(train.len(), 8);
            all.extend_from_slice(val.ids());
        }
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        assert!(kfold(&ds, 11, 1).is_err());
        assert!(kfold(&ds, 1, 1).is_err());
    }

    #[test]
    fn subsample_hits_exact_size() {
        let ds = generate_synthetic(SyntheticKind::TwoGaussians, 101, 0.3, 2).unwrap();
        let s = stratified_subsample(&ds, 40, 5).unwrap();
        assert_eq!(s.len(), 40);
        assert_eq!(s.class_counts(), (20, 20));
    }
}
