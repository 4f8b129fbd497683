//! Labeled feature datasets: synthetic Gaussian clusters with planted
//! outliers, CSV ingestion, and class-disjoint train/test splits.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{ensure_finite, seeded_rng};
use crate::prototypes::group_by_class;
use crate::scalar::Scalar;
use crate::ClassId;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    name: String,
    features: Array2<T>,
    labels: Vec<ClassId>,
    class_index: BTreeMap<ClassId, Vec<usize>>,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(name: impl Into<String>, features: Array2<T>, labels: Vec<ClassId>) -> Result<Self> {
        if features.nrows() != labels.len() {
            return Err(Error::LabelCountMismatch {
                rows: features.nrows(),
                labels: labels.len(),
            });
        }
        if labels.is_empty() {
            return Err(Error::Empty("dataset"));
        }
        if features.ncols() == 0 {
            return Err(Error::Empty("feature vector"));
        }
        ensure_finite(features.iter(), "dataset features")?;
        let class_index = group_by_class(&labels);
        Ok(Dataset {
            name: name.into(),
            features,
            labels,
            class_index,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn features(&self) -> &Array2<T> {
        &self.features
    }

    pub fn labels(&self) -> &[ClassId] {
        &self.labels
    }

    pub fn class_index(&self) -> &BTreeMap<ClassId, Vec<usize>> {
        &self.class_index
    }

    pub fn classes(&self) -> Vec<ClassId> {
        self.class_index.keys().copied().collect()
    }

    pub fn n_classes(&self) -> usize {
        self.class_index.len()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    fn subset(&self, name: String, rows: &[usize]) -> Result<Self> {
        let features = self.features.select(Axis(0), rows);
        let labels = rows.iter().map(|&r| self.labels[r]).collect();
        Dataset::new(name, features, labels)
    }

    /// Classes sorted by descending sample count, ties by id; the first
    /// half (at least one) for training, the rest for testing.
    pub fn default_split(&self) -> (Vec<ClassId>, Vec<ClassId>) {
        let mut by_count: Vec<(ClassId, usize)> = self.class_index.iter().map(|(&c, r)| (c, r.len())).collect();
        by_count.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        let n_train = (by_count.len() / 2).max(1);
        let mut train: Vec<ClassId> = by_count[..n_train].iter().map(|x| x.0).collect();
        let mut test: Vec<ClassId> = by_count[n_train..].iter().map(|x| x.0).collect();
        train.sort();
        test.sort();
        (train, test)
    }
}

/// Gaussian classes with a controllable share of planted outliers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_classes: usize,
    pub per_class: usize,
    pub dim: usize,
    /// Distance between class means, in units of `within_std`.
    pub class_separation: f64,
    pub within_std: f64,
    pub outlier_fraction: f64,
    /// Outliers sit exactly this many `within_std` from their class mean.
    pub outlier_scale: f64,
    /// Moves every class mean by this many `within_std` along the
    /// all-ones diagonal; datasets differing only here are shifted domains.
    #[serde(default)]
    pub domain_shift: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n_classes: 2,
            per_class: 20,
            dim: 2,
            class_separation: 3.0,
            within_std: 1.0,
            outlier_fraction: 0.0,
            outlier_scale: 6.0,
            domain_shift: 0.0,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_classes < 2 {
            return Err(Error::config("n_classes", "must be at least 2"));
        }
        if self.per_class < 1 {
            return Err(Error::config("per_class", "must be at least 1"));
        }
        if self.dim < 1 {
            return Err(Error::config("dim", "must be at least 1"));
        }
        if !(self.class_separation.is_finite() && self.class_separation >= 0.0) {
            return Err(Error::config("class_separation", "must be finite and nonnegative"));
        }
        if !(self.within_std.is_finite() && self.within_std > 0.0) {
            return Err(Error::config("within_std", "must be positive"));
        }
        if !(0.0..1.0).contains(&self.outlier_fraction) {
            return Err(Error::config("outlier_fraction", "must be in [0, 1)"));
        }
        if !(self.outlier_scale.is_finite() && self.outlier_scale >= 1.0) {
            return Err(Error::config("outlier_scale", "must be at least 1"));
        }
        if !self.domain_shift.is_finite() {
            return Err(Error::config("domain_shift", "must be finite"));
        }
        Ok(())
    }

    /// Outliers per class: `round(per_class × outlier_fraction)`, at most `per_class − 1`.
    pub fn outliers_per_class(&self) -> usize {
        ((self.per_class as f64 * self.outlier_fraction).round() as usize).min(self.per_class - 1)
    }

    /// Class means, spaced so every pair is `class_separation × within_std`
    /// apart when `dim ≥ n_classes` (scaled basis vectors); otherwise scaled
    /// random unit directions.
    pub fn class_means<R: Rng + ?Sized>(&self, rng: &mut R) -> Array2<f64> {
        let radius = self.class_separation * self.within_std / std::f64::consts::SQRT_2;
        let mut means = Array2::zeros((self.n_classes, self.dim));
        for (c, mut row) in means.outer_iter_mut().enumerate() {
            if self.dim >= self.n_classes {
                row[c] = radius;
            } else {
                row.assign(&(random_unit(rng, self.dim) * radius));
            }
        }
        means += self.domain_shift * self.within_std / (self.dim as f64).sqrt();
        means
    }
}

fn random_unit<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> Array1<f64> {
    loop {
        let v: Array1<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.dot(&v).sqrt();
        if norm > 1e-12 {
            return v / norm;
        }
    }
}

/// Rows are grouped by class; within a class the outliers come first.
pub fn generate_synthetic<T: Scalar>(spec: &SyntheticSpec, name: impl Into<String>) -> Result<Dataset<T>> {
    spec.validate()?;
    let mut rng = seeded_rng(spec.seed);
    let means = spec.class_means(&mut rng);
    let n_out = spec.outliers_per_class();
    let rows = spec.n_classes * spec.per_class;
    let mut features = Array2::<T>::zeros((rows, spec.dim));
    let mut labels = Vec::with_capacity(rows);
    for c in 0..spec.n_classes {
        let mean = means.row(c);
        for i in 0..spec.per_class {
            let point: Array1<f64> = if i < n_out {
                &mean + &(random_unit(&mut rng, spec.dim) * (spec.outlier_scale * spec.within_std))
            } else {
                mean.iter()
                    .map(|&m| m + spec.within_std * rng.sample::<f64, _>(StandardNormal))
                    .collect()
            };
            let r = c * spec.per_class + i;
            features.row_mut(r).assign(&point.mapv(T::of));
            labels.push(ClassId(c as u32));
        }
    }
    Dataset::new(name, features, labels)
}

/// Writes `label,f1,...,fD` rows without a header. Values use the shortest
/// decimal form that parses back to the same bits.
pub fn write_csv<T: Scalar>(dataset: &Dataset<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for (row, label) in dataset.features.outer_iter().zip(&dataset.labels) {
        write!(out, "{label}").expect("write to String");
        for v in row {
            write!(out, ",{v}").expect("write to String");
        }
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Reads `label,f1,...,fD` rows. A first line whose first field is not a
/// number is taken as a header and skipped.
pub fn load_csv<T: Scalar>(path: impl AsRef<Path>, name: impl Into<String>) -> Result<Dataset<T>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let parse_err = |line: u64, reason: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        reason,
    };
    let mut values: Vec<T> = Vec::new();
    let mut labels = Vec::new();
    let mut dim: Option<(usize, u64)> = None;
    for (idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map_or(idx as u64 + 1, |p| p.line());
        let first = record.get(0).unwrap_or("");
        if idx == 0 && first.parse::<f64>().is_err() {
            continue;
        }
        let label: u32 = first
            .parse()
            .map_err(|_| parse_err(line, format!("label `{first}` is not a nonnegative integer")))?;
        let width = record.len() - 1;
        if width == 0 {
            return Err(parse_err(line, "row has no features".into()));
        }
        match dim {
            None => dim = Some((width, line)),
            Some((d, first_line)) if d != width => {
                return Err(parse_err(
                    line,
                    format!("row has {width} features, line {first_line} has {d}"),
                ));
            }
            _ => {}
        }
        for (col, field) in record.iter().enumerate().skip(1) {
            let v: T = field
                .parse()
                .map_err(|_| parse_err(line, format!("column {}: `{field}` is not a number", col + 1)))?;
            if !v.is_finite() {
                return Err(parse_err(line, format!("column {}: non-finite value", col + 1)));
            }
            values.push(v);
        }
        labels.push(ClassId(label));
    }
    let Some((d, _)) = dim else {
        return Err(parse_err(1, "file contains no data rows".into()));
    };
    let features = Array2::from_shape_vec((labels.len(), d), values).expect("counted");
    Dataset::new(name, features, labels)
}

/// Row partition by class; outputs are named `<name>/train` and `<name>/test`.
pub fn split_classes<T: Scalar>(
    dataset: &Dataset<T>,
    train_class_ids: &[ClassId],
    test_class_ids: &[ClassId],
) -> Result<(Dataset<T>, Dataset<T>)> {
    if train_class_ids.is_empty() || test_class_ids.is_empty() {
        return Err(Error::InvalidSplit("train and test class sets must be nonempty".into()));
    }
    let train: BTreeSet<ClassId> = train_class_ids.iter().copied().collect();
    let test: BTreeSet<ClassId> = test_class_ids.iter().copied().collect();
    if let Some(c) = train.intersection(&test).next() {
        return Err(Error::InvalidSplit(format!("class {c} is in both train and test sets")));
    }
    if let Some(c) = train.union(&test).find(|c| !dataset.class_index.contains_key(c)) {
        return Err(Error::InvalidSplit(format!(
            "class {c} does not exist in dataset `{}`",
            dataset.name
        )));
    }
    let rows_of = |set: &BTreeSet<ClassId>| -> Vec<usize> {
        (0..dataset.len())
            .filter(|&r| set.contains(&dataset.labels[r]))
            .collect()
    };
    Ok((
        dataset.subset(format!("{}/train", dataset.name), &rows_of(&train))?,
        dataset.subset(format!("{}/test", dataset.name), &rows_of(&test))?,
    ))
}
