//! Tabular dataset ingestion, stratified splitting and dataset versions.
//!
//! A [`LabeledDataset`] is an immutable value. Sampling steps never mutate
//! it in place: [`LabeledDataset::apply_step`] returns the next version.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::Read;
use std::path::Path;

use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Stable identifier of a row. Original rows get `0..n`, synthetic rows get
/// fresh ids above every id ever issued.
pub type InstanceId = u64;

/// Datasets above this size are accepted but logged as slow.
pub const SOFT_INSTANCE_CAP: usize = 5_000;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("dataset is empty")]
    Empty,
    #[error("label column `{0}` not found in header")]
    MissingLabelColumn(String),
    #[error("row {row}, column `{column}`: missing value")]
    MissingValue { row: usize, column: String },
    #[error("row {row}, column `{column}`: `{value}` is not a number")]
    NonNumeric {
        row: usize,
        column: String,
        value: String,
    },
    #[error("row {row}, column `{column}`: value is not finite")]
    NonFinite { row: usize, column: String },
    #[error("dataset has no feature columns")]
    NoFeatures,
    #[error("need at least 2 classes, found {0}")]
    TooFewClasses(usize),
    #[error("class `{0}` has no instances")]
    EmptyClass(String),
    #[error("label index {label} out of range for {n_classes} classes")]
    InvalidLabel { label: usize, n_classes: usize },
    #[error("expected {expected} values per row, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("train fraction must lie in (0, 1), got {0}")]
    InvalidFraction(f64),
    #[error("class `{0}` has fewer than 2 instances and cannot be stratified")]
    ClassTooSmall(String),
    #[error("instance {0} is unknown")]
    UnknownId(InstanceId),
    #[error("instance {0} belongs to the test set")]
    RemovalFromTest(InstanceId),
    #[error("duplicate instance id {0}")]
    DuplicateId(InstanceId),
    #[error("training partition is empty")]
    EmptyTrain,
}

pub type Result<T, E = DatasetError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Original,
    Synthetic,
}

/// Feature space used by every distance computation (typing, sampling,
/// projection, test placement).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceSpace {
    /// Unscaled feature values.
    #[default]
    Raw,
    /// Min-max scaled with statistics of the initial training partition.
    MinMax,
}

/// A synthetic row produced by an oversampling step, in raw feature units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticRow {
    pub features: Vec<f64>,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    feature_names: Vec<String>,
    class_names: Vec<String>,
    instances: Array2<f64>,
    labels: Vec<usize>,
    ids: Vec<InstanceId>,
    origin: Vec<Origin>,
    next_id: InstanceId,
}

impl LabeledDataset {
    /// Builds a dataset of original rows with ids `0..n`.
    pub fn new(
        feature_names: Vec<String>,
        class_names: Vec<String>,
        instances: Array2<f64>,
        labels: Vec<usize>,
    ) -> Result<Self> {
        let n = instances.nrows();
        if n == 0 {
            return Err(DatasetError::Empty);
        }
        if instances.ncols() == 0 {
            return Err(DatasetError::NoFeatures);
        }
        if feature_names.len() != instances.ncols() {
            return Err(DatasetError::DimensionMismatch {
                expected: feature_names.len(),
                got: instances.ncols(),
            });
        }
        if labels.len() != n {
            return Err(DatasetError::DimensionMismatch {
                expected: n,
                got: labels.len(),
            });
        }
        if class_names.len() < 2 {
            return Err(DatasetError::TooFewClasses(class_names.len()));
        }
        let mut counts = vec![0usize; class_names.len()];
        for &label in &labels {
            if label >= class_names.len() {
                return Err(DatasetError::InvalidLabel {
                    label,
                    n_classes: class_names.len(),
                });
            }
            counts[label] += 1;
        }
        if let Some(c) = counts.iter().position(|&c| c == 0) {
            return Err(DatasetError::EmptyClass(class_names[c].clone()));
        }
        for ((row, col), v) in instances.indexed_iter() {
            if !v.is_finite() {
                return Err(DatasetError::NonFinite {
                    row: row + 1,
                    column: feature_names[col].clone(),
                });
            }
        }
        if n > SOFT_INSTANCE_CAP {
            log::warn!(
                "dataset has {n} instances; interactive steps are tuned for at most {SOFT_INSTANCE_CAP}"
            );
        }
        Ok(Self {
            feature_names,
            class_names,
            instances,
            labels,
            ids: (0..n as InstanceId).collect(),
            origin: vec![Origin::Original; n],
            next_id: n as InstanceId,
        })
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn n_features(&self) -> usize {
        self.instances.ncols()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn instances(&self) -> ArrayView2<'_, f64> {
        self.instances.view()
    }

    pub fn row(&self, row: usize) -> ArrayView1<'_, f64> {
        self.instances.row(row)
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn ids(&self) -> &[InstanceId] {
        &self.ids
    }

    pub fn origin(&self) -> &[Origin] {
        &self.origin
    }

    /// Row position of an id, if present in this version.
    pub fn position(&self, id: InstanceId) -> Option<usize> {
        // ids are strictly increasing: originals first, synthetic appended
        self.ids.binary_search(&id).ok()
    }

    /// Number of rows per class in this version.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes()];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Rows (positions) whose id is in `ids`, in row order.
    pub fn rows_of(&self, ids: &BTreeSet<InstanceId>) -> Vec<usize> {
        (0..self.len()).filter(|&r| ids.contains(&self.ids[r])).collect()
    }

    /// Sub-matrix of the given rows.
    pub fn select_rows(&self, rows: &[usize]) -> Array2<f64> {
        self.instances.select(ndarray::Axis(0), rows)
    }

    /// Class index for a class name.
    pub fn class_index(&self, name: &str) -> Option<usize> {
        self.class_names.iter().position(|c| c == name)
    }

    /// SHA-256 over names, labels, ids and the exact bit patterns of every
    /// value. Used to bind session files to the dataset they were made from.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        for name in &self.feature_names {
            h.update((name.len() as u64).to_le_bytes());
            h.update(name.as_bytes());
        }
        h.update([0xff]);
        for name in &self.class_names {
            h.update((name.len() as u64).to_le_bytes());
            h.update(name.as_bytes());
        }
        h.update([0xff]);
        for r in 0..self.len() {
            h.update(self.ids[r].to_le_bytes());
            h.update((self.labels[r] as u64).to_le_bytes());
            for v in self.instances.row(r) {
                h.update(v.to_bits().to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }

    /// Returns the next dataset version: `removals` dropped from the training
    /// set and `additions` appended as synthetic training rows with fresh ids.
    /// The test partition is never touched.
    pub fn apply_step(
        &self,
        split: &SplitAssignment,
        removals: &BTreeSet<InstanceId>,
        additions: &[SyntheticRow],
    ) -> Result<StepOutcome> {
        for &id in removals {
            if split.test_ids.contains(&id) {
                return Err(DatasetError::RemovalFromTest(id));
            }
            if !split.train_ids.contains(&id) || self.position(id).is_none() {
                return Err(DatasetError::UnknownId(id));
            }
        }
        for add in additions {
            if add.features.len() != self.n_features() {
                return Err(DatasetError::DimensionMismatch {
                    expected: self.n_features(),
                    got: add.features.len(),
                });
            }
            if add.label >= self.n_classes() {
                return Err(DatasetError::InvalidLabel {
                    label: add.label,
                    n_classes: self.n_classes(),
                });
            }
            if add.features.iter().any(|v| !v.is_finite()) {
                return Err(DatasetError::NonFinite {
                    row: self.len() + 1,
                    column: "synthetic".into(),
                });
            }
        }

        let keep: Vec<usize> = (0..self.len())
            .filter(|&r| !removals.contains(&self.ids[r]))
            .collect();
        let d = self.n_features();
        let n = keep.len() + additions.len();
        let mut values = Vec::with_capacity(n * d);
        let mut labels = Vec::with_capacity(n);
        let mut ids = Vec::with_capacity(n);
        let mut origin = Vec::with_capacity(n);
        for &r in &keep {
            values.extend(self.instances.row(r).iter().copied());
            labels.push(self.labels[r]);
            ids.push(self.ids[r]);
            origin.push(self.origin[r]);
        }
        let mut next_id = self.next_id;
        let mut added_ids = Vec::with_capacity(additions.len());
        for add in additions {
            values.extend(add.features.iter().copied());
            labels.push(add.label);
            ids.push(next_id);
            origin.push(Origin::Synthetic);
            added_ids.push(next_id);
            next_id += 1;
        }
        let instances = Array2::from_shape_vec((n, d), values).expect("row-major buffer sized n*d");

        let mut train_ids: BTreeSet<InstanceId> =
            split.train_ids.difference(removals).copied().collect();
        train_ids.extend(added_ids.iter().copied());

        Ok(StepOutcome {
            dataset: Self {
                feature_names: self.feature_names.clone(),
                class_names: self.class_names.clone(),
                instances,
                labels,
                ids,
                origin,
                next_id,
            },
            split: SplitAssignment {
                train_ids,
                test_ids: split.test_ids.clone(),
                seed: split.seed,
                train_fraction: split.train_fraction,
            },
            added_ids,
        })
    }
}

/// Result of [`LabeledDataset::apply_step`].
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub dataset: LabeledDataset,
    pub split: SplitAssignment,
    pub added_ids: Vec<InstanceId>,
}

/// Reads a dataset from a CSV file with a header row.
pub fn load_csv(path: impl AsRef<Path>, label_column: &str) -> Result<LabeledDataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_csv(file, label_column)
}

/// Parses CSV text: first row is the header, `label_column` holds class
/// names, every other column must be numeric. Classes are indexed in order of
/// first appearance.
pub fn parse_csv<R: Read>(reader: R, label_column: &str) -> Result<LabeledDataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    if header.is_empty() || header.iter().all(String::is_empty) {
        return Err(DatasetError::Empty);
    }
    let label_pos = header
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| DatasetError::MissingLabelColumn(label_column.to_owned()))?;
    let feature_names: Vec<String> = header
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != label_pos)
        .map(|(_, h)| h.clone())
        .collect();
    if feature_names.is_empty() {
        return Err(DatasetError::NoFeatures);
    }

    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut class_names: Vec<String> = Vec::new();
    let mut class_lookup: BTreeMap<String, usize> = BTreeMap::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        // 1-based line number of the data row in the file
        let row = i + 2;
        for (col, cell) in record.iter().enumerate() {
            let column = &header[col];
            if cell.is_empty() {
                return Err(DatasetError::MissingValue {
                    row,
                    column: column.clone(),
                });
            }
            if col == label_pos {
                let next = class_names.len();
                let label = *class_lookup.entry(cell.to_owned()).or_insert_with(|| {
                    class_names.push(cell.to_owned());
                    next
                });
                labels.push(label);
            } else {
                let v: f64 = cell.parse().map_err(|_| DatasetError::NonNumeric {
                    row,
                    column: column.clone(),
                    value: cell.to_owned(),
                })?;
                if !v.is_finite() {
                    return Err(DatasetError::NonFinite {
                        row,
                        column: column.clone(),
                    });
                }
                values.push(v);
            }
        }
    }
    if labels.is_empty() {
        return Err(DatasetError::Empty);
    }
    if class_names.len() < 2 {
        return Err(DatasetError::TooFewClasses(class_names.len()));
    }
    let instances = Array2::from_shape_vec((labels.len(), feature_names.len()), values)
        .map_err(|_| DatasetError::DimensionMismatch {
            expected: feature_names.len(),
            got: 0,
        })?;
    LabeledDataset::new(feature_names, class_names, instances, labels)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub train_ids: BTreeSet<InstanceId>,
    pub test_ids: BTreeSet<InstanceId>,
    pub seed: u64,
    pub train_fraction: f64,
}

impl SplitAssignment {
    /// Training rows of `ds`, in row order.
    pub fn train_rows(&self, ds: &LabeledDataset) -> Vec<usize> {
        ds.rows_of(&self.train_ids)
    }

    /// Test rows of `ds`, in row order.
    pub fn test_rows(&self, ds: &LabeledDataset) -> Vec<usize> {
        ds.rows_of(&self.test_ids)
    }
}

fn round_half_up(x: f64) -> usize {
    (x + 0.5).floor() as usize
}

/// Per-class training allocation for a stratified split.
///
/// Each class gets `round_half_up(count * fraction)` clamped to
/// `[1, count - 1]`. The total is then moved to `n - ceil(n * (1 - fraction))`
/// one instance at a time, each time adjusting the largest class whose
/// rounding error points the same way.
pub fn stratified_allocation(counts: &[usize], train_fraction: f64) -> Vec<usize> {
    let n: usize = counts.iter().sum();
    let test_total = ((n as f64) * (1.0 - train_fraction) - 1e-9).ceil().max(0.0) as usize;
    let target = n.saturating_sub(test_total);
    let mut alloc: Vec<usize> = counts
        .iter()
        .map(|&c| round_half_up(c as f64 * train_fraction).clamp(1, c - 1))
        .collect();
    let error = |alloc: &[usize], c: usize| alloc[c] as f64 - counts[c] as f64 * train_fraction;

    loop {
        let total: usize = alloc.iter().sum();
        if total == target {
            break;
        }
        let shrink = total > target;
        let movable = |c: usize| {
            if shrink {
                alloc[c] > 1
            } else {
                alloc[c] + 1 < counts[c]
            }
        };
        let same_sign = |c: usize| {
            let e = error(&alloc, c);
            if shrink {
                e > 0.0
            } else {
                e < 0.0
            }
        };
        let pick = |filter: &dyn Fn(usize) -> bool| {
            (0..counts.len())
                .filter(|&c| movable(c) && filter(c))
                .max_by(|&a, &b| counts[a].cmp(&counts[b]).then(b.cmp(&a)))
        };
        let Some(c) = pick(&same_sign).or_else(|| pick(&|_| true)) else {
            break;
        };
        if shrink {
            alloc[c] -= 1;
        } else {
            alloc[c] += 1;
        }
    }
    alloc
}

/// Stratified train/test split, deterministic in `seed`.
pub fn stratified_split(
    ds: &LabeledDataset,
    train_fraction: f64,
    seed: u64,
) -> Result<SplitAssignment> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(DatasetError::InvalidFraction(train_fraction));
    }
    let counts = ds.class_counts();
    if let Some(c) = counts.iter().position(|&c| c < 2) {
        return Err(DatasetError::ClassTooSmall(ds.class_names()[c].clone()));
    }
    let alloc = stratified_allocation(&counts, train_fraction);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train_ids = BTreeSet::new();
    let mut test_ids = BTreeSet::new();
    for (class, &n_train) in alloc.iter().enumerate() {
        let mut members: Vec<InstanceId> = (0..ds.len())
            .filter(|&r| ds.labels()[r] == class)
            .map(|r| ds.ids()[r])
            .collect();
        members.shuffle(&mut rng);
        train_ids.extend(members[..n_train].iter().copied());
        test_ids.extend(members[n_train..].iter().copied());
    }
    Ok(SplitAssignment {
        train_ids,
        test_ids,
        seed,
        train_fraction,
    })
}

/// Per-feature min and max over the training partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl NormalizationStats {
    /// Fits on the training rows only.
    pub fn fit(ds: &LabeledDataset, split: &SplitAssignment) -> Result<Self> {
        let rows = split.train_rows(ds);
        if rows.is_empty() {
            return Err(DatasetError::EmptyTrain);
        }
        let d = ds.n_features();
        let mut min = vec![f64::INFINITY; d];
        let mut max = vec![f64::NEG_INFINITY; d];
        for &r in &rows {
            for (j, &v) in ds.row(r).iter().enumerate() {
                min[j] = min[j].min(v);
                max[j] = max[j].max(v);
            }
        }
        Ok(Self { min, max })
    }

    /// Width of each feature's training range (0 for constant features).
    pub fn range(&self) -> Vec<f64> {
        self.min.iter().zip(&self.max).map(|(lo, hi)| hi - lo).collect()
    }

    /// `(x - min) / (max - min)`; constant features map to 0. Values outside
    /// the training range are not clamped.
    pub fn normalize_value(&self, feature: usize, x: f64) -> f64 {
        let span = self.max[feature] - self.min[feature];
        if span > 0.0 {
            (x - self.min[feature]) / span
        } else {
            0.0
        }
    }

    pub fn normalize_row(&self, row: ArrayView1<'_, f64>) -> Vec<f64> {
        row.iter()
            .enumerate()
            .map(|(j, &x)| self.normalize_value(j, x))
            .collect()
    }

    pub fn transform(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut out = x.to_owned();
        for mut row in out.rows_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = self.normalize_value(j, *v);
            }
        }
        out
    }

    /// Display bin in `0..bins` of a normalized value, clamped to `[0, 1]`.
    pub fn display_bin(normalized: f64, bins: usize) -> usize {
        let v = normalized.clamp(0.0, 1.0);
        ((v * bins as f64) as usize).min(bins - 1)
    }
}

/// Normalizes `normalize_minmax` style: stats fitted on train rows of `ds`.
pub fn normalize_minmax(ds: &LabeledDataset, split: &SplitAssignment) -> Result<NormalizationStats> {
    NormalizationStats::fit(ds, split)
}

impl DistanceSpace {
    /// Feature matrix of the given rows expressed in this space.
    pub fn project(
        self,
        ds: &LabeledDataset,
        rows: &[usize],
        stats: &NormalizationStats,
    ) -> Array2<f64> {
        let raw = ds.select_rows(rows);
        match self {
            DistanceSpace::Raw => raw,
            DistanceSpace::MinMax => stats.transform(raw.view()),
        }
    }

    pub fn project_point(self, point: ArrayView1<'_, f64>, stats: &NormalizationStats) -> Vec<f64> {
        match self {
            DistanceSpace::Raw => point.to_vec(),
            DistanceSpace::MinMax => stats.normalize_row(point),
        }
    }
}
