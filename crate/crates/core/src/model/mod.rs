//! Boosted-tree classifier with seeded random search over stratified
//! cross-validation, plus the reports the session publishes.

pub mod gbdt;
pub mod metrics;

use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};

use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::InstanceId;
pub use gbdt::{GbdtModel, HyperParams};
pub use metrics::{balanced_accuracy, confusion_matrix, f1_macro, MetricsError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("class `{class}` has no training instances left")]
    DegenerateTraining { class: String },
    #[error("class `{class}` has {count} training instances, fewer than the {folds} folds")]
    TooFewForFolds {
        class: String,
        count: usize,
        folds: usize,
    },
    #[error("invalid model configuration: {0}")]
    InvalidConfig(String),
    #[error("expected {expected} features, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("training was cancelled")]
    Cancelled,
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// Inclusive search ranges. The learning rate is drawn log-uniformly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchRanges {
    pub n_trees: (usize, usize),
    pub max_depth: (usize, usize),
    pub learning_rate: (f64, f64),
    pub subsample: (f64, f64),
}

impl Default for SearchRanges {
    fn default() -> Self {
        Self {
            n_trees: (20, 100),
            max_depth: (2, 5),
            learning_rate: (0.05, 0.3),
            subsample: (0.6, 1.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub search_iterations: usize,
    pub cv_folds: usize,
    pub ranges: SearchRanges,
    pub seed: u64,
    pub lambda: f64,
    pub min_child_weight: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            search_iterations: 25,
            cv_folds: 5,
            ranges: SearchRanges::default(),
            seed: 0,
            lambda: 1.0,
            min_child_weight: 1.0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let r = &self.ranges;
        let bad = |m: &str| Err(ModelError::InvalidConfig(m.to_string()));
        if self.search_iterations == 0 {
            return bad("search_iterations must be at least 1");
        }
        if self.cv_folds < 2 {
            return bad("cv_folds must be at least 2");
        }
        if r.n_trees.0 == 0 || r.n_trees.0 > r.n_trees.1 {
            return bad("tree count range is empty");
        }
        if r.max_depth.0 == 0 || r.max_depth.0 > r.max_depth.1 {
            return bad("depth range is empty");
        }
        if !(r.learning_rate.0 > 0.0 && r.learning_rate.0 <= r.learning_rate.1) {
            return bad("learning rate range is empty");
        }
        if !(r.subsample.0 > 0.0 && r.subsample.0 <= r.subsample.1 && r.subsample.1 <= 1.0) {
            return bad("subsample range must lie in (0, 1]");
        }
        if !(self.lambda >= 0.0 && self.min_child_weight >= 0.0) {
            return bad("lambda and min_child_weight must be non-negative");
        }
        Ok(())
    }

    /// The `iterations` candidate settings, in draw order.
    pub fn draws(&self) -> Vec<HyperParams> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let r = &self.ranges;
        (0..self.search_iterations)
            .map(|_| {
                let (lo, hi) = (r.learning_rate.0.ln(), r.learning_rate.1.ln());
                HyperParams {
                    n_trees: rng.gen_range(r.n_trees.0..=r.n_trees.1),
                    max_depth: rng.gen_range(r.max_depth.0..=r.max_depth.1),
                    learning_rate: if hi > lo { rng.gen_range(lo..=hi).exp() } else { r.learning_rate.0 },
                    subsample: if r.subsample.1 > r.subsample.0 {
                        rng.gen_range(r.subsample.0..=r.subsample.1)
                    } else {
                        r.subsample.0
                    },
                    lambda: self.lambda,
                    min_child_weight: self.min_child_weight,
                }
            })
            .collect()
    }
}

/// Progress and cancellation shared with a running search.
#[derive(Debug, Default)]
pub struct TrainControl {
    completed: AtomicUsize,
    total: AtomicUsize,
    cancel: AtomicBool,
}

impl TrainControl {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn cancel(&self) {
        self.cancel.store(true, Ordering::SeqCst);
    }

    pub fn is_cancelled(&self) -> bool {
        self.cancel.load(Ordering::SeqCst)
    }

    /// Fraction of search iterations finished, in `[0, 1]`.
    pub fn progress(&self) -> f64 {
        let total = self.total.load(Ordering::SeqCst);
        if total == 0 {
            0.0
        } else {
            self.completed.load(Ordering::SeqCst) as f64 / total as f64
        }
    }
}

/// Stratified fold index per row: members of each class are shuffled and
/// dealt round-robin.
pub fn stratified_folds(labels: &[usize], n_classes: usize, folds: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold_of = vec![0; labels.len()];
    let mut offset = 0;
    for c in 0..n_classes {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&r| labels[r] == c).collect();
        members.shuffle(&mut rng);
        for (i, &r) in members.iter().enumerate() {
            fold_of[r] = (offset + i) % folds;
        }
        // continue dealing where the previous class stopped so fold sizes stay level
        offset = (offset + members.len()) % folds;
    }
    fold_of
}

pub fn predict_labels(model: &GbdtModel, x: ArrayView2<'_, f64>) -> Vec<usize> {
    x.rows()
        .into_iter()
        .map(|row| argmax(&model.predict_proba_row(row)))
        .collect()
}

pub fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchOutcome {
    pub best: HyperParams,
    pub best_index: usize,
    pub cv_accuracy: f64,
    pub scores: Vec<f64>,
}

fn check_classes(labels: &[usize], class_names: &[String], folds: usize) -> Result<(), ModelError> {
    let mut counts = vec![0usize; class_names.len()];
    for &l in labels {
        counts[l] += 1;
    }
    if let Some(c) = counts.iter().position(|&n| n == 0) {
        return Err(ModelError::DegenerateTraining {
            class: class_names[c].clone(),
        });
    }
    if let Some(c) = counts.iter().position(|&n| n < folds) {
        return Err(ModelError::TooFewForFolds {
            class: class_names[c].clone(),
            count: counts[c],
            folds,
        });
    }
    Ok(())
}

fn derive_seed(seed: u64, a: u64, b: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ a.wrapping_mul(0xBF58_476D_1CE4_E5B9)
        ^ b.wrapping_mul(0x94D0_49BB_1331_11EB)
}

/// Random search scored by mean cross-validated accuracy, then a refit of
/// the best draw on all rows. Ties keep the earliest draw.
pub fn search_and_fit(
    x: ArrayView2<'_, f64>,
    labels: &[usize],
    class_names: &[String],
    config: &ModelConfig,
    control: &TrainControl,
) -> Result<(GbdtModel, SearchOutcome), ModelError> {
    config.validate()?;
    check_classes(labels, class_names, config.cv_folds)?;
    let n_classes = class_names.len();
    let folds = stratified_folds(labels, n_classes, config.cv_folds, config.seed);
    let draws = config.draws();
    control.total.store(draws.len(), Ordering::SeqCst);
    control.completed.store(0, Ordering::SeqCst);

    let splits: Vec<(Array2<f64>, Vec<usize>, Array2<f64>, Vec<usize>)> = (0..config.cv_folds)
        .map(|f| {
            let (tr, va): (Vec<usize>, Vec<usize>) = (0..labels.len()).partition(|&r| folds[r] != f);
            (
                x.select(ndarray::Axis(0), &tr),
                tr.iter().map(|&r| labels[r]).collect(),
                x.select(ndarray::Axis(0), &va),
                va.iter().map(|&r| labels[r]).collect(),
            )
        })
        .collect();

    let scores: Vec<Result<f64, ModelError>> = draws
        .par_iter()
        .enumerate()
        .map(|(i, params)| {
            if control.is_cancelled() {
                return Err(ModelError::Cancelled);
            }
            let mut acc = 0.0;
            for (f, (tx, ty, vx, vy)) in splits.iter().enumerate() {
                let m = gbdt::fit(tx.view(), ty, n_classes, params, derive_seed(config.seed, i as u64, f as u64 + 1));
                acc += metrics::accuracy(vy, &predict_labels(&m, vx.view()));
            }
            control.completed.fetch_add(1, Ordering::SeqCst);
            Ok(acc / config.cv_folds as f64)
        })
        .collect();
    let scores: Vec<f64> = scores.into_iter().collect::<Result<_, _>>()?;
    let mut best_index = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best_index] {
            best_index = i;
        }
    }
    let best = draws[best_index];
    let model = gbdt::fit(x, labels, n_classes, &best, derive_seed(config.seed, best_index as u64, 0));
    Ok((
        model,
        SearchOutcome {
            best,
            best_index,
            cv_accuracy: scores[best_index],
            scores,
        },
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionMetrics {
    pub balanced_accuracy: f64,
    pub f1_macro: f64,
    pub confusion: Vec<Vec<usize>>,
}

impl PartitionMetrics {
    pub fn from_predictions(truth: &[usize], predicted: &[usize], n_classes: usize) -> Result<Self, ModelError> {
        let confusion = confusion_matrix(truth, predicted, n_classes);
        Ok(Self {
            balanced_accuracy: balanced_accuracy(&confusion)?,
            f1_macro: f1_macro(&confusion)?,
            confusion,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Partition {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstancePrediction {
    pub id: InstanceId,
    pub partition: Partition,
    pub label: usize,
    pub predicted: usize,
    pub probs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelReport {
    pub train: PartitionMetrics,
    pub test: PartitionMetrics,
    pub feature_importance: Vec<f64>,
    pub hyperparameters: HyperParams,
    pub cv_accuracy: f64,
    pub predictions: Vec<InstancePrediction>,
}

impl ModelReport {
    pub fn prediction(&self, id: InstanceId) -> Option<&InstancePrediction> {
        self.predictions.iter().find(|p| p.id == id)
    }
}

/// Rows of one partition handed to [`train`].
#[derive(Debug, Clone, Copy)]
pub struct PartitionData<'a> {
    pub x: ArrayView2<'a, f64>,
    pub labels: &'a [usize],
    pub ids: &'a [InstanceId],
}

/// Searches, refits and evaluates on both partitions.
pub fn train(
    train_part: PartitionData<'_>,
    test_part: PartitionData<'_>,
    class_names: &[String],
    config: &ModelConfig,
    control: &TrainControl,
) -> Result<(GbdtModel, ModelReport), ModelError> {
    let (model, outcome) = search_and_fit(train_part.x, train_part.labels, class_names, config, control)?;
    let n_classes = class_names.len();
    let mut predictions = Vec::with_capacity(train_part.ids.len() + test_part.ids.len());
    let mut evaluate = |part: PartitionData<'_>, which: Partition| -> Result<PartitionMetrics, ModelError> {
        let mut predicted = Vec::with_capacity(part.ids.len());
        for (i, row) in part.x.rows().into_iter().enumerate() {
            let probs = model.predict_proba_row(row);
            let p = argmax(&probs);
            predicted.push(p);
            predictions.push(InstancePrediction {
                id: part.ids[i],
                partition: which,
                label: part.labels[i],
                predicted: p,
                probs,
            });
        }
        PartitionMetrics::from_predictions(part.labels, &predicted, n_classes)
    };
    let train = evaluate(train_part, Partition::Train)?;
    let test = evaluate(test_part, Partition::Test)?;
    Ok((
        model.clone(),
        ModelReport {
            train,
            test,
            feature_importance: model.importances(),
            hyperparameters: outcome.best,
            cv_accuracy: outcome.cv_accuracy,
            predictions,
        },
    ))
}

pub fn predict_proba(model: &GbdtModel, x: ArrayView2<'_, f64>) -> Result<Vec<Vec<f64>>, ModelError> {
    if x.ncols() != model.n_features {
        return Err(ModelError::DimensionMismatch {
            expected: model.n_features,
            got: x.ncols(),
        });
    }
    Ok(x.rows().into_iter().map(|r| model.predict_proba_row(r)).collect())
}

/// Feature positions from least to most important; ties by feature index.
pub fn feature_importance_order(importance: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..importance.len()).collect();
    order.sort_by(|&a, &b| importance[a].total_cmp(&importance[b]));
    order
}
