//! Confusion-matrix metrics. `confusion[true][predicted]` throughout.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MetricsError {
    #[error("class {0} has no true instances")]
    EmptyRow(usize),
    #[error("confusion matrix is empty or not square")]
    Shape,
}

fn check(confusion: &[Vec<usize>]) -> Result<(), MetricsError> {
    if confusion.is_empty() || confusion.iter().any(|r| r.len() != confusion.len()) {
        return Err(MetricsError::Shape);
    }
    Ok(())
}

pub fn confusion_matrix(truth: &[usize], predicted: &[usize], n_classes: usize) -> Vec<Vec<usize>> {
    let mut m = vec![vec![0; n_classes]; n_classes];
    for (&t, &p) in truth.iter().zip(predicted) {
        m[t][p] += 1;
    }
    m
}

/// Unweighted mean of per-class recall.
pub fn balanced_accuracy(confusion: &[Vec<usize>]) -> Result<f64, MetricsError> {
    check(confusion)?;
    let mut sum = 0.0;
    for (c, row) in confusion.iter().enumerate() {
        let total: usize = row.iter().sum();
        if total == 0 {
            return Err(MetricsError::EmptyRow(c));
        }
        sum += row[c] as f64 / total as f64;
    }
    Ok(sum / confusion.len() as f64)
}

/// Unweighted mean of per-class F1. A class without true positives scores 0.
pub fn f1_macro(confusion: &[Vec<usize>]) -> Result<f64, MetricsError> {
    check(confusion)?;
    let n = confusion.len();
    let mut sum = 0.0;
    for c in 0..n {
        let tp = confusion[c][c];
        if tp == 0 {
            continue;
        }
        let actual: usize = confusion[c].iter().sum();
        let predicted: usize = confusion.iter().map(|r| r[c]).sum();
        sum += 2.0 * tp as f64 / (actual + predicted) as f64;
    }
    Ok(sum / n as f64)
}

pub fn accuracy(truth: &[usize], predicted: &[usize]) -> f64 {
    if truth.is_empty() {
        return 0.0;
    }
    let hits = truth.iter().zip(predicted).filter(|(a, b)| a == b).count();
    hits as f64 / truth.len() as f64
}
