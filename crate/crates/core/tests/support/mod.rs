#![allow(dead_code)]

use std::collections::BTreeSet;
use std::path::PathBuf;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use curate_core::dataset::{load_csv, DistanceSpace, LabeledDataset, NormalizationStats, SplitAssignment};
use curate_core::sampling::TrainView;
use curate_core::typing::{BandRule, InstanceType};

pub fn data_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

pub fn fixture(name: &str) -> LabeledDataset {
    load_csv(data_path(name), "class").unwrap()
}

/// Gaussian-ish clusters, one centre per class, with overlap controlled by
/// the spread.
pub fn random_dataset(seed: u64, n: usize, d: usize, classes: usize) -> LabeledDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centres: Vec<Vec<f64>> = (0..classes)
        .map(|_| (0..d).map(|_| rng.gen_range(-3.0..3.0)).collect())
        .collect();
    let spread = rng.gen_range(0.5..3.0);
    let mut labels: Vec<usize> = (0..n).map(|i| i % classes).collect();
    for l in labels.iter_mut().skip(classes) {
        if rng.gen_bool(0.3) {
            *l = 0;
        }
    }
    let mut x = Array2::zeros((n, d));
    for (i, &l) in labels.iter().enumerate() {
        for j in 0..d {
            let u: f64 = rng.gen_range(-1.0..1.0) + rng.gen_range(-1.0..1.0);
            x[[i, j]] = centres[l][j] + spread * u;
        }
    }
    LabeledDataset::new(
        (0..d).map(|j| format!("f{j}")).collect(),
        (0..classes).map(|c| format!("c{c}")).collect(),
        x,
        labels,
    )
    .unwrap()
}

/// Every row in training, typed at `k`.
pub fn full_view(ds: &LabeledDataset, k: usize) -> TrainView {
    let split = SplitAssignment {
        train_ids: ds.ids().iter().copied().collect(),
        test_ids: BTreeSet::new(),
        seed: 0,
        train_fraction: 1.0,
    };
    let stats = NormalizationStats::fit(ds, &split).unwrap();
    TrainView::build(ds, &split, &stats, DistanceSpace::Raw, k, BandRule::Fifths).unwrap()
}

pub fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// The `k` nearest other rows by full scan, ordered by (distance, row).
pub fn brute_knn(points: &[Vec<f64>], row: usize, k: usize) -> Vec<usize> {
    let mut d: Vec<(f64, usize)> = points
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != row)
        .map(|(j, p)| (euclid(&points[row], p), j))
        .collect();
    d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    d.into_iter().take(k).map(|(_, j)| j).collect()
}

pub fn rows_of(ds: &LabeledDataset) -> Vec<Vec<f64>> {
    (0..ds.len()).map(|r| ds.row(r).to_vec()).collect()
}

/// Type from the share of same-class neighbours, bands at 0.8, 0.4 and 0.2.
pub fn oracle_type(same: usize, k: usize) -> InstanceType {
    let share = same as f64 / k as f64;
    if share >= 0.8 - 1e-12 {
        InstanceType::Safe
    } else if share >= 0.4 - 1e-12 {
        InstanceType::Borderline
    } else if share >= 0.2 - 1e-12 {
        InstanceType::Rare
    } else {
        InstanceType::Outlier
    }
}

/// Whether some other label gets at least as many votes as the row's own.
pub fn oracle_outvoted(labels: &[usize], row: usize, nn: &[usize]) -> bool {
    let own = nn.iter().filter(|&&j| labels[j] == labels[row]).count();
    let max_other = nn
        .iter()
        .filter(|&&j| labels[j] != labels[row])
        .map(|&j| nn.iter().filter(|&&x| labels[x] == labels[j]).count())
        .max();
    max_other.is_some_and(|m| m >= own)
}

/// Two separated blobs `a` and `c` of `per_class` rows each, plus `mixed`
/// rows of class `b` scattered between the points of blob `a`.
pub fn swallowed_class(per_class: usize, mixed: usize) -> LabeledDataset {
    let mut rows: Vec<[f64; 2]> = Vec::new();
    let mut labels = Vec::new();
    for i in 0..per_class {
        let t = i as f64;
        rows.push([(t * 0.37).sin(), (t * 0.91).cos()]);
        labels.push(0);
        rows.push([10.0 + (t * 0.53).sin(), 10.0 + (t * 0.71).cos()]);
        labels.push(2);
    }
    for i in 0..mixed {
        let t = (i * 4) as f64 + 0.5;
        rows.push([(t * 0.37).sin(), (t * 0.91).cos()]);
        labels.push(1);
    }
    let x = Array2::from_shape_fn((rows.len(), 2), |(i, j)| rows[i][j]);
    LabeledDataset::new(
        vec!["x".into(), "y".into()],
        vec!["a".into(), "b".into(), "c".into()],
        x,
        labels,
    )
    .unwrap()
}
