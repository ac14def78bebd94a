//! Instance hardness types from k-nearest-neighbour class agreement.

use std::ops::RangeInclusive;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::InstanceId;
use crate::neighbors::NeighborIndex;

/// Neighbourhood sizes offered for typing and projection.
pub const K_RANGE: RangeInclusive<usize> = 5..=13;

pub const DEFAULT_K: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstanceType {
    Safe,
    Borderline,
    Rare,
    Outlier,
}

impl InstanceType {
    pub const ALL: [InstanceType; 4] = [
        InstanceType::Safe,
        InstanceType::Borderline,
        InstanceType::Rare,
        InstanceType::Outlier,
    ];

    /// Position in [`InstanceType::ALL`].
    pub fn index(self) -> usize {
        self as usize
    }

    /// 0 for outliers up to 3 for safe instances.
    pub fn safety_rank(self) -> usize {
        3 - self.index()
    }
}

impl std::fmt::Display for InstanceType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            InstanceType::Safe => "safe",
            InstanceType::Borderline => "borderline",
            InstanceType::Rare => "rare",
            InstanceType::Outlier => "outlier",
        })
    }
}

/// Maps a same-class neighbour count to a type.
///
/// Both rules agree on k = 5 (5,4 safe; 3,2 borderline; 1 rare; 0 outlier)
/// and differ in how they extend to larger neighbourhoods.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandRule {
    /// With `r = same / k`: safe `r >= 4/5`, borderline `r >= 2/5`, rare
    /// `r >= 1/5`, outlier below.
    #[default]
    Fifths,
    /// Outlier iff `r = 0`, rare `r <= 0.3`, borderline `r <= 0.7`, safe above.
    Proportional,
}

impl BandRule {
    pub fn classify(self, same_class: usize, k: usize) -> InstanceType {
        debug_assert!(same_class <= k);
        match self {
            BandRule::Fifths => {
                let s5 = 5 * same_class;
                if s5 >= 4 * k {
                    InstanceType::Safe
                } else if s5 >= 2 * k {
                    InstanceType::Borderline
                } else if s5 >= k {
                    InstanceType::Rare
                } else {
                    InstanceType::Outlier
                }
            }
            BandRule::Proportional => {
                let s10 = 10 * same_class;
                if same_class == 0 {
                    InstanceType::Outlier
                } else if s10 <= 3 * k {
                    InstanceType::Rare
                } else if s10 <= 7 * k {
                    InstanceType::Borderline
                } else {
                    InstanceType::Safe
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TypeAssignment {
    pub id: InstanceId,
    pub k: usize,
    pub same_class_count: usize,
    #[serde(rename = "type")]
    pub instance_type: InstanceType,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TypingError {
    #[error("k = {0} is outside the supported range 5..=13")]
    KOutOfRange(usize),
    #[error("k = {k} needs more than {n} training instances")]
    KTooLarge { k: usize, n: usize },
    #[error("{labels} labels for {rows} indexed rows")]
    LabelCountMismatch { rows: usize, labels: usize },
}

pub fn check_k(k: usize, n: usize) -> Result<(), TypingError> {
    if !K_RANGE.contains(&k) {
        return Err(TypingError::KOutOfRange(k));
    }
    if k >= n {
        return Err(TypingError::KTooLarge { k, n });
    }
    Ok(())
}

/// Types every row of `index` by how many of its `k` nearest neighbours
/// share its label. `labels` is aligned with the index rows.
pub fn classify_types(
    index: &NeighborIndex,
    labels: &[usize],
    k: usize,
    rule: BandRule,
) -> Result<Vec<TypeAssignment>, TypingError> {
    if labels.len() != index.len() {
        return Err(TypingError::LabelCountMismatch {
            rows: index.len(),
            labels: labels.len(),
        });
    }
    check_k(k, index.len())?;
    let neighbours = index.all_rows(k);
    Ok(neighbours
        .iter()
        .enumerate()
        .map(|(row, nn)| {
            let same = nn.iter().filter(|n| labels[n.row] == labels[row]).count();
            TypeAssignment {
                id: index.ids()[row],
                k,
                same_class_count: same,
                instance_type: rule.classify(same, k),
            }
        })
        .collect())
}

/// Counts and percentages of types, per class and overall. Percentages are
/// relative to the whole training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeDistribution {
    pub total: usize,
    /// `counts[class][type.index()]`
    pub counts: Vec<[usize; 4]>,
    pub percentages: Vec<[f64; 4]>,
    pub overall_counts: [usize; 4],
    pub overall_percentages: [f64; 4],
}

impl TypeDistribution {
    pub fn share(&self, t: InstanceType) -> f64 {
        self.overall_percentages[t.index()]
    }
}

/// `labels` is aligned with `assignments`.
pub fn type_distribution(
    assignments: &[TypeAssignment],
    labels: &[usize],
    n_classes: usize,
) -> TypeDistribution {
    let mut counts = vec![[0usize; 4]; n_classes];
    for (a, &l) in assignments.iter().zip(labels) {
        counts[l][a.instance_type.index()] += 1;
    }
    let total = assignments.len();
    let pct = |c: usize| {
        if total == 0 {
            0.0
        } else {
            100.0 * c as f64 / total as f64
        }
    };
    let mut overall_counts = [0usize; 4];
    for row in &counts {
        for t in 0..4 {
            overall_counts[t] += row[t];
        }
    }
    TypeDistribution {
        total,
        percentages: counts.iter().map(|row| row.map(pct)).collect(),
        overall_percentages: overall_counts.map(pct),
        overall_counts,
        counts,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use InstanceType::*;

    #[test]
    fn k5_table_is_shared_by_both_rules() {
        let expected = [Outlier, Rare, Borderline, Borderline, Safe, Safe];
        for rule in [BandRule::Fifths, BandRule::Proportional] {
            for (s, &t) in expected.iter().enumerate() {
                assert_eq!(rule.classify(s, 5), t, "{rule:?} s={s}");
            }
        }
    }

    #[test]
    fn proportional_boundary_at_k13() {
        // 4/13 ~ 0.307 is just above the 0.3 rare band
        assert_eq!(BandRule::Proportional.classify(4, 13), Borderline);
        assert_eq!(BandRule::Proportional.classify(3, 13), Rare);
        assert_eq!(BandRule::Proportional.classify(10, 13), Safe);
        assert_eq!(BandRule::Proportional.classify(9, 13), Borderline);
    }

    #[test]
    fn fifths_boundaries_at_k13() {
        assert_eq!(BandRule::Fifths.classify(11, 13), Safe);
        assert_eq!(BandRule::Fifths.classify(10, 13), Borderline);
        assert_eq!(BandRule::Fifths.classify(6, 13), Borderline);
        assert_eq!(BandRule::Fifths.classify(5, 13), Rare);
        assert_eq!(BandRule::Fifths.classify(3, 13), Rare);
        assert_eq!(BandRule::Fifths.classify(2, 13), Outlier);
    }

    #[test]
    fn bands_are_monotone_in_agreement() {
        for rule in [BandRule::Fifths, BandRule::Proportional] {
            for k in K_RANGE {
                for s in 1..=k {
                    assert!(
                        rule.classify(s, k).safety_rank() >= rule.classify(s - 1, k).safety_rank()
                    );
                }
                assert_eq!(rule.classify(0, k), Outlier);
                assert_eq!(rule.classify(k, k), Safe);
            }
        }
    }

    #[test]
    fn single_class_data_is_all_safe() {
        let pts = Array2::from_shape_fn((20, 2), |(i, j)| (i * 3 + j) as f64);
        let idx = NeighborIndex::build(pts, (0..20).collect()).unwrap();
        let labels = vec![0; 20];
        let types = classify_types(&idx, &labels, 5, BandRule::Fifths).unwrap();
        let dist = type_distribution(&types, &labels, 1);
        assert_eq!(dist.overall_counts, [20, 0, 0, 0]);
        assert_eq!(dist.share(Safe), 100.0);
    }

    #[test]
    fn k_outside_range_is_rejected() {
        let pts = Array2::zeros((20, 1));
        let idx = NeighborIndex::build(pts, (0..20).collect()).unwrap();
        let labels = vec![0; 20];
        assert_eq!(
            classify_types(&idx, &labels, 4, BandRule::Fifths).unwrap_err(),
            TypingError::KOutOfRange(4)
        );
        assert_eq!(
            classify_types(&idx, &labels, 14, BandRule::Fifths).unwrap_err(),
            TypingError::KOutOfRange(14)
        );
        let small = NeighborIndex::build(Array2::zeros((5, 1)), (0..5).collect()).unwrap();
        assert_eq!(
            classify_types(&small, &[0; 5], 5, BandRule::Fifths).unwrap_err(),
            TypingError::KTooLarge { k: 5, n: 5 }
        );
    }

    #[test]
    fn distribution_percentages_sum_to_hundred() {
        let a = |id, t| TypeAssignment {
            id,
            k: 5,
            same_class_count: 0,
            instance_type: t,
        };
        let assignments = vec![a(0, Safe), a(1, Rare), a(2, Safe), a(3, Outlier), a(4, Borderline), a(5, Safe)];
        let labels = vec![0, 0, 1, 1, 2, 2];
        let d = type_distribution(&assignments, &labels, 3);
        assert_eq!(d.counts[0], [1, 0, 1, 0]);
        assert_eq!(d.overall_counts, [3, 1, 1, 1]);
        let sum: f64 = d.percentages.iter().flat_map(|r| r.iter()).sum();
        assert!((sum - 100.0).abs() < 1e-9);
        assert!((d.overall_percentages.iter().sum::<f64>() - 100.0).abs() < 1e-9);
    }
}
