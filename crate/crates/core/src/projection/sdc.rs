//! Shepard diagram correlation: Spearman rank correlation between pairwise
//! distances in the original space and in the embedding.

use ndarray::ArrayView2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::neighbors::squared_distance;

/// Default upper bound on the number of sampled pairs.
pub const DEFAULT_PAIR_CAP: usize = 100_000;

/// Pairs `(i, j)` with `i < j` and their distances in both spaces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShepardPairSample {
    pub pairs: Vec<(usize, usize)>,
    pub high: Vec<f64>,
    pub low: Vec<f64>,
}

/// Which pairs to compare. All pairs when there are at most `cap` of them,
/// otherwise `cap` pairs drawn uniformly (with replacement) from a seeded RNG.
pub fn plan_pairs(n: usize, cap: usize, seed: u64) -> Vec<(usize, usize)> {
    let total = n * n.saturating_sub(1) / 2;
    if total <= cap {
        let mut pairs = Vec::with_capacity(total);
        for i in 0..n {
            for j in i + 1..n {
                pairs.push((i, j));
            }
        }
        return pairs;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..cap)
        .map(|_| {
            let i = rng.gen_range(0..n);
            let mut j = rng.gen_range(0..n - 1);
            if j >= i {
                j += 1;
            }
            (i.min(j), i.max(j))
        })
        .collect()
}

pub fn pair_distances(points: ArrayView2<'_, f64>, pairs: &[(usize, usize)]) -> Vec<f64> {
    pairs
        .iter()
        .map(|&(i, j)| squared_distance(points.row(i), points.row(j)).sqrt())
        .collect()
}

impl ShepardPairSample {
    pub fn from_points(
        high: ArrayView2<'_, f64>,
        low: ArrayView2<'_, f64>,
        cap: usize,
        seed: u64,
    ) -> Self {
        let pairs = plan_pairs(high.nrows(), cap, seed);
        Self {
            high: pair_distances(high, &pairs),
            low: pair_distances(low, &pairs),
            pairs,
        }
    }

    pub fn sdc(&self) -> Sdc {
        spearman(&self.high, &self.low)
    }
}

/// A correlation score. `degenerate` is set when either input is constant
/// (or too short), in which case `value` is 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sdc {
    pub value: f64,
    pub degenerate: bool,
}

/// Ranks starting at 1; ties receive the average of the ranks they span.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // ranks start+1 ..= end averaged
        let avg = (start + 1 + end) as f64 / 2.0;
        for &idx in &order[start..end] {
            ranks[idx] = avg;
        }
        start = end;
    }
    ranks
}

pub fn pearson(x: &[f64], y: &[f64]) -> Sdc {
    let n = x.len().min(y.len());
    if n < 2 {
        return Sdc {
            value: 0.0,
            degenerate: true,
        };
    }
    let mx = x[..n].iter().sum::<f64>() / n as f64;
    let my = y[..n].iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let dx = x[i] - mx;
        let dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Sdc {
            value: 0.0,
            degenerate: true,
        };
    }
    Sdc {
        value: (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0),
        degenerate: false,
    }
}

pub fn spearman(x: &[f64], y: &[f64]) -> Sdc {
    pearson(&average_ranks(x), &average_ranks(y))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranks_average_ties() {
        assert_eq!(average_ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn identical_and_reversed() {
        let x: Vec<f64> = (0..50).map(|i| (i as f64).sin() + i as f64 * 0.1).collect();
        assert_eq!(spearman(&x, &x).value, 1.0);
        let rev: Vec<f64> = x.iter().map(|v| -v).collect();
        assert_eq!(spearman(&x, &rev).value, -1.0);
    }

    #[test]
    fn constant_input_is_flagged() {
        let s = spearman(&[1.0, 2.0, 3.0], &[4.0, 4.0, 4.0]);
        assert!(s.degenerate);
        assert_eq!(s.value, 0.0);
        assert!(spearman(&[1.0], &[1.0]).degenerate);
    }

    #[test]
    fn small_inputs_use_every_pair() {
        let pairs = plan_pairs(5, 100, 0);
        assert_eq!(pairs.len(), 10);
        assert!(pairs.iter().all(|&(i, j)| i < j));
    }

    #[test]
    fn capped_sampling_respects_cap_and_order() {
        let pairs = plan_pairs(1000, 5000, 3);
        assert_eq!(pairs.len(), 5000);
        assert!(pairs.iter().all(|&(i, j)| i < j && j < 1000));
        assert_eq!(pairs, plan_pairs(1000, 5000, 3));
    }
}
