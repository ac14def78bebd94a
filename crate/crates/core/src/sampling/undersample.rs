//! Tomek links, condensed and edited nearest neighbours, OSS and NCR.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Removal, RemovalReason, SamplingError, ScopeResolution, TrainView};
use crate::neighbors::NeighborIndex;

/// Mutual nearest neighbours with different labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TomekLinks {
    /// `partner[row]` is the other end of the link `row` belongs to.
    pub partner: Vec<Option<usize>>,
    /// Each link once, as `(low row, high row)`, ascending.
    pub pairs: Vec<(usize, usize)>,
}

impl TomekLinks {
    pub fn contains(&self, a: usize, b: usize) -> bool {
        self.partner.get(a).copied().flatten() == Some(b)
    }
}

pub fn tomek_links(index: &NeighborIndex, labels: &[usize]) -> TomekLinks {
    let nearest: Vec<usize> = index.all_rows(1).iter().map(|nn| nn[0].row).collect();
    let mut partner = vec![None; labels.len()];
    let mut pairs = Vec::new();
    for (a, &b) in nearest.iter().enumerate() {
        if nearest[b] == a && labels[a] != labels[b] {
            partner[a] = Some(b);
            if a < b {
                pairs.push((a, b));
            }
        }
    }
    TomekLinks { partner, pairs }
}

/// Rows of `pool` a condensed 1-NN set does not need.
///
/// The set starts with every row outside `pool` plus `seeds` rows drawn from
/// it, then grows by Hart's rule: pool rows are visited in ascending order and
/// any row misclassified by its nearest retained row is retained, until a
/// full pass changes nothing.
pub fn condensed_nn(
    index: &NeighborIndex,
    labels: &[usize],
    pool: &[usize],
    seeds: usize,
    rng_seed: u64,
) -> Result<Vec<usize>, SamplingError> {
    if seeds == 0 {
        return Err(SamplingError::InvalidSeeds);
    }
    let n = labels.len();
    let mut in_pool = vec![false; n];
    for &r in pool {
        in_pool[r] = true;
    }
    let mut retained: Vec<bool> = in_pool.iter().map(|p| !p).collect();
    let take = if seeds > pool.len() {
        log::warn!("seeds {seeds} exceed the pool of {}, clamping", pool.len());
        pool.len()
    } else {
        seeds
    };
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut sorted = pool.to_vec();
    sorted.sort_unstable();
    for &r in sorted.choose_multiple(&mut rng, take) {
        retained[r] = true;
    }

    if retained.iter().any(|&s| s) {
        loop {
            let mut changed = false;
            for &r in &sorted {
                if retained[r] {
                    continue;
                }
                let nn = index.query_row_where(r, 1, |x| retained[x]);
                if nn.first().is_none_or(|x| labels[x.row] != labels[r]) {
                    retained[r] = true;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
    }
    Ok(sorted.into_iter().filter(|&r| !retained[r]).collect())
}

/// Whether the `k` neighbours of `row` fail to elect its label. The label
/// must be the strict, unique plurality among the neighbours; ties lose.
pub fn outvoted(index: &NeighborIndex, labels: &[usize], row: usize, k: usize) -> bool {
    let mut votes: BTreeMap<usize, usize> = BTreeMap::new();
    for x in index.query_row(row, k) {
        *votes.entry(labels[x.row]).or_default() += 1;
    }
    let own = votes.get(&labels[row]).copied().unwrap_or(0);
    votes
        .iter()
        .any(|(&label, &count)| label != labels[row] && count >= own)
}

/// Rows among `candidates` outvoted by their `k` nearest neighbours.
pub fn edited_nn(index: &NeighborIndex, labels: &[usize], k: usize, candidates: &[usize]) -> Vec<usize> {
    candidates
        .iter()
        .copied()
        .filter(|&r| outvoted(index, labels, r, k))
        .collect()
}

fn sorted_removals(view: &TrainView, flagged: BTreeMap<usize, RemovalReason>) -> Vec<Removal> {
    flagged
        .into_iter()
        .map(|(row, reason)| Removal {
            id: view.ids[row],
            reason,
        })
        .collect()
}

/// One-sided selection: eligible Tomek-link members plus rows condensed away.
/// The minority class is never condensed.
pub fn oss(
    view: &TrainView,
    res: &ScopeResolution,
    seeds: usize,
    rng_seed: u64,
) -> Result<Vec<Removal>, SamplingError> {
    let eligible = res.eligible_mask(view.len());
    let links = tomek_links(&view.index, &view.labels);
    let mut flagged = BTreeMap::new();
    for &(a, b) in &links.pairs {
        for r in [a, b] {
            if eligible[r] {
                flagged.insert(r, RemovalReason::TomekLink);
            }
        }
    }
    let pool: Vec<usize> = res
        .eligible
        .iter()
        .copied()
        .filter(|&r| view.labels[r] != res.minority)
        .collect();
    for r in condensed_nn(&view.index, &view.labels, &pool, seeds, rng_seed)? {
        flagged.entry(r).or_insert(RemovalReason::RedundantCnn);
    }
    Ok(sorted_removals(view, flagged))
}

/// Neighbourhood cleaning rule.
///
/// Phase one edits every in-scope row outvoted by its `k` neighbours. Phase
/// two visits rows of protected classes (out of scope, or the minority) that
/// are outvoted and removes their in-scope neighbours of other classes whose
/// class holds at least `threshold` times the largest class count. Only rows
/// of included types are kept in the result.
pub fn ncr(
    view: &TrainView,
    res: &ScopeResolution,
    k: usize,
    threshold: f64,
) -> Result<Vec<Removal>, SamplingError> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(SamplingError::InvalidThreshold(threshold));
    }
    if k == 0 {
        return Err(SamplingError::InvalidK);
    }
    let labels = &view.labels;
    let counts = view.class_counts();
    let largest = counts.iter().copied().max().unwrap_or(0) as f64;
    let cleanable = |c: usize| res.in_scope(c) && counts[c] as f64 >= threshold * largest;
    let protected = |c: usize| !res.in_scope(c) || c == res.minority;

    let in_scope_rows: Vec<usize> = (0..view.len()).filter(|&r| res.in_scope(labels[r])).collect();
    let mut noisy: Vec<usize> = edited_nn(&view.index, labels, k, &in_scope_rows);
    for r in 0..view.len() {
        if !protected(labels[r]) || !outvoted(&view.index, labels, r, k) {
            continue;
        }
        for x in view.index.query_row(r, k) {
            if labels[x.row] != labels[r] && cleanable(labels[x.row]) {
                noisy.push(x.row);
            }
        }
    }
    let eligible = res.eligible_mask(view.len());
    let flagged = noisy
        .into_iter()
        .filter(|&r| eligible[r])
        .map(|r| (r, RemovalReason::NoisyEnn))
        .collect();
    Ok(sorted_removals(view, flagged))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn line(xs: &[f64]) -> NeighborIndex {
        let pts = Array2::from_shape_vec((xs.len(), 1), xs.to_vec()).unwrap();
        NeighborIndex::build(pts, (0..xs.len() as u64).collect()).unwrap()
    }

    #[test]
    fn single_tomek_link_on_a_line() {
        let idx = line(&[0.0, 1.0, 3.0]);
        let links = tomek_links(&idx, &[0, 1, 0]);
        assert_eq!(links.pairs, vec![(0, 1)]);
        assert!(links.contains(0, 1) && links.contains(1, 0));
        assert!(!links.contains(1, 2));
    }

    #[test]
    fn one_class_has_no_links() {
        let idx = line(&[0.0, 1.0, 3.0, 3.5]);
        assert!(tomek_links(&idx, &[0; 4]).pairs.is_empty());
    }

    #[test]
    fn full_seeding_condenses_nothing() {
        let idx = line(&[0.0, 1.0, 2.0, 3.0, 10.0, 11.0]);
        let labels = [0, 0, 0, 0, 1, 1];
        assert!(condensed_nn(&idx, &labels, &[0, 1, 2, 3], 4, 0).unwrap().is_empty());
        assert!(condensed_nn(&idx, &labels, &[0, 1, 2, 3], 40, 0).unwrap().is_empty());
    }

    #[test]
    fn interior_points_are_redundant() {
        let idx = line(&[0.0, 1.0, 2.0, 3.0, 10.0, 11.0]);
        let labels = [0, 0, 0, 0, 1, 1];
        let redundant = condensed_nn(&idx, &labels, &[0, 1, 2, 3], 1, 0).unwrap();
        assert_eq!(redundant.len(), 3);
    }

    #[test]
    fn ties_count_against_the_instance() {
        // row 2 has neighbours {1: class 0, 3: class 1}
        let idx = line(&[0.0, 1.0, 2.0, 3.0, 4.0]);
        let labels = [0, 0, 0, 1, 1];
        assert!(outvoted(&idx, &labels, 3, 2));
        assert!(!outvoted(&idx, &labels, 1, 2));
        assert_eq!(edited_nn(&idx, &labels, 2, &[0, 1, 2, 3, 4]), vec![2, 3, 4]);
    }
}
