//! SMOTE and ADASYN.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Addition, SamplingError, ScopeResolution, TrainView};

/// Splits `total` over weights proportional to `ratios` by largest
/// remainder (ties to the lower index). All-zero ratios share uniformly.
pub fn allocate_by_density(ratios: &[f64], total: usize) -> Result<Vec<usize>, SamplingError> {
    if total == 0 {
        return Err(SamplingError::NonPositiveTotal);
    }
    if ratios.is_empty() {
        return Ok(Vec::new());
    }
    let sum: f64 = ratios.iter().sum();
    let weights: Vec<f64> = if sum > 0.0 {
        ratios.iter().map(|r| r / sum).collect()
    } else {
        vec![1.0 / ratios.len() as f64; ratios.len()]
    };
    let quotas: Vec<f64> = weights.iter().map(|w| w * total as f64).collect();
    let mut alloc: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = alloc.iter().sum();
    let mut order: Vec<usize> = (0..ratios.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = quotas[a] - quotas[a].floor();
        let fb = quotas[b] - quotas[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &i in order.iter().cycle().take(total.saturating_sub(assigned)) {
        alloc[i] += 1;
    }
    Ok(alloc)
}

/// Position of `x` along the segment `p -> q` and its distance from the
/// segment's line, both in the coordinates given.
pub fn segment_residual(p: &[f64], q: &[f64], x: &[f64]) -> (f64, f64) {
    let d: Vec<f64> = q.iter().zip(p).map(|(a, b)| a - b).collect();
    let len2: f64 = d.iter().map(|v| v * v).sum();
    let t = if len2 > 0.0 {
        x.iter().zip(p).zip(&d).map(|((xi, pi), di)| (xi - pi) * di).sum::<f64>() / len2
    } else {
        0.0
    };
    let residual = x
        .iter()
        .zip(p)
        .zip(&d)
        .map(|((xi, pi), di)| {
            let e = xi - (pi + t * di);
            e * e
        })
        .sum::<f64>()
        .sqrt();
    (t, residual)
}

/// Eligible parents of `class`, ascending, with at least two required.
fn parents_of(view: &TrainView, res: &ScopeResolution, class: usize) -> Result<Vec<usize>, SamplingError> {
    let parents: Vec<usize> = res
        .eligible
        .iter()
        .copied()
        .filter(|&r| view.labels[r] == class)
        .collect();
    if parents.len() < 2 {
        return Err(SamplingError::TooFewParents {
            class: view.class_names[class].clone(),
            eligible: parents.len(),
        });
    }
    Ok(parents)
}

struct Interpolator<'a> {
    view: &'a TrainView,
    eligible: Vec<bool>,
    k: usize,
}

impl Interpolator<'_> {
    fn new<'a>(view: &'a TrainView, res: &ScopeResolution, k: usize) -> Interpolator<'a> {
        Interpolator {
            view,
            eligible: res.eligible_mask(view.len()),
            k,
        }
    }

    /// One synthetic point between `parent` and a random same-class eligible
    /// neighbour among its `min(k, parents - 1)` nearest.
    fn draw(&self, parent: usize, n_parents: usize, rng: &mut ChaCha8Rng) -> Addition {
        let class = self.view.labels[parent];
        let k_eff = self.k.min(n_parents - 1);
        let nn = self.view.index.query_row_where(parent, k_eff, |r| {
            self.eligible[r] && self.view.labels[r] == class
        });
        let neighbor = nn[rng.gen_range(0..nn.len())].row;
        let lambda: f64 = rng.gen();
        let p = self.view.raw.row(parent);
        let q = self.view.raw.row(neighbor);
        Addition {
            vector: p.iter().zip(q.iter()).map(|(a, b)| a + lambda * (b - a)).collect(),
            class,
            parent: self.view.ids[parent],
            neighbor: self.view.ids[neighbor],
            lambda,
            jitter: None,
        }
    }
}

/// `targets[class]` synthetic points per class. Parents are taken
/// round-robin in ascending id order.
pub fn smote(
    view: &TrainView,
    res: &ScopeResolution,
    k: usize,
    targets: &BTreeMap<usize, usize>,
    rng_seed: u64,
) -> Result<Vec<Addition>, SamplingError> {
    if k == 0 {
        return Err(SamplingError::InvalidK);
    }
    let interp = Interpolator::new(view, res, k);
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut out = Vec::new();
    for (&class, &count) in targets {
        if count == 0 {
            continue;
        }
        let parents = parents_of(view, res, class)?;
        for j in 0..count {
            out.push(interp.draw(parents[j % parents.len()], parents.len(), &mut rng));
        }
    }
    Ok(out)
}

/// Share of each parent's `k` neighbours (within the pool) from another class.
pub fn density_ratios(view: &TrainView, res: &ScopeResolution, parents: &[usize], k: usize) -> Vec<f64> {
    parents
        .iter()
        .map(|&p| {
            let nn = view.index.query_row_where(p, k, |r| res.pool[r]);
            if nn.is_empty() {
                return 0.0;
            }
            let other = nn.iter().filter(|x| view.labels[x.row] != view.labels[p]).count();
            other as f64 / nn.len() as f64
        })
        .collect()
}

/// ADASYN: per-class targets spread over parents by neighbourhood density,
/// then every coordinate jittered by up to `epsilon` normalized units.
pub fn adasyn(
    view: &TrainView,
    res: &ScopeResolution,
    k: usize,
    targets: &BTreeMap<usize, usize>,
    epsilon: f64,
    rng_seed: u64,
) -> Result<Vec<Addition>, SamplingError> {
    if k == 0 {
        return Err(SamplingError::InvalidK);
    }
    if !(epsilon.is_finite() && epsilon >= 0.0) {
        return Err(SamplingError::InvalidEpsilon(epsilon));
    }
    if targets.values().sum::<usize>() == 0 {
        return Err(SamplingError::NonPositiveTotal);
    }
    let interp = Interpolator::new(view, res, k);
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut out = Vec::new();
    for (&class, &count) in targets {
        if count == 0 {
            continue;
        }
        let parents = parents_of(view, res, class)?;
        let ratios = density_ratios(view, res, &parents, k);
        let alloc = allocate_by_density(&ratios, count)?;
        for (&parent, &g) in parents.iter().zip(&alloc) {
            for _ in 0..g {
                let mut add = interp.draw(parent, parents.len(), &mut rng);
                let jitter: Vec<f64> = view
                    .scale
                    .iter()
                    .map(|s| {
                        let u: f64 = rng.gen_range(-1.0..=1.0);
                        u * epsilon * s
                    })
                    .collect();
                for (v, j) in add.vector.iter_mut().zip(&jitter) {
                    *v += j;
                }
                add.jitter = Some(jitter);
                out.push(add);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn density_weights_split_by_hand() {
        assert_eq!(allocate_by_density(&[0.8, 0.2], 10).unwrap(), vec![8, 2]);
    }

    #[test]
    fn zero_ratios_fall_back_to_uniform() {
        assert_eq!(allocate_by_density(&[0.0, 0.0, 0.0], 7).unwrap(), vec![3, 2, 2]);
    }

    #[test]
    fn allocation_sums_to_total() {
        let ratios = [0.1, 0.35, 0.05, 0.5, 0.0, 0.33];
        for total in 1..60 {
            let a = allocate_by_density(&ratios, total).unwrap();
            assert_eq!(a.iter().sum::<usize>(), total);
            assert_eq!(a[4], 0);
        }
        assert_eq!(allocate_by_density(&ratios, 0), Err(SamplingError::NonPositiveTotal));
    }

    #[test]
    fn midpoint_and_endpoints() {
        let (t, r) = segment_residual(&[0.0, 0.0], &[2.0, 2.0], &[1.0, 1.0]);
        assert_eq!((t, r), (0.5, 0.0));
        assert_eq!(segment_residual(&[0.0, 0.0], &[2.0, 2.0], &[0.0, 0.0]).0, 0.0);
        assert_eq!(segment_residual(&[0.0, 0.0], &[2.0, 2.0], &[2.0, 2.0]).0, 1.0);
        assert!(segment_residual(&[0.0, 0.0], &[2.0, 0.0], &[1.0, 1.0]).1 > 0.9);
    }
}
