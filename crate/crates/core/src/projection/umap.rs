//! Reference neighbour embedder: fuzzy k-NN graph plus attractive/repulsive
//! stochastic layout, in the style of UMAP.
//!
//! Everything is single-threaded after the neighbour search and driven by a
//! seeded ChaCha RNG, so the same input and seed give bit-identical output.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Embedder, ProjectionError};
use crate::neighbors::NeighborIndex;

const SMOOTH_K_TOLERANCE: f64 = 1e-5;
const MIN_K_DIST_SCALE: f64 = 1e-3;
const GRAD_CLIP: f64 = 4.0;
const INIT_EXTENT: f64 = 10.0;

#[derive(Debug, Clone, PartialEq)]
pub struct UmapEmbedder {
    /// Layout epochs; `None` picks 500 below 10k points and 200 above.
    pub n_epochs: Option<usize>,
    pub spread: f64,
    pub learning_rate: f64,
    pub negative_sample_rate: usize,
    pub repulsion_strength: f64,
}

impl Default for UmapEmbedder {
    fn default() -> Self {
        Self {
            n_epochs: None,
            spread: 1.0,
            learning_rate: 1.0,
            negative_sample_rate: 5,
            repulsion_strength: 1.0,
        }
    }
}

/// Fits `1 / (1 + a x^(2b))` to the offset exponential that `min_dist` and
/// `spread` describe, by Levenberg-Marquardt on `(ln a, ln b)`.
pub fn fit_curve(spread: f64, min_dist: f64) -> (f64, f64) {
    let xs: Vec<f64> = (0..300).map(|i| 3.0 * spread * i as f64 / 299.0).collect();
    let ys: Vec<f64> = xs
        .iter()
        .map(|&x| {
            if x < min_dist {
                1.0
            } else {
                (-(x - min_dist) / spread).exp()
            }
        })
        .collect();
    let residual = |la: f64, lb: f64| -> f64 {
        let (a, b) = (la.exp(), lb.exp());
        xs.iter()
            .zip(&ys)
            .map(|(&x, &y)| {
                let f = 1.0 / (1.0 + a * x.powf(2.0 * b));
                (f - y) * (f - y)
            })
            .sum()
    };

    let (mut la, mut lb) = (1.5f64.ln(), 0.9f64.ln());
    let mut lambda = 1e-3;
    let mut cost = residual(la, lb);
    for _ in 0..500 {
        let (a, b) = (la.exp(), lb.exp());
        // J^T J and J^T r in log-parameter space
        let (mut jaa, mut jab, mut jbb, mut ga, mut gb) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (&x, &y) in xs.iter().zip(&ys) {
            if x <= 0.0 {
                continue;
            }
            let p = x.powf(2.0 * b);
            let denom = 1.0 + a * p;
            let f = 1.0 / denom;
            let r = f - y;
            let d_la = -a * p / (denom * denom);
            let d_lb = -a * p * 2.0 * b * x.ln() / (denom * denom);
            jaa += d_la * d_la;
            jab += d_la * d_lb;
            jbb += d_lb * d_lb;
            ga += d_la * r;
            gb += d_lb * r;
        }
        let m00 = jaa * (1.0 + lambda);
        let m11 = jbb * (1.0 + lambda);
        let det = m00 * m11 - jab * jab;
        if det.abs() < 1e-300 {
            break;
        }
        let step_a = -(m11 * ga - jab * gb) / det;
        let step_b = -(m00 * gb - jab * ga) / det;
        let trial = residual(la + step_a, lb + step_b);
        if trial < cost {
            let converged = (cost - trial) < 1e-15 * cost.max(1e-300);
            la += step_a;
            lb += step_b;
            cost = trial;
            lambda = (lambda / 10.0).max(1e-12);
            if converged {
                break;
            }
        } else {
            lambda *= 10.0;
            if lambda > 1e12 {
                break;
            }
        }
    }
    (la.exp(), lb.exp())
}

/// Per-point bandwidths `(rho, sigma)` so that the memberships of each
/// point's neighbours sum to `log2(k)`.
fn smooth_knn(dists: &[Vec<f64>], mean_all: f64) -> Vec<(f64, f64)> {
    dists
        .iter()
        .map(|d| {
            let k = d.len().max(1);
            let target = (k as f64).log2();
            let rho = d.iter().copied().find(|&x| x > 0.0).unwrap_or(0.0);
            let (mut lo, mut hi, mut mid) = (0.0f64, f64::INFINITY, 1.0f64);
            for _ in 0..64 {
                let psum: f64 = d
                    .iter()
                    .map(|&x| {
                        let g = x - rho;
                        if g > 0.0 {
                            (-g / mid).exp()
                        } else {
                            1.0
                        }
                    })
                    .sum();
                if (psum - target).abs() < SMOOTH_K_TOLERANCE {
                    break;
                }
                if psum > target {
                    hi = mid;
                    mid = (lo + hi) / 2.0;
                } else {
                    lo = mid;
                    if hi.is_infinite() {
                        mid *= 2.0;
                    } else {
                        mid = (lo + hi) / 2.0;
                    }
                }
            }
            let mean_i = d.iter().sum::<f64>() / k as f64;
            let floor = if rho > 0.0 { mean_i } else { mean_all };
            (rho, mid.max(MIN_K_DIST_SCALE * floor))
        })
        .collect()
}

/// Symmetrized fuzzy graph as sorted directed edges `(head, tail, weight)`;
/// both directions of every undirected edge are present.
fn fuzzy_graph(data: ArrayView2<'_, f64>, n_neighbors: usize) -> Vec<(usize, usize, f64)> {
    let n = data.nrows();
    let index = NeighborIndex::build(data.to_owned(), (0..n as u64).collect())
        .expect("caller checked n >= 2");
    let knn = index.all_rows(n_neighbors);
    let dists: Vec<Vec<f64>> = knn
        .iter()
        .map(|nn| nn.iter().map(|x| x.distance).collect())
        .collect();
    let total: f64 = dists.iter().flatten().sum();
    let count = dists.iter().map(Vec::len).sum::<usize>().max(1);
    let bands = smooth_knn(&dists, total / count as f64);

    let mut directed: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for (i, nn) in knn.iter().enumerate() {
        let (rho, sigma) = bands[i];
        for x in nn {
            let g = x.distance - rho;
            let w = if g <= 0.0 || sigma == 0.0 {
                1.0
            } else {
                (-g / sigma).exp()
            };
            directed.insert((i, x.row), w);
        }
    }
    let mut sym: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for (&(i, j), &w) in &directed {
        let wt = directed.get(&(j, i)).copied().unwrap_or(0.0);
        let v = w + wt - w * wt;
        sym.insert((i, j), v);
        sym.insert((j, i), v);
    }
    sym.into_iter()
        .filter(|&(_, w)| w > 0.0)
        .map(|((i, j), w)| (i, j, w))
        .collect()
}

/// Top principal components scaled to `[-10, 10]`, plus tiny seeded noise.
fn pca_init(data: ArrayView2<'_, f64>, rng: &mut ChaCha8Rng) -> Vec<[f64; 2]> {
    let (n, d) = data.dim();
    let mean: Vec<f64> = (0..d)
        .map(|j| data.column(j).sum() / n as f64)
        .collect();
    let mut cov = DMatrix::<f64>::zeros(d, d);
    for row in data.rows() {
        for a in 0..d {
            let da = row[a] - mean[a];
            for b in a..d {
                cov[(a, b)] += da * (row[b] - mean[b]);
            }
        }
    }
    for a in 0..d {
        for b in 0..a {
            cov[(a, b)] = cov[(b, a)];
        }
    }
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let mut comps: Vec<Vec<f64>> = order
        .iter()
        .take(2)
        .map(|&c| {
            let mut v: Vec<f64> = eig.eigenvectors.column(c).iter().copied().collect();
            // fix the sign so the largest-magnitude loading is positive
            let pivot = v
                .iter()
                .copied()
                .fold(0.0f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
            if pivot < 0.0 {
                v.iter_mut().for_each(|x| *x = -*x);
            }
            v
        })
        .collect();
    while comps.len() < 2 {
        comps.push(vec![0.0; d]);
    }
    let mut coords: Vec<[f64; 2]> = data
        .rows()
        .into_iter()
        .map(|row| {
            let mut p = [0.0; 2];
            for (c, comp) in comps.iter().enumerate() {
                p[c] = row
                    .iter()
                    .zip(&mean)
                    .zip(comp)
                    .map(|((x, m), w)| (x - m) * w)
                    .sum();
            }
            p
        })
        .collect();
    let extent = coords
        .iter()
        .flat_map(|p| p.iter())
        .fold(0.0f64, |acc, v| acc.max(v.abs()));
    let scale = if extent > 0.0 { INIT_EXTENT / extent } else { 1.0 };
    for p in &mut coords {
        for v in p.iter_mut() {
            *v = *v * scale + rng.gen_range(-1e-4..1e-4);
        }
    }
    coords
}

impl UmapEmbedder {
    fn epochs(&self, n: usize) -> usize {
        self.n_epochs
            .unwrap_or(if n <= 10_000 { 500 } else { 200 })
            .max(1)
    }

    fn layout(
        &self,
        coords: &mut [[f64; 2]],
        edges: &[(usize, usize, f64)],
        a: f64,
        b: f64,
        n_epochs: usize,
        rng: &mut ChaCha8Rng,
    ) {
        let n = coords.len();
        let max_w = edges.iter().map(|e| e.2).fold(0.0f64, f64::max);
        let edges: Vec<&(usize, usize, f64)> = edges
            .iter()
            .filter(|e| e.2 >= max_w / n_epochs as f64)
            .collect();
        let eps: Vec<f64> = edges.iter().map(|e| max_w / e.2).collect();
        let neg_rate = self.negative_sample_rate.max(1) as f64;
        let eps_neg: Vec<f64> = eps.iter().map(|e| e / neg_rate).collect();
        let mut next_sample = eps.clone();
        let mut next_neg = eps_neg.clone();

        let clip = |v: f64| v.clamp(-GRAD_CLIP, GRAD_CLIP);
        for epoch in 0..n_epochs {
            let alpha = self.learning_rate * (1.0 - epoch as f64 / n_epochs as f64);
            let e_f = epoch as f64;
            for (ei, &&(head, tail, _)) in edges.iter().enumerate() {
                if next_sample[ei] > e_f {
                    continue;
                }
                let (cur, other) = (coords[head], coords[tail]);
                let diff = [cur[0] - other[0], cur[1] - other[1]];
                let d2 = diff[0] * diff[0] + diff[1] * diff[1];
                let coeff = if d2 > 0.0 {
                    -2.0 * a * b * d2.powf(b - 1.0) / (a * d2.powf(b) + 1.0)
                } else {
                    0.0
                };
                for dim in 0..2 {
                    let g = clip(coeff * diff[dim]) * alpha;
                    coords[head][dim] += g;
                    coords[tail][dim] -= g;
                }
                next_sample[ei] += eps[ei];

                let n_neg = ((e_f - next_neg[ei]) / eps_neg[ei]).max(0.0) as usize;
                for _ in 0..n_neg {
                    let k = rng.gen_range(0..n);
                    let cur = coords[head];
                    let other = coords[k];
                    let diff = [cur[0] - other[0], cur[1] - other[1]];
                    let d2 = diff[0] * diff[0] + diff[1] * diff[1];
                    let coeff = if d2 > 0.0 {
                        2.0 * self.repulsion_strength * b / ((0.001 + d2) * (a * d2.powf(b) + 1.0))
                    } else if k == head {
                        continue;
                    } else {
                        0.0
                    };
                    for dim in 0..2 {
                        let g = if coeff > 0.0 {
                            clip(coeff * diff[dim])
                        } else {
                            GRAD_CLIP
                        };
                        coords[head][dim] += g * alpha;
                    }
                }
                next_neg[ei] += n_neg as f64 * eps_neg[ei];
            }
        }
    }
}

impl Embedder for UmapEmbedder {
    fn embed(
        &self,
        data: ArrayView2<'_, f64>,
        n_neighbors: usize,
        min_dist: f64,
        seed: u64,
    ) -> Result<Array2<f64>, ProjectionError> {
        let n = data.nrows();
        if n < 2 {
            return Err(ProjectionError::TooFewInstances { n, needed: 2 });
        }
        if n_neighbors == 0 || n_neighbors >= n {
            return Err(ProjectionError::NeighborsTooLarge { n_neighbors, n });
        }
        if !(0.0..1.0).contains(&min_dist) || !min_dist.is_finite() {
            return Err(ProjectionError::InvalidMinDist(min_dist));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (a, b) = fit_curve(self.spread, min_dist);
        let edges = fuzzy_graph(data, n_neighbors);
        let mut coords = pca_init(data, &mut rng);
        self.layout(&mut coords, &edges, a, b, self.epochs(n), &mut rng);

        let mut out = Array2::zeros((n, 2));
        for (i, p) in coords.iter().enumerate() {
            out[(i, 0)] = p[0];
            out[(i, 1)] = p[1];
        }
        if out.iter().any(|v| !v.is_finite()) {
            return Err(ProjectionError::NonFinite);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn curve_parameters_match_reference_fit() {
        // reference values of the same least-squares fit for spread 1
        let (a, b) = fit_curve(1.0, 0.1);
        assert!((a - 1.5769).abs() < 0.01, "a = {a}");
        assert!((b - 0.8951).abs() < 0.01, "b = {b}");
        let (a0, b0) = fit_curve(1.0, 0.0);
        assert!(a0 > a && b0 < b, "tighter clusters at min_dist 0: {a0} {b0}");
    }

    #[test]
    fn smooth_knn_hits_target_sum() {
        let dists = vec![vec![1.0, 2.0, 3.0, 4.0]];
        let (rho, sigma) = smooth_knn(&dists, 2.5)[0];
        assert_eq!(rho, 1.0);
        let psum: f64 = dists[0]
            .iter()
            .map(|&d| if d - rho > 0.0 { (-(d - rho) / sigma).exp() } else { 1.0 })
            .sum();
        assert!((psum - 2.0).abs() < 1e-4);
    }

    #[test]
    fn graph_is_symmetric() {
        let data = array![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [5.0, 5.0], [6.0, 5.0]];
        let edges = fuzzy_graph(data.view(), 2);
        let map: BTreeMap<(usize, usize), f64> =
            edges.iter().map(|&(i, j, w)| ((i, j), w)).collect();
        for (&(i, j), &w) in &map {
            assert_eq!(map[&(j, i)], w);
            assert!(w > 0.0 && w <= 1.0);
        }
    }

    #[test]
    fn pca_init_spans_fixed_extent() {
        let data = array![[0.0], [1.0], [3.0]];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let c = pca_init(data.view(), &mut rng);
        let max = c.iter().map(|p| p[0].abs()).fold(0.0, f64::max);
        assert!((max - 10.0).abs() < 1e-3);
    }
}
