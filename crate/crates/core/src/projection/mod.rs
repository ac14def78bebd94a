//! Grid of 2-D embeddings over neighbourhood sizes, each with its
//! `min_dist` picked by Shepard correlation.

pub mod sdc;
pub mod umap;

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::InstanceId;
use crate::typing::K_RANGE;

pub use sdc::{ShepardPairSample, Sdc, DEFAULT_PAIR_CAP};
pub use umap::UmapEmbedder;

/// `min_dist` values tried for every candidate.
pub const MIN_DIST_SWEEP: [f64; 6] = [0.0, 0.1, 0.25, 0.5, 0.8, 0.99];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProjectionError {
    #[error("embedding needs at least {needed} instances, got {n}")]
    TooFewInstances { n: usize, needed: usize },
    #[error("n_neighbors = {n_neighbors} must be positive and below the instance count {n}")]
    NeighborsTooLarge { n_neighbors: usize, n: usize },
    #[error("min_dist must lie in [0, 1), got {0}")]
    InvalidMinDist(f64),
    #[error("min_dist sweep is empty")]
    EmptySweep,
    #[error("{ids} ids for {rows} rows")]
    IdCountMismatch { rows: usize, ids: usize },
    #[error("embedding produced non-finite coordinates")]
    NonFinite,
}

/// Anything that maps a feature matrix to 2-D coordinates deterministically.
pub trait Embedder: Send + Sync {
    fn embed(
        &self,
        data: ArrayView2<'_, f64>,
        n_neighbors: usize,
        min_dist: f64,
        seed: u64,
    ) -> Result<Array2<f64>, ProjectionError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProjectionConfig {
    pub seed: u64,
    /// Layout epochs; `None` lets the embedder choose.
    pub n_epochs: Option<usize>,
    pub pair_cap: usize,
    pub min_dist_sweep: Vec<f64>,
}

impl Default for ProjectionConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_epochs: Some(200),
            pair_cap: DEFAULT_PAIR_CAP,
            min_dist_sweep: MIN_DIST_SWEEP.to_vec(),
        }
    }
}

/// Score of one `min_dist` value in a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub min_dist: f64,
    pub sdc: f64,
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionCandidate {
    pub n_neighbors: usize,
    pub min_dist: f64,
    pub sdc: f64,
    pub seed: u64,
    /// Ascending, aligned with `coords`.
    pub ids: Vec<InstanceId>,
    /// `[x, y]` per id.
    pub coords: Vec<[f64; 2]>,
    pub sweep: Vec<SweepPoint>,
}

impl ProjectionCandidate {
    pub fn coords_of(&self, id: InstanceId) -> Option<[f64; 2]> {
        self.ids.binary_search(&id).ok().map(|i| self.coords[i])
    }
}

/// Best embedding over the sweep and its score. Ties go to the smaller
/// `min_dist`.
pub fn auto_min_dist(
    embedder: &dyn Embedder,
    data: ArrayView2<'_, f64>,
    n_neighbors: usize,
    config: &ProjectionConfig,
) -> Result<(f64, Sdc, Array2<f64>, Vec<SweepPoint>), ProjectionError> {
    if config.min_dist_sweep.is_empty() {
        return Err(ProjectionError::EmptySweep);
    }
    let mut sweep: Vec<f64> = config.min_dist_sweep.clone();
    sweep.sort_by(f64::total_cmp);
    sweep.dedup();
    let pairs = sdc::plan_pairs(data.nrows(), config.pair_cap, config.seed);
    let high = sdc::pair_distances(data, &pairs);

    let mut best: Option<(f64, Sdc, Array2<f64>)> = None;
    let mut points = Vec::with_capacity(sweep.len());
    for &md in &sweep {
        let coords = embedder.embed(data, n_neighbors, md, config.seed)?;
        let low = sdc::pair_distances(coords.view(), &pairs);
        let score = sdc::spearman(&high, &low);
        points.push(SweepPoint {
            min_dist: md,
            sdc: score.value,
            degenerate: score.degenerate,
        });
        if best.as_ref().is_none_or(|b| score.value > b.1.value) {
            best = Some((md, score, coords));
        }
    }
    let (md, score, coords) = best.expect("sweep is non-empty");
    Ok((md, score, coords, points))
}

/// One candidate per `n_neighbors` in 5..=13, sorted by `n_neighbors`.
pub fn projection_grid(
    embedder: &dyn Embedder,
    data: ArrayView2<'_, f64>,
    ids: &[InstanceId],
    config: &ProjectionConfig,
) -> Result<Vec<ProjectionCandidate>, ProjectionError> {
    let n = data.nrows();
    if ids.len() != n {
        return Err(ProjectionError::IdCountMismatch {
            rows: n,
            ids: ids.len(),
        });
    }
    if n <= *K_RANGE.end() {
        return Err(ProjectionError::TooFewInstances {
            n,
            needed: K_RANGE.end() + 1,
        });
    }
    K_RANGE
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|k| {
            let (min_dist, score, coords, sweep) = auto_min_dist(embedder, data, k, config)?;
            Ok(ProjectionCandidate {
                n_neighbors: k,
                min_dist,
                sdc: score.value,
                seed: config.seed,
                ids: ids.to_vec(),
                coords: coords.rows().into_iter().map(|r| [r[0], r[1]]).collect(),
                sweep,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn fast() -> UmapEmbedder {
        UmapEmbedder {
            n_epochs: Some(100),
            ..UmapEmbedder::default()
        }
    }

    fn blobs(n_per: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((2 * n_per, 3), |(i, _)| {
            let centre = if i < n_per { 0.0 } else { 20.0 };
            centre + rng.gen_range(-1.0..1.0)
        })
    }

    #[test]
    fn collinear_points_stay_distinct() {
        let data = array![[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]];
        let out = fast().embed(data.view(), 1, 0.1, 0).unwrap();
        for i in 0..3 {
            for j in i + 1..3 {
                assert_ne!(out.row(i), out.row(j));
            }
        }
    }

    #[test]
    fn embedding_is_deterministic() {
        let data = blobs(20, 1);
        let a = fast().embed(data.view(), 5, 0.1, 7).unwrap();
        let b = fast().embed(data.view(), 5, 0.1, 7).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn separated_blobs_stay_separated() {
        let data = blobs(30, 2);
        let out = fast().embed(data.view(), 8, 0.1, 3).unwrap();
        let centroid = |r: std::ops::Range<usize>| {
            let len = r.len() as f64;
            r.fold([0.0, 0.0], |acc, i| [acc[0] + out[(i, 0)] / len, acc[1] + out[(i, 1)] / len])
        };
        let (c0, c1) = (centroid(0..30), centroid(30..60));
        let between = ((c0[0] - c1[0]).powi(2) + (c0[1] - c1[1]).powi(2)).sqrt();
        let mut intra = 0.0;
        let mut count = 0.0;
        for block in [0..30, 30..60] {
            for i in block.clone() {
                for j in i + 1..block.end {
                    intra += ((out[(i, 0)] - out[(j, 0)]).powi(2) + (out[(i, 1)] - out[(j, 1)]).powi(2)).sqrt();
                    count += 1.0;
                }
            }
        }
        assert!(between > intra / count, "{between} vs {}", intra / count);
    }

    #[test]
    fn rejects_bad_parameters() {
        let data = blobs(3, 0);
        assert!(matches!(
            fast().embed(data.view(), 6, 0.1, 0),
            Err(ProjectionError::NeighborsTooLarge { .. })
        ));
        assert!(matches!(
            fast().embed(data.view(), 2, 1.0, 0),
            Err(ProjectionError::InvalidMinDist(_))
        ));
    }

    #[test]
    fn auto_min_dist_returns_sweep_maximum() {
        let data = blobs(15, 4);
        let cfg = ProjectionConfig {
            n_epochs: Some(50),
            ..ProjectionConfig::default()
        };
        let (md, score, _, sweep) = auto_min_dist(&fast(), data.view(), 5, &cfg).unwrap();
        let max = sweep.iter().map(|p| p.sdc).fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(score.value, max);
        let first = sweep.iter().find(|p| p.sdc == max).unwrap();
        assert_eq!(first.min_dist, md);
    }

    #[test]
    fn grid_has_nine_sorted_candidates() {
        let data = blobs(10, 5);
        let ids: Vec<u64> = (0..20).collect();
        let cfg = ProjectionConfig {
            min_dist_sweep: vec![0.1],
            ..ProjectionConfig::default()
        };
        let grid = projection_grid(&fast(), data.view(), &ids, &cfg).unwrap();
        assert_eq!(grid.iter().map(|c| c.n_neighbors).collect::<Vec<_>>(), (5..=13).collect::<Vec<_>>());
        assert!(grid.iter().all(|c| (-1.0..=1.0).contains(&c.sdc) && c.coords.len() == 20));
    }

    #[test]
    fn grid_needs_more_than_thirteen_rows() {
        let data = blobs(6, 0);
        let ids: Vec<u64> = (0..12).collect();
        assert!(matches!(
            projection_grid(&fast(), data.view(), &ids, &ProjectionConfig::default()),
            Err(ProjectionError::TooFewInstances { .. })
        ));
    }
}
