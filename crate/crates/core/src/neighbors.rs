//! Exact euclidean k-nearest-neighbour queries.
//!
//! Desk-scale datasets (a few thousand rows) make a brute-force scan the
//! simplest exact index. Neighbours are ordered by `(distance, instance id)`,
//! so equidistant candidates resolve to the lower id and every query has a
//! single well-defined answer.

use ndarray::{Array2, ArrayView1, ArrayView2};
use rayon::prelude::*;
use thiserror::Error;

use crate::dataset::InstanceId;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NeighborError {
    #[error("neighbour index needs at least 2 points, got {0}")]
    TooFewPoints(usize),
    #[error("{ids} ids supplied for {rows} rows")]
    IdCountMismatch { rows: usize, ids: usize },
    #[error("query has {got} dimensions, index has {expected}")]
    DimensionMismatch { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    /// Row position inside the index.
    pub row: usize,
    pub distance: f64,
}

#[derive(Debug, Clone)]
pub struct NeighborIndex {
    points: Array2<f64>,
    ids: Vec<InstanceId>,
}

#[inline]
pub fn squared_distance(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[inline]
fn squared_distance_slice(a: ArrayView1<'_, f64>, b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

impl NeighborIndex {
    pub fn build(points: Array2<f64>, ids: Vec<InstanceId>) -> Result<Self, NeighborError> {
        if points.nrows() < 2 {
            return Err(NeighborError::TooFewPoints(points.nrows()));
        }
        if ids.len() != points.nrows() {
            return Err(NeighborError::IdCountMismatch {
                rows: points.nrows(),
                ids: ids.len(),
            });
        }
        Ok(Self { points, ids })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    pub fn ids(&self) -> &[InstanceId] {
        &self.ids
    }

    pub fn points(&self) -> ArrayView2<'_, f64> {
        self.points.view()
    }

    pub fn distance(&self, a: usize, b: usize) -> f64 {
        squared_distance(self.points.row(a), self.points.row(b)).sqrt()
    }

    /// The `k` nearest other rows of `row`. Fewer are returned when the index
    /// holds at most `k` other points.
    pub fn query_row(&self, row: usize, k: usize) -> Vec<Neighbor> {
        self.query_row_where(row, k, |_| true)
    }

    /// Like [`query_row`](Self::query_row) but only rows accepted by `allow`
    /// are candidates.
    pub fn query_row_where(
        &self,
        row: usize,
        k: usize,
        allow: impl Fn(usize) -> bool,
    ) -> Vec<Neighbor> {
        let q = self.points.row(row);
        self.select(k, |r| {
            if r == row || !allow(r) {
                None
            } else {
                Some(squared_distance(q, self.points.row(r)))
            }
        })
    }

    /// The `k` nearest rows to an arbitrary point (no exclusion).
    pub fn query_point(&self, point: &[f64], k: usize) -> Result<Vec<Neighbor>, NeighborError> {
        if point.len() != self.dim() {
            return Err(NeighborError::DimensionMismatch {
                expected: self.dim(),
                got: point.len(),
            });
        }
        Ok(self.query_point_where(point, k, |_| true))
    }

    pub fn query_point_where(
        &self,
        point: &[f64],
        k: usize,
        allow: impl Fn(usize) -> bool,
    ) -> Vec<Neighbor> {
        self.select(k, |r| {
            allow(r).then(|| squared_distance_slice(self.points.row(r), point))
        })
    }

    /// Neighbour lists of every row, computed in parallel. Because ordering
    /// is total, the list for `k` is a prefix of the list for any larger `k`.
    pub fn all_rows(&self, k: usize) -> Vec<Vec<Neighbor>> {
        (0..self.len())
            .into_par_iter()
            .map(|r| self.query_row(r, k))
            .collect()
    }

    fn select(&self, k: usize, dist2: impl Fn(usize) -> Option<f64>) -> Vec<Neighbor> {
        if k == 0 {
            return Vec::new();
        }
        let mut cand: Vec<(f64, InstanceId, usize)> = (0..self.len())
            .filter_map(|r| dist2(r).map(|d| (d, self.ids[r], r)))
            .collect();
        let cmp = |a: &(f64, InstanceId, usize), b: &(f64, InstanceId, usize)| {
            a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
        };
        if cand.len() > k {
            cand.select_nth_unstable_by(k - 1, cmp);
            cand.truncate(k);
        }
        cand.sort_unstable_by(cmp);
        cand.into_iter()
            .map(|(d, _, row)| Neighbor {
                row,
                distance: d.sqrt(),
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn line(xs: &[f64]) -> NeighborIndex {
        let pts = Array2::from_shape_vec((xs.len(), 1), xs.to_vec()).unwrap();
        NeighborIndex::build(pts, (0..xs.len() as u64).collect()).unwrap()
    }

    #[test]
    fn nearest_on_a_line() {
        let idx = line(&[0.0, 1.0, 10.0]);
        let nn = idx.query_row(0, 1);
        assert_eq!(nn.len(), 1);
        assert_eq!(nn[0].row, 1);
        assert_eq!(nn[0].distance, 1.0);
    }

    #[test]
    fn k_beyond_size_returns_everything_else() {
        let idx = line(&[0.0, 1.0, 10.0, 4.0]);
        let nn = idx.query_row(2, 10);
        assert_eq!(nn.iter().map(|n| n.row).collect::<Vec<_>>(), vec![3, 1, 0]);
    }

    #[test]
    fn equidistant_neighbours_resolve_to_lower_id() {
        let pts = array![[0.0], [1.0], [-1.0]];
        let idx = NeighborIndex::build(pts, vec![5, 7, 3]).unwrap();
        let nn = idx.query_row(0, 2);
        assert_eq!(nn[0].row, 2, "id 3 before id 7");
        assert_eq!(nn[1].row, 1);
    }

    #[test]
    fn duplicates_are_neighbours_but_self_is_not() {
        let idx = line(&[2.0, 2.0, 5.0]);
        let nn = idx.query_row(1, 1);
        assert_eq!(nn[0].row, 0);
        assert_eq!(nn[0].distance, 0.0);
    }

    #[test]
    fn rejects_tiny_inputs() {
        assert_eq!(
            NeighborIndex::build(Array2::zeros((1, 2)), vec![0]).unwrap_err(),
            NeighborError::TooFewPoints(1)
        );
        assert_eq!(
            NeighborIndex::build(Array2::zeros((0, 2)), vec![]).unwrap_err(),
            NeighborError::TooFewPoints(0)
        );
        assert!(matches!(
            NeighborIndex::build(Array2::zeros((3, 2)), vec![0]),
            Err(NeighborError::IdCountMismatch { .. })
        ));
    }

    #[test]
    fn query_point_checks_dimension() {
        let idx = line(&[0.0, 3.0]);
        assert!(idx.query_point(&[1.0, 2.0], 1).is_err());
        assert_eq!(idx.query_point(&[2.0], 1).unwrap()[0].row, 1);
    }

    #[test]
    fn filtered_queries_skip_disallowed_rows() {
        let idx = line(&[0.0, 1.0, 2.0, 3.0]);
        let nn = idx.query_row_where(0, 2, |r| r != 1);
        assert_eq!(nn.iter().map(|n| n.row).collect::<Vec<_>>(), vec![2, 3]);
    }
}
