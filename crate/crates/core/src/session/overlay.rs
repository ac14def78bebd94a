//! Placement of points that are not part of an embedding.

use serde::{Deserialize, Serialize};

use crate::dataset::InstanceId;
use crate::neighbors::NeighborIndex;

pub const ANCHORS: usize = 3;
const WEIGHT_EPS: f64 = 1e-9;

/// Weighted centroid of the 2-D positions of the nearest `ANCHORS` rows of
/// `index`, with weights `1 / (distance + eps)`. A zero distance copies that
/// anchor's position exactly.
pub fn anchor_position(index: &NeighborIndex, coords: &[[f64; 2]], point: &[f64]) -> [f64; 2] {
    let nn = index.query_point_where(point, ANCHORS, |_| true);
    if let Some(hit) = nn.iter().find(|x| x.distance == 0.0) {
        return coords[hit.row];
    }
    let mut acc = [0.0; 2];
    let mut total = 0.0;
    for x in &nn {
        let w = 1.0 / (x.distance + WEIGHT_EPS);
        acc[0] += w * coords[x.row][0];
        acc[1] += w * coords[x.row][1];
        total += w;
    }
    [acc[0] / total, acc[1] / total]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlayPoint {
    pub id: InstanceId,
    pub position: [f64; 2],
    pub true_class: usize,
    pub predicted_class: usize,
    pub correct: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestConfusionOverlay {
    pub n_neighbors: usize,
    pub points: Vec<OverlayPoint>,
}

impl TestConfusionOverlay {
    pub fn misclassified(&self) -> usize {
        self.points.iter().filter(|p| !p.correct).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn coincident_point_copies_anchor() {
        let idx = NeighborIndex::build(array![[0.0], [1.0], [5.0]], vec![0, 1, 2]).unwrap();
        let coords = [[3.0, 4.0], [7.0, 1.0], [0.5, 0.5]];
        assert_eq!(anchor_position(&idx, &coords, &[1.0]), [7.0, 1.0]);
    }

    #[test]
    fn midway_point_lands_between() {
        let idx = NeighborIndex::build(array![[0.0], [2.0]], vec![0, 1]).unwrap();
        let coords = [[0.0, 0.0], [4.0, 2.0]];
        let p = anchor_position(&idx, &coords, &[1.0]);
        assert!((p[0] - 2.0).abs() < 1e-9 && (p[1] - 1.0).abs() < 1e-9);
    }
}
