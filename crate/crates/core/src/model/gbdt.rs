//! Multiclass gradient boosting with depth-limited regression trees on
//! softmax gradients. Splits are exact: every feature is presorted once and
//! each tree level is grown with one scan per feature.

use ndarray::{ArrayView1, ArrayView2};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub subsample: f64,
    pub lambda: f64,
    pub min_child_weight: f64,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            n_trees: 50,
            max_depth: 3,
            learning_rate: 0.1,
            subsample: 1.0,
            lambda: 1.0,
            min_child_weight: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, x: ArrayView1<'_, f64>) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf(v) => return v,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[feature] <= threshold { left } else { right },
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbdtModel {
    pub n_classes: usize,
    pub n_features: usize,
    pub base_scores: Vec<f64>,
    /// `rounds[t][class]`
    pub rounds: Vec<Vec<Tree>>,
    /// Total split gain per feature.
    pub gain: Vec<f64>,
    pub params: HyperParams,
}

pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let sum: f64 = exp.iter().sum();
    exp.into_iter().map(|e| e / sum).collect()
}

impl GbdtModel {
    pub fn raw_scores(&self, x: ArrayView1<'_, f64>) -> Vec<f64> {
        let mut s = self.base_scores.clone();
        for round in &self.rounds {
            for (c, tree) in round.iter().enumerate() {
                s[c] += tree.predict(x);
            }
        }
        s
    }

    pub fn predict_proba_row(&self, x: ArrayView1<'_, f64>) -> Vec<f64> {
        softmax(&self.raw_scores(x))
    }

    /// Gain importances normalized to sum 1; all zero if no split was made.
    pub fn importances(&self) -> Vec<f64> {
        let total: f64 = self.gain.iter().sum();
        if total > 0.0 {
            self.gain.iter().map(|g| g / total).collect()
        } else {
            vec![0.0; self.n_features]
        }
    }
}

/// Row order of every feature column, ascending by value then row.
fn presort(x: ArrayView2<'_, f64>) -> Vec<Vec<u32>> {
    (0..x.ncols())
        .map(|f| {
            let col = x.column(f);
            let mut order: Vec<u32> = (0..x.nrows() as u32).collect();
            order.sort_by(|&a, &b| col[a as usize].total_cmp(&col[b as usize]).then(a.cmp(&b)));
            order
        })
        .collect()
}

const NONE: u32 = u32::MAX;

#[derive(Clone, Copy)]
struct Best {
    gain: f64,
    feature: usize,
    threshold: f64,
}

struct Grower<'a, 'x> {
    x: ArrayView2<'x, f64>,
    sorted: &'a [Vec<u32>],
    params: &'a HyperParams,
}

impl Grower<'_, '_> {
    fn score(&self, g: f64, h: f64) -> f64 {
        g * g / (h + self.params.lambda)
    }

    fn leaf(&self, g: f64, h: f64) -> f64 {
        -g / (h + self.params.lambda) * self.params.learning_rate
    }

    /// Grows one tree on rows where `active[row]` holds.
    fn grow(&self, grad: &[f64], hess: &[f64], active: &[bool], gain_acc: &mut [f64]) -> Tree {
        let n = grad.len();
        let mut node_of: Vec<u32> = (0..n).map(|r| if active[r] { 0 } else { NONE }).collect();
        // (tree node index, G, H) for the nodes of the current level
        let (g0, h0) = (0..n)
            .filter(|&r| active[r])
            .fold((0.0, 0.0), |(g, h), r| (g + grad[r], h + hess[r]));
        let mut nodes = vec![Node::Leaf(self.leaf(g0, h0))];
        let mut level: Vec<(usize, f64, f64)> = vec![(0, g0, h0)];

        for _depth in 0..self.params.max_depth {
            let m = level.len();
            let mut best: Vec<Option<Best>> = vec![None; m];
            let mut gl = vec![0.0; m];
            let mut hl = vec![0.0; m];
            let mut last: Vec<Option<f64>> = vec![None; m];
            for (f, order) in self.sorted.iter().enumerate() {
                gl.iter_mut().for_each(|v| *v = 0.0);
                hl.iter_mut().for_each(|v| *v = 0.0);
                last.iter_mut().for_each(|v| *v = None);
                let col = self.x.column(f);
                for &r in order {
                    let r = r as usize;
                    let slot = node_of[r];
                    if slot == NONE {
                        continue;
                    }
                    let s = slot as usize;
                    let v = col[r];
                    if let Some(prev) = last[s] {
                        if v > prev {
                            let (_, g, h) = level[s];
                            let (hr, gr) = (h - hl[s], g - gl[s]);
                            if hl[s] >= self.params.min_child_weight
                                && hr >= self.params.min_child_weight
                            {
                                let gain =
                                    self.score(gl[s], hl[s]) + self.score(gr, hr) - self.score(g, h);
                                if best[s].is_none_or(|b| gain > b.gain) {
                                    best[s] = Some(Best {
                                        gain,
                                        feature: f,
                                        threshold: prev + (v - prev) / 2.0,
                                    });
                                }
                            }
                        }
                    }
                    gl[s] += grad[r];
                    hl[s] += hess[r];
                    last[s] = Some(v);
                }
            }

            let mut next: Vec<(usize, f64, f64)> = Vec::new();
            // level slot -> (left slot, right slot, split)
            let mut routes: Vec<Option<(u32, u32, usize, f64)>> = vec![None; m];
            for (s, b) in best.iter().enumerate() {
                let Some(b) = b.filter(|b| b.gain > 1e-12) else {
                    continue;
                };
                let left = nodes.len();
                nodes.push(Node::Leaf(0.0));
                nodes.push(Node::Leaf(0.0));
                nodes[level[s].0] = Node::Split {
                    feature: b.feature,
                    threshold: b.threshold,
                    left,
                    right: left + 1,
                };
                gain_acc[b.feature] += b.gain;
                routes[s] = Some((next.len() as u32, next.len() as u32 + 1, b.feature, b.threshold));
                next.push((left, 0.0, 0.0));
                next.push((left + 1, 0.0, 0.0));
            }
            if next.is_empty() {
                break;
            }
            for r in 0..n {
                let slot = node_of[r];
                if slot == NONE {
                    continue;
                }
                node_of[r] = match routes[slot as usize] {
                    None => NONE,
                    Some((l, rt, f, t)) => {
                        let s = if self.x[(r, f)] <= t { l } else { rt };
                        next[s as usize].1 += grad[r];
                        next[s as usize].2 += hess[r];
                        s
                    }
                };
            }
            for &(i, g, h) in &next {
                nodes[i] = Node::Leaf(self.leaf(g, h));
            }
            level = next;
        }
        Tree { nodes }
    }
}

/// Fits a softmax booster. `labels` must only hold values below `n_classes`
/// and every class should have at least one row.
pub fn fit(
    x: ArrayView2<'_, f64>,
    labels: &[usize],
    n_classes: usize,
    params: &HyperParams,
    seed: u64,
) -> GbdtModel {
    let n = x.nrows();
    let d = x.ncols();
    let mut counts = vec![0usize; n_classes];
    for &l in labels {
        counts[l] += 1;
    }
    let base_scores: Vec<f64> = counts
        .iter()
        .map(|&c| ((c.max(1)) as f64 / n.max(1) as f64).ln())
        .collect();
    let sorted = presort(x);
    let grower = Grower {
        x,
        sorted: &sorted,
        params,
    };
    let mut scores: Vec<Vec<f64>> = vec![base_scores.clone(); n];
    let mut gain = vec![0.0; d];
    let mut rounds = Vec::with_capacity(params.n_trees);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let take = ((params.subsample * n as f64).round() as usize).clamp(1.min(n), n);
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];

    for _ in 0..params.n_trees {
        let mut active = vec![take == n; n];
        if take < n {
            for r in sample(&mut rng, n, take) {
                active[r] = true;
            }
        }
        let probs: Vec<Vec<f64>> = scores.iter().map(|s| softmax(s)).collect();
        let mut round = Vec::with_capacity(n_classes);
        for c in 0..n_classes {
            for r in 0..n {
                let p = probs[r][c];
                let y = if labels[r] == c { 1.0 } else { 0.0 };
                grad[r] = p - y;
                hess[r] = (p * (1.0 - p)).max(1e-16);
            }
            round.push(grower.grow(&grad, &hess, &active, &mut gain));
        }
        for (r, s) in scores.iter_mut().enumerate() {
            for (c, tree) in round.iter().enumerate() {
                s[c] += tree.predict(x.row(r));
            }
        }
        rounds.push(round);
    }
    GbdtModel {
        n_classes,
        n_features: d,
        base_scores,
        rounds,
        gain,
        params: *params,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    #[test]
    fn step_function_is_learned() {
        let x = Array2::from_shape_fn((40, 1), |(i, _)| i as f64);
        let labels: Vec<usize> = (0..40).map(|i| usize::from(i >= 20)).collect();
        let m = fit(x.view(), &labels, 2, &HyperParams::default(), 0);
        for r in 0..40 {
            let p = m.predict_proba_row(x.row(r));
            assert!(p[labels[r]] > 0.9, "row {r}: {p:?}");
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let root = &m.rounds[0][0].nodes[0];
        assert!(matches!(root, Node::Split { feature: 0, threshold, .. } if *threshold == 19.5));
    }

    #[test]
    fn fit_is_deterministic() {
        let x = Array2::from_shape_fn((30, 2), |(i, j)| ((i * 7 + j * 3) % 11) as f64);
        let labels: Vec<usize> = (0..30).map(|i| i % 3).collect();
        let p = HyperParams {
            subsample: 0.7,
            ..HyperParams::default()
        };
        assert_eq!(fit(x.view(), &labels, 3, &p, 5), fit(x.view(), &labels, 3, &p, 5));
    }

    #[test]
    fn constant_features_yield_no_splits() {
        let x = Array2::from_elem((10, 2), 1.0);
        let labels: Vec<usize> = (0..10).map(|i| i % 2).collect();
        let m = fit(x.view(), &labels, 2, &HyperParams::default(), 0);
        assert_eq!(m.importances(), vec![0.0, 0.0]);
    }
}
