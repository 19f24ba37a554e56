//! Binary random-forest classifier built from Gini-impurity CART trees.
//!
//! Split search scans midpoints between consecutive distinct values of each
//! sampled feature. Among equal gains the lowest feature index wins, then the
//! lowest threshold. Each tree draws its bootstrap sample and per-node feature
//! order from its own stream of the root seed, so the forest is reproducible
//! regardless of how trees are scheduled across threads.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, seeded, STREAM_FOREST};

use super::ForestHyper;

/// Gini impurity `1 − p₀² − p₁²` of a 0/1 label multiset. Empty input scores 0.
pub fn gini(labels: &[u8]) -> f64 {
    let ones = labels.iter().filter(|&&l| l == 1).count();
    gini_counts(labels.len() - ones, ones)
}

fn gini_counts(zeros: usize, ones: usize) -> f64 {
    let n = (zeros + ones) as f64;
    if n == 0.0 {
        return 0.0;
    }
    let p0 = zeros as f64 / n;
    let p1 = ones as f64 / n;
    1.0 - p0 * p0 - p1 * p1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    /// Rows with `x[feature] < threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    /// Class probabilities `[p(0), p(1)]`.
    Leaf { proba: [f64; 2] },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    /// Training samples (with bootstrap multiplicity) that reached this node.
    pub samples: usize,
    pub impurity: f64,
    #[serde(flatten)]
    pub kind: NodeKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    /// Root at index 0.
    pub nodes: Vec<Node>,
}

impl DecisionTree {
    pub fn proba(&self, row: &[f64]) -> f64 {
        let mut idx = 0;
        loop {
            match &self.nodes[idx].kind {
                NodeKind::Leaf { proba } => return proba[1],
                NodeKind::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => idx = if row[*feature] < *threshold { *left } else { *right },
            }
        }
    }

    /// Sample-weighted impurity decrease per feature, divided by root samples.
    pub fn impurity_decrease(&self, n_features: usize) -> Vec<f64> {
        let mut out = vec![0.0; n_features];
        let root = self.nodes.first().map_or(0, |n| n.samples);
        if root == 0 {
            return out;
        }
        for node in &self.nodes {
            if let NodeKind::Split {
                feature, left, right, ..
            } = node.kind
            {
                let (l, r) = (&self.nodes[left], &self.nodes[right]);
                out[feature] +=
                    node.samples as f64 * node.impurity - l.samples as f64 * l.impurity - r.samples as f64 * r.impurity;
            }
        }
        out.iter_mut().for_each(|v| *v /= root as f64);
        out
    }

    fn validate(&self, n_features: usize) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(Error::Invalid("tree without nodes".into()));
        }
        for (i, node) in self.nodes.iter().enumerate() {
            match &node.kind {
                NodeKind::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    if *feature >= n_features {
                        return Err(Error::Invalid(format!(
                            "split references driver {feature} of {n_features}"
                        )));
                    }
                    // children come after their parent, so traversal terminates
                    if *left <= i || *right <= i || *left >= self.nodes.len() || *right >= self.nodes.len() {
                        return Err(Error::Invalid(format!("node {i} has invalid children")));
                    }
                    if !threshold.is_finite() {
                        return Err(Error::Invalid(format!("node {i} has a non-finite threshold")));
                    }
                }
                NodeKind::Leaf { proba } => {
                    if proba.iter().any(|p| !(0.0..=1.0).contains(p)) || ((proba[0] + proba[1]) - 1.0).abs() > 1e-9 {
                        return Err(Error::Invalid(format!("leaf {i} probabilities do not sum to 1")));
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub trees: Vec<DecisionTree>,
}

impl Forest {
    /// Mean class-1 probability across trees.
    pub fn proba(&self, row: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.proba(row)).sum::<f64>() / self.trees.len() as f64
    }

    /// Mean decrease in impurity, each tree normalized to unit sum before averaging.
    pub fn feature_importances(&self, n_features: usize) -> Vec<f64> {
        let mut total = vec![0.0; n_features];
        for tree in &self.trees {
            let dec = tree.impurity_decrease(n_features);
            let sum: f64 = dec.iter().sum();
            if sum > 0.0 {
                total.iter_mut().zip(&dec).for_each(|(t, d)| *t += d / sum);
            }
        }
        let n = self.trees.len().max(1) as f64;
        total.iter_mut().for_each(|v| *v /= n);
        total
    }

    pub fn validate(&self, n_features: usize) -> Result<()> {
        if self.trees.is_empty() {
            return Err(Error::Invalid("forest without trees".into()));
        }
        self.trees.iter().try_for_each(|t| t.validate(n_features))
    }
}

pub fn fit_forest(rows: &[Vec<f64>], labels: &[u8], hyper: &ForestHyper, seed: u64) -> Forest {
    let d = rows.first().map_or(0, Vec::len);
    let max_features = hyper.effective_max_features(d);
    let trees = (0..hyper.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = seeded(derive_seed(seed, STREAM_FOREST), t as u64);
            let sample: Vec<usize> = if hyper.bootstrap {
                (0..rows.len()).map(|_| rng.random_range(0..rows.len())).collect()
            } else {
                (0..rows.len()).collect()
            };
            TreeBuilder {
                rows,
                labels,
                max_depth: hyper.max_depth,
                min_leaf: hyper.min_leaf.max(1),
                max_features,
                rng,
                nodes: Vec::new(),
            }
            .build(sample)
        })
        .collect();
    Forest { trees }
}

struct TreeBuilder<'a> {
    rows: &'a [Vec<f64>],
    labels: &'a [u8],
    max_depth: usize,
    min_leaf: usize,
    max_features: usize,
    rng: ChaCha8Rng,
    nodes: Vec<Node>,
}

#[derive(Clone, Copy)]
struct Candidate {
    gain: f64,
    feature: usize,
    threshold: f64,
}

impl Candidate {
    fn beats(&self, other: &Option<Candidate>) -> bool {
        match other {
            None => true,
            Some(o) => {
                self.gain > o.gain
                    || (self.gain == o.gain
                        && (self.feature < o.feature || (self.feature == o.feature && self.threshold < o.threshold)))
            }
        }
    }
}

impl TreeBuilder<'_> {
    fn build(mut self, sample: Vec<usize>) -> DecisionTree {
        self.grow(sample, 0);
        DecisionTree { nodes: self.nodes }
    }

    fn counts(&self, idx: &[usize]) -> (usize, usize) {
        let ones = idx.iter().filter(|&&i| self.labels[i] == 1).count();
        (idx.len() - ones, ones)
    }

    /// Appends the subtree for `idx` and returns its root index.
    fn grow(&mut self, idx: Vec<usize>, depth: usize) -> usize {
        let (zeros, ones) = self.counts(&idx);
        let impurity = gini_counts(zeros, ones);
        let me = self.nodes.len();
        let n = idx.len();
        let leaf = NodeKind::Leaf {
            proba: if n == 0 {
                [1.0, 0.0]
            } else {
                let p1 = ones as f64 / n as f64;
                [1.0 - p1, p1]
            },
        };
        self.nodes.push(Node {
            samples: n,
            impurity,
            kind: leaf,
        });
        if depth >= self.max_depth || impurity == 0.0 || n < 2 * self.min_leaf {
            return me;
        }
        let Some(best) = self.best_split(&idx, impurity) else {
            return me;
        };
        let (left_idx, right_idx): (Vec<usize>, Vec<usize>) = idx
            .into_iter()
            .partition(|&i| self.rows[i][best.feature] < best.threshold);
        let left = self.grow(left_idx, depth + 1);
        let right = self.grow(right_idx, depth + 1);
        self.nodes[me].kind = NodeKind::Split {
            feature: best.feature,
            threshold: best.threshold,
            left,
            right,
        };
        me
    }

    fn best_split(&mut self, idx: &[usize], parent_impurity: f64) -> Option<Candidate> {
        let d = self.rows[0].len();
        let mut order: Vec<usize> = (0..d).collect();
        order.shuffle(&mut self.rng);
        let mut best: Option<Candidate> = None;
        for (visited, &feature) in order.iter().enumerate() {
            // keep looking past max_features until some split improves impurity
            if visited >= self.max_features && best.is_some() {
                break;
            }
            if let Some(c) = self.best_split_on(idx, feature, parent_impurity) {
                if c.beats(&best) {
                    best = Some(c);
                }
            }
        }
        best
    }

    fn best_split_on(&self, idx: &[usize], feature: usize, parent_impurity: f64) -> Option<Candidate> {
        let mut sorted: Vec<(f64, u8)> = idx.iter().map(|&i| (self.rows[i][feature], self.labels[i])).collect();
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
        let n = sorted.len();
        let total_ones = sorted.iter().filter(|s| s.1 == 1).count();
        let mut left_ones = 0;
        let mut best: Option<Candidate> = None;
        for k in 1..n {
            left_ones += usize::from(sorted[k - 1].1 == 1);
            if sorted[k - 1].0 == sorted[k].0 {
                continue;
            }
            let (nl, nr) = (k, n - k);
            if nl < self.min_leaf || nr < self.min_leaf {
                continue;
            }
            let right_ones = total_ones - left_ones;
            let child = (nl as f64 * gini_counts(nl - left_ones, left_ones)
                + nr as f64 * gini_counts(nr - right_ones, right_ones))
                / n as f64;
            let gain = parent_impurity - child;
            if gain <= 0.0 {
                continue;
            }
            let threshold = 0.5 * (sorted[k - 1].0 + sorted[k].0);
            let c = Candidate {
                gain,
                feature,
                threshold,
            };
            if c.beats(&best) {
                best = Some(c);
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gini_hand_values() {
        assert_eq!(gini(&[1, 1, 1]), 0.0);
        assert_eq!(gini(&[1, 1, 0, 0]), 0.5);
        assert_eq!(gini(&[1, 0, 0, 0]), 0.375);
    }

    fn stump() -> DecisionTree {
        DecisionTree {
            nodes: vec![
                Node {
                    samples: 4,
                    impurity: 0.5,
                    kind: NodeKind::Split {
                        feature: 0,
                        threshold: 5.0,
                        left: 1,
                        right: 2,
                    },
                },
                Node {
                    samples: 2,
                    impurity: 0.0,
                    kind: NodeKind::Leaf { proba: [1.0, 0.0] },
                },
                Node {
                    samples: 2,
                    impurity: 0.0,
                    kind: NodeKind::Leaf { proba: [0.0, 1.0] },
                },
            ],
        }
    }

    #[test]
    fn stump_follows_single_path() {
        let t = stump();
        assert_eq!(t.proba(&[7.0]), 1.0);
        assert_eq!(t.proba(&[4.0]), 0.0);
        assert_eq!(t.proba(&[5.0]), 1.0);
        assert_eq!(t.impurity_decrease(1), vec![0.5]);
    }

    #[test]
    fn separable_data_is_fit_exactly() {
        let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64, (i * 7 % 5) as f64]).collect();
        let labels: Vec<u8> = (0..20).map(|i| u8::from(i >= 10)).collect();
        let hyper = ForestHyper {
            n_trees: 1,
            bootstrap: false,
            max_features: Some(2),
            ..ForestHyper::default()
        };
        let f = fit_forest(&rows, &labels, &hyper, 3);
        let tree = &f.trees[0];
        match tree.nodes[0].kind {
            NodeKind::Split { feature, threshold, .. } => {
                assert_eq!(feature, 0);
                assert_eq!(threshold, 9.5);
            }
            _ => panic!("expected a split at the root"),
        }
        for (r, &l) in rows.iter().zip(&labels) {
            assert_eq!(f.proba(r), l as f64);
        }
        let imp = f.feature_importances(2);
        assert_eq!(imp, vec![1.0, 0.0]);
    }

    #[test]
    fn min_leaf_and_depth_are_respected() {
        let rows: Vec<Vec<f64>> = (0..40).map(|i| vec![i as f64]).collect();
        let labels: Vec<u8> = (0..40).map(|i| (i % 2) as u8).collect();
        let hyper = ForestHyper {
            n_trees: 3,
            max_depth: 3,
            min_leaf: 4,
            ..ForestHyper::default()
        };
        let f = fit_forest(&rows, &labels, &hyper, 9);
        for tree in &f.trees {
            tree.validate(1).unwrap();
            for node in &tree.nodes {
                if let NodeKind::Leaf { .. } = node.kind {
                    assert!(node.samples >= 4);
                }
            }
            assert!(tree.nodes.len() <= 15);
        }
    }

    #[test]
    fn forest_is_deterministic() {
        let rows: Vec<Vec<f64>> = (0..60)
            .map(|i| vec![(i * 13 % 17) as f64, (i * 5 % 11) as f64, i as f64])
            .collect();
        let labels: Vec<u8> = rows.iter().map(|r| u8::from(r[0] + r[1] > 12.0)).collect();
        let hyper = ForestHyper {
            n_trees: 10,
            ..ForestHyper::default()
        };
        assert_eq!(
            fit_forest(&rows, &labels, &hyper, 5),
            fit_forest(&rows, &labels, &hyper, 5)
        );
        assert_ne!(
            fit_forest(&rows, &labels, &hyper, 5),
            fit_forest(&rows, &labels, &hyper, 6)
        );
    }
}
