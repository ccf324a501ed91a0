//! Binary decision trees: node type, exact sorted split search, CART growth.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::Table;
use crate::rng::Rng;

/// Improvements smaller than this are treated as ties with "no split".
pub(crate) const MIN_GAIN: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TreeNode {
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    Leaf {
        value: f64,
    },
}

impl TreeNode {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf { value } => return *value,
                TreeNode::Split { feature, threshold, left, right } => {
                    node = if x[*feature] <= *threshold { left } else { right };
                }
            }
        }
    }

    /// Number of split levels on the longest path (a lone leaf has depth 0).
    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub fn n_leaves(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Split { left, right, .. } => left.n_leaves() + right.n_leaves(),
        }
    }

    /// Adds one to `counts[feature]` for every split node.
    pub fn split_counts(&self, counts: &mut [usize]) {
        if let TreeNode::Split { feature, left, right, .. } = self {
            counts[*feature] += 1;
            left.split_counts(counts);
            right.split_counts(counts);
        }
    }
}

/// A chosen split and the partition it induces.
#[derive(Debug, Clone)]
pub(crate) struct Split {
    pub feature: usize,
    pub threshold: f64,
    /// Criterion improvement (larger is better).
    pub gain: f64,
    pub left: Vec<usize>,
    pub right: Vec<usize>,
}

/// `idx` stably sorted by the value of `feature`.
pub(crate) fn sorted_by(t: &Table, idx: &[usize], feature: usize) -> Vec<usize> {
    let mut s = idx.to_vec();
    s.sort_by(|&a, &b| t.value(a, feature).total_cmp(&t.value(b, feature)));
    s
}

pub(crate) fn partition(t: &Table, idx: &[usize], feature: usize, threshold: f64) -> (Vec<usize>, Vec<usize>) {
    idx.iter().partition(|&&i| t.value(i, feature) <= threshold)
}

/// `n * gini` for a node with `n1` positives out of `n`.
pub fn weighted_gini(n1: usize, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let (n1, n) = (n1 as f64, n as f64);
    let n0 = n - n1;
    n - (n1 * n1 + n0 * n0) / n
}

/// Best Gini split of `idx` over `features`. Candidate thresholds are
/// midpoints between adjacent distinct values; ties keep the first candidate
/// in (feature order, ascending threshold).
pub(crate) fn best_gini_split(t: &Table, idx: &[usize], features: &[usize], min_leaf: usize) -> Option<Split> {
    let n = idx.len();
    let n1 = idx.iter().filter(|&&i| t.label(i) == 1).count();
    let parent = weighted_gini(n1, n);
    let mut best: Option<(usize, f64, f64)> = None;
    for &f in features {
        let order = sorted_by(t, idx, f);
        let mut left1 = 0;
        for k in 1..n {
            left1 += (t.label(order[k - 1]) == 1) as usize;
            let (a, b) = (t.value(order[k - 1], f), t.value(order[k], f));
            if a == b || k < min_leaf || n - k < min_leaf {
                continue;
            }
            let score = weighted_gini(left1, k) + weighted_gini(n1 - left1, n - k);
            if best.is_none_or(|(_, _, s)| score < s) {
                best = Some((f, a + (b - a) / 2.0, score));
            }
        }
    }
    let (feature, threshold, score) = best?;
    let gain = parent - score;
    if gain <= MIN_GAIN {
        return None;
    }
    let (left, right) = partition(t, idx, feature, threshold);
    Some(Split { feature, threshold, gain, left, right })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CartParams {
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    /// Features considered at each node; all when >= the feature count.
    pub max_features: usize,
}

/// Classification tree whose leaves hold the positive-class fraction.
/// `rng` drives the per-node feature subset and is only consulted when
/// `max_features` is below the feature count.
pub fn grow_cart(t: &Table, idx: &[usize], p: &CartParams, rng: &mut Rng) -> TreeNode {
    grow_cart_at(t, idx, p, rng, 0)
}

fn grow_cart_at(t: &Table, idx: &[usize], p: &CartParams, rng: &mut Rng, depth: usize) -> TreeNode {
    let n1 = idx.iter().filter(|&&i| t.label(i) == 1).count();
    let leaf = TreeNode::Leaf { value: n1 as f64 / idx.len() as f64 };
    if depth >= p.max_depth || n1 == 0 || n1 == idx.len() {
        return leaf;
    }
    let nf = t.n_features();
    let mut features: Vec<usize> = (0..nf).collect();
    if p.max_features < nf {
        features.shuffle(rng);
        features.truncate(p.max_features.max(1));
        features.sort_unstable();
    }
    match best_gini_split(t, idx, &features, p.min_samples_leaf.max(1)) {
        None => leaf,
        Some(s) => TreeNode::Split {
            feature: s.feature,
            threshold: s.threshold,
            left: Box::new(grow_cart_at(t, &s.left, p, rng, depth + 1)),
            right: Box::new(grow_cart_at(t, &s.right, p, rng, depth + 1)),
        },
    }
}
