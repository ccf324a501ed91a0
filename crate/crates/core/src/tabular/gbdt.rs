//! Gradient-boosted regression trees on the log-odds with second-order leaf
//! weights.
//!
//! With `p = σ(F)`, each round uses `g = p - y`, `h = p(1 - p)`. A leaf holding
//! rows `I` gets `w = -G/(H + λ)` with `G = Σ_I g`, `H = Σ_I h`, and a split is
//! scored by `G_L²/(H_L+λ) + G_R²/(H_R+λ) - G²/(H+λ)`.

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use super::tree::{partition, sorted_by, Split, TreeNode, MIN_GAIN};
use super::Table;
use crate::error::{Error, Result};
use crate::rng;
use crate::seqnn::linalg::sigmoid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Growth {
    /// Expand every splittable node of a level before the next level.
    LevelWise,
    /// Always expand the leaf with the largest gain.
    LeafWise,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GbdtParams {
    pub n_rounds: usize,
    pub learning_rate: f64,
    pub growth: Growth,
    /// Depth cap; 0 means unlimited (leaf-wise only).
    pub max_depth: usize,
    /// Leaf budget for leaf-wise growth.
    pub max_leaves: usize,
    pub lambda: f64,
    pub min_samples_leaf: usize,
    /// Row fraction drawn without replacement for each round.
    pub subsample: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbdtModel {
    pub base_score: f64,
    pub learning_rate: f64,
    pub growth: Growth,
    pub trees: Vec<TreeNode>,
}

impl GbdtModel {
    pub fn raw_score(&self, x: &[f64]) -> f64 {
        self.base_score + self.learning_rate * self.trees.iter().map(|t| t.predict(x)).sum::<f64>()
    }

    pub fn predict_one(&self, x: &[f64]) -> f64 {
        sigmoid(self.raw_score(x))
    }
}

/// Probabilities are clamped here before taking the prior log-odds.
const BASE_CLAMP: f64 = 1e-6;

pub fn fit_gbdt(t: &Table, p: &GbdtParams, seed: u64) -> Result<GbdtModel> {
    if t.is_empty() {
        return Err(Error::domain("gradient boosting needs at least one row"));
    }
    if !(p.learning_rate > 0.0) {
        return Err(Error::config("learning rate must be > 0"));
    }
    if !(p.lambda >= 0.0) || !(p.subsample > 0.0 && p.subsample <= 1.0) {
        return Err(Error::config("lambda must be >= 0 and subsample in (0, 1]"));
    }
    if t.is_single_class() {
        log::warn!("gradient boosting trained on single-class data");
    }
    let n = t.len();
    let mean = t.labels().iter().map(|&y| y as f64).sum::<f64>() / n as f64;
    let prior = mean.clamp(BASE_CLAMP, 1.0 - BASE_CLAMP);
    let base_score = (prior / (1.0 - prior)).ln();
    let mut score = vec![base_score; n];
    let mut trees = Vec::with_capacity(p.n_rounds);
    let mut r = rng::stream(seed, "gbdt.subsample");
    let n_sub = ((p.subsample * n as f64).round() as usize).clamp(1, n);
    for _ in 0..p.n_rounds {
        let mut g = vec![0.0; n];
        let mut h = vec![0.0; n];
        for i in 0..n {
            let prob = sigmoid(score[i]);
            g[i] = prob - t.label(i) as f64;
            h[i] = prob * (1.0 - prob);
        }
        let idx: Vec<usize> = if n_sub < n {
            let mut s = sample(&mut r, n, n_sub).into_vec();
            s.sort_unstable();
            s
        } else {
            (0..n).collect()
        };
        let stats = Stats { g: &g, h: &h, lambda: p.lambda, min_leaf: p.min_samples_leaf.max(1) };
        let tree = match p.growth {
            Growth::LevelWise => grow_level(t, &idx, &stats, p.max_depth, 0),
            Growth::LeafWise => grow_leafwise(t, &idx, &stats, p.max_leaves.max(1), p.max_depth),
        };
        for (i, s) in score.iter_mut().enumerate() {
            *s += p.learning_rate * tree.predict(t.row(i));
        }
        trees.push(tree);
    }
    Ok(GbdtModel { base_score, learning_rate: p.learning_rate, growth: p.growth, trees })
}

struct Stats<'a> {
    g: &'a [f64],
    h: &'a [f64],
    lambda: f64,
    min_leaf: usize,
}

impl Stats<'_> {
    fn sums(&self, idx: &[usize]) -> (f64, f64) {
        idx.iter().fold((0.0, 0.0), |(a, b), &i| (a + self.g[i], b + self.h[i]))
    }

    fn leaf_value(&self, idx: &[usize]) -> f64 {
        let (g, h) = self.sums(idx);
        let denom = h + self.lambda;
        if denom > 0.0 {
            -g / denom
        } else {
            0.0
        }
    }

    fn score(&self, g: f64, h: f64) -> f64 {
        let denom = h + self.lambda;
        if denom > 0.0 {
            g * g / denom
        } else {
            0.0
        }
    }

    fn best_split(&self, t: &Table, idx: &[usize]) -> Option<Split> {
        let n = idx.len();
        let (gt, ht) = self.sums(idx);
        let parent = self.score(gt, ht);
        let mut best: Option<(usize, f64, f64)> = None;
        for f in 0..t.n_features() {
            let order = sorted_by(t, idx, f);
            let (mut gl, mut hl) = (0.0, 0.0);
            for k in 1..n {
                gl += self.g[order[k - 1]];
                hl += self.h[order[k - 1]];
                let (a, b) = (t.value(order[k - 1], f), t.value(order[k], f));
                if a == b || k < self.min_leaf || n - k < self.min_leaf {
                    continue;
                }
                let gain = self.score(gl, hl) + self.score(gt - gl, ht - hl) - parent;
                if best.is_none_or(|(_, _, s)| gain > s) {
                    best = Some((f, a + (b - a) / 2.0, gain));
                }
            }
        }
        let (feature, threshold, gain) = best?;
        if gain <= MIN_GAIN {
            return None;
        }
        let (left, right) = partition(t, idx, feature, threshold);
        Some(Split { feature, threshold, gain, left, right })
    }
}

fn grow_level(t: &Table, idx: &[usize], s: &Stats, max_depth: usize, depth: usize) -> TreeNode {
    if depth < max_depth {
        if let Some(sp) = s.best_split(t, idx) {
            return TreeNode::Split {
                feature: sp.feature,
                threshold: sp.threshold,
                left: Box::new(grow_level(t, &sp.left, s, max_depth, depth + 1)),
                right: Box::new(grow_level(t, &sp.right, s, max_depth, depth + 1)),
            };
        }
    }
    TreeNode::Leaf { value: s.leaf_value(idx) }
}

struct ArenaNode {
    idx: Vec<usize>,
    depth: usize,
    candidate: Option<Split>,
    children: Option<(usize, usize, usize, f64)>,
}

fn grow_leafwise(t: &Table, idx: &[usize], s: &Stats, max_leaves: usize, max_depth: usize) -> TreeNode {
    let can_split = |d: usize| max_depth == 0 || d < max_depth;
    let root_split = if can_split(0) { s.best_split(t, idx) } else { None };
    let mut arena = vec![ArenaNode { idx: idx.to_vec(), depth: 0, candidate: root_split, children: None }];
    let mut leaves = 1;
    while leaves < max_leaves {
        // Largest gain wins; ties go to the earliest-created leaf.
        let pick = arena.iter().enumerate().filter_map(|(i, a)| a.candidate.as_ref().map(|c| (i, c.gain))).fold(
            None,
            |acc: Option<(usize, f64)>, (i, g)| match acc {
                Some((_, best)) if best >= g => acc,
                _ => Some((i, g)),
            },
        );
        let Some((k, _)) = pick else { break };
        let sp = arena[k].candidate.take().expect("picked candidate");
        let depth = arena[k].depth + 1;
        for part in [sp.left, sp.right] {
            let candidate = if can_split(depth) { s.best_split(t, &part) } else { None };
            arena.push(ArenaNode { idx: part, depth, candidate, children: None });
        }
        let n = arena.len();
        arena[k].children = Some((sp.feature, n - 2, n - 1, sp.threshold));
        leaves += 1;
    }
    build(&arena, 0, s)
}

fn build(arena: &[ArenaNode], k: usize, s: &Stats) -> TreeNode {
    match arena[k].children {
        Some((feature, l, r, threshold)) => TreeNode::Split {
            feature,
            threshold,
            left: Box::new(build(arena, l, s)),
            right: Box::new(build(arena, r, s)),
        },
        None => TreeNode::Leaf { value: s.leaf_value(&arena[k].idx) },
    }
}

/// Mean logistic loss of `model` on `t`.
pub fn logistic_loss(model: &GbdtModel, t: &Table) -> f64 {
    let total: f64 = (0..t.len())
        .map(|i| {
            let f = model.raw_score(t.row(i));
            let y = t.label(i) as f64;
            // log(1 + e^f) - y f, computed stably.
            f.max(0.0) + (-f.abs()).exp().ln_1p() - y * f
        })
        .sum();
    total / t.len() as f64
}
