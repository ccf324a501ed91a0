//! Random forest of bootstrapped CART trees.

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{grow_cart, CartParams, TreeNode};
use super::Table;
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    /// Fraction of features tried at each node.
    pub max_features: f64,
    pub bootstrap: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<TreeNode>,
    pub tree_seeds: Vec<u64>,
    pub max_features: f64,
}

impl ForestModel {
    /// Mean of the trees' leaf class fractions.
    pub fn predict_one(&self, x: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict(x)).sum::<f64>() / self.trees.len() as f64
    }
}

/// Trees are independent given their seeds, so they are grown in parallel.
pub fn fit_random_forest(t: &Table, p: &ForestParams, seed: u64) -> Result<ForestModel> {
    if t.is_empty() {
        return Err(Error::domain("random forest needs at least one row"));
    }
    if p.n_trees == 0 {
        return Err(Error::config("random forest needs at least one tree"));
    }
    if t.is_single_class() {
        log::warn!("random forest trained on single-class data");
    }
    let n = t.len();
    let per_node = ((p.max_features * t.n_features() as f64).ceil() as usize).clamp(1, t.n_features());
    let cart = CartParams { max_depth: p.max_depth, min_samples_leaf: p.min_samples_leaf, max_features: per_node };
    let tree_seeds: Vec<u64> = (0..p.n_trees).map(|i| rng::sub_seed(seed, &format!("rf.tree.{i}"))).collect();
    let trees = tree_seeds
        .par_iter()
        .map(|&s| {
            let mut r = rng::seeded(s);
            let idx: Vec<usize> =
                if p.bootstrap { (0..n).map(|_| r.gen_range(0..n)).collect() } else { (0..n).collect() };
            grow_cart(t, &idx, &cart, &mut r)
        })
        .collect();
    Ok(ForestModel { trees, tree_seeds, max_features: p.max_features })
}
