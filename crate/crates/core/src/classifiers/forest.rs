//! Bagged random forest over gini CART trees.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tree::{grow, SplitCriterion, Tree, TreeParams};
use crate::features::FeatureVector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub trees: usize,
    /// 0 means unlimited depth.
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Bootstrap-resample rows per tree (true for a proper forest; false
    /// trains every tree on the full sample).
    pub bootstrap: bool,
    /// Fraction of features considered per split; `None` uses √V.
    pub feature_fraction: Option<f64>,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            trees: 100,
            max_depth: 16,
            min_leaf: 1,
            bootstrap: true,
            feature_fraction: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    pub trees: Vec<Tree>,
}

/// Train one forest on a binary label column. Each tree draws its own
/// bootstrap sample and per-node feature subsets from `rng`, so the whole
/// forest is a function of the incoming stream.
pub fn train_forest(
    columns: &[Vec<f64>],
    y: &[bool],
    params: &ForestParams,
    rng: &mut ChaCha8Rng,
) -> RandomForest {
    let n = y.len();
    let width = columns.len();
    let targets: Vec<f64> = y.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
    let features_per_split = match params.feature_fraction {
        Some(fraction) => (width as f64 * fraction).round().max(1.0) as usize,
        None => (width as f64).sqrt().round().max(1.0) as usize,
    }
    .min(width.max(1));
    let tree_params = TreeParams {
        criterion: SplitCriterion::Gini,
        max_depth: params.max_depth,
        min_leaf: params.min_leaf,
        features_per_split: (features_per_split < width).then_some(features_per_split),
    };
    let mut trees = Vec::with_capacity(params.trees);
    for _ in 0..params.trees {
        let rows: Vec<usize> = if params.bootstrap {
            (0..n).map(|_| rng.gen_range(0..n)).collect()
        } else {
            (0..n).collect()
        };
        trees.push(grow(columns, &targets, &rows, &tree_params, rng));
    }
    RandomForest { trees }
}

impl RandomForest {
    /// Fraction of trees voting positive (leaf fraction above one half).
    pub fn vote_fraction(&self, x: &FeatureVector) -> f64 {
        let votes = self
            .trees
            .iter()
            .filter(|tree| tree.predict(x) > 0.5)
            .count();
        votes as f64 / self.trees.len() as f64
    }

    /// Signed decision score: positive iff a strict majority votes yes.
    pub fn margin(&self, x: &FeatureVector) -> f64 {
        self.vote_fraction(x) - 0.5
    }
}
