//! Gradient-boosted shallow trees with logistic loss.
//!
//! Each round fits a variance-criterion tree to the current residuals
//! `y - p` and replaces its leaf values with a Newton step
//! `Σ residual / Σ p(1-p)` over the rows in the leaf, then advances the
//! per-row scores by `learning_rate * leaf_value`. No row or feature
//! subsampling is used, so training is deterministic outright.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tree::{grow, SplitCriterion, Tree, TreeParams};
use crate::features::FeatureVector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbmParams {
    pub rounds: usize,
    pub learning_rate: f64,
    /// Depth cap for each boosted tree (0 = unlimited, not recommended).
    pub stump_depth: usize,
}

impl Default for GbmParams {
    fn default() -> Self {
        Self {
            rounds: 100,
            learning_rate: 0.1,
            stump_depth: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbmModel {
    /// Log-odds of the training prior, the boosting starting point.
    pub base_score: f64,
    pub learning_rate: f64,
    pub trees: Vec<Tree>,
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Train one boosted model on a binary label column.
pub fn train_gbm(
    columns: &[Vec<f64>],
    y: &[bool],
    params: &GbmParams,
    rng: &mut ChaCha8Rng,
) -> GbmModel {
    let n = y.len();
    let targets: Vec<f64> = y.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
    let prior = (targets.iter().sum::<f64>() / n as f64).clamp(1e-6, 1.0 - 1e-6);
    let base_score = (prior / (1.0 - prior)).ln();

    let tree_params = TreeParams {
        criterion: SplitCriterion::Variance,
        max_depth: params.stump_depth,
        min_leaf: 1,
        features_per_split: None,
    };
    let all_rows: Vec<usize> = (0..n).collect();
    let mut scores = vec![base_score; n];
    let mut trees = Vec::with_capacity(params.rounds);
    for _ in 0..params.rounds {
        let probabilities: Vec<f64> = scores.iter().map(|&s| sigmoid(s)).collect();
        let residuals: Vec<f64> = targets
            .iter()
            .zip(&probabilities)
            .map(|(t, p)| t - p)
            .collect();
        let mut tree = grow(columns, &residuals, &all_rows, &tree_params, rng);

        // Newton leaf values over the rows each leaf received
        let leaf_ids = tree.leaf_indices();
        let mut numerator = vec![0.0; tree.nodes.len()];
        let mut denominator = vec![0.0; tree.nodes.len()];
        let mut assigned = vec![0usize; n];
        for row in 0..n {
            let leaf = tree.leaf_index_for_row(columns, row);
            assigned[row] = leaf;
            numerator[leaf] += residuals[row];
            denominator[leaf] += probabilities[row] * (1.0 - probabilities[row]);
        }
        for leaf in leaf_ids {
            let value = numerator[leaf] / denominator[leaf].max(1e-12);
            tree.set_leaf_value(leaf, value);
        }
        for row in 0..n {
            scores[row] += params.learning_rate * tree.leaf_value(assigned[row]);
        }
        trees.push(tree);
    }
    GbmModel {
        base_score,
        learning_rate: params.learning_rate,
        trees,
    }
}

impl GbmModel {
    /// Boosted logit; positive means the label is predicted.
    pub fn margin(&self, x: &FeatureVector) -> f64 {
        self.base_score
            + self.learning_rate * self.trees.iter().map(|tree| tree.predict(x)).sum::<f64>()
    }

    pub fn probability(&self, x: &FeatureVector) -> f64 {
        sigmoid(self.margin(x))
    }
}

/// Mean logistic loss of a score vector against 0/1 targets.
pub fn logistic_loss(scores: &[f64], y: &[bool]) -> f64 {
    scores
        .iter()
        .zip(y)
        .map(|(&s, &label)| {
            let p = sigmoid(s).clamp(1e-12, 1.0 - 1e-12);
            if label {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum::<f64>()
        / scores.len() as f64
}
