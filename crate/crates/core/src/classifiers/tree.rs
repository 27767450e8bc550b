//! CART-style binary decision trees, the shared engine under the random
//! forest (gini on 0/1 targets) and gradient boosting (variance on
//! residuals).
//!
//! Trees split greedily on the `(feature, threshold)` pair with the best
//! impurity decrease. An impure node with any valid threshold is always
//! split, even at zero gain — XOR-like target patterns have no single
//! informative feature, and refusing to split would freeze such nodes
//! forever; descending anyway lets deeper splits separate them. Features
//! are scanned in ascending index and thresholds in ascending value, so
//! tie-breaking is deterministic.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::features::FeatureVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitCriterion {
    /// Binary-classification impurity; leaf value = positive fraction.
    Gini,
    /// Regression impurity (sum of squared error); leaf value = mean.
    Variance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Node {
    Leaf {
        value: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

/// Arena-allocated binary tree; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

#[derive(Debug, Clone)]
pub struct TreeParams {
    pub criterion: SplitCriterion,
    /// 0 means unlimited depth.
    pub max_depth: usize,
    pub min_leaf: usize,
    /// How many features to consider per split; `None` scans all. When a
    /// sampled subset offers no valid split on an impure node, the search
    /// falls back to the full feature set so consistent data can always be
    /// separated.
    pub features_per_split: Option<usize>,
}

impl Tree {
    pub fn predict(&self, x: &FeatureVector) -> f64 {
        self.leaf_value(self.leaf_index(x))
    }

    /// Index of the leaf this example lands in.
    pub fn leaf_index(&self, x: &FeatureVector) -> usize {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf { .. } => return at,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    at = if x.get(*feature) <= *threshold {
                        *left
                    } else {
                        *right
                    };
                }
            }
        }
    }

    /// Leaf routing for a training row in the column matrix.
    pub fn leaf_index_for_row(&self, columns: &[Vec<f64>], row: usize) -> usize {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf { .. } => return at,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    at = if columns[*feature][row] <= *threshold {
                        *left
                    } else {
                        *right
                    };
                }
            }
        }
    }

    pub fn leaf_value(&self, index: usize) -> f64 {
        match &self.nodes[index] {
            Node::Leaf { value } => *value,
            Node::Split { .. } => panic!("node {index} is not a leaf"),
        }
    }

    pub fn set_leaf_value(&mut self, index: usize, value: f64) {
        match &mut self.nodes[index] {
            Node::Leaf { value: v } => *v = value,
            Node::Split { .. } => panic!("node {index} is not a leaf"),
        }
    }

    pub fn leaf_indices(&self) -> Vec<usize> {
        self.nodes
            .iter()
            .enumerate()
            .filter_map(|(i, n)| matches!(n, Node::Leaf { .. }).then_some(i))
            .collect()
    }
}

struct Grower<'a> {
    columns: &'a [Vec<f64>],
    targets: &'a [f64],
    params: &'a TreeParams,
    nodes: Vec<Node>,
}

/// Fit a tree on `rows` (indices into the column matrix, duplicates
/// allowed for bootstrap samples). `targets` holds one value per matrix
/// row; for gini trees they must be 0/1.
pub fn grow(
    columns: &[Vec<f64>],
    targets: &[f64],
    rows: &[usize],
    params: &TreeParams,
    rng: &mut ChaCha8Rng,
) -> Tree {
    assert!(!rows.is_empty(), "cannot grow a tree on zero rows");
    assert!(params.min_leaf >= 1, "min_leaf must be at least 1");
    let mut grower = Grower {
        columns,
        targets,
        params,
        nodes: Vec::new(),
    };
    grower.build(rows.to_vec(), 0, rng);
    Tree {
        nodes: grower.nodes,
    }
}

struct BestSplit {
    gain: f64,
    feature: usize,
    threshold: f64,
}

impl Grower<'_> {
    fn build(&mut self, rows: Vec<usize>, depth: usize, rng: &mut ChaCha8Rng) -> usize {
        let mean = rows.iter().map(|&r| self.targets[r]).sum::<f64>() / rows.len() as f64;
        let impure = rows.iter().any(|&r| (self.targets[r] - mean).abs() > 1e-12);
        let depth_capped = self.params.max_depth > 0 && depth >= self.params.max_depth;
        if !impure || depth_capped || rows.len() < 2 * self.params.min_leaf {
            return self.push(Node::Leaf { value: mean });
        }

        let best = match self.params.features_per_split {
            Some(m) if m < self.columns.len() => {
                let sampled = sample_features(self.columns.len(), m, rng);
                self.best_split(&rows, &sampled)
                    .or_else(|| self.best_split_all(&rows))
            }
            _ => self.best_split_all(&rows),
        };
        let Some(split) = best else {
            // impure but inseparable (identical feature rows): forced leaf
            return self.push(Node::Leaf { value: mean });
        };

        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = rows
            .into_iter()
            .partition(|&r| self.columns[split.feature][r] <= split.threshold);
        let here = self.push(Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left: 0,
            right: 0,
        });
        let left = self.build(left_rows, depth + 1, rng);
        let right = self.build(right_rows, depth + 1, rng);
        if let Node::Split {
            left: l, right: r, ..
        } = &mut self.nodes[here]
        {
            *l = left;
            *r = right;
        }
        here
    }

    fn push(&mut self, node: Node) -> usize {
        self.nodes.push(node);
        self.nodes.len() - 1
    }

    fn best_split_all(&self, rows: &[usize]) -> Option<BestSplit> {
        let all: Vec<usize> = (0..self.columns.len()).collect();
        self.best_split(rows, &all)
    }

    /// Scan candidate features for the best valid threshold. Returns `None`
    /// when no feature admits a split leaving `min_leaf` rows on each side.
    fn best_split(&self, rows: &[usize], features: &[usize]) -> Option<BestSplit> {
        let n = rows.len() as f64;
        let (sum, sum_sq) = rows.iter().fold((0.0, 0.0), |(s, q), &r| {
            let t = self.targets[r];
            (s + t, q + t * t)
        });
        let parent = self.impurity(n, sum, sum_sq);

        let mut best: Option<BestSplit> = None;
        let mut pairs: Vec<(f64, f64)> = Vec::with_capacity(rows.len());
        for &feature in features {
            pairs.clear();
            pairs.extend(
                rows.iter()
                    .map(|&r| (self.columns[feature][r], self.targets[r])),
            );
            pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite feature values"));

            let mut left_count = 0usize;
            let mut left_sum = 0.0;
            let mut left_sq = 0.0;
            for i in 0..pairs.len() - 1 {
                let (value, target) = pairs[i];
                left_count += 1;
                left_sum += target;
                left_sq += target * target;
                if value == pairs[i + 1].0 {
                    continue; // no threshold separates equal values
                }
                let right_count = rows.len() - left_count;
                if left_count < self.params.min_leaf || right_count < self.params.min_leaf {
                    continue;
                }
                let gain = parent
                    - self.impurity(left_count as f64, left_sum, left_sq)
                    - self.impurity(right_count as f64, sum - left_sum, sum_sq - left_sq);
                if best.as_ref().is_none_or(|b| gain > b.gain) {
                    best = Some(BestSplit {
                        gain,
                        feature,
                        threshold: (value + pairs[i + 1].0) / 2.0,
                    });
                }
            }
        }
        best
    }

    /// Count-weighted impurity from sufficient statistics.
    fn impurity(&self, count: f64, sum: f64, sum_sq: f64) -> f64 {
        if count == 0.0 {
            return 0.0;
        }
        match self.params.criterion {
            // n * gini = n * 2p(1-p) with p = sum/n, for 0/1 targets
            SplitCriterion::Gini => 2.0 * sum * (count - sum) / count,
            // sum of squared error around the mean
            SplitCriterion::Variance => (sum_sq - sum * sum / count).max(0.0),
        }
    }
}

/// Draw `m` distinct feature indices, returned sorted for a deterministic
/// scan order.
fn sample_features(total: usize, m: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut indices: Vec<usize> = (0..total).collect();
    for i in 0..m.min(total) {
        let j = rng.gen_range(i..total);
        indices.swap(i, j);
    }
    indices.truncate(m.min(total));
    indices.sort_unstable();
    indices
}
