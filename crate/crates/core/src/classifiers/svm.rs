//! Linear SVM trained in the primal by seeded stochastic subgradient
//! descent (Pegasos-style schedule) with iterate averaging.
//!
//! The objective per label is `λ/2 ||w||² + (1/n) Σ max(0, 1 - yᵢ(w·xᵢ+b))`
//! with `λ = 1/(C·n)`. Examples are visited in a seeded shuffle each epoch;
//! the returned model is the average of all iterates, which damps the
//! oscillation of the raw final iterate.

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::features::FeatureVector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmParams {
    /// Inverse regularization strength (larger C fits harder).
    pub c: f64,
    pub epochs: usize,
}

impl Default for SvmParams {
    fn default() -> Self {
        Self { c: 1.0, epochs: 50 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSvm {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl LinearSvm {
    /// Signed distance-like score; positive predicts the label.
    pub fn margin(&self, x: &FeatureVector) -> f64 {
        x.dot_dense(&self.weights) + self.bias
    }
}

/// Step damping for the unregularized bias. The bias is touched by every
/// violating example while each sparse feature is touched by few, and the
/// early Pegasos steps are enormous (η₁ = C·n), so an undamped bias swamps
/// the margins of minority-positive labels and takes thousands of epochs to
/// recover. Damping its step rebalances the update rates.
const BIAS_DAMP: f64 = 0.01;

/// Train one binary linear SVM on sparse vectors of the given dimension.
pub fn train_svm(
    x: &[FeatureVector],
    y: &[bool],
    dim: usize,
    params: &SvmParams,
    rng: &mut ChaCha8Rng,
) -> LinearSvm {
    assert_eq!(x.len(), y.len());
    assert!(!x.is_empty(), "cannot train on zero examples");
    let n = x.len();
    let lambda = 1.0 / (params.c * n as f64);

    let mut weights = vec![0.0; dim];
    let mut bias = 0.0;
    let mut weight_sum = vec![0.0; dim];
    let mut bias_sum = 0.0;
    let mut order: Vec<usize> = (0..n).collect();
    let mut t = 0u64;
    for _ in 0..params.epochs {
        order.shuffle(rng);
        for &i in &order {
            t += 1;
            let eta = 1.0 / (lambda * t as f64);
            let label = if y[i] { 1.0 } else { -1.0 };
            let margin = label * (x[i].dot_dense(&weights) + bias);
            let shrink = 1.0 - eta * lambda; // = 1 - 1/t
            for w in &mut weights {
                *w *= shrink;
            }
            if margin < 1.0 {
                for &(index, value) in x[i].entries() {
                    weights[index] += eta * label * value;
                }
                bias += eta * label * BIAS_DAMP;
            }
            for (sum, w) in weight_sum.iter_mut().zip(&weights) {
                *sum += *w;
            }
            bias_sum += bias;
        }
    }
    let total = t as f64;
    LinearSvm {
        weights: weight_sum.into_iter().map(|w| w / total).collect(),
        bias: bias_sum / total,
    }
}

/// Regularized hinge objective of a model on a training set.
pub fn hinge_objective(model: &LinearSvm, x: &[FeatureVector], y: &[bool], c: f64) -> f64 {
    let n = x.len() as f64;
    let lambda = 1.0 / (c * n);
    let norm_sq: f64 = model.weights.iter().map(|w| w * w).sum();
    let hinge: f64 = x
        .iter()
        .zip(y)
        .map(|(xi, &label)| {
            let sign = if label { 1.0 } else { -1.0 };
            (1.0 - sign * model.margin(xi)).max(0.0)
        })
        .sum();
    lambda / 2.0 * norm_sq + hinge / n
}
