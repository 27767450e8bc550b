//! One-vs-rest multi-label classification over TF-IDF rule features.
//!
//! A [`MultiLabelClassifier`] holds one binary scorer per technique in the
//! training label universe. Per-label training is embarrassingly parallel;
//! each label's RNG stream is derived from `(seed, label index)`, so the
//! result is identical however the work is scheduled.

pub mod forest;
pub mod gbm;
pub mod svm;
pub mod tree;

use std::collections::BTreeSet;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attack::TechniqueId;
use crate::dataset::{DatasetError, LabeledDataset};
use crate::evaluation::{micro_metrics, ConfusionCounts};
use crate::features::{
    binarize_labels, fit_tfidf, FeatureError, FeatureVector, TfidfConfig, TfidfModel,
};
use crate::rng::derive_rng;
use crate::snort::{feature_text, SnortRule};
use forest::{train_forest, ForestParams, RandomForest};
use gbm::{train_gbm, GbmModel, GbmParams};
use svm::{train_svm, LinearSvm, SvmParams};

pub const MODEL_FORMAT: &str = "ruletag-model";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("cannot train on an empty dataset")]
    EmptyTrain,
    #[error("invalid hyperparameters: {0}")]
    BadHyperparams(String),
    #[error("label {0} has no positive examples")]
    ZeroPositives(TechniqueId),
    #[error("feature error: {0}")]
    Feature(#[from] FeatureError),
    #[error("dataset error: {0}")]
    Dataset(#[from] DatasetError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("model file error: {0}")]
    BadModelFile(String),
    #[error("tuning grid is empty or rounds < 1")]
    BadTuneInputs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelType {
    Svm,
    RandomForest,
    Gbm,
}

/// All knobs for all model families plus the run seed. Only the section
/// matching `model_type` is consulted at training time, but keeping the
/// rest around makes grids and perturbation simple.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub model_type: ModelType,
    pub svm: SvmParams,
    pub rf: ForestParams,
    pub gbm: GbmParams,
    pub seed: u64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            model_type: ModelType::Svm,
            svm: SvmParams::default(),
            rf: ForestParams::default(),
            gbm: GbmParams::default(),
            seed: 0,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<(), ClassifierError> {
        let bad = |message: &str| Err(ClassifierError::BadHyperparams(message.to_string()));
        if self.svm.c <= 0.0 {
            return bad("svm.c must be positive");
        }
        if self.svm.epochs == 0 {
            return bad("svm.epochs must be positive");
        }
        if self.rf.trees == 0 {
            return bad("rf.trees must be positive");
        }
        if self.rf.min_leaf == 0 {
            return bad("rf.min_leaf must be positive");
        }
        if let Some(fraction) = self.rf.feature_fraction {
            if !(fraction > 0.0 && fraction <= 1.0) {
                return bad("rf.feature_fraction must be in (0, 1]");
            }
        }
        if self.gbm.rounds == 0 {
            return bad("gbm.rounds must be positive");
        }
        if !(self.gbm.learning_rate > 0.0 && self.gbm.learning_rate <= 1.0) {
            return bad("gbm.learning_rate must be in (0, 1]");
        }
        Ok(())
    }
}

/// How per-label scores become a label set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdPolicy {
    /// Every label whose score is positive; possibly none.
    PositiveMargin,
    /// Positive margins, but an empty set falls back to the single
    /// highest-scoring label.
    Top1Fallback,
}

/// One trained binary scorer. Positive margin predicts the label for every
/// variant (SVM margin, forest majority excess, boosted logit).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelModel {
    Svm(LinearSvm),
    Forest(RandomForest),
    Gbm(GbmModel),
}

impl LabelModel {
    pub fn margin(&self, x: &FeatureVector) -> f64 {
        match self {
            LabelModel::Svm(m) => m.margin(x),
            LabelModel::Forest(m) => m.margin(x),
            LabelModel::Gbm(m) => m.margin(x),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiLabelClassifier {
    pub tfidf: TfidfModel,
    pub label_universe: Vec<TechniqueId>,
    pub models: Vec<LabelModel>,
    pub threshold_policy: ThresholdPolicy,
    pub hyperparams: Hyperparams,
}

/// Labels plus the full per-label score vector, in label-universe order.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub labels: BTreeSet<TechniqueId>,
    pub scores: Vec<(TechniqueId, f64)>,
}

/// Train one binary model per technique in the training label universe.
pub fn train_multilabel(
    train: &LabeledDataset,
    hp: &Hyperparams,
    tfidf_config: &TfidfConfig,
    threshold_policy: ThresholdPolicy,
) -> Result<MultiLabelClassifier, ClassifierError> {
    if train.is_empty() {
        return Err(ClassifierError::EmptyTrain);
    }
    hp.validate()?;
    let texts: Vec<String> = train
        .rules()
        .iter()
        .map(|r| feature_text(&r.rule))
        .collect();
    let tfidf = fit_tfidf(&texts, tfidf_config)?;
    let vectors = tfidf.transform_all(&texts);
    let (matrix, label_universe) = binarize_labels(train);

    // trees index features by column; build the dense matrix only for them
    let columns: Vec<Vec<f64>> = match hp.model_type {
        ModelType::Svm => Vec::new(),
        ModelType::RandomForest | ModelType::Gbm => (0..tfidf.dimension())
            .map(|f| vectors.iter().map(|v| v.get(f)).collect())
            .collect(),
    };

    let models: Vec<LabelModel> = (0..label_universe.len())
        .into_par_iter()
        .map(|j| {
            let y = matrix.column(j);
            if !y.iter().any(|&b| b) {
                return Err(ClassifierError::ZeroPositives(label_universe[j].clone()));
            }
            let mut rng = derive_rng(hp.seed, j as u64);
            Ok(match hp.model_type {
                ModelType::Svm => LabelModel::Svm(train_svm(
                    &vectors,
                    &y,
                    tfidf.dimension(),
                    &hp.svm,
                    &mut rng,
                )),
                ModelType::RandomForest => {
                    LabelModel::Forest(train_forest(&columns, &y, &hp.rf, &mut rng))
                }
                ModelType::Gbm => LabelModel::Gbm(train_gbm(&columns, &y, &hp.gbm, &mut rng)),
            })
        })
        .collect::<Result<_, _>>()?;

    Ok(MultiLabelClassifier {
        tfidf,
        label_universe,
        models,
        threshold_policy,
        hyperparams: hp.clone(),
    })
}

impl MultiLabelClassifier {
    pub fn predict_rule(&self, rule: &SnortRule) -> Prediction {
        self.predict_text(&feature_text(rule))
    }

    pub fn predict_text(&self, text: &str) -> Prediction {
        let x = self.tfidf.transform(text);
        let scores: Vec<(TechniqueId, f64)> = self
            .label_universe
            .iter()
            .zip(&self.models)
            .map(|(id, model)| (id.clone(), model.margin(&x)))
            .collect();
        let mut labels: BTreeSet<TechniqueId> = scores
            .iter()
            .filter(|(_, score)| *score > 0.0)
            .map(|(id, _)| id.clone())
            .collect();
        if labels.is_empty() && self.threshold_policy == ThresholdPolicy::Top1Fallback {
            // first strict maximum wins, i.e. the lexicographically
            // smallest id among tied top scores
            if let Some((id, _)) = scores.iter().reduce(|best, candidate| {
                if candidate.1 > best.1 {
                    candidate
                } else {
                    best
                }
            }) {
                labels.insert(id.clone());
            }
        }
        Prediction { labels, scores }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ClassifierError> {
        let file = ModelFile {
            format: MODEL_FORMAT.to_string(),
            version: MODEL_VERSION,
            classifier: self.clone(),
        };
        let mut bytes =
            serde_json::to_vec(&file).map_err(|e| ClassifierError::BadModelFile(e.to_string()))?;
        bytes.push(b'\n');
        std::fs::write(path, bytes)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ClassifierError> {
        let text = std::fs::read_to_string(path)?;
        let file: ModelFile = serde_json::from_str(&text)
            .map_err(|e| ClassifierError::BadModelFile(e.to_string()))?;
        if file.format != MODEL_FORMAT {
            return Err(ClassifierError::BadModelFile(format!(
                "unknown format `{}`",
                file.format
            )));
        }
        if file.version != MODEL_VERSION {
            return Err(ClassifierError::BadModelFile(format!(
                "unsupported version {} (this build reads {MODEL_VERSION})",
                file.version
            )));
        }
        Ok(file.classifier)
    }
}

/// Spec-level convenience: predicted technique set plus scores.
pub fn predict_labels(model: &MultiLabelClassifier, rule: &SnortRule) -> Prediction {
    model.predict_rule(rule)
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    classifier: MultiLabelClassifier,
}

/// One evaluated tuning candidate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TuneCandidate {
    pub hyperparams: Hyperparams,
    pub validation_f1: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TuningReport {
    /// Candidates evaluated per round, in evaluation order.
    pub rounds: Vec<Vec<TuneCandidate>>,
    pub best: Hyperparams,
    pub best_validation_f1: f64,
}

/// Grid search with local refinement.
///
/// The training set is split 80/20 into an internal train/validation pair
/// (the real test set is never touched). Every round evaluates the current
/// candidates by validation micro-F1 and keeps the best seen so far; the
/// next round's candidates are local perturbations of that best (halving /
/// doubling continuous knobs, stepping integer ones). The winner is
/// retrained on the full training set. Ties keep the earlier candidate,
/// so selection is deterministic.
pub fn tune(
    train: &LabeledDataset,
    grid: &[Hyperparams],
    rounds: usize,
    seed: u64,
    tfidf_config: &TfidfConfig,
    threshold_policy: ThresholdPolicy,
) -> Result<(MultiLabelClassifier, TuningReport), ClassifierError> {
    if grid.is_empty() || rounds == 0 {
        return Err(ClassifierError::BadTuneInputs);
    }
    if train.is_empty() {
        return Err(ClassifierError::EmptyTrain);
    }
    for hp in grid {
        hp.validate()?;
    }
    // tiny training sets cannot spare a validation slice; fall back to
    // scoring on the training data itself
    let (inner_train, validation) = if train.len() < 5 {
        (train.clone(), train.clone())
    } else {
        let (a, b) = crate::dataset::stratified_split_lenient(train, 0.8, seed)?;
        if b.is_empty() {
            (train.clone(), train.clone())
        } else {
            (a, b)
        }
    };

    let mut seen: BTreeSet<String> = BTreeSet::new();
    let mut best: Option<(Hyperparams, f64)> = None;
    let mut report_rounds = Vec::new();
    let mut candidates: Vec<Hyperparams> = grid.to_vec();
    for _ in 0..rounds {
        let mut evaluated = Vec::new();
        for hp in &candidates {
            let key = serde_json::to_string(hp).expect("hyperparams serialize");
            if !seen.insert(key) {
                continue;
            }
            let model = train_multilabel(&inner_train, hp, tfidf_config, threshold_policy)?;
            let f1 = validation_f1(&model, &validation);
            evaluated.push(TuneCandidate {
                hyperparams: hp.clone(),
                validation_f1: f1,
            });
            if best.as_ref().is_none_or(|(_, best_f1)| f1 > *best_f1) {
                best = Some((hp.clone(), f1));
            }
        }
        report_rounds.push(evaluated);
        let (best_hp, _) = best.as_ref().expect("at least one candidate evaluated");
        candidates = perturb(best_hp);
    }
    let (best_hp, best_f1) = best.expect("grid is non-empty");
    let final_model = train_multilabel(train, &best_hp, tfidf_config, threshold_policy)?;
    Ok((
        final_model,
        TuningReport {
            rounds: report_rounds,
            best: best_hp,
            best_validation_f1: best_f1,
        },
    ))
}

fn validation_f1(model: &MultiLabelClassifier, validation: &LabeledDataset) -> f64 {
    let mut counts = ConfusionCounts::default();
    for rule in validation.rules() {
        let predicted = model.predict_rule(&rule.rule).labels;
        let gold = &rule.technique_ids;
        counts.tp += gold.intersection(&predicted).count() as u64;
        counts.fp += predicted.difference(gold).count() as u64;
        counts.fn_ += gold.difference(&predicted).count() as u64;
    }
    micro_metrics(&counts).2
}

/// Local neighborhood of a configuration: one knob moved at a time,
/// continuous knobs halved/doubled, integer knobs stepped by a quarter
/// (at least 1). Only knobs of the active model family move.
fn perturb(hp: &Hyperparams) -> Vec<Hyperparams> {
    let int_step = |v: usize| (v / 4).max(1);
    let mut out = Vec::new();
    match hp.model_type {
        ModelType::Svm => {
            for c in [hp.svm.c * 2.0, hp.svm.c / 2.0] {
                let mut next = hp.clone();
                next.svm.c = c;
                out.push(next);
            }
            let step = int_step(hp.svm.epochs);
            for epochs in [hp.svm.epochs + step, hp.svm.epochs.saturating_sub(step)] {
                let mut next = hp.clone();
                next.svm.epochs = epochs.max(1);
                out.push(next);
            }
        }
        ModelType::RandomForest => {
            let step = int_step(hp.rf.trees);
            for trees in [hp.rf.trees + step, hp.rf.trees.saturating_sub(step)] {
                let mut next = hp.clone();
                next.rf.trees = trees.max(1);
                out.push(next);
            }
            if hp.rf.max_depth > 0 {
                let step = int_step(hp.rf.max_depth);
                for depth in [hp.rf.max_depth + step, hp.rf.max_depth.saturating_sub(step)] {
                    let mut next = hp.clone();
                    next.rf.max_depth = depth.max(1);
                    out.push(next);
                }
            }
            for min_leaf in [hp.rf.min_leaf + 1, hp.rf.min_leaf.saturating_sub(1)] {
                let mut next = hp.clone();
                next.rf.min_leaf = min_leaf.max(1);
                out.push(next);
            }
        }
        ModelType::Gbm => {
            for rate in [
                (hp.gbm.learning_rate * 2.0).min(1.0),
                hp.gbm.learning_rate / 2.0,
            ] {
                let mut next = hp.clone();
                next.gbm.learning_rate = rate;
                out.push(next);
            }
            let step = int_step(hp.gbm.rounds);
            for rounds in [hp.gbm.rounds + step, hp.gbm.rounds.saturating_sub(step)] {
                let mut next = hp.clone();
                next.gbm.rounds = rounds.max(1);
                out.push(next);
            }
            for depth in [hp.gbm.stump_depth + 1, hp.gbm.stump_depth.saturating_sub(1)] {
                let mut next = hp.clone();
                next.gbm.stump_depth = depth.max(1);
                out.push(next);
            }
        }
    }
    out.retain(|candidate| candidate != hp && candidate.validate().is_ok());
    out
}
