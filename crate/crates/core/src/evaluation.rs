//! Micro-averaged scoring, tactic derivation, and prompt-variant selection.
//!
//! All metrics are micro-averaged: per-rule true/false positive/negative
//! counts are summed over the dataset first, then precision, recall, and
//! F1 are computed once from the totals. Degenerate 0/0 quotients are
//! defined as 0.

use std::collections::{BTreeMap, BTreeSet};
use std::ops::{Add, AddAssign};
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attack::{AttackCatalog, CatalogError, TacticId, TechniqueId};
use crate::dataset::{LabeledDataset, LabeledRule};
use crate::prompting::client::{ChatClient, ChatRequest, ChatResponse, ClientError};
use crate::prompting::{label_with_llm, IclExample, LabelOptions, PromptConfig, PromptError};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("cannot evaluate an empty dataset")]
    EmptyDataset,
    #[error("predictor failed on sid {sid}: {message}")]
    PredictorFailed { sid: u64, message: String },
    #[error("catalog error: {0}")]
    Catalog(#[from] CatalogError),
    #[error("prompt search needs at least one candidate config")]
    NoConfigs,
    #[error("prompt error: {0}")]
    Prompt(#[from] PromptError),
}

/// Summed per-element confusion counts (micro-averaging accumulator).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn new(tp: u64, fp: u64, fn_: u64) -> Self {
        Self { tp, fp, fn_ }
    }
}

impl Add for ConfusionCounts {
    type Output = ConfusionCounts;
    fn add(self, other: ConfusionCounts) -> ConfusionCounts {
        ConfusionCounts {
            tp: self.tp + other.tp,
            fp: self.fp + other.fp,
            fn_: self.fn_ + other.fn_,
        }
    }
}

impl AddAssign for ConfusionCounts {
    fn add_assign(&mut self, other: ConfusionCounts) {
        *self = *self + other;
    }
}

/// Precision, recall, and F1 from summed counts; every 0/0 is 0.
pub fn micro_metrics(counts: &ConfusionCounts) -> (f64, f64, f64) {
    let ratio = |num: u64, den: u64| {
        if den == 0 {
            0.0
        } else {
            num as f64 / den as f64
        }
    };
    let precision = ratio(counts.tp, counts.tp + counts.fp);
    let recall = ratio(counts.tp, counts.tp + counts.fn_);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    (precision, recall, f1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalLevel {
    Technique,
    Tactic,
}

impl std::fmt::Display for EvalLevel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EvalLevel::Technique => f.write_str("technique"),
            EvalLevel::Tactic => f.write_str("tactic"),
        }
    }
}

/// Scoring result on one dataset at one level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub level: EvalLevel,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub counts: ConfusionCounts,
    pub per_label: BTreeMap<String, ConfusionCounts>,
    pub n_rules: usize,
    /// Rules whose predictor call failed and was scored as an empty
    /// prediction (lenient mode only).
    pub failures: usize,
}

impl EvalReport {
    /// Aligned plain-text rendering; `per_label` adds the breakdown.
    pub fn render_text(&self, per_label: bool) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "level: {}  rules: {}  failures: {}\n",
            self.level, self.n_rules, self.failures
        ));
        out.push_str(&format!(
            "tp: {}  fp: {}  fn: {}\n",
            self.counts.tp, self.counts.fp, self.counts.fn_
        ));
        out.push_str(&format!(
            "precision: {:.4}  recall: {:.4}  f1: {:.4}\n",
            self.precision, self.recall, self.f1
        ));
        if per_label && !self.per_label.is_empty() {
            let width = self
                .per_label
                .keys()
                .map(String::len)
                .max()
                .unwrap_or(5)
                .max("label".len());
            out.push_str(&format!(
                "{:width$}  {:>6} {:>6} {:>6} {:>8} {:>8} {:>8}\n",
                "label", "tp", "fp", "fn", "prec", "rec", "f1"
            ));
            for (label, counts) in &self.per_label {
                let (p, r, f1) = micro_metrics(counts);
                out.push_str(&format!(
                    "{label:width$}  {:>6} {:>6} {:>6} {:>8.4} {:>8.4} {:>8.4}\n",
                    counts.tp, counts.fp, counts.fn_, p, r, f1
                ));
            }
        }
        out
    }
}

/// Union of the tactics of every predicted technique; empty in, empty out.
pub fn derive_tactic_labels(
    pred: &BTreeSet<TechniqueId>,
    catalog: &AttackCatalog,
) -> Result<BTreeSet<TacticId>, CatalogError> {
    let mut tactics = BTreeSet::new();
    for id in pred {
        tactics.extend(catalog.tactics_of(id)?.iter().cloned());
    }
    Ok(tactics)
}

/// Evaluation switches: scoring level, sub-technique roll-up to parents,
/// and whether a predictor failure aborts (strict) or scores ∅ (default).
#[derive(Debug, Clone, Copy)]
pub struct EvalOptions {
    pub level: EvalLevel,
    pub rollup: bool,
    pub strict: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            level: EvalLevel::Technique,
            rollup: false,
            strict: false,
        }
    }
}

fn maybe_rollup(set: &BTreeSet<TechniqueId>, rollup: bool) -> BTreeSet<TechniqueId> {
    if rollup {
        set.iter().map(TechniqueId::rollup).collect()
    } else {
        set.clone()
    }
}

fn score_sets<L: Ord + ToString>(
    gold: &BTreeSet<L>,
    pred: &BTreeSet<L>,
    totals: &mut ConfusionCounts,
    per_label: &mut BTreeMap<String, ConfusionCounts>,
) {
    for item in gold.intersection(pred) {
        totals.tp += 1;
        per_label.entry(item.to_string()).or_default().tp += 1;
    }
    for item in pred.difference(gold) {
        totals.fp += 1;
        per_label.entry(item.to_string()).or_default().fp += 1;
    }
    for item in gold.difference(pred) {
        totals.fn_ += 1;
        per_label.entry(item.to_string()).or_default().fn_ += 1;
    }
}

/// Score a predictor over a dataset.
///
/// Per rule: `tp = |gold ∩ pred|`, `fp = |pred \ gold|`, `fn = |gold \
/// pred|`, counted at technique or tactic level (tactic level maps *both*
/// sets through [`derive_tactic_labels`] first). Counts are summed over
/// rules and micro-averaged once at the end.
pub fn evaluate_predictor<F>(
    ds: &LabeledDataset,
    mut predict: F,
    options: &EvalOptions,
    catalog: &AttackCatalog,
) -> Result<EvalReport, EvalError>
where
    F: FnMut(&LabeledRule) -> Result<BTreeSet<TechniqueId>, String>,
{
    if ds.is_empty() {
        return Err(EvalError::EmptyDataset);
    }
    let mut totals = ConfusionCounts::default();
    let mut per_label = BTreeMap::new();
    let mut failures = 0usize;
    for rule in ds.rules() {
        let predicted = match predict(rule) {
            Ok(set) => set,
            Err(message) if options.strict => {
                return Err(EvalError::PredictorFailed {
                    sid: rule.sid,
                    message,
                });
            }
            Err(_) => {
                failures += 1;
                BTreeSet::new()
            }
        };
        let gold = maybe_rollup(&rule.technique_ids, options.rollup);
        let predicted = maybe_rollup(&predicted, options.rollup);
        match options.level {
            EvalLevel::Technique => score_sets(&gold, &predicted, &mut totals, &mut per_label),
            EvalLevel::Tactic => {
                let gold = derive_tactic_labels(&gold, catalog)?;
                let predicted = derive_tactic_labels(&predicted, catalog)?;
                score_sets(&gold, &predicted, &mut totals, &mut per_label);
            }
        }
    }
    let (precision, recall, f1) = micro_metrics(&totals);
    Ok(EvalReport {
        level: options.level,
        precision,
        recall,
        f1,
        counts: totals,
        per_label,
        n_rules: ds.len(),
        failures,
    })
}

/// One candidate in a prompt search.
#[derive(Debug, Clone)]
pub struct PromptCandidate {
    pub config: PromptConfig,
    pub report: EvalReport,
    /// Mean whitespace tokens actually sent per rule, competition stages
    /// included. Used only to break F1 ties (cheaper prompt wins).
    pub avg_prompt_tokens: f64,
}

#[derive(Debug, Clone)]
pub struct PromptSearchResult {
    /// Candidates sorted best first.
    pub ranked: Vec<PromptCandidate>,
    pub best: PromptConfig,
}

/// Wraps a client to meter the prompt tokens flowing through it.
struct TokenMeter<'a> {
    inner: &'a dyn ChatClient,
    tokens: AtomicUsize,
}

impl ChatClient for TokenMeter<'_> {
    fn send(&self, request: &ChatRequest) -> Result<ChatResponse, ClientError> {
        let tokens: usize = request
            .messages
            .iter()
            .map(|m| m.content.split_whitespace().count())
            .sum();
        self.tokens.fetch_add(tokens, Ordering::Relaxed);
        self.inner.send(request)
    }
}

/// Try every prompt config on a development split and pick the best by
/// technique-level micro-F1; ties go to the config that sent fewer prompt
/// tokens per rule, then to earlier position in `configs`. Per-rule client
/// failures score that rule as ∅, so a config whose every call fails
/// scores 0 instead of aborting the search.
pub fn select_best_prompt(
    configs: &[PromptConfig],
    dev: &LabeledDataset,
    client: &dyn ChatClient,
    catalog: &AttackCatalog,
    examples: &[IclExample],
    options: &LabelOptions,
) -> Result<PromptSearchResult, EvalError> {
    if configs.is_empty() {
        return Err(EvalError::NoConfigs);
    }
    if dev.is_empty() {
        return Err(EvalError::EmptyDataset);
    }
    let mut ranked = Vec::with_capacity(configs.len());
    for config in configs {
        config.validate()?;
        let meter = TokenMeter {
            inner: client,
            tokens: AtomicUsize::new(0),
        };
        let report = evaluate_predictor(
            dev,
            |rule| {
                label_with_llm(&meter, config, &rule.rule, catalog, examples, options)
                    .map(|p| p.technique_ids)
                    .map_err(|e| e.to_string())
            },
            &EvalOptions::default(),
            catalog,
        )?;
        let avg_prompt_tokens = meter.tokens.load(Ordering::Relaxed) as f64 / dev.len() as f64;
        ranked.push(PromptCandidate {
            config: config.clone(),
            report,
            avg_prompt_tokens,
        });
    }
    let mut order: Vec<usize> = (0..ranked.len()).collect();
    order.sort_by(|&a, &b| {
        ranked[b]
            .report
            .f1
            .partial_cmp(&ranked[a].report.f1)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| {
                ranked[a]
                    .avg_prompt_tokens
                    .partial_cmp(&ranked[b].avg_prompt_tokens)
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
            .then_with(|| a.cmp(&b))
    });
    let ranked: Vec<PromptCandidate> = order.into_iter().map(|i| ranked[i].clone()).collect();
    let best = ranked[0].config.clone();
    Ok(PromptSearchResult { ranked, best })
}
