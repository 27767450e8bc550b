//! Labeled-rule dataset construction, filtering, splitting, and persistence.
//!
//! A dataset pairs parsed Snort rules with ground-truth technique-id sets.
//! Rare labels can be split off with [`partition_rare`], and the remaining
//! core is divided train/test with seeded greedy iterative stratification.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::io::{BufRead, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attack::{AttackCatalog, TechniqueId};
use crate::rng::derive_rng;
use crate::snort::{self, ParseDiagnostic, SnortRule};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("label map error: {0}")]
    Csv(#[from] csv::Error),
    #[error("{path}:{line}: {message}")]
    Record {
        path: String,
        line: usize,
        message: String,
    },
    #[error("duplicate sid {0} in dataset")]
    DuplicateSid(u64),
    #[error("rule {0} has an empty technique set")]
    EmptyLabelSet(u64),
    #[error("min_count must be at least 1")]
    BadMinCount,
    #[error("train_frac must be strictly between 0 and 1, got {0}")]
    BadTrainFrac(f64),
    #[error("label {0} occurs once; it cannot appear in both partitions")]
    SingletonLabel(TechniqueId),
    #[error("stratified split could not satisfy the per-label balance tolerance")]
    Unbalanced,
}

/// One rule with its ground-truth technique labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledRule {
    pub sid: u64,
    pub rule: SnortRule,
    pub technique_ids: BTreeSet<TechniqueId>,
}

/// An immutable collection of labeled rules.
///
/// `label_universe` is always the sorted union of the rules' technique ids,
/// and sids are unique.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LabeledDataset {
    rules: Vec<LabeledRule>,
    label_universe: Vec<TechniqueId>,
}

impl LabeledDataset {
    pub fn new(rules: Vec<LabeledRule>) -> Result<Self, DatasetError> {
        let mut seen = HashSet::new();
        let mut universe = BTreeSet::new();
        for rule in &rules {
            if !seen.insert(rule.sid) {
                return Err(DatasetError::DuplicateSid(rule.sid));
            }
            if rule.technique_ids.is_empty() {
                return Err(DatasetError::EmptyLabelSet(rule.sid));
            }
            universe.extend(rule.technique_ids.iter().cloned());
        }
        Ok(Self {
            rules,
            label_universe: universe.into_iter().collect(),
        })
    }

    pub fn rules(&self) -> &[LabeledRule] {
        &self.rules
    }

    pub fn into_rules(self) -> Vec<LabeledRule> {
        self.rules
    }

    /// Sorted union of all technique ids in the dataset.
    pub fn label_universe(&self) -> &[TechniqueId] {
        &self.label_universe
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }
}

/// Number of rules carrying each technique.
pub fn label_frequencies(ds: &LabeledDataset) -> BTreeMap<TechniqueId, usize> {
    let mut counts = BTreeMap::new();
    for rule in ds.rules() {
        for id in &rule.technique_ids {
            *counts.entry(id.clone()).or_insert(0) += 1;
        }
    }
    counts
}

/// Ingestion behavior toggles. Strict mode turns label-map inconsistencies
/// into hard errors; lenient mode records them in the report and moves on.
#[derive(Debug, Clone, Copy)]
pub struct IngestOptions {
    pub strict: bool,
}

impl Default for IngestOptions {
    fn default() -> Self {
        Self { strict: true }
    }
}

/// What ingestion saw besides the dataset itself.
#[derive(Debug, Default, Clone, serde::Serialize)]
pub struct IngestReport {
    /// Malformed rule lines (never fatal; the rule is skipped).
    pub parse_diagnostics: Vec<ParseDiagnostic>,
    /// Rules parsed but dropped because no label-map row references them.
    pub unmapped_rules: usize,
    /// Label-map sids absent from the rules file (lenient mode only).
    pub unknown_sids: Vec<u64>,
    /// Label-map rows with malformed technique ids (lenient mode only).
    pub invalid_ids: Vec<String>,
    /// Label-map technique ids not present in the catalog (lenient only).
    pub unknown_techniques: Vec<TechniqueId>,
}

/// Build a dataset from a `.rules` file and a `sid,technique_id` CSV map,
/// validating every technique id against the catalog.
pub fn ingest(
    rules_path: impl AsRef<Path>,
    map_path: impl AsRef<Path>,
    catalog: &AttackCatalog,
    options: IngestOptions,
) -> Result<(LabeledDataset, IngestReport), DatasetError> {
    let rules_text = std::fs::read_to_string(&rules_path)?;
    let (parsed, parse_diagnostics) = snort::parse_ruleset(&rules_text);
    let mut report = IngestReport {
        parse_diagnostics,
        ..IngestReport::default()
    };

    let mut by_sid: BTreeMap<u64, SnortRule> = BTreeMap::new();
    let mut order: Vec<u64> = Vec::new();
    for rule in parsed {
        let Some(sid) = rule.sid else {
            report.parse_diagnostics.push(ParseDiagnostic {
                line: 0,
                message: "rule without sid option skipped".to_string(),
            });
            continue;
        };
        if by_sid.contains_key(&sid) {
            if options.strict {
                return Err(DatasetError::DuplicateSid(sid));
            }
            continue;
        }
        by_sid.insert(sid, rule);
        order.push(sid);
    }

    let map_path = map_path.as_ref();
    let map_name = map_path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(map_path)?;
    let mut labels: HashMap<u64, BTreeSet<TechniqueId>> = HashMap::new();
    for (idx, row) in reader.deserialize::<LabelMapRow>().enumerate() {
        let line = idx + 2; // 1-based, after the header
        let row = row?;
        let sid: u64 = row.sid.parse().map_err(|_| DatasetError::Record {
            path: map_name.clone(),
            line,
            message: format!("bad sid `{}`", row.sid),
        })?;
        let id = match row.technique_id.parse::<TechniqueId>() {
            Ok(id) => id,
            Err(err) => {
                if options.strict {
                    return Err(DatasetError::Record {
                        path: map_name.clone(),
                        line,
                        message: err.to_string(),
                    });
                }
                report.invalid_ids.push(row.technique_id);
                continue;
            }
        };
        if !catalog.contains(&id) {
            if options.strict {
                return Err(DatasetError::Record {
                    path: map_name.clone(),
                    line,
                    message: format!("technique {id} not in catalog"),
                });
            }
            report.unknown_techniques.push(id);
            continue;
        }
        if !by_sid.contains_key(&sid) {
            if options.strict {
                return Err(DatasetError::Record {
                    path: map_name.clone(),
                    line,
                    message: format!("sid {sid} not present in the rules file"),
                });
            }
            report.unknown_sids.push(sid);
            continue;
        }
        labels.entry(sid).or_default().insert(id);
    }

    let mut rules = Vec::new();
    for sid in order {
        match labels.remove(&sid) {
            Some(technique_ids) => rules.push(LabeledRule {
                sid,
                rule: by_sid.remove(&sid).expect("sid indexed above"),
                technique_ids,
            }),
            None => report.unmapped_rules += 1,
        }
    }
    Ok((LabeledDataset::new(rules)?, report))
}

#[derive(Deserialize)]
struct LabelMapRow {
    sid: String,
    technique_id: String,
}

/// Split off rules whose labels are all rare.
///
/// Iterates to a fixpoint: techniques occurring fewer than `min_count` times
/// are marked rare; rare labels are stripped from mixed-label rules; rules
/// left with no frequent label move to the rare set keeping their original
/// full label set. In the returned core every technique occurs at least
/// `min_count` times.
pub fn partition_rare(
    ds: &LabeledDataset,
    min_count: usize,
) -> Result<(LabeledDataset, LabeledDataset), DatasetError> {
    if min_count == 0 {
        return Err(DatasetError::BadMinCount);
    }
    let original: HashMap<u64, &LabeledRule> = ds.rules().iter().map(|r| (r.sid, r)).collect();
    let mut core: Vec<LabeledRule> = ds.rules().to_vec();
    let mut rare: Vec<LabeledRule> = Vec::new();
    loop {
        let mut counts: BTreeMap<&TechniqueId, usize> = BTreeMap::new();
        for rule in &core {
            for id in &rule.technique_ids {
                *counts.entry(id).or_insert(0) += 1;
            }
        }
        let rare_labels: BTreeSet<TechniqueId> = counts
            .iter()
            .filter(|(_, &c)| c < min_count)
            .map(|(id, _)| (*id).clone())
            .collect();
        if rare_labels.is_empty() {
            break;
        }
        let mut next_core = Vec::with_capacity(core.len());
        for mut rule in core {
            let kept: BTreeSet<TechniqueId> = rule
                .technique_ids
                .difference(&rare_labels)
                .cloned()
                .collect();
            if kept.is_empty() {
                rare.push(original[&rule.sid].clone());
            } else {
                rule.technique_ids = kept;
                next_core.push(rule);
            }
        }
        core = next_core;
    }
    Ok((LabeledDataset::new(core)?, LabeledDataset::new(rare)?))
}

/// Greedy iterative multi-label stratification, rarest label first, with a
/// deterministic repair pass that keeps every label's train share within
/// one rule of `train_frac * count` while both partitions stay non-empty
/// per label. Deterministic given `seed`.
pub fn stratified_split(
    ds: &LabeledDataset,
    train_frac: f64,
    seed: u64,
) -> Result<(LabeledDataset, LabeledDataset), DatasetError> {
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(DatasetError::BadTrainFrac(train_frac));
    }
    let counts = label_frequencies(ds);
    for (id, count) in &counts {
        if *count < 2 {
            return Err(DatasetError::SingletonLabel(id.clone()));
        }
    }
    let assignment = stratify(ds, &counts, train_frac, seed, true)?;
    build_partitions(ds, &assignment)
}

/// Like [`stratified_split`] but singleton labels are allowed and forced to
/// the train side instead of rejected. Used for internal validation splits
/// during hyperparameter tuning, where the caller cannot control label
/// counts.
pub fn stratified_split_lenient(
    ds: &LabeledDataset,
    train_frac: f64,
    seed: u64,
) -> Result<(LabeledDataset, LabeledDataset), DatasetError> {
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(DatasetError::BadTrainFrac(train_frac));
    }
    let counts = label_frequencies(ds);
    let assignment = stratify(ds, &counts, train_frac, seed, false)?;
    build_partitions(ds, &assignment)
}

fn build_partitions(
    ds: &LabeledDataset,
    train_flags: &[bool],
) -> Result<(LabeledDataset, LabeledDataset), DatasetError> {
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (rule, &in_train) in ds.rules().iter().zip(train_flags) {
        if in_train {
            train.push(rule.clone());
        } else {
            test.push(rule.clone());
        }
    }
    Ok((LabeledDataset::new(train)?, LabeledDataset::new(test)?))
}

fn stratify(
    ds: &LabeledDataset,
    counts: &BTreeMap<TechniqueId, usize>,
    train_frac: f64,
    seed: u64,
    strict: bool,
) -> Result<Vec<bool>, DatasetError> {
    let n = ds.len();
    let labels: Vec<&TechniqueId> = counts.keys().collect();
    let label_idx: HashMap<&TechniqueId, usize> =
        labels.iter().enumerate().map(|(i, id)| (*id, i)).collect();
    let rule_labels: Vec<Vec<usize>> = ds
        .rules()
        .iter()
        .map(|r| r.technique_ids.iter().map(|id| label_idx[id]).collect())
        .collect();
    let label_counts: Vec<usize> = labels.iter().map(|id| counts[*id]).collect();

    // Per-label acceptance window for the repair pass.
    let windows: Vec<(usize, usize)> = label_counts
        .iter()
        .map(|&c| {
            let target = train_frac * c as f64;
            if strict || c >= 2 {
                let lo = ((target - 1.0).ceil().max(1.0)) as usize;
                let hi = (((target + 1.0).floor()) as usize).min(c - 1);
                (lo.min(hi), hi.max(lo))
            } else {
                // singleton labels: forced to train
                (1, 1)
            }
        })
        .collect();

    for attempt in 0..64 {
        let mut rng = derive_rng(seed, attempt);
        let assignment = greedy_assign(n, &rule_labels, &label_counts, train_frac, &mut rng);
        if let Some(fixed) = repair(assignment, &rule_labels, &windows, labels.len()) {
            return Ok(fixed);
        }
    }
    Err(DatasetError::Unbalanced)
}

/// One pass of greedy iterative stratification: repeatedly take the label
/// with the fewest unassigned rules and place those rules on the side with
/// the larger remaining demand for it.
fn greedy_assign(
    n: usize,
    rule_labels: &[Vec<usize>],
    label_counts: &[usize],
    train_frac: f64,
    rng: &mut impl Rng,
) -> Vec<bool> {
    let mut desired_train: Vec<f64> = label_counts
        .iter()
        .map(|&c| train_frac * c as f64)
        .collect();
    let mut desired_test: Vec<f64> = label_counts
        .iter()
        .map(|&c| (1.0 - train_frac) * c as f64)
        .collect();
    let mut cap_train = train_frac * n as f64;
    let mut cap_test = (1.0 - train_frac) * n as f64;

    let mut visit: Vec<usize> = (0..n).collect();
    visit.shuffle(rng);

    let mut assigned: Vec<Option<bool>> = vec![None; n];
    let mut remaining: Vec<usize> = label_counts.to_vec();
    // rarest label with unassigned rules first; ties go to the lower index
    while let Some(label) = (0..remaining.len())
        .filter(|&l| remaining[l] > 0)
        .min_by_key(|&l| remaining[l])
    {
        for &r in &visit {
            if assigned[r].is_some() || !rule_labels[r].contains(&label) {
                continue;
            }
            let to_train = if desired_train[label] > desired_test[label] {
                true
            } else if desired_train[label] < desired_test[label] {
                false
            } else if cap_train > cap_test {
                true
            } else if cap_train < cap_test {
                false
            } else {
                rng.gen::<bool>()
            };
            assigned[r] = Some(to_train);
            for &l in &rule_labels[r] {
                remaining[l] -= 1;
                if to_train {
                    desired_train[l] -= 1.0;
                } else {
                    desired_test[l] -= 1.0;
                }
            }
            if to_train {
                cap_train -= 1.0;
            } else {
                cap_test -= 1.0;
            }
        }
    }
    // rules with no labels cannot occur (non-empty label invariant), but
    // default any stragglers to train
    assigned.into_iter().map(|a| a.unwrap_or(true)).collect()
}

/// Hill-climb single-rule flips, then train/test swaps, until every label's
/// train count sits inside its window. Returns `None` when stuck.
fn repair(
    mut assignment: Vec<bool>,
    rule_labels: &[Vec<usize>],
    windows: &[(usize, usize)],
    label_count: usize,
) -> Option<Vec<bool>> {
    let mut train_counts = vec![0usize; label_count];
    for (r, labels) in rule_labels.iter().enumerate() {
        if assignment[r] {
            for &l in labels {
                train_counts[l] += 1;
            }
        }
    }
    let violation = |tc: &[usize]| -> usize {
        tc.iter()
            .zip(windows)
            .map(|(&c, &(lo, hi))| lo.saturating_sub(c) + c.saturating_sub(hi))
            .sum()
    };
    let mut score = violation(&train_counts);
    while score > 0 {
        let mut best: Option<(usize, usize)> = None; // (new score, rule)
        for r in 0..assignment.len() {
            let mut tc = train_counts.clone();
            for &l in &rule_labels[r] {
                if assignment[r] {
                    tc[l] -= 1;
                } else {
                    tc[l] += 1;
                }
            }
            let s = violation(&tc);
            if s < score && best.is_none_or(|(bs, _)| s < bs) {
                best = Some((s, r));
            }
        }
        if let Some((s, r)) = best {
            for &l in &rule_labels[r] {
                if assignment[r] {
                    train_counts[l] -= 1;
                } else {
                    train_counts[l] += 1;
                }
            }
            assignment[r] = !assignment[r];
            score = s;
            continue;
        }
        // no single flip helps; try swapping a train rule with a test rule
        let mut swapped = false;
        'outer: for a in 0..assignment.len() {
            if !assignment[a] {
                continue;
            }
            for b in 0..assignment.len() {
                if assignment[b] {
                    continue;
                }
                let mut tc = train_counts.clone();
                for &l in &rule_labels[a] {
                    tc[l] -= 1;
                }
                for &l in &rule_labels[b] {
                    tc[l] += 1;
                }
                let s = violation(&tc);
                if s < score {
                    train_counts = tc;
                    assignment[a] = false;
                    assignment[b] = true;
                    score = s;
                    swapped = true;
                    break 'outer;
                }
            }
        }
        if !swapped {
            return None;
        }
    }
    Some(assignment)
}

/// A full split of a dataset per the standard experimental setup: rare
/// labels filtered at `min_count`, the rest divided train/test.
#[derive(Debug, Clone)]
pub struct DatasetSplit {
    pub train: LabeledDataset,
    pub test: LabeledDataset,
    pub rare: LabeledDataset,
    pub min_count: usize,
    pub train_frac: f64,
    pub seed: u64,
}

impl DatasetSplit {
    pub fn create(
        ds: &LabeledDataset,
        min_count: usize,
        train_frac: f64,
        seed: u64,
    ) -> Result<Self, DatasetError> {
        let (core, rare) = partition_rare(ds, min_count)?;
        let (train, test) = stratified_split(&core, train_frac, seed)?;
        Ok(Self {
            train,
            test,
            rare,
            min_count,
            train_frac,
            seed,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct DatasetRecord {
    sid: u64,
    rule: String,
    techniques: Vec<TechniqueId>,
    #[serde(skip_serializing_if = "Option::is_none")]
    split: Option<String>,
}

/// Write a dataset as JSONL, one rule per line, optionally tagging every
/// record with a split name.
pub fn save_dataset(
    ds: &LabeledDataset,
    mut writer: impl Write,
    split: Option<&str>,
) -> Result<(), DatasetError> {
    for rule in ds.rules() {
        let record = DatasetRecord {
            sid: rule.sid,
            rule: rule.rule.raw.clone(),
            techniques: rule.technique_ids.iter().cloned().collect(),
            split: split.map(str::to_string),
        };
        let line = serde_json::to_string(&record).expect("record serializes");
        writeln!(writer, "{line}")?;
    }
    Ok(())
}

pub fn save_dataset_to(
    ds: &LabeledDataset,
    path: impl AsRef<Path>,
    split: Option<&str>,
) -> Result<(), DatasetError> {
    let file = std::fs::File::create(path)?;
    save_dataset(ds, std::io::BufWriter::new(file), split)
}

/// Read a JSONL dataset back. Split tags are tolerated and ignored.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<LabeledDataset, DatasetError> {
    let path = path.as_ref();
    let name = path.display().to_string();
    let file = std::fs::File::open(path)?;
    let mut rules = Vec::new();
    for (idx, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: DatasetRecord =
            serde_json::from_str(&line).map_err(|e| DatasetError::Record {
                path: name.clone(),
                line: idx + 1,
                message: e.to_string(),
            })?;
        let rule = snort::parse_rule(&record.rule).map_err(|e| DatasetError::Record {
            path: name.clone(),
            line: idx + 1,
            message: e.to_string(),
        })?;
        rules.push(LabeledRule {
            sid: record.sid,
            rule,
            technique_ids: record.techniques.into_iter().collect(),
        });
    }
    LabeledDataset::new(rules)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn rule_with(sid: u64, labels: &[&str]) -> LabeledRule {
        let text = format!("alert tcp any any -> any any (msg:\"r{sid}\"; sid:{sid};)");
        LabeledRule {
            sid,
            rule: snort::parse_rule(&text).unwrap(),
            technique_ids: labels.iter().map(|l| l.parse().unwrap()).collect(),
        }
    }

    fn dataset(rules: Vec<LabeledRule>) -> LabeledDataset {
        LabeledDataset::new(rules).unwrap()
    }

    #[test]
    fn universe_is_sorted_union() {
        let ds = dataset(vec![
            rule_with(1, &["T1105", "T1046"]),
            rule_with(2, &["T1046"]),
        ]);
        let ids: Vec<&str> = ds.label_universe().iter().map(|t| t.as_str()).collect();
        assert_eq!(ids, ["T1046", "T1105"]);
    }

    #[test]
    fn duplicate_sids_rejected() {
        let err = LabeledDataset::new(vec![rule_with(1, &["T1046"]), rule_with(1, &["T1105"])])
            .unwrap_err();
        assert!(matches!(err, DatasetError::DuplicateSid(1)));
    }

    #[test]
    fn frequencies_count_rules_not_duplicates() {
        let ds = dataset(vec![
            rule_with(1, &["T1046"]),
            rule_with(2, &["T1046", "T1105"]),
            rule_with(3, &["T1105"]),
        ]);
        let freq = label_frequencies(&ds);
        assert_eq!(freq[&"T1046".parse().unwrap()], 2);
        assert_eq!(freq[&"T1105".parse().unwrap()], 2);
        let total: usize = freq.values().sum();
        let sizes: usize = ds.rules().iter().map(|r| r.technique_ids.len()).sum();
        assert_eq!(total, sizes);
    }

    #[test]
    fn frequencies_of_empty_dataset() {
        let ds = LabeledDataset::default();
        assert!(label_frequencies(&ds).is_empty());
    }

    #[test]
    fn partition_rare_strips_mixed_labels() {
        // A occurs 6 times, B twice and only alongside A: B is stripped,
        // all rules stay in core.
        let mut rules: Vec<LabeledRule> = (1..=4).map(|i| rule_with(i, &["T1046"])).collect();
        rules.push(rule_with(5, &["T1046", "T1105"]));
        rules.push(rule_with(6, &["T1046", "T1105"]));
        let ds = dataset(rules);
        let (core, rare) = partition_rare(&ds, 5).unwrap();
        assert_eq!(core.len(), 6);
        assert!(rare.is_empty());
        assert_eq!(core.label_universe().len(), 1);
        let freq = label_frequencies(&core);
        assert_eq!(freq[&"T1046".parse().unwrap()], 6);
    }

    #[test]
    fn partition_rare_moves_fully_rare_rules_with_original_labels() {
        let mut rules: Vec<LabeledRule> = (1..=5).map(|i| rule_with(i, &["T1046"])).collect();
        rules.push(rule_with(10, &["T1105", "T1059"]));
        let ds = dataset(rules);
        let (core, rare) = partition_rare(&ds, 5).unwrap();
        assert_eq!(core.len(), 5);
        assert_eq!(rare.len(), 1);
        assert_eq!(rare.rules()[0].technique_ids.len(), 2);
    }

    #[test]
    fn partition_rare_identity_when_all_frequent() {
        let rules: Vec<LabeledRule> = (1..=5).map(|i| rule_with(i, &["T1046"])).collect();
        let ds = dataset(rules);
        let (core, rare) = partition_rare(&ds, 5).unwrap();
        assert_eq!(core, ds);
        assert!(rare.is_empty());
    }

    #[test]
    fn partition_rare_is_fixpoint_stable() {
        let mut rules: Vec<LabeledRule> = (1..=7).map(|i| rule_with(i, &["T1046"])).collect();
        rules.push(rule_with(20, &["T1105", "T1046"]));
        rules.push(rule_with(21, &["T1105"]));
        rules.push(rule_with(22, &["T1059"]));
        let ds = dataset(rules);
        let (core, _) = partition_rare(&ds, 3).unwrap();
        let (core2, rare2) = partition_rare(&core, 3).unwrap();
        assert_eq!(core, core2);
        assert!(rare2.is_empty());
    }

    #[test]
    fn split_single_label_eighty_twenty() {
        let rules: Vec<LabeledRule> = (1..=10).map(|i| rule_with(i, &["T1046"])).collect();
        let ds = dataset(rules);
        let (train, test) = stratified_split(&ds, 0.8, 42).unwrap();
        assert_eq!(train.len(), 8);
        assert_eq!(test.len(), 2);
    }

    #[test]
    fn split_count_five_gives_four_one() {
        let rules: Vec<LabeledRule> = (1..=5).map(|i| rule_with(i, &["T1046"])).collect();
        let ds = dataset(rules);
        let (train, test) = stratified_split(&ds, 0.8, 7).unwrap();
        assert_eq!(train.len(), 4);
        assert_eq!(test.len(), 1);
    }

    #[test]
    fn split_is_seed_deterministic() {
        let mut rules: Vec<LabeledRule> = (1..=20).map(|i| rule_with(i, &["T1046"])).collect();
        for i in 21..=30 {
            rules.push(rule_with(i, &["T1105", "T1046"]));
        }
        let ds = dataset(rules);
        let (t1, e1) = stratified_split(&ds, 0.8, 99).unwrap();
        let (t2, e2) = stratified_split(&ds, 0.8, 99).unwrap();
        assert_eq!(t1, t2);
        assert_eq!(e1, e2);
    }

    #[test]
    fn split_rejects_singleton_labels() {
        let rules = vec![rule_with(1, &["T1046"]), rule_with(2, &["T1046", "T1105"])];
        let ds = dataset(rules);
        let err = stratified_split(&ds, 0.8, 1).unwrap_err();
        assert!(matches!(err, DatasetError::SingletonLabel(_)));
    }

    #[test]
    fn split_partitions_preserve_rules_and_labels() {
        let mut rules: Vec<LabeledRule> = (1..=12).map(|i| rule_with(i, &["T1046"])).collect();
        for i in 13..=18 {
            rules.push(rule_with(i, &["T1105"]));
        }
        for i in 19..=22 {
            rules.push(rule_with(i, &["T1059", "T1105"]));
        }
        let ds = dataset(rules);
        let (train, test) = stratified_split(&ds, 0.8, 3).unwrap();
        assert_eq!(train.len() + test.len(), ds.len());
        let train_sids: HashSet<u64> = train.rules().iter().map(|r| r.sid).collect();
        let test_sids: HashSet<u64> = test.rules().iter().map(|r| r.sid).collect();
        assert!(train_sids.is_disjoint(&test_sids));
        // every label appears on both sides
        assert_eq!(train.label_universe(), ds.label_universe());
        assert_eq!(test.label_universe(), ds.label_universe());
    }

    #[test]
    fn persistence_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ds.jsonl");
        let ds = dataset(vec![
            rule_with(1, &["T1046"]),
            rule_with(2, &["T1046", "T1105"]),
        ]);
        save_dataset_to(&ds, &path, Some("train")).unwrap();
        let loaded = load_dataset(&path).unwrap();
        assert_eq!(ds, loaded);
    }
}
