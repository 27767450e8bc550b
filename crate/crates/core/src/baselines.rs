//! Non-learned reference predictors.
//!
//! * **Top-k** — always answer the k most frequent training techniques.
//! * **RT-k (random within tactic)** — given the rule's gold tactics (the
//!   "analyst knows the tactic" oracle), answer k techniques drawn
//!   uniformly from the catalog techniques under those tactics.
//!
//! RT-k only makes sense at technique level: at tactic level it would be
//! scored against the very oracle it was given.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use thiserror::Error;

use crate::attack::{AttackCatalog, TacticId, TechniqueId};
use crate::dataset::{label_frequencies, LabeledDataset};
use crate::rng::derive_rng;

#[derive(Debug, Error, PartialEq)]
pub enum BaselineError {
    #[error("cannot fit a baseline on an empty training set")]
    EmptyTrain,
    #[error("k = {k} exceeds the {distinct} distinct training labels")]
    BadK { k: usize, distinct: usize },
}

/// Constant predictor answering the k most frequent training techniques.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TopKBaseline {
    pub k: usize,
    prediction: BTreeSet<TechniqueId>,
    frequency_table: BTreeMap<TechniqueId, usize>,
}

/// Rank training techniques by frequency (ties broken lexicographically by
/// id) and keep the top k as the fixed answer for every rule.
pub fn fit_top_k(train: &LabeledDataset, k: usize) -> Result<TopKBaseline, BaselineError> {
    if train.is_empty() {
        return Err(BaselineError::EmptyTrain);
    }
    let frequency_table = label_frequencies(train);
    if k == 0 || k > frequency_table.len() {
        return Err(BaselineError::BadK {
            k,
            distinct: frequency_table.len(),
        });
    }
    let mut ranked: Vec<(&TechniqueId, usize)> =
        frequency_table.iter().map(|(id, &c)| (id, c)).collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let prediction = ranked
        .into_iter()
        .take(k)
        .map(|(id, _)| id.clone())
        .collect();
    Ok(TopKBaseline {
        k,
        prediction,
        frequency_table,
    })
}

impl TopKBaseline {
    /// The same answer for every rule.
    pub fn predict(&self) -> &BTreeSet<TechniqueId> {
        &self.prediction
    }

    pub fn frequency_table(&self) -> &BTreeMap<TechniqueId, usize> {
        &self.frequency_table
    }
}

/// Sample k techniques uniformly without replacement from the catalog
/// techniques under the rule's gold tactics. A pool smaller than k is
/// returned whole. The draw is a pure function of `(seed, sid)`, so
/// concurrent evaluation order cannot change predictions.
pub fn random_within_tactic(
    catalog: &AttackCatalog,
    gold_tactics: &BTreeSet<TacticId>,
    k: usize,
    seed: u64,
    sid: u64,
) -> BTreeSet<TechniqueId> {
    let mut pool: Vec<TechniqueId> = catalog
        .techniques_under(gold_tactics)
        .iter()
        .map(|entry| entry.id.clone())
        .collect();
    let take = k.min(pool.len());
    let mut rng = derive_rng(seed, sid);
    for i in 0..take {
        let j = rng.gen_range(i..pool.len());
        pool.swap(i, j);
    }
    pool.truncate(take);
    pool.into_iter().collect()
}
