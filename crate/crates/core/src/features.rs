//! Text features: tokenization, TF-IDF vectorization, label binarization.
//!
//! Rule text (see [`crate::snort::feature_text`]) is tokenized into
//! lowercase alphanumeric terms and embedded as L2-normalized TF-IDF
//! vectors with smoothed inverse document frequency:
//!
//! `idf(t) = ln((1 + N) / (1 + df(t))) + 1`
//!
//! Vocabulary indices are assigned in lexicographic term order so a model
//! fit twice on the same corpus is bit-identical.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attack::TechniqueId;
use crate::dataset::LabeledDataset;

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error("cannot fit a vectorizer on an empty corpus")]
    EmptyCorpus,
    #[error("vocabulary cap must be at least 1")]
    BadVocabCap,
}

/// Tokenizer knobs. `ngram_max = 1` (the default) emits unigrams only;
/// `2` additionally emits adjacent-pair bigrams joined with `_`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct TokenizerConfig {
    pub ngram_max: usize,
}

impl Default for TokenizerConfig {
    fn default() -> Self {
        Self { ngram_max: 1 }
    }
}

/// Lowercase, split on non-alphanumeric characters, and drop one-character
/// fragments unless they are digits (option values like `rev 1` carry
/// signal). Order of appearance is preserved; duplicates are kept.
pub fn tokenize(text: &str, config: &TokenizerConfig) -> Vec<String> {
    let lower = text.to_lowercase();
    let unigrams: Vec<String> = lower
        .split(|c: char| !c.is_ascii_alphanumeric())
        .filter(|t| !t.is_empty() && (t.len() >= 2 || t.chars().all(|c| c.is_ascii_digit())))
        .map(str::to_string)
        .collect();
    let mut tokens = unigrams;
    if config.ngram_max >= 2 {
        let pairs: Vec<String> = tokens
            .windows(2)
            .map(|w| format!("{}_{}", w[0], w[1]))
            .collect();
        tokens.extend(pairs);
    }
    tokens
}

/// Vectorizer configuration: tokenizer plus an optional cap keeping only
/// the `max_vocab` terms with the highest document frequency (ties broken
/// lexicographically).
#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq, Eq)]
pub struct TfidfConfig {
    pub tokenizer: TokenizerConfig,
    pub max_vocab: Option<usize>,
}

/// Term table with document statistics. Term indices are positions in the
/// lexicographically sorted term list.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(from = "RawVocabulary", into = "RawVocabulary")]
pub struct Vocabulary {
    terms: Vec<String>,
    document_frequency: Vec<usize>,
    document_count: usize,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize, Clone)]
struct RawVocabulary {
    terms: Vec<String>,
    document_frequency: Vec<usize>,
    document_count: usize,
}

impl From<RawVocabulary> for Vocabulary {
    fn from(raw: RawVocabulary) -> Self {
        let index = raw
            .terms
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Self {
            terms: raw.terms,
            document_frequency: raw.document_frequency,
            document_count: raw.document_count,
            index,
        }
    }
}

impl From<Vocabulary> for RawVocabulary {
    fn from(v: Vocabulary) -> Self {
        Self {
            terms: v.terms,
            document_frequency: v.document_frequency,
            document_count: v.document_count,
        }
    }
}

impl Vocabulary {
    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn term(&self, index: usize) -> Option<&str> {
        self.terms.get(index).map(String::as_str)
    }

    pub fn index_of(&self, term: &str) -> Option<usize> {
        self.index.get(term).copied()
    }

    pub fn document_frequency(&self, index: usize) -> Option<usize> {
        self.document_frequency.get(index).copied()
    }

    pub fn document_count(&self) -> usize {
        self.document_count
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }
}

/// Sparse feature vector: `(term index, weight)` pairs sorted by index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct FeatureVector {
    entries: Vec<(usize, f64)>,
}

impl FeatureVector {
    pub fn new(mut entries: Vec<(usize, f64)>) -> Self {
        entries.sort_by_key(|&(i, _)| i);
        entries.retain(|&(_, w)| w != 0.0);
        Self { entries }
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, index: usize) -> f64 {
        match self.entries.binary_search_by_key(&index, |&(i, _)| i) {
            Ok(pos) => self.entries[pos].1,
            Err(_) => 0.0,
        }
    }

    pub fn l2_norm(&self) -> f64 {
        self.entries.iter().map(|&(_, w)| w * w).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &FeatureVector) -> f64 {
        let (mut a, mut b) = (
            self.entries.iter().peekable(),
            other.entries.iter().peekable(),
        );
        let mut sum = 0.0;
        while let (Some(&&(ia, wa)), Some(&&(ib, wb))) = (a.peek(), b.peek()) {
            match ia.cmp(&ib) {
                std::cmp::Ordering::Less => {
                    a.next();
                }
                std::cmp::Ordering::Greater => {
                    b.next();
                }
                std::cmp::Ordering::Equal => {
                    sum += wa * wb;
                    a.next();
                    b.next();
                }
            }
        }
        sum
    }

    /// Dot product against a dense weight vector.
    pub fn dot_dense(&self, weights: &[f64]) -> f64 {
        self.entries
            .iter()
            .map(|&(i, w)| w * weights.get(i).copied().unwrap_or(0.0))
            .sum()
    }
}

/// Fitted TF-IDF vectorizer.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TfidfModel {
    pub config: TfidfConfig,
    vocab: Vocabulary,
    idf: Vec<f64>,
}

/// Fit a vectorizer on a corpus of documents.
pub fn fit_tfidf(corpus: &[String], config: &TfidfConfig) -> Result<TfidfModel, FeatureError> {
    if corpus.is_empty() {
        return Err(FeatureError::EmptyCorpus);
    }
    if config.max_vocab == Some(0) {
        return Err(FeatureError::BadVocabCap);
    }
    let mut df: BTreeMap<String, usize> = BTreeMap::new();
    for doc in corpus {
        let unique: BTreeSet<String> = tokenize(doc, &config.tokenizer).into_iter().collect();
        for term in unique {
            *df.entry(term).or_insert(0) += 1;
        }
    }
    let mut terms: Vec<(String, usize)> = df.into_iter().collect();
    if let Some(cap) = config.max_vocab {
        if terms.len() > cap {
            // highest document frequency first, lexicographic within a tie
            terms.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
            terms.truncate(cap);
        }
    }
    terms.sort_by(|a, b| a.0.cmp(&b.0));

    let n = corpus.len();
    let idf: Vec<f64> = terms
        .iter()
        .map(|&(_, df)| ((1.0 + n as f64) / (1.0 + df as f64)).ln() + 1.0)
        .collect();
    let (term_list, dfs): (Vec<String>, Vec<usize>) = terms.into_iter().unzip();
    let index = term_list
        .iter()
        .enumerate()
        .map(|(i, t)| (t.clone(), i))
        .collect();
    Ok(TfidfModel {
        config: config.clone(),
        vocab: Vocabulary {
            terms: term_list,
            document_frequency: dfs,
            document_count: n,
            index,
        },
        idf,
    })
}

impl TfidfModel {
    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn idf(&self, index: usize) -> Option<f64> {
        self.idf.get(index).copied()
    }

    pub fn dimension(&self) -> usize {
        self.vocab.len()
    }

    /// Embed a document. Out-of-vocabulary tokens are ignored; a document
    /// with no known tokens maps to the zero vector.
    pub fn transform(&self, text: &str) -> FeatureVector {
        let mut counts: BTreeMap<usize, f64> = BTreeMap::new();
        for token in tokenize(text, &self.config.tokenizer) {
            if let Some(i) = self.vocab.index_of(&token) {
                *counts.entry(i).or_insert(0.0) += 1.0;
            }
        }
        let mut entries: Vec<(usize, f64)> = counts
            .into_iter()
            .map(|(i, tf)| (i, tf * self.idf[i]))
            .collect();
        let norm = entries.iter().map(|&(_, w)| w * w).sum::<f64>().sqrt();
        if norm > 0.0 {
            for e in &mut entries {
                e.1 /= norm;
            }
        }
        FeatureVector { entries }
    }

    pub fn transform_all(&self, texts: &[String]) -> Vec<FeatureVector> {
        texts.iter().map(|t| self.transform(t)).collect()
    }
}

/// Dense row-major boolean label matrix aligned with a dataset's rules and
/// its sorted label universe.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMatrix {
    rows: Vec<Vec<bool>>,
    width: usize,
}

impl LabelMatrix {
    pub fn rows(&self) -> usize {
        self.rows.len()
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn row(&self, i: usize) -> &[bool] {
        &self.rows[i]
    }

    /// Per-rule flags for one label, in rule order.
    pub fn column(&self, j: usize) -> Vec<bool> {
        self.rows.iter().map(|r| r[j]).collect()
    }

    pub fn positives_in_column(&self, j: usize) -> usize {
        self.rows.iter().filter(|r| r[j]).count()
    }
}

/// Turn a dataset's label sets into a binary indicator matrix; column `j`
/// corresponds to `labels[j]`, the dataset's sorted label universe.
pub fn binarize_labels(ds: &LabeledDataset) -> (LabelMatrix, Vec<TechniqueId>) {
    let labels: Vec<TechniqueId> = ds.label_universe().to_vec();
    let index: HashMap<&TechniqueId, usize> =
        labels.iter().enumerate().map(|(i, l)| (l, i)).collect();
    let rows = ds
        .rules()
        .iter()
        .map(|rule| {
            let mut row = vec![false; labels.len()];
            for id in &rule.technique_ids {
                row[index[id]] = true;
            }
            row
        })
        .collect();
    (
        LabelMatrix {
            rows,
            width: labels.len(),
        },
        labels,
    )
}
