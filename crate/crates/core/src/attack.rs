//! MITRE ATT&CK technique/tactic registry.
//!
//! The catalog is loaded from a pinned snapshot file (JSON) and is immutable
//! after load, so it can be shared freely across threads. Lookups of unknown
//! ids are errors, never silent defaults.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors raised while loading or querying the catalog.
#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("invalid technique id `{0}`: expected T + 4 digits, optionally .3 digits")]
    InvalidTechniqueId(String),
    #[error("invalid tactic id `{0}`: expected TA + 4 digits")]
    InvalidTacticId(String),
    #[error("failed to read catalog file: {0}")]
    Io(#[from] std::io::Error),
    #[error("catalog parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("empty catalog")]
    Empty,
    #[error("duplicate technique id {0}")]
    DuplicateTechnique(TechniqueId),
    #[error("technique {0} has an empty tactic list")]
    NoTactics(TechniqueId),
    #[error("sub-technique {0} has no parent entry in the catalog")]
    MissingParent(TechniqueId),
    #[error("unknown technique id {0}")]
    UnknownTechnique(TechniqueId),
    #[error("batch count {requested} out of range 1..={max}")]
    BatchCountOutOfRange { requested: usize, max: usize },
}

/// A MITRE ATT&CK technique id: `T` + 4 digits, with an optional `.` + 3
/// digit sub-technique suffix (e.g. `T1059` or `T1059.004`).
///
/// Ordering is lexicographic on the underlying string, which is used for
/// deterministic tie-breaking throughout the crate.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct TechniqueId(String);

impl TechniqueId {
    pub fn new(value: impl Into<String>) -> Result<Self, CatalogError> {
        let value = value.into();
        if Self::is_valid(&value) {
            Ok(Self(value))
        } else {
            Err(CatalogError::InvalidTechniqueId(value))
        }
    }

    fn is_valid(s: &str) -> bool {
        let bytes = s.as_bytes();
        match bytes.len() {
            5 => bytes[0] == b'T' && bytes[1..].iter().all(u8::is_ascii_digit),
            9 => {
                bytes[0] == b'T'
                    && bytes[1..5].iter().all(u8::is_ascii_digit)
                    && bytes[5] == b'.'
                    && bytes[6..].iter().all(u8::is_ascii_digit)
            }
            _ => false,
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// True iff the id carries a sub-technique suffix.
    pub fn is_sub(&self) -> bool {
        self.0.contains('.')
    }

    /// Parent technique of a sub-technique; `None` for base techniques.
    pub fn parent(&self) -> Option<TechniqueId> {
        self.0
            .split_once('.')
            .map(|(base, _)| TechniqueId(base.to_string()))
    }

    /// The id scored at base-technique granularity: the parent for
    /// sub-techniques, the id itself otherwise.
    pub fn rollup(&self) -> TechniqueId {
        self.parent().unwrap_or_else(|| self.clone())
    }
}

impl FromStr for TechniqueId {
    type Err = CatalogError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::new(s)
    }
}

impl TryFrom<String> for TechniqueId {
    type Error = CatalogError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        Self::new(value)
    }
}

impl From<TechniqueId> for String {
    fn from(id: TechniqueId) -> Self {
        id.0
    }
}

impl fmt::Display for TechniqueId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// A MITRE ATT&CK tactic id: `TA` + 4 digits (e.g. `TA0002`).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct TacticId(String);

impl TacticId {
    pub fn new(value: impl Into<String>) -> Result<Self, CatalogError> {
        let value = value.into();
        let bytes = value.as_bytes();
        let ok = bytes.len() == 6
            && bytes[0] == b'T'
            && bytes[1] == b'A'
            && bytes[2..].iter().all(u8::is_ascii_digit);
        if ok {
            Ok(Self(value))
        } else {
            Err(CatalogError::InvalidTacticId(value))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl FromStr for TacticId {
    type Err = CatalogError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::new(s)
    }
}

impl TryFrom<String> for TacticId {
    type Error = CatalogError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        Self::new(value)
    }
}

impl From<TacticId> for String {
    fn from(id: TacticId) -> Self {
        id.0
    }
}

impl fmt::Display for TacticId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// One technique in the registry, with the tactic(s) it serves.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TechniqueEntry {
    pub id: TechniqueId,
    pub name: String,
    pub tactics: BTreeSet<TacticId>,
    pub deprecated: bool,
}

impl TechniqueEntry {
    pub fn is_sub(&self) -> bool {
        self.id.is_sub()
    }
}

#[derive(Deserialize)]
struct RawEntry {
    technique_id: TechniqueId,
    name: String,
    tactics: Vec<TacticId>,
    #[serde(default)]
    deprecated: bool,
}

#[derive(Deserialize)]
struct RawCatalog {
    version: String,
    entries: Vec<RawEntry>,
}

/// The technique/tactic registry backing labeling, tactic derivation, and
/// prompt construction.
#[derive(Debug, Clone)]
pub struct AttackCatalog {
    version: String,
    entries: BTreeMap<TechniqueId, TechniqueEntry>,
}

impl AttackCatalog {
    /// Load and validate a catalog snapshot file.
    ///
    /// Deprecated entries are flagged but retained.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, CatalogError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    /// Parse a catalog from its JSON text.
    pub fn from_json(text: &str) -> Result<Self, CatalogError> {
        let raw: RawCatalog = serde_json::from_str(text)?;
        let entries = raw
            .entries
            .into_iter()
            .map(|e| TechniqueEntry {
                id: e.technique_id,
                name: e.name,
                tactics: e.tactics.into_iter().collect(),
                deprecated: e.deprecated,
            })
            .collect();
        Self::from_entries(raw.version, entries)
    }

    /// Build a catalog from already-parsed entries, enforcing the registry
    /// invariants: non-empty, unique ids, non-empty tactic sets, and every
    /// sub-technique's parent present.
    pub fn from_entries(
        version: impl Into<String>,
        entries: Vec<TechniqueEntry>,
    ) -> Result<Self, CatalogError> {
        if entries.is_empty() {
            return Err(CatalogError::Empty);
        }
        let mut map = BTreeMap::new();
        for entry in entries {
            if entry.tactics.is_empty() {
                return Err(CatalogError::NoTactics(entry.id));
            }
            if let Some(prev) = map.insert(entry.id.clone(), entry) {
                return Err(CatalogError::DuplicateTechnique(prev.id));
            }
        }
        for id in map.keys() {
            if let Some(parent) = id.parent() {
                if !map.contains_key(&parent) {
                    return Err(CatalogError::MissingParent(id.clone()));
                }
            }
        }
        Ok(Self {
            version: version.into(),
            entries: map,
        })
    }

    pub fn version(&self) -> &str {
        &self.version
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, id: &TechniqueId) -> bool {
        self.entries.contains_key(id)
    }

    pub fn get(&self, id: &TechniqueId) -> Option<&TechniqueEntry> {
        self.entries.get(id)
    }

    /// All entries in lexicographic id order.
    pub fn entries(&self) -> impl Iterator<Item = &TechniqueEntry> {
        self.entries.values()
    }

    /// Non-deprecated entries in lexicographic id order. This is the set
    /// offered to prompt technique guides.
    pub fn active_entries(&self) -> impl Iterator<Item = &TechniqueEntry> {
        self.entries.values().filter(|e| !e.deprecated)
    }

    /// The full tactic set of a technique. Multi-tactic techniques
    /// contribute all of their tactics (union semantics).
    pub fn tactics_of(&self, id: &TechniqueId) -> Result<&BTreeSet<TacticId>, CatalogError> {
        self.entries
            .get(id)
            .map(|e| &e.tactics)
            .ok_or_else(|| CatalogError::UnknownTechnique(id.clone()))
    }

    /// Every tactic referenced by at least one entry.
    pub fn tactic_universe(&self) -> BTreeSet<TacticId> {
        self.entries
            .values()
            .flat_map(|e| e.tactics.iter().cloned())
            .collect()
    }

    /// Techniques whose tactic sets intersect `tactics`, in id order.
    pub fn techniques_under(&self, tactics: &BTreeSet<TacticId>) -> Vec<&TechniqueEntry> {
        self.entries
            .values()
            .filter(|e| e.tactics.intersection(tactics).next().is_some())
            .collect()
    }

    /// Partition all entries into `batch_count` batches.
    ///
    /// Entries are taken in lexicographic id order and chunked so that batch
    /// sizes differ by at most one, larger batches first. The batches are
    /// disjoint and cover the catalog exactly.
    pub fn technique_batches(
        &self,
        batch_count: usize,
    ) -> Result<Vec<Vec<&TechniqueEntry>>, CatalogError> {
        let n = self.entries.len();
        if batch_count == 0 || batch_count > n {
            return Err(CatalogError::BatchCountOutOfRange {
                requested: batch_count,
                max: n,
            });
        }
        let base = n / batch_count;
        let extra = n % batch_count;
        let mut iter = self.entries.values();
        let mut batches = Vec::with_capacity(batch_count);
        for i in 0..batch_count {
            let size = base + usize::from(i < extra);
            batches.push(iter.by_ref().take(size).collect());
        }
        Ok(batches)
    }
}
