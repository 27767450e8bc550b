//! Label Snort NIDS rules with MITRE ATT&CK techniques.
//!
//! The crate provides two labeling pipelines over a shared rule parser and
//! ATT&CK catalog:
//!
//! * **LLM prompting** — composable prompts (task spec, technique guide,
//!   in-context examples) sent through a pluggable [`prompting::ChatClient`],
//!   including a batch-competition protocol that narrows the catalog down
//!   over refinement rounds.
//! * **Supervised classifiers** — TF-IDF features feeding one-vs-rest
//!   linear SVM, random forest, or gradient-boosted trees, trained from
//!   sid-to-technique ground truth.
//!
//! Tactic-level labels are always derived from technique predictions via
//! the catalog, never predicted directly. Everything stochastic is seeded;
//! identical inputs and seeds reproduce identical models, splits, and
//! reports byte for byte.

pub mod attack;
pub mod baselines;
pub mod classifiers;
pub mod dataset;
pub mod evaluation;
pub mod features;
pub mod prompting;
pub mod rng;
pub mod snort;

pub use attack::{AttackCatalog, CatalogError, TacticId, TechniqueEntry, TechniqueId};
pub use classifiers::{Hyperparams, ModelType, MultiLabelClassifier, ThresholdPolicy};
pub use dataset::{DatasetError, DatasetSplit, LabeledDataset, LabeledRule};
pub use evaluation::{EvalLevel, EvalOptions, EvalReport};
pub use features::{FeatureVector, TfidfConfig, TfidfModel};
pub use prompting::{ChatClient, PromptConfig, ScriptedClient};
pub use snort::{RuleError, SnortRule};
