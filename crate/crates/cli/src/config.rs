//! TOML configuration for the `ruletag` binary. Every key has a default,
//! so an empty (or absent) file is a valid configuration; command-line
//! flags override file values.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use ruletag::classifiers::forest::ForestParams;
use ruletag::classifiers::gbm::GbmParams;
use ruletag::classifiers::svm::SvmParams;
use ruletag::classifiers::{Hyperparams, ModelType, ThresholdPolicy};
use ruletag::features::{TfidfConfig, TokenizerConfig};
use ruletag::prompting::PromptConfig;

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct AppConfig {
    pub catalog: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    pub split: SplitSection,
    pub features: FeaturesSection,
    pub classifier: ClassifierSection,
    pub prompt: PromptConfig,
    pub provider: ProviderSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSection {
    pub train_frac: f64,
    pub min_count: usize,
    pub seed: u64,
}

impl Default for SplitSection {
    fn default() -> Self {
        Self {
            train_frac: 0.8,
            min_count: 5,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeaturesSection {
    pub ngram_max: usize,
    pub max_vocab: Option<usize>,
}

impl Default for FeaturesSection {
    fn default() -> Self {
        Self {
            ngram_max: 1,
            max_vocab: None,
        }
    }
}

impl FeaturesSection {
    pub fn to_tfidf_config(&self) -> TfidfConfig {
        TfidfConfig {
            tokenizer: TokenizerConfig {
                ngram_max: self.ngram_max,
            },
            max_vocab: self.max_vocab,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierSection {
    pub model_type: ModelType,
    pub seed: u64,
    pub threshold: ThresholdPolicy,
    /// Refinement rounds used by `train --tune`.
    pub tune_rounds: usize,
    pub svm: SvmParams,
    pub rf: ForestParams,
    pub gbm: GbmParams,
}

impl Default for ClassifierSection {
    fn default() -> Self {
        Self {
            model_type: ModelType::Svm,
            seed: 7,
            threshold: ThresholdPolicy::Top1Fallback,
            tune_rounds: 2,
            svm: SvmParams::default(),
            rf: ForestParams::default(),
            gbm: GbmParams::default(),
        }
    }
}

impl ClassifierSection {
    pub fn to_hyperparams(&self) -> Hyperparams {
        Hyperparams {
            model_type: self.model_type,
            svm: self.svm.clone(),
            rf: self.rf.clone(),
            gbm: self.gbm.clone(),
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProviderSection {
    pub name: String,
    pub endpoint: Option<String>,
    pub model: String,
}

impl Default for ProviderSection {
    fn default() -> Self {
        Self {
            name: "openai".to_string(),
            endpoint: None,
            model: "gpt-4o".to_string(),
        }
    }
}

impl AppConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, String> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        toml::from_str(&text).map_err(|e| format!("bad config {}: {e}", path.display()))
    }
}
