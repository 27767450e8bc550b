//! Prompt construction, LLM labeling, and the batch-competition protocol.
//!
//! A prompt is assembled from up to three parts: a fixed task instruction
//! (template file), an optional candidate-technique guide, and optional
//! in-context examples. Responses are mined for technique ids and validated
//! against the catalog, so downstream consumers never see ids the catalog
//! does not know.

pub mod client;
pub mod script;

pub use client::{
    ChatClient, ChatMessage, ChatRequest, ChatResponse, ClientError, HttpChatClient,
    HttpClientConfig,
};
pub use script::{ScriptedClient, TranscriptEntry};

use std::collections::BTreeSet;
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attack::{AttackCatalog, CatalogError, TechniqueEntry, TechniqueId};
use crate::dataset::LabeledDataset;
use crate::snort::SnortRule;
use client::{send_with_retry, RetryPolicy};

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("invalid prompt config: {0}")]
    BadConfig(String),
    #[error("prompt template is missing the {0} placeholder")]
    MissingPlaceholder(&'static str),
    #[error("template read failed: {0}")]
    TemplateIo(#[from] std::io::Error),
    #[error("{need} in-context examples requested but only {have} available")]
    NotEnoughExamples { need: usize, have: usize },
    #[error("catalog error: {0}")]
    Catalog(#[from] CatalogError),
    #[error("labeling rule sid {} failed: {source}", .sid.map(|s| s.to_string()).unwrap_or_else(|| "?".into()))]
    Labeling {
        sid: Option<u64>,
        source: ClientError,
    },
}

/// Batch-competition parameters: the catalog is divided into `batch_count`
/// near-equal technique batches, and the pooled answer is re-queried
/// `rounds` more times restricted to itself.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompetitionConfig {
    pub batch_count: usize,
    pub rounds: usize,
}

impl Default for CompetitionConfig {
    fn default() -> Self {
        Self {
            batch_count: 11,
            rounds: 3,
        }
    }
}

/// Which prompt variant to run: technique guide on/off, 0–2 in-context
/// examples, optional competition, and the decoding temperature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptConfig {
    #[serde(default)]
    pub use_technique_guide: bool,
    #[serde(default)]
    pub icl_count: usize,
    #[serde(default)]
    pub competition: Option<CompetitionConfig>,
    #[serde(default)]
    pub temperature: f64,
}

impl Default for PromptConfig {
    fn default() -> Self {
        Self {
            use_technique_guide: false,
            icl_count: 0,
            competition: None,
            temperature: 0.0,
        }
    }
}

impl PromptConfig {
    pub fn validate(&self) -> Result<(), PromptError> {
        if self.icl_count > 2 {
            return Err(PromptError::BadConfig(format!(
                "icl_count must be 0, 1, or 2, got {}",
                self.icl_count
            )));
        }
        if let Some(competition) = &self.competition {
            if competition.rounds < 1 {
                return Err(PromptError::BadConfig(
                    "competition rounds must be at least 1".to_string(),
                ));
            }
            if competition.batch_count < 1 {
                return Err(PromptError::BadConfig(
                    "competition batch_count must be at least 1".to_string(),
                ));
            }
        }
        Ok(())
    }

    /// Short display name, e.g. `T-ICL2` or `ICL0-CQ11x3`.
    pub fn display_name(&self) -> String {
        let mut name = String::new();
        if self.use_technique_guide {
            name.push_str("T-");
        }
        name.push_str(&format!("ICL{}", self.icl_count));
        if let Some(c) = &self.competition {
            name.push_str(&format!("-CQ{}x{}", c.batch_count, c.rounds));
        }
        name
    }
}

/// A correctly labeled rule shown to the model as a demonstration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IclExample {
    pub rule_text: String,
    pub technique_ids: BTreeSet<TechniqueId>,
}

/// The task-instruction template. The text must contain `{RULE}`,
/// `{TECHNIQUE_LIST}`, and `{EXAMPLES}` placeholders; the latter two are
/// replaced with empty strings when the config omits those sections.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplates {
    pub label: String,
}

impl Default for PromptTemplates {
    fn default() -> Self {
        Self {
            label: include_str!("../../templates/label_prompt.txt").to_string(),
        }
    }
}

impl PromptTemplates {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, PromptError> {
        let label = std::fs::read_to_string(path)?;
        let templates = Self { label };
        templates.validate()?;
        Ok(templates)
    }

    pub fn validate(&self) -> Result<(), PromptError> {
        for placeholder in ["{RULE}", "{TECHNIQUE_LIST}", "{EXAMPLES}"] {
            if !self.label.contains(placeholder) {
                return Err(PromptError::MissingPlaceholder(match placeholder {
                    "{RULE}" => "{RULE}",
                    "{TECHNIQUE_LIST}" => "{TECHNIQUE_LIST}",
                    _ => "{EXAMPLES}",
                }));
            }
        }
        Ok(())
    }
}

/// A fully rendered prompt and the parts it was assembled from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prompt {
    /// Task instruction template (S).
    pub task_spec: String,
    /// Candidate-technique guide block (C), when enabled.
    pub context: Option<String>,
    /// In-context example block (M), when any examples were requested.
    pub guidance: Option<String>,
    pub rule_text: String,
    pub rendered: String,
}

impl Prompt {
    /// Whitespace token count of the rendered text; the prompt-search tie
    /// break prefers cheaper prompts.
    pub fn token_count(&self) -> usize {
        self.rendered.split_whitespace().count()
    }

    pub fn to_request(&self, temperature: f64) -> ChatRequest {
        ChatRequest::user(self.rendered.clone(), temperature)
    }
}

fn technique_guide_block(entries: &[&TechniqueEntry]) -> String {
    let mut block =
        String::from("Candidate ATT&CK techniques (answer only with ids from this list):\n");
    for entry in entries {
        block.push_str(&format!("{} - {}\n", entry.id, entry.name));
    }
    block.push('\n');
    block
}

fn examples_block(examples: &[IclExample]) -> String {
    let mut block = String::from("Examples:\n");
    for example in examples {
        let ids: Vec<&str> = example.technique_ids.iter().map(|t| t.as_str()).collect();
        block.push_str(&format!(
            "Rule: {}\nTechniques: {}\n\n",
            example.rule_text.trim(),
            ids.join(", ")
        ));
    }
    block
}

fn render(
    templates: &PromptTemplates,
    rule: &SnortRule,
    guide: Option<&[&TechniqueEntry]>,
    examples: &[IclExample],
) -> Result<Prompt, PromptError> {
    templates.validate()?;
    let context = guide.map(technique_guide_block);
    let guidance = (!examples.is_empty()).then(|| examples_block(examples));
    let rule_text = rule.raw.trim().to_string();
    let rendered = templates
        .label
        .replace("{TECHNIQUE_LIST}", context.as_deref().unwrap_or(""))
        .replace("{EXAMPLES}", guidance.as_deref().unwrap_or(""))
        .replace("{RULE}", &rule_text);
    Ok(Prompt {
        task_spec: templates.label.clone(),
        context,
        guidance,
        rule_text,
        rendered,
    })
}

/// Assemble the prompt for one rule: task spec, the full active-catalog
/// guide when `use_technique_guide` is set, and the first `icl_count`
/// examples in the given order.
pub fn build_prompt(
    templates: &PromptTemplates,
    config: &PromptConfig,
    rule: &SnortRule,
    catalog: &AttackCatalog,
    examples: &[IclExample],
) -> Result<Prompt, PromptError> {
    config.validate()?;
    if examples.len() < config.icl_count {
        return Err(PromptError::NotEnoughExamples {
            need: config.icl_count,
            have: examples.len(),
        });
    }
    let guide: Option<Vec<&TechniqueEntry>> = config
        .use_technique_guide
        .then(|| catalog.active_entries().collect());
    render(
        templates,
        rule,
        guide.as_deref(),
        &examples[..config.icl_count],
    )
}

/// Technique ids mined from a model response.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ParsedTechniques {
    pub ids: BTreeSet<TechniqueId>,
    /// Pattern matches the catalog does not know, dropped from `ids`.
    pub unknown: Vec<String>,
}

fn technique_pattern() -> &'static Regex {
    static PATTERN: OnceLock<Regex> = OnceLock::new();
    PATTERN.get_or_init(|| Regex::new(r"\bT\d{4}(?:\.\d{3})?\b").expect("valid pattern"))
}

/// Extract every technique id appearing in free text, deduplicated and
/// validated against the catalog. An empty result is a valid answer.
pub fn parse_techniques(text: &str, catalog: &AttackCatalog) -> ParsedTechniques {
    let mut parsed = ParsedTechniques::default();
    for found in technique_pattern().find_iter(text) {
        let id = TechniqueId::new(found.as_str()).expect("pattern guarantees shape");
        if catalog.contains(&id) {
            parsed.ids.insert(id);
        } else if !parsed.unknown.contains(&found.as_str().to_string()) {
            parsed.unknown.push(found.as_str().to_string());
        }
    }
    parsed
}

/// One rule's LLM answer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionSet {
    pub technique_ids: BTreeSet<TechniqueId>,
    pub raw_response: String,
    pub explanation: Option<String>,
    /// Transport retries spent across the whole operation.
    pub retries: u32,
}

fn extract_explanation(text: &str) -> Option<String> {
    let explanation: Vec<&str> = text
        .lines()
        .map(str::trim)
        .filter(|line| !line.is_empty() && !line.to_lowercase().starts_with("techniques:"))
        .collect();
    if explanation.is_empty() {
        None
    } else {
        Some(explanation.join("\n"))
    }
}

/// Knobs shared by the labeling operations.
#[derive(Debug, Clone, Default)]
pub struct LabelOptions {
    pub templates: PromptTemplates,
    pub retry: RetryPolicy,
}

/// Label one rule. Dispatches to [`competition_label`] when the config
/// carries a competition section, otherwise runs the single-shot path:
/// build, send (with retries), parse.
pub fn label_with_llm(
    client: &dyn ChatClient,
    config: &PromptConfig,
    rule: &SnortRule,
    catalog: &AttackCatalog,
    examples: &[IclExample],
    options: &LabelOptions,
) -> Result<PredictionSet, PromptError> {
    config.validate()?;
    if config.competition.is_some() {
        return competition_label(client, config, rule, catalog, options)
            .map(|outcome| outcome.prediction);
    }
    let prompt = build_prompt(&options.templates, config, rule, catalog, examples)?;
    let (response, retries) = send_with_retry(
        client,
        &prompt.to_request(config.temperature),
        &options.retry,
    )
    .map_err(|source| PromptError::Labeling {
        sid: rule.sid,
        source,
    })?;
    let parsed = parse_techniques(&response.text, catalog);
    Ok(PredictionSet {
        technique_ids: parsed.ids,
        explanation: extract_explanation(&response.text),
        raw_response: response.text,
        retries,
    })
}

/// Full trace of one competition run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompetitionOutcome {
    pub prediction: PredictionSet,
    /// Union of per-batch answers after stage 1.
    pub stage1_pool: BTreeSet<TechniqueId>,
    /// Pool after each executed refinement round (never grows).
    pub refinement_pools: Vec<BTreeSet<TechniqueId>>,
    /// Chat requests actually issued.
    pub requests_sent: usize,
    /// Failed batches, skipped rounds, unknown ids.
    pub diagnostics: Vec<String>,
}

/// Batch-competition labeling.
///
/// Stage 1 queries the rule once per catalog batch, restricted to that
/// batch's techniques, and unions the answers into a candidate pool.
/// Stage 2 re-queries `rounds` times restricted to the current pool,
/// each time replacing the pool with `answer ∩ pool`, so the pool only
/// ever shrinks. Querying stops as soon as the pool is empty.
///
/// A batch or round whose request fails after retries contributes nothing
/// and is recorded as a diagnostic; transcript-protocol errors (exhaustion,
/// fingerprint mismatch) abort instead, since they mean the harness and
/// transcript disagree. In-context examples are never included: the
/// restricted technique list takes their place.
pub fn competition_label(
    client: &dyn ChatClient,
    config: &PromptConfig,
    rule: &SnortRule,
    catalog: &AttackCatalog,
    options: &LabelOptions,
) -> Result<CompetitionOutcome, PromptError> {
    config.validate()?;
    let competition = config.competition.as_ref().ok_or_else(|| {
        PromptError::BadConfig("competition_label requires a competition config".to_string())
    })?;
    let batches = catalog.technique_batches(competition.batch_count)?;

    let mut pool: BTreeSet<TechniqueId> = BTreeSet::new();
    let mut diagnostics = Vec::new();
    let mut requests_sent = 0usize;
    let mut total_retries = 0u32;
    let mut last_response = String::new();

    for (index, batch) in batches.iter().enumerate() {
        let prompt = render(&options.templates, rule, Some(batch), &[])?;
        requests_sent += 1;
        match send_with_retry(
            client,
            &prompt.to_request(config.temperature),
            &options.retry,
        ) {
            Ok((response, retries)) => {
                total_retries += retries;
                let parsed = parse_techniques(&response.text, catalog);
                for unknown in parsed.unknown {
                    diagnostics.push(format!("batch {index}: unknown id {unknown} dropped"));
                }
                pool.extend(parsed.ids);
                last_response = response.text;
            }
            Err(
                err @ (ClientError::TranscriptExhausted { .. }
                | ClientError::FingerprintMismatch { .. }),
            ) => {
                return Err(PromptError::Labeling {
                    sid: rule.sid,
                    source: err,
                });
            }
            Err(err) => {
                diagnostics.push(format!("batch {index} failed: {err}"));
            }
        }
    }
    let stage1_pool = pool.clone();

    let mut refinement_pools = Vec::new();
    for round in 1..=competition.rounds {
        if pool.is_empty() {
            break;
        }
        let entries: Vec<&TechniqueEntry> = pool
            .iter()
            .map(|id| catalog.get(id).expect("pool ids come from the catalog"))
            .collect();
        let prompt = render(&options.templates, rule, Some(&entries), &[])?;
        requests_sent += 1;
        match send_with_retry(
            client,
            &prompt.to_request(config.temperature),
            &options.retry,
        ) {
            Ok((response, retries)) => {
                total_retries += retries;
                let parsed = parse_techniques(&response.text, catalog);
                pool = parsed.ids.intersection(&pool).cloned().collect();
                refinement_pools.push(pool.clone());
                last_response = response.text;
            }
            Err(
                err @ (ClientError::TranscriptExhausted { .. }
                | ClientError::FingerprintMismatch { .. }),
            ) => {
                return Err(PromptError::Labeling {
                    sid: rule.sid,
                    source: err,
                });
            }
            Err(err) => {
                diagnostics.push(format!("refinement round {round} failed, pool kept: {err}"));
                refinement_pools.push(pool.clone());
            }
        }
    }

    Ok(CompetitionOutcome {
        prediction: PredictionSet {
            technique_ids: pool,
            explanation: extract_explanation(&last_response),
            raw_response: last_response,
            retries: total_retries,
        },
        stage1_pool,
        refinement_pools,
        requests_sent,
        diagnostics,
    })
}

/// Pick demonstration examples from the training split: for each technique
/// in descending frequency (ties lexicographic), the lowest-sid rule
/// carrying it that is not already chosen. Deterministic.
pub fn select_icl_examples(train: &LabeledDataset, count: usize) -> Vec<IclExample> {
    let frequencies = crate::dataset::label_frequencies(train);
    let mut ranked: Vec<(&TechniqueId, usize)> =
        frequencies.iter().map(|(id, &c)| (id, c)).collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));

    let mut chosen_sids = BTreeSet::new();
    let mut examples = Vec::new();
    for (technique, _) in ranked {
        if examples.len() == count {
            break;
        }
        let candidate = train
            .rules()
            .iter()
            .filter(|r| r.technique_ids.contains(technique) && !chosen_sids.contains(&r.sid))
            .min_by_key(|r| r.sid);
        if let Some(rule) = candidate {
            chosen_sids.insert(rule.sid);
            examples.push(IclExample {
                rule_text: rule.rule.raw.trim().to_string(),
                technique_ids: rule.technique_ids.clone(),
            });
        }
    }
    examples
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{LabeledDataset, LabeledRule};
    use crate::snort;
    use script::ScriptedClient;

    fn catalog() -> AttackCatalog {
        AttackCatalog::load(concat!(
            env!("CARGO_MANIFEST_DIR"),
            "/../../fixtures/attack_catalog.json"
        ))
        .unwrap()
    }

    fn sample_rule() -> SnortRule {
        snort::parse_rule("alert tcp any any -> any 445 (msg:\"SMB probe\"; sid:1000001; rev:1;)")
            .unwrap()
    }

    fn example(id: &str) -> IclExample {
        IclExample {
            rule_text: "alert udp any any -> any 53 (msg:\"DNS tunnel\"; sid:9;)".to_string(),
            technique_ids: [id.parse().unwrap()].into(),
        }
    }

    #[test]
    fn guide_and_examples_render_when_requested() {
        let config = PromptConfig {
            use_technique_guide: true,
            icl_count: 2,
            ..PromptConfig::default()
        };
        let catalog = catalog();
        let prompt = build_prompt(
            &PromptTemplates::default(),
            &config,
            &sample_rule(),
            &catalog,
            &[example("T1059"), example("T1105"), example("T1046")],
        )
        .unwrap();
        assert!(prompt.context.is_some());
        assert!(prompt.guidance.is_some());
        // exactly the first two examples, in order
        assert_eq!(
            prompt.guidance.as_ref().unwrap().matches("Rule: ").count(),
            2
        );
        let guide = prompt.context.as_ref().unwrap();
        for entry in catalog.active_entries() {
            assert!(guide.contains(entry.id.as_str()));
        }
        assert!(prompt.rendered.contains(&prompt.rule_text));
    }

    #[test]
    fn bare_config_renders_neither_section() {
        let prompt = build_prompt(
            &PromptTemplates::default(),
            &PromptConfig::default(),
            &sample_rule(),
            &catalog(),
            &[],
        )
        .unwrap();
        assert!(prompt.context.is_none());
        assert!(prompt.guidance.is_none());
        assert!(!prompt.rendered.contains("Candidate ATT&CK techniques"));
        assert!(!prompt.rendered.contains("Examples:"));
    }

    #[test]
    fn rendering_is_deterministic() {
        let config = PromptConfig {
            use_technique_guide: true,
            icl_count: 1,
            ..PromptConfig::default()
        };
        let catalog = catalog();
        let build = || {
            build_prompt(
                &PromptTemplates::default(),
                &config,
                &sample_rule(),
                &catalog,
                &[example("T1059")],
            )
            .unwrap()
        };
        assert_eq!(build().rendered, build().rendered);
    }

    #[test]
    fn too_few_examples_is_an_error() {
        let config = PromptConfig {
            icl_count: 2,
            ..PromptConfig::default()
        };
        let err = build_prompt(
            &PromptTemplates::default(),
            &config,
            &sample_rule(),
            &catalog(),
            &[example("T1059")],
        )
        .unwrap_err();
        assert!(matches!(
            err,
            PromptError::NotEnoughExamples { need: 2, have: 1 }
        ));
    }

    #[test]
    fn icl_count_above_two_rejected() {
        let config = PromptConfig {
            icl_count: 3,
            ..PromptConfig::default()
        };
        assert!(matches!(config.validate(), Err(PromptError::BadConfig(_))));
    }

    #[test]
    fn parse_picks_up_ids_in_prose() {
        let parsed = parse_techniques("This maps to T1059 (Command) and T1105.", &catalog());
        let ids: Vec<&str> = parsed.ids.iter().map(|t| t.as_str()).collect();
        assert_eq!(ids, ["T1059", "T1105"]);
        assert!(parsed.unknown.is_empty());
    }

    #[test]
    fn parse_of_plain_prose_is_empty() {
        let parsed = parse_techniques("no technique applies", &catalog());
        assert!(parsed.ids.is_empty());
    }

    #[test]
    fn parse_drops_unknown_ids() {
        let parsed = parse_techniques("T1059, T1059.004, T9999", &catalog());
        let ids: Vec<&str> = parsed.ids.iter().map(|t| t.as_str()).collect();
        assert_eq!(ids, ["T1059", "T1059.004"]);
        assert_eq!(parsed.unknown, ["T9999"]);
    }

    #[test]
    fn parse_deduplicates() {
        let parsed = parse_techniques("T1046 then T1046 again", &catalog());
        assert_eq!(parsed.ids.len(), 1);
    }

    #[test]
    fn single_shot_labels_from_script() {
        let client = ScriptedClient::from_replies(["Techniques: T1046"]);
        let prediction = label_with_llm(
            &client,
            &PromptConfig::default(),
            &sample_rule(),
            &catalog(),
            &[],
            &LabelOptions::default(),
        )
        .unwrap();
        let ids: Vec<&str> = prediction
            .technique_ids
            .iter()
            .map(|t| t.as_str())
            .collect();
        assert_eq!(ids, ["T1046"]);
        assert_eq!(prediction.retries, 0);
        assert_eq!(prediction.explanation, None);
    }

    #[test]
    fn prose_answer_keeps_raw_text() {
        let client = ScriptedClient::from_replies(["I cannot map this rule to anything specific."]);
        let prediction = label_with_llm(
            &client,
            &PromptConfig::default(),
            &sample_rule(),
            &catalog(),
            &[],
            &LabelOptions::default(),
        )
        .unwrap();
        assert!(prediction.technique_ids.is_empty());
        assert_eq!(
            prediction.raw_response,
            "I cannot map this rule to anything specific."
        );
        assert!(prediction.explanation.is_some());
    }

    #[test]
    fn transport_faults_are_retried_and_counted() {
        let transcript = r#"
{"ordinal": 0, "fail": "reset"}
{"ordinal": 1, "fail": "reset again"}
{"ordinal": 2, "reply": "Techniques: T1105"}
"#;
        let client = ScriptedClient::from_reader(
            std::io::Cursor::new(transcript.trim().as_bytes().to_vec()),
            false,
        )
        .unwrap();
        let options = LabelOptions {
            retry: RetryPolicy {
                max_retries: 3,
                base_delay: std::time::Duration::ZERO,
            },
            ..LabelOptions::default()
        };
        let prediction = label_with_llm(
            &client,
            &PromptConfig::default(),
            &sample_rule(),
            &catalog(),
            &[],
            &options,
        )
        .unwrap();
        assert_eq!(prediction.retries, 2);
        assert_eq!(prediction.technique_ids.len(), 1);
    }

    #[test]
    fn exhausted_retries_carry_the_sid() {
        let transcript = r#"{"ordinal": 0, "fail": "down"}"#;
        let client = ScriptedClient::from_reader(
            std::io::Cursor::new(transcript.as_bytes().to_vec()),
            false,
        )
        .unwrap();
        let options = LabelOptions {
            retry: RetryPolicy {
                max_retries: 0,
                base_delay: std::time::Duration::ZERO,
            },
            ..LabelOptions::default()
        };
        let err = label_with_llm(
            &client,
            &PromptConfig::default(),
            &sample_rule(),
            &catalog(),
            &[],
            &options,
        )
        .unwrap_err();
        match err {
            PromptError::Labeling { sid, .. } => assert_eq!(sid, Some(1000001)),
            other => panic!("expected labeling error, got {other:?}"),
        }
    }

    fn competition_config(batch_count: usize, rounds: usize) -> PromptConfig {
        PromptConfig {
            competition: Some(CompetitionConfig {
                batch_count,
                rounds,
            }),
            ..PromptConfig::default()
        }
    }

    #[test]
    fn competition_narrows_to_refined_answer() {
        // 2 batches answering T1059 and T1046, refinement always T1059
        let client = ScriptedClient::from_replies([
            "Techniques: T1059",
            "Techniques: T1046",
            "Techniques: T1059",
            "Techniques: T1059",
            "Techniques: T1059",
        ]);
        let outcome = competition_label(
            &client,
            &competition_config(2, 3),
            &sample_rule(),
            &catalog(),
            &LabelOptions::default(),
        )
        .unwrap();
        assert_eq!(outcome.requests_sent, 5);
        assert_eq!(outcome.stage1_pool.len(), 2);
        let finals: Vec<&str> = outcome
            .prediction
            .technique_ids
            .iter()
            .map(|t| t.as_str())
            .collect();
        assert_eq!(finals, ["T1059"]);
        // pools never grow
        let mut previous = outcome.stage1_pool.clone();
        for pool in &outcome.refinement_pools {
            assert!(pool.is_subset(&previous));
            previous = pool.clone();
        }
    }

    #[test]
    fn empty_stage_one_skips_refinement() {
        let client = ScriptedClient::from_replies(["nothing here", "nope"]);
        let outcome = competition_label(
            &client,
            &competition_config(2, 3),
            &sample_rule(),
            &catalog(),
            &LabelOptions::default(),
        )
        .unwrap();
        assert!(outcome.prediction.technique_ids.is_empty());
        assert_eq!(outcome.requests_sent, 2);
        assert_eq!(client.requests_seen(), 2);
        assert!(outcome.refinement_pools.is_empty());
    }

    #[test]
    fn refinement_cannot_introduce_new_ids() {
        // refinement answers T1059 + T1486; T1486 was never in the pool
        let client = ScriptedClient::from_replies([
            "Techniques: T1059",
            "Techniques: none",
            "Techniques: T1059, T1486",
        ]);
        let outcome = competition_label(
            &client,
            &competition_config(2, 1),
            &sample_rule(),
            &catalog(),
            &LabelOptions::default(),
        )
        .unwrap();
        let finals: Vec<&str> = outcome
            .prediction
            .technique_ids
            .iter()
            .map(|t| t.as_str())
            .collect();
        assert_eq!(finals, ["T1059"]);
    }

    #[test]
    fn failed_batch_contributes_nothing() {
        let transcript = r#"
{"ordinal": 0, "fail": "batch down"}
{"ordinal": 1, "reply": "Techniques: T1046"}
{"ordinal": 2, "reply": "Techniques: T1046"}
"#;
        let client = ScriptedClient::from_reader(
            std::io::Cursor::new(transcript.trim().as_bytes().to_vec()),
            false,
        )
        .unwrap();
        let options = LabelOptions {
            retry: RetryPolicy {
                max_retries: 0,
                base_delay: std::time::Duration::ZERO,
            },
            ..LabelOptions::default()
        };
        let outcome = competition_label(
            &client,
            &competition_config(2, 1),
            &sample_rule(),
            &catalog(),
            &options,
        )
        .unwrap();
        assert_eq!(outcome.stage1_pool.len(), 1);
        assert_eq!(outcome.diagnostics.len(), 1);
        assert!(outcome.diagnostics[0].contains("batch 0"));
    }

    #[test]
    fn transcript_exhaustion_aborts_competition() {
        let client = ScriptedClient::from_replies(["Techniques: T1059"]);
        let err = competition_label(
            &client,
            &competition_config(2, 1),
            &sample_rule(),
            &catalog(),
            &LabelOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, PromptError::Labeling { .. }));
    }

    #[test]
    fn dispatcher_routes_competition_configs() {
        let client = ScriptedClient::from_replies(["Techniques: none", "Techniques: none"]);
        let prediction = label_with_llm(
            &client,
            &competition_config(2, 3),
            &sample_rule(),
            &catalog(),
            &[],
            &LabelOptions::default(),
        )
        .unwrap();
        assert!(prediction.technique_ids.is_empty());
        assert_eq!(client.requests_seen(), 2);
    }

    #[test]
    fn icl_selection_prefers_frequent_techniques() {
        fn labeled(sid: u64, labels: &[&str]) -> LabeledRule {
            let text = format!("alert tcp any any -> any any (msg:\"r{sid}\"; sid:{sid};)");
            LabeledRule {
                sid,
                rule: snort::parse_rule(&text).unwrap(),
                technique_ids: labels.iter().map(|l| l.parse().unwrap()).collect(),
            }
        }
        let train = LabeledDataset::new(vec![
            labeled(5, &["T1046"]),
            labeled(3, &["T1046"]),
            labeled(7, &["T1046", "T1105"]),
            labeled(9, &["T1105"]),
            labeled(2, &["T1059"]),
        ])
        .unwrap();
        let examples = select_icl_examples(&train, 2);
        assert_eq!(examples.len(), 2);
        // T1046 is most frequent; its lowest-sid carrier is sid 3
        assert!(examples[0].rule_text.contains("sid:3"));
        // next technique T1105 (count 2): lowest sid carrying it is 7
        assert!(examples[1].rule_text.contains("sid:7"));
        // determinism
        assert_eq!(examples, select_icl_examples(&train, 2));
    }

    #[test]
    fn display_names() {
        assert_eq!(PromptConfig::default().display_name(), "ICL0");
        let config = PromptConfig {
            use_technique_guide: true,
            icl_count: 2,
            ..PromptConfig::default()
        };
        assert_eq!(config.display_name(), "T-ICL2");
        let config = PromptConfig {
            competition: Some(CompetitionConfig::default()),
            ..PromptConfig::default()
        };
        assert_eq!(config.display_name(), "ICL0-CQ11x3");
    }
}
