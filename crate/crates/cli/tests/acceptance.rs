//! Release gate: one test per acceptance criterion, each printing a single
//! `ACCEPTANCE <n> (<name>): PASS|FAIL` line (visible with `--nocapture`,
//! or on failure). Tolerances are pinned in the assertions themselves.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::Rng;

use ruletag::attack::{AttackCatalog, TechniqueId};
use ruletag::baselines::{fit_top_k, random_within_tactic};
use ruletag::classifiers::{train_multilabel, Hyperparams, ModelType, ThresholdPolicy};
use ruletag::dataset::{
    ingest, partition_rare, stratified_split, DatasetSplit, IngestOptions, LabeledDataset,
    LabeledRule,
};
use ruletag::evaluation::{
    derive_tactic_labels, evaluate_predictor, micro_metrics, ConfusionCounts, EvalLevel,
    EvalOptions, EvalReport,
};
use ruletag::features::{fit_tfidf, TfidfConfig};
use ruletag::prompting::{
    competition_label, CompetitionConfig, LabelOptions, PromptConfig, ScriptedClient,
};
use ruletag::rng::derive_rng;
use ruletag::snort::{parse_rule, parse_ruleset, serialize_rule};

// ---------------------------------------------------------------------------
// Harness

fn criterion(number: u32, name: &str, body: impl FnOnce() + std::panic::UnwindSafe) {
    let result = std::panic::catch_unwind(body);
    match &result {
        Ok(()) => println!("ACCEPTANCE {number} ({name}): PASS"),
        Err(_) => println!("ACCEPTANCE {number} ({name}): FAIL"),
    }
    if let Err(panic) = result {
        std::panic::resume_unwind(panic);
    }
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name)
        .canonicalize()
        .unwrap_or_else(|e| panic!("fixture {name}: {e}"))
}

fn catalog() -> AttackCatalog {
    AttackCatalog::load(fixture("attack_catalog.json")).unwrap()
}

fn rule_with(sid: u64, body: &str) -> LabeledRule {
    let text = format!("alert tcp any any -> any any (msg:\"{body}\"; sid:{sid};)");
    LabeledRule {
        sid,
        rule: parse_rule(&text).unwrap(),
        technique_ids: BTreeSet::new(),
    }
}

// ---------------------------------------------------------------------------
// 1. Micro-metric counts match a brute-force counting oracle on 1,000
//    randomized instances (≤ 50 rules, ≤ 10 labels) — integer counts exact,
//    ratios to 1e-12, all inside 5 s.

#[test]
fn acceptance_1_metric_oracle_equivalence() {
    criterion(1, "metric oracle equivalence", || {
        let catalog = catalog();
        let pool: Vec<TechniqueId> = (0..10)
            .map(|i| format!("T{}", 1200 + i).parse().unwrap())
            .collect();
        let started = Instant::now();

        for instance in 0..1000u64 {
            let mut rng = derive_rng(0xACCE97, instance);
            let n_rules = rng.gen_range(1..=50usize);
            let n_labels = rng.gen_range(1..=10usize);

            let mut rules = Vec::with_capacity(n_rules);
            let mut predictions = std::collections::BTreeMap::new();
            for sid in 0..n_rules as u64 {
                let mut gold = BTreeSet::new();
                while gold.is_empty() {
                    for label in &pool[..n_labels] {
                        if rng.gen_bool(0.35) {
                            gold.insert(label.clone());
                        }
                    }
                }
                let mut rule = rule_with(sid + 1, "oracle");
                rule.technique_ids = gold;
                rules.push(rule);

                // ~10% of rules get no prediction: scored as the empty set.
                if rng.gen_bool(0.9) {
                    let mut pred = BTreeSet::new();
                    for label in &pool[..n_labels] {
                        if rng.gen_bool(0.35) {
                            pred.insert(label.clone());
                        }
                    }
                    predictions.insert(sid + 1, pred);
                }
            }
            let ds = LabeledDataset::new(rules).unwrap();

            let report = evaluate_predictor(
                &ds,
                |rule| {
                    predictions
                        .get(&rule.sid)
                        .cloned()
                        .ok_or_else(|| "no prediction".to_string())
                },
                &EvalOptions::default(),
                &catalog,
            )
            .unwrap();

            // Independent oracle: per rule, per pool label, count membership.
            let empty = BTreeSet::new();
            let (mut tp, mut fp, mut fn_) = (0u64, 0u64, 0u64);
            for rule in ds.rules() {
                let pred = predictions.get(&rule.sid).unwrap_or(&empty);
                for label in &pool[..n_labels] {
                    let in_gold = rule.technique_ids.contains(label);
                    let in_pred = pred.contains(label);
                    match (in_gold, in_pred) {
                        (true, true) => tp += 1,
                        (false, true) => fp += 1,
                        (true, false) => fn_ += 1,
                        (false, false) => {}
                    }
                }
            }
            assert_eq!(
                (report.counts.tp, report.counts.fp, report.counts.fn_),
                (tp, fp, fn_)
            );

            let precision = if tp + fp == 0 {
                0.0
            } else {
                tp as f64 / (tp + fp) as f64
            };
            let recall = if tp + fn_ == 0 {
                0.0
            } else {
                tp as f64 / (tp + fn_) as f64
            };
            let f1 = if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
            assert!((report.precision - precision).abs() <= 1e-12);
            assert!((report.recall - recall).abs() <= 1e-12);
            assert!((report.f1 - f1).abs() <= 1e-12);

            let (p2, r2, f2) = micro_metrics(&ConfusionCounts::new(tp, fp, fn_));
            assert!((report.precision - p2).abs() <= 1e-12);
            assert!((report.recall - r2).abs() <= 1e-12);
            assert!((report.f1 - f2).abs() <= 1e-12);

            // Per-label counts must sum back to the totals.
            let label_sum: (u64, u64, u64) = report
                .per_label
                .values()
                .fold((0, 0, 0), |(a, b, c), counts| {
                    (a + counts.tp, b + counts.fp, c + counts.fn_)
                });
            assert_eq!(label_sum, (tp, fp, fn_));
        }

        let elapsed = started.elapsed();
        assert!(elapsed < Duration::from_secs(5), "took {elapsed:?}");
    });
}

// ---------------------------------------------------------------------------
// 2. TF-IDF hand check on the two-document fixture: idf(cmd) = 1,
//    idf(exe) = ln(1.5) + 1, every transformed vector has unit L2 norm.

#[test]
fn acceptance_2_tfidf_hand_check() {
    criterion(2, "tf-idf hand check", || {
        let corpus = vec!["cmd exe".to_string(), "cmd".to_string()];
        let model = fit_tfidf(&corpus, &TfidfConfig::default()).unwrap();

        let cmd = model.vocab().index_of("cmd").unwrap();
        let exe = model.vocab().index_of("exe").unwrap();
        assert!((model.idf(cmd).unwrap() - 1.0).abs() <= 1e-12);
        let expected = 1.5f64.ln() + 1.0;
        assert!((model.idf(exe).unwrap() - expected).abs() <= 1e-12);
        assert!((expected - 1.405465).abs() < 1e-6);

        for text in &corpus {
            assert!((model.transform(text).l2_norm() - 1.0).abs() <= 1e-12);
        }

        // The unit-norm property must hold corpus-wide, not just on the
        // two-document fixture: check every bundled community rule.
        let text = std::fs::read_to_string(fixture("community.rules")).unwrap();
        let (rules, _) = parse_ruleset(&text);
        let texts: Vec<String> = rules.iter().map(ruletag::snort::feature_text).collect();
        let model = fit_tfidf(&texts, &TfidfConfig::default()).unwrap();
        for text in &texts {
            assert!((model.transform(text).l2_norm() - 1.0).abs() <= 1e-12);
        }
    });
}

// ---------------------------------------------------------------------------
// 3. Separable-learning check: on a 200-rule/5-label indicator-token
//    dataset, held-out micro-F1 ≥ 0.95 for the linear SVM (< 10 s) and
//    ≥ 0.9 for the random forest and GBM.

fn separable_dataset() -> LabeledDataset {
    let markers = ["alphatok", "bravotok", "charlietok", "deltatok", "echotok"];
    let labels: Vec<TechniqueId> = ["T1018", "T1046", "T1059", "T1105", "T1110"]
        .iter()
        .map(|s| s.parse().unwrap())
        .collect();
    let mut rules = Vec::new();
    for i in 0..200usize {
        let mut ids = BTreeSet::new();
        let mut words = vec![markers[i % 5]];
        ids.insert(labels[i % 5].clone());
        if i % 3 == 0 {
            words.push(markers[(i + 2) % 5]);
            ids.insert(labels[(i + 2) % 5].clone());
        }
        let sid = 1000 + i as u64;
        let text = format!(
            "alert tcp any any -> any any (msg:\"{} probe\"; sid:{sid};)",
            words.join(" ")
        );
        rules.push(LabeledRule {
            sid,
            rule: parse_rule(&text).unwrap(),
            technique_ids: ids,
        });
    }
    LabeledDataset::new(rules).unwrap()
}

fn holdout_f1(model_type: ModelType, tfidf: &TfidfConfig) -> (f64, Duration) {
    let ds = separable_dataset();
    let (train, test) = stratified_split(&ds, 0.8, 5).unwrap();
    let hp = Hyperparams {
        model_type,
        ..Hyperparams::default()
    };
    let started = Instant::now();
    let model = train_multilabel(&train, &hp, tfidf, ThresholdPolicy::PositiveMargin).unwrap();
    let train_time = started.elapsed();
    let report = evaluate_predictor(
        &test,
        |rule| Ok(model.predict_rule(&rule.rule).labels),
        &EvalOptions::default(),
        &catalog(),
    )
    .unwrap();
    (report.f1, train_time)
}

#[test]
fn acceptance_3_separable_learning() {
    criterion(3, "separable learning", || {
        let (svm_f1, svm_time) = holdout_f1(ModelType::Svm, &TfidfConfig::default());
        assert!(svm_f1 >= 0.95, "svm micro-F1 {svm_f1}");
        assert!(svm_time < Duration::from_secs(10), "svm took {svm_time:?}");

        // Tree models get the vocabulary capped to the ten recurring terms:
        // every rule carries a unique sid token whose df-1 idf dominates the
        // L2 norm in training but is absent at test time, which systematically
        // shifts split thresholds. The cap exists precisely to drop that noise.
        let capped = TfidfConfig {
            max_vocab: Some(10),
            ..TfidfConfig::default()
        };
        let (rf_f1, _) = holdout_f1(ModelType::RandomForest, &capped);
        assert!(rf_f1 >= 0.9, "random forest micro-F1 {rf_f1}");
        let (gbm_f1, _) = holdout_f1(ModelType::Gbm, &capped);
        assert!(gbm_f1 >= 0.9, "gbm micro-F1 {gbm_f1}");
    });
}

// ---------------------------------------------------------------------------
// 4. Competition questioning is deterministic under a scripted transcript:
//    expected final set, exactly batch_count + rounds requests when stage 1
//    pools something, and the pool never grows across refinements.

fn competition_replies(catalog: &AttackCatalog) -> Vec<String> {
    let batches = catalog.technique_batches(3).unwrap();
    let id = |b: usize, i: usize| batches[b][i].id.to_string();
    vec![
        // Stage 1: one reply per batch.
        format!("Techniques: {}, {}", id(0, 0), id(0, 1)),
        format!("Techniques: {}", id(1, 0)),
        "Techniques: none apply".to_string(),
        // Refinement 1: keeps two of the pooled three; the id from batch 2
        // is outside the pool and must be discarded by the intersection.
        format!("Techniques: {}, {}, {}", id(0, 0), id(1, 0), id(2, 0)),
        // Refinement 2: narrows to one.
        format!("Techniques: {}", id(0, 0)),
    ]
}

#[test]
fn acceptance_4_competition_determinism() {
    criterion(4, "competition determinism", || {
        let catalog = catalog();
        let batches = catalog.technique_batches(3).unwrap();
        let id = |b: usize, i: usize| batches[b][i].id.to_string();

        let config = PromptConfig {
            competition: Some(CompetitionConfig {
                batch_count: 3,
                rounds: 2,
            }),
            ..PromptConfig::default()
        };
        let rule =
            parse_rule("alert tcp any any -> any any (msg:\"competition fixture\"; sid:42;)")
                .unwrap();

        let client = ScriptedClient::from_replies(competition_replies(&catalog));
        let outcome =
            competition_label(&client, &config, &rule, &catalog, &LabelOptions::default()).unwrap();

        let expect = |ids: &[String]| -> BTreeSet<TechniqueId> {
            ids.iter().map(|s| s.parse().unwrap()).collect()
        };
        assert_eq!(outcome.stage1_pool, expect(&[id(0, 0), id(0, 1), id(1, 0)]));
        assert_eq!(outcome.requests_sent, 3 + 2);
        assert_eq!(outcome.prediction.technique_ids, expect(&[id(0, 0)]));

        let mut previous = outcome.stage1_pool.clone();
        for pool in &outcome.refinement_pools {
            assert!(pool.is_subset(&previous), "pool grew: {pool:?}");
            previous = pool.clone();
        }
        assert_eq!(
            outcome.refinement_pools,
            vec![expect(&[id(0, 0), id(1, 0)]), expect(&[id(0, 0)])]
        );

        // A fresh client over the same transcript reproduces the run.
        let client = ScriptedClient::from_replies(competition_replies(&catalog));
        let rerun =
            competition_label(&client, &config, &rule, &catalog, &LabelOptions::default()).unwrap();
        assert_eq!(rerun, outcome);
    });
}

// ---------------------------------------------------------------------------
// 5. Parser corpus: every community fixture rule round-trips with zero
//    diagnostics; each malformed fixture yields exactly one diagnostic.

#[test]
fn acceptance_5_parser_corpus() {
    criterion(5, "parser corpus", || {
        let text = std::fs::read_to_string(fixture("community.rules")).unwrap();
        let (rules, diagnostics) = parse_ruleset(&text);
        assert!(diagnostics.is_empty(), "diagnostics: {diagnostics:?}");
        assert!(rules.len() >= 50, "only {} rules", rules.len());
        for rule in &rules {
            let serialized = serialize_rule(rule).unwrap();
            let reparsed = parse_rule(&serialized).unwrap();
            assert!(
                rule.semantically_equal(&reparsed),
                "round-trip changed sid {:?}",
                rule.sid
            );
        }

        let text = std::fs::read_to_string(fixture("malformed.rules")).unwrap();
        let (rules, diagnostics) = parse_ruleset(&text);
        assert!(rules.is_empty(), "malformed lines parsed: {rules:?}");
        assert_eq!(diagnostics.len(), 10, "{diagnostics:?}");
        let lines: BTreeSet<usize> = diagnostics.iter().map(|d| d.line).collect();
        assert_eq!(lines.len(), 10, "diagnostics share lines: {diagnostics:?}");
    });
}

// ---------------------------------------------------------------------------
// 6. Split fidelity on 100 random datasets: partition_rare is
//    fixpoint-stable, and the stratified split keeps every label's train
//    share within ±1 rule of 0.8×count, deterministically per seed.

#[test]
fn acceptance_6_split_fidelity() {
    criterion(6, "split fidelity", || {
        for case in 0..100u64 {
            let mut rng = derive_rng(0x5EED, case);
            let n_labels = rng.gen_range(3..=10usize);
            let pool: Vec<TechniqueId> = (0..n_labels)
                .map(|i| format!("T{}", 1500 + i).parse().unwrap())
                .collect();
            let n_rules = rng.gen_range(10..=80usize);
            let mut rules = Vec::with_capacity(n_rules);
            for sid in 0..n_rules as u64 {
                let mut rule = rule_with(sid + 1, "split fixture");
                let picks = rng.gen_range(1..=3usize);
                while rule.technique_ids.len() < picks {
                    let label = pool[rng.gen_range(0..pool.len())].clone();
                    rule.technique_ids.insert(label);
                }
                rules.push(rule);
            }
            let ds = LabeledDataset::new(rules).unwrap();
            let min_count = rng.gen_range(2..=5usize);

            let (core, _rare) = partition_rare(&ds, min_count).unwrap();
            let (core_again, rare_again) = partition_rare(&core, min_count).unwrap();
            assert_eq!(core_again, core, "case {case}: partition not a fixpoint");
            assert!(rare_again.is_empty(), "case {case}: fixpoint shed rules");

            if core.is_empty() {
                continue;
            }
            let (train, test) = stratified_split(&core, 0.8, 1234).unwrap();
            let train_counts = ruletag::dataset::label_frequencies(&train);
            let core_counts = ruletag::dataset::label_frequencies(&core);
            for (label, &total) in &core_counts {
                let got = *train_counts.get(label).unwrap_or(&0) as f64;
                let want = 0.8 * total as f64;
                assert!(
                    (got - want).abs() <= 1.0 + 1e-9,
                    "case {case}: label {label} train share {got} vs target {want}"
                );
            }

            let sids =
                |ds: &LabeledDataset| -> Vec<u64> { ds.rules().iter().map(|r| r.sid).collect() };
            let (train2, test2) = stratified_split(&core, 0.8, 1234).unwrap();
            assert_eq!(
                sids(&train),
                sids(&train2),
                "case {case}: seed not deterministic"
            );
            assert_eq!(
                sids(&test),
                sids(&test2),
                "case {case}: seed not deterministic"
            );
        }
    });
}

// ---------------------------------------------------------------------------
// 7. Reference-figure status: the headline numbers (SVM technique F1 0.87,
//    best guided two-example prompt F1 0.62, Top-1 baseline 0.2) come from a
//    private 973-rule corpus and proprietary models, so they are documented
//    in the README as reference points rather than asserted. What must hold
//    on any regenerated dataset: the pipeline fills a complete results table
//    without code changes, and Top-1/Top-2 equal a frequency-count oracle.

struct TableRow {
    technique: EvalReport,
    tactic: Option<EvalReport>,
}

#[test]
fn acceptance_7_reference_figures() {
    criterion(7, "reference figure status", || {
        let readme =
            std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../README.md"))
                .unwrap();
        assert!(
            readme.contains("Reference results"),
            "README lacks the reference-results section"
        );
        for figure in ["0.87", "0.62", "0.2"] {
            assert!(
                readme.contains(figure),
                "README lacks reference figure {figure}"
            );
        }
        assert!(
            readme.to_lowercase().contains("not reproducible"),
            "README must state the reference figures are not reproducible"
        );

        // Regenerate a comparable dataset from the bundled community rules
        // and fill the full table shape: classifier + four baselines at
        // technique level, tactic level where defined.
        let catalog = catalog();
        let (ds, _) = ingest(
            fixture("community.rules"),
            fixture("labels.csv"),
            &catalog,
            IngestOptions::default(),
        )
        .unwrap();
        let split = DatasetSplit::create(&ds, 5, 0.8, 7).unwrap();

        let eval_at = |level: EvalLevel,
                       predict: &mut dyn FnMut(&LabeledRule) -> BTreeSet<TechniqueId>|
         -> EvalReport {
            evaluate_predictor(
                &split.test,
                |rule| Ok(predict(rule)),
                &EvalOptions {
                    level,
                    rollup: false,
                    strict: true,
                },
                &catalog,
            )
            .unwrap()
        };

        let mut table: Vec<(String, TableRow)> = Vec::new();

        let model = train_multilabel(
            &split.train,
            &Hyperparams::default(),
            &TfidfConfig::default(),
            ThresholdPolicy::Top1Fallback,
        )
        .unwrap();
        table.push((
            "svm".to_string(),
            TableRow {
                technique: eval_at(EvalLevel::Technique, &mut |r| {
                    model.predict_rule(&r.rule).labels
                }),
                tactic: Some(eval_at(EvalLevel::Tactic, &mut |r| {
                    model.predict_rule(&r.rule).labels
                })),
            },
        ));

        for k in [1usize, 2] {
            let baseline = fit_top_k(&split.train, k).unwrap();

            // Independent oracle: recount frequencies, sort by count desc
            // then id, take k. Must match the fitted predictor exactly.
            let mut counts: std::collections::HashMap<TechniqueId, usize> =
                std::collections::HashMap::new();
            for rule in split.train.rules() {
                for id in &rule.technique_ids {
                    *counts.entry(id.clone()).or_insert(0) += 1;
                }
            }
            let mut ranked: Vec<(TechniqueId, usize)> = counts.into_iter().collect();
            ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
            let oracle: BTreeSet<TechniqueId> =
                ranked.into_iter().take(k).map(|(id, _)| id).collect();
            assert_eq!(baseline.predict(), &oracle, "top-{k} disagrees with oracle");

            table.push((
                format!("top{k}"),
                TableRow {
                    technique: eval_at(EvalLevel::Technique, &mut |_| oracle.clone()),
                    tactic: Some(eval_at(EvalLevel::Tactic, &mut |_| oracle.clone())),
                },
            ));
        }

        for k in [1usize, 2] {
            let draw = |rule: &LabeledRule| {
                let tactics = derive_tactic_labels(&rule.technique_ids, &catalog).unwrap();
                random_within_tactic(&catalog, &tactics, k, 7, rule.sid)
            };
            // Tactic-level scores are undefined for a draw conditioned on
            // the gold tactics, so that cell stays empty by design.
            table.push((
                format!("rt{k}"),
                TableRow {
                    technique: eval_at(EvalLevel::Technique, &mut |r| draw(r)),
                    tactic: None,
                },
            ));
        }

        assert_eq!(table.len(), 5);
        for (name, row) in &table {
            for report in std::iter::once(&row.technique).chain(row.tactic.iter()) {
                assert!(report.precision.is_finite(), "{name}: empty cell");
                assert!(report.recall.is_finite(), "{name}: empty cell");
                assert!(report.f1.is_finite(), "{name}: empty cell");
                assert_eq!(report.n_rules, split.test.len());
            }
        }
        let tactic_cells = table.iter().filter(|(_, row)| row.tactic.is_some()).count();
        assert_eq!(
            tactic_cells, 3,
            "classifier + top-k rows carry tactic scores"
        );
    });
}

// ---------------------------------------------------------------------------
// 8. End-to-end mock run through the compiled binary: the classifier
//    pipeline plus transcript-driven LLM labeling finish in under 60 s and
//    are byte-identical across two runs with the same seeds.

fn run_cli(dir: &Path, args: &[&str]) {
    let output = Command::new(env!("CARGO_BIN_EXE_ruletag"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs");
    assert!(
        output.status.success(),
        "ruletag {:?} failed:\n{}",
        args,
        String::from_utf8_lossy(&output.stderr)
    );
}

#[test]
fn acceptance_8_end_to_end_mock_run() {
    criterion(8, "end-to-end mock run", || {
        let started = Instant::now();
        let catalog = fixture("attack_catalog.json");
        let catalog = catalog.to_str().unwrap();
        let rules = fixture("community.rules");
        let labels = fixture("labels.csv");
        let prompt_config = fixture("ticl2.toml");
        let transcript = fixture("transcripts/test_labels.jsonl");

        let workspaces = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
        for workspace in &workspaces {
            let dir = workspace.path();
            let arg = |name: &str| dir.join(name).to_str().unwrap().to_string();
            run_cli(
                dir,
                &[
                    "ingest",
                    "--rules",
                    rules.to_str().unwrap(),
                    "--labels",
                    labels.to_str().unwrap(),
                    "--catalog",
                    catalog,
                    "--out-dir",
                    ".",
                ],
            );
            run_cli(
                dir,
                &["split", "--in", &arg("dataset.jsonl"), "--out-dir", "."],
            );
            run_cli(
                dir,
                &["train", "--in", &arg("train.jsonl"), "--out-dir", "."],
            );
            run_cli(
                dir,
                &[
                    "predict",
                    "--model",
                    &arg("model.json"),
                    "--in",
                    &arg("test.jsonl"),
                    "--out-dir",
                    ".",
                ],
            );
            run_cli(
                dir,
                &[
                    "evaluate",
                    "--gold",
                    &arg("test.jsonl"),
                    "--pred",
                    &arg("predictions.jsonl"),
                    "--catalog",
                    catalog,
                    "--out-dir",
                    ".",
                ],
            );
            run_cli(
                dir,
                &[
                    "-c",
                    prompt_config.to_str().unwrap(),
                    "llm-label",
                    "--in",
                    &arg("test.jsonl"),
                    "--mock",
                    transcript.to_str().unwrap(),
                    "--icl-from",
                    &arg("train.jsonl"),
                    "--catalog",
                    catalog,
                    "--out-dir",
                    ".",
                ],
            );
            run_cli(
                dir,
                &[
                    "evaluate",
                    "--gold",
                    &arg("test.jsonl"),
                    "--pred",
                    &arg("llm_predictions.jsonl"),
                    "--catalog",
                    catalog,
                    "--out",
                    &arg("llm_eval.json"),
                    "--out-dir",
                    ".",
                ],
            );
        }

        for name in [
            "dataset.jsonl",
            "ingest_report.json",
            "train.jsonl",
            "test.jsonl",
            "rare.jsonl",
            "split_stats.json",
            "model.json",
            "predictions.jsonl",
            "eval_report.json",
            "llm_predictions.jsonl",
            "llm_eval.json",
        ] {
            let a = std::fs::read(workspaces[0].path().join(name)).unwrap();
            let b = std::fs::read(workspaces[1].path().join(name)).unwrap();
            assert_eq!(a, b, "{name} differs between identical runs");
        }

        let elapsed = started.elapsed();
        assert!(elapsed < Duration::from_secs(60), "took {elapsed:?}");
    });
}
