//! `ruletag`: command-line front end over the library — ingest rule corpora,
//! split datasets, train/apply classifiers, run baselines and LLM labeling,
//! and score prediction files.
//!
//! Exit codes: 0 success, 1 validation error (bad flags, unreadable or
//! malformed inputs), 2 runtime error (transport failures, write failures).
//! Every run appends one JSON line describing its inputs, outputs, seeds,
//! and versions to `<out-dir>/run_manifest.jsonl`.

mod config;

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use ruletag::attack::{AttackCatalog, TechniqueId};
use ruletag::baselines::{fit_top_k, random_within_tactic};
use ruletag::classifiers::{
    train_multilabel, tune, Hyperparams, ModelType, MultiLabelClassifier, TuningReport,
};
use ruletag::dataset::{
    ingest, label_frequencies, load_dataset, save_dataset_to, DatasetSplit, IngestOptions,
    LabeledDataset,
};
use ruletag::evaluation::{
    derive_tactic_labels, evaluate_predictor, select_best_prompt, EvalLevel, EvalOptions,
};
use ruletag::prompting::{
    label_with_llm, select_icl_examples, ChatClient, HttpChatClient, HttpClientConfig, IclExample,
    LabelOptions, PromptConfig, PromptError, ScriptedClient,
};

use config::AppConfig;

/// Print a line to stdout, ignoring a closed pipe (`ruletag ... | head`
/// must not turn into a panic after the artifacts are already written).
macro_rules! say {
    ($($arg:tt)*) => {{
        use std::io::Write as _;
        let _ = writeln!(std::io::stdout(), $($arg)*);
    }};
}

#[derive(Parser)]
#[command(
    name = "ruletag",
    version,
    about = "Label Snort rules with MITRE ATT&CK techniques and score the results"
)]
struct Cli {
    /// TOML configuration file; command-line flags override file values.
    #[arg(short, long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Directory receiving artifacts and the run manifest [default: .]
    #[arg(long, global = true, value_name = "DIR")]
    out_dir: Option<PathBuf>,

    /// ATT&CK catalog JSON file (overrides the config file).
    #[arg(long, global = true, value_name = "FILE")]
    catalog: Option<PathBuf>,

    /// Worker threads for internal parallelism [default: all cores]
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a labeled dataset from a .rules file and a sid,technique CSV
    Ingest(IngestArgs),
    /// Partition rare labels and stratify the rest into train/test
    Split(SplitArgs),
    /// Train a multi-label classifier on a training split
    Train(TrainArgs),
    /// Apply a trained model to a dataset, writing predictions JSONL
    Predict(PredictArgs),
    /// Score a predictions file against gold labels
    Evaluate(EvaluateArgs),
    /// Run a frequency or random-within-tactic baseline
    Baseline(BaselineArgs),
    /// Label rules with a chat model (live endpoint or scripted transcript)
    LlmLabel(LlmLabelArgs),
    /// Try prompt variants on a development split and rank them
    PromptSearch(PromptSearchArgs),
    /// Catalog utilities
    Catalog(CatalogArgs),
}

#[derive(Args)]
struct IngestArgs {
    /// Snort rules file
    #[arg(long, value_name = "FILE")]
    rules: PathBuf,
    /// CSV label map with a sid,technique_id header
    #[arg(long, value_name = "FILE")]
    labels: PathBuf,
    /// Record label-map problems in the report instead of failing
    #[arg(long)]
    lenient: bool,
    /// Output dataset path [default: <out-dir>/dataset.jsonl]
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    /// Ingest report path [default: <out-dir>/ingest_report.json]
    #[arg(long, value_name = "FILE")]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct SplitArgs {
    /// Dataset to split
    #[arg(long = "in", value_name = "FILE")]
    input: PathBuf,
    /// Labels occurring fewer times go to the rare set [default: 5]
    #[arg(long, value_name = "N")]
    min_count: Option<usize>,
    /// Fraction of each label's rules assigned to train [default: 0.8]
    #[arg(long, value_name = "F")]
    train_frac: Option<f64>,
    /// Split seed [default: 7]
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
}

#[derive(ValueEnum, Clone, Copy)]
enum ModelTypeArg {
    Svm,
    #[value(alias = "random_forest")]
    RandomForest,
    Gbm,
}

impl From<ModelTypeArg> for ModelType {
    fn from(arg: ModelTypeArg) -> Self {
        match arg {
            ModelTypeArg::Svm => ModelType::Svm,
            ModelTypeArg::RandomForest => ModelType::RandomForest,
            ModelTypeArg::Gbm => ModelType::Gbm,
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    /// Training split
    #[arg(long = "in", value_name = "FILE")]
    input: PathBuf,
    /// Model family (overrides the config file)
    #[arg(long, value_enum, value_name = "TYPE")]
    model_type: Option<ModelTypeArg>,
    /// Training seed (overrides the config file)
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Keep only the N highest-document-frequency vocabulary terms
    #[arg(long, value_name = "N")]
    max_vocab: Option<usize>,
    /// Token n-gram order, 1 or 2 (overrides the config file)
    #[arg(long, value_name = "N")]
    ngram_max: Option<usize>,
    /// Grid-search hyperparameters on an internal validation split
    #[arg(long)]
    tune: bool,
    /// Refinement rounds for --tune [default: 2]
    #[arg(long, value_name = "N")]
    tune_rounds: Option<usize>,
    /// Model output path [default: <out-dir>/model.json]
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    /// Trained model file
    #[arg(long, value_name = "FILE")]
    model: PathBuf,
    /// Dataset to label
    #[arg(long = "in", value_name = "FILE")]
    input: PathBuf,
    /// Include per-label decision scores in each record
    #[arg(long)]
    scores: bool,
    /// Predictions output path [default: <out-dir>/predictions.jsonl]
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Default)]
enum LevelArg {
    #[default]
    Technique,
    Tactic,
}

impl From<LevelArg> for EvalLevel {
    fn from(arg: LevelArg) -> Self {
        match arg {
            LevelArg::Technique => EvalLevel::Technique,
            LevelArg::Tactic => EvalLevel::Tactic,
        }
    }
}

#[derive(Args)]
struct EvaluateArgs {
    /// Gold-labeled dataset (JSONL)
    #[arg(long, value_name = "FILE")]
    gold: PathBuf,
    /// Predictions file (JSONL with sid + techniques)
    #[arg(long, value_name = "FILE")]
    pred: PathBuf,
    /// Scoring granularity
    #[arg(long, value_enum, default_value_t, value_name = "LEVEL")]
    level: LevelArg,
    /// Score sub-techniques at parent-technique granularity
    #[arg(long)]
    rollup: bool,
    /// Include the per-label breakdown in the text rendering
    #[arg(long)]
    per_label: bool,
    /// Fail on rules with no prediction instead of scoring them empty
    #[arg(long)]
    strict: bool,
    /// Report output path [default: <out-dir>/eval_report.json]
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy)]
enum BaselineKind {
    /// Most frequent training technique for every rule
    Top1,
    /// Two most frequent training techniques for every rule
    Top2,
    /// One random technique under the rule's gold tactics
    Rt1,
    /// Two random techniques under the rule's gold tactics
    Rt2,
}

impl BaselineKind {
    fn name(self) -> &'static str {
        match self {
            BaselineKind::Top1 => "top1",
            BaselineKind::Top2 => "top2",
            BaselineKind::Rt1 => "rt1",
            BaselineKind::Rt2 => "rt2",
        }
    }

    fn k(self) -> usize {
        match self {
            BaselineKind::Top1 | BaselineKind::Rt1 => 1,
            BaselineKind::Top2 | BaselineKind::Rt2 => 2,
        }
    }
}

#[derive(Args)]
struct BaselineArgs {
    /// Which baseline to run
    #[arg(long, value_enum, value_name = "KIND")]
    kind: BaselineKind,
    /// Dataset to predict on
    #[arg(long = "in", value_name = "FILE")]
    input: PathBuf,
    /// Training split (required for top1/top2)
    #[arg(long, value_name = "FILE")]
    train: Option<PathBuf>,
    /// Draw seed for rt1/rt2 [default: 7]
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Predictions output path [default: <out-dir>/baseline_<kind>.jsonl]
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct LlmLabelArgs {
    /// Dataset to label
    #[arg(long = "in", value_name = "FILE")]
    input: PathBuf,
    /// Answer from this transcript instead of a live endpoint
    #[arg(long, value_name = "FILE")]
    mock: Option<PathBuf>,
    /// Enforce transcript request fingerprints (with --mock)
    #[arg(long, requires = "mock")]
    strict_mock: bool,
    /// Provider preset (overrides the config file)
    #[arg(long, value_name = "NAME")]
    provider: Option<String>,
    /// Chat-completions endpoint URL (overrides the provider preset)
    #[arg(long, value_name = "URL")]
    endpoint: Option<String>,
    /// Provider model name (overrides the config file)
    #[arg(long, value_name = "NAME")]
    model: Option<String>,
    /// Training split supplying in-context examples
    #[arg(long, value_name = "FILE")]
    icl_from: Option<PathBuf>,
    /// Record failed rules as empty predictions instead of aborting
    #[arg(long)]
    keep_going: bool,
    /// Predictions output path [default: <out-dir>/llm_predictions.jsonl]
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PromptSearchArgs {
    /// Development split the variants are scored on
    #[arg(long, value_name = "FILE")]
    dev: PathBuf,
    /// Answer from this transcript instead of a live endpoint
    #[arg(long, value_name = "FILE")]
    mock: Option<PathBuf>,
    /// Enforce transcript request fingerprints (with --mock)
    #[arg(long, requires = "mock")]
    strict_mock: bool,
    /// Provider preset (overrides the config file)
    #[arg(long, value_name = "NAME")]
    provider: Option<String>,
    /// Chat-completions endpoint URL (overrides the provider preset)
    #[arg(long, value_name = "URL")]
    endpoint: Option<String>,
    /// Provider model name (overrides the config file)
    #[arg(long, value_name = "NAME")]
    model: Option<String>,
    /// Training split supplying in-context examples
    #[arg(long, value_name = "FILE")]
    icl_from: PathBuf,
    /// Result output path [default: <out-dir>/prompt_search.json]
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CatalogArgs {
    #[command(subcommand)]
    action: CatalogAction,
}

#[derive(Subcommand)]
enum CatalogAction {
    /// Load and validate the catalog, printing a summary
    Check,
}

/// Validation problems exit 1; runtime/transport problems exit 2.
enum AppError {
    Validation(String),
    Runtime(String),
}

fn invalid(message: impl std::fmt::Display) -> AppError {
    AppError::Validation(message.to_string())
}

fn runtime(message: impl std::fmt::Display) -> AppError {
    AppError::Runtime(message.to_string())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            use clap::error::ErrorKind;
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(AppError::Validation(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(1)
        }
        Err(AppError::Runtime(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(2)
        }
    }
}

/// Everything a command needs besides its own flags.
struct Ctx {
    config: AppConfig,
    out_dir: PathBuf,
    catalog_path: Option<PathBuf>,
}

impl Ctx {
    /// Resolve and load the catalog; remembers the path for the manifest.
    fn catalog(&self) -> Result<(AttackCatalog, PathBuf), AppError> {
        let path = self
            .catalog_path
            .clone()
            .or_else(|| self.config.catalog.clone())
            .ok_or_else(|| {
                invalid("no catalog path: pass --catalog or set `catalog` in the config file")
            })?;
        let catalog = AttackCatalog::load(&path)
            .map_err(|e| invalid(format!("catalog {}: {e}", path.display())))?;
        Ok((catalog, path))
    }

    /// An output path: the explicit flag, or `default_name` inside out-dir.
    fn out(&self, flag: &Option<PathBuf>, default_name: &str) -> PathBuf {
        flag.clone()
            .unwrap_or_else(|| self.out_dir.join(default_name))
    }
}

fn run(cli: Cli) -> Result<(), AppError> {
    let config = AppConfig::load(cli.config.as_deref()).map_err(invalid)?;
    let out_dir = cli
        .out_dir
        .clone()
        .or_else(|| config.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&out_dir)
        .map_err(|e| runtime(format!("cannot create {}: {e}", out_dir.display())))?;
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(invalid("--jobs must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| runtime(format!("thread pool: {e}")))?;
    }
    let ctx = Ctx {
        config,
        out_dir,
        catalog_path: cli.catalog,
    };
    match cli.command {
        Command::Ingest(args) => cmd_ingest(&ctx, args),
        Command::Split(args) => cmd_split(&ctx, args),
        Command::Train(args) => cmd_train(&ctx, args),
        Command::Predict(args) => cmd_predict(&ctx, args),
        Command::Evaluate(args) => cmd_evaluate(&ctx, args),
        Command::Baseline(args) => cmd_baseline(&ctx, args),
        Command::LlmLabel(args) => cmd_llm_label(&ctx, args),
        Command::PromptSearch(args) => cmd_prompt_search(&ctx, args),
        Command::Catalog(args) => match args.action {
            CatalogAction::Check => cmd_catalog_check(&ctx),
        },
    }
}

// ---------------------------------------------------------------------------
// Run manifest

/// One appended line per run: enough to re-run the command and explain any
/// artifact. Deliberately carries no timestamps so reruns append identical
/// lines.
#[derive(Serialize)]
struct RunManifest {
    command: &'static str,
    argv: Vec<String>,
    inputs: BTreeMap<&'static str, String>,
    outputs: BTreeMap<&'static str, String>,
    seeds: BTreeMap<&'static str, u64>,
    versions: BTreeMap<&'static str, String>,
}

impl RunManifest {
    fn new(command: &'static str) -> Self {
        let mut versions = BTreeMap::new();
        versions.insert("ruletag", env!("CARGO_PKG_VERSION").to_string());
        Self {
            command,
            argv: std::env::args().skip(1).collect(),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            seeds: BTreeMap::new(),
            versions,
        }
    }

    fn input(mut self, key: &'static str, path: &Path) -> Self {
        self.inputs.insert(key, path.display().to_string());
        self
    }

    fn output(mut self, key: &'static str, path: &Path) -> Self {
        self.outputs.insert(key, path.display().to_string());
        self
    }

    fn seed(mut self, key: &'static str, value: u64) -> Self {
        self.seeds.insert(key, value);
        self
    }

    fn catalog_version(mut self, catalog: &AttackCatalog) -> Self {
        self.versions
            .insert("catalog", catalog.version().to_string());
        self
    }

    fn append(self, out_dir: &Path) -> Result<(), AppError> {
        let path = out_dir.join("run_manifest.jsonl");
        let line = serde_json::to_string(&self).map_err(runtime)?;
        let mut file = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| runtime(format!("cannot open {}: {e}", path.display())))?;
        writeln!(file, "{line}").map_err(|e| runtime(format!("{}: {e}", path.display())))
    }
}

// ---------------------------------------------------------------------------
// Shared IO helpers

fn load_dataset_checked(path: &Path) -> Result<LabeledDataset, AppError> {
    load_dataset(path).map_err(|e| invalid(format!("{}: {e}", path.display())))
}

fn write_json_pretty<T: Serialize>(path: &Path, value: &T) -> Result<(), AppError> {
    let mut text = serde_json::to_string_pretty(value).map_err(runtime)?;
    text.push('\n');
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)
            .map_err(|e| runtime(format!("cannot create {}: {e}", parent.display())))?;
    }
    std::fs::write(path, text).map_err(|e| runtime(format!("{}: {e}", path.display())))
}

/// The interchange row for predictions: the same shape regardless of
/// whether a model, a baseline, or an LLM produced it.
#[derive(Serialize, Deserialize)]
struct PredictionRecord {
    sid: u64,
    techniques: Vec<TechniqueId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    scores: Option<BTreeMap<String, f64>>,
}

fn write_predictions(path: &Path, records: &[PredictionRecord]) -> Result<(), AppError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)
            .map_err(|e| runtime(format!("cannot create {}: {e}", parent.display())))?;
    }
    let file = std::fs::File::create(path)
        .map_err(|e| runtime(format!("cannot create {}: {e}", path.display())))?;
    let mut writer = std::io::BufWriter::new(file);
    for record in records {
        let line = serde_json::to_string(record).map_err(runtime)?;
        writeln!(writer, "{line}").map_err(|e| runtime(format!("{}: {e}", path.display())))?;
    }
    writer
        .flush()
        .map_err(|e| runtime(format!("{}: {e}", path.display())))
}

fn read_predictions(path: &Path) -> Result<BTreeMap<u64, BTreeSet<TechniqueId>>, AppError> {
    let text =
        std::fs::read_to_string(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
    let mut map = BTreeMap::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: PredictionRecord = serde_json::from_str(line)
            .map_err(|e| invalid(format!("{} line {}: {e}", path.display(), idx + 1)))?;
        let techniques: BTreeSet<TechniqueId> = record.techniques.into_iter().collect();
        if map.insert(record.sid, techniques).is_some() {
            return Err(invalid(format!(
                "{} line {}: duplicate sid {}",
                path.display(),
                idx + 1,
                record.sid
            )));
        }
    }
    Ok(map)
}

// ---------------------------------------------------------------------------
// ingest

fn cmd_ingest(ctx: &Ctx, args: IngestArgs) -> Result<(), AppError> {
    let (catalog, catalog_path) = ctx.catalog()?;
    let options = IngestOptions {
        strict: !args.lenient,
    };
    let (dataset, report) = ingest(&args.rules, &args.labels, &catalog, options)
        .map_err(|e| invalid(format!("ingest failed: {e}")))?;

    let out = ctx.out(&args.out, "dataset.jsonl");
    let report_path = ctx.out(&args.report, "ingest_report.json");
    save_dataset_to(&dataset, &out, None)
        .map_err(|e| runtime(format!("{}: {e}", out.display())))?;
    write_json_pretty(&report_path, &report)?;

    say!(
        "ingested {} rules covering {} techniques -> {}",
        dataset.len(),
        dataset.label_universe().len(),
        out.display()
    );
    if !report.parse_diagnostics.is_empty() || report.unmapped_rules > 0 {
        say!(
            "  {} parse diagnostics, {} unmapped rules (see {})",
            report.parse_diagnostics.len(),
            report.unmapped_rules,
            report_path.display()
        );
    }

    RunManifest::new("ingest")
        .input("rules", &args.rules)
        .input("labels", &args.labels)
        .input("catalog", &catalog_path)
        .output("dataset", &out)
        .output("report", &report_path)
        .catalog_version(&catalog)
        .append(&ctx.out_dir)
}

// ---------------------------------------------------------------------------
// split

#[derive(Serialize)]
struct SplitStats {
    min_count: usize,
    train_frac: f64,
    seed: u64,
    input_rules: usize,
    train_rules: usize,
    test_rules: usize,
    rare_rules: usize,
    core_techniques: usize,
    rare_techniques: usize,
    train_label_counts: BTreeMap<TechniqueId, usize>,
    test_label_counts: BTreeMap<TechniqueId, usize>,
}

fn cmd_split(ctx: &Ctx, args: SplitArgs) -> Result<(), AppError> {
    let dataset = load_dataset_checked(&args.input)?;
    let min_count = args.min_count.unwrap_or(ctx.config.split.min_count);
    let train_frac = args.train_frac.unwrap_or(ctx.config.split.train_frac);
    let seed = args.seed.unwrap_or(ctx.config.split.seed);

    let split = DatasetSplit::create(&dataset, min_count, train_frac, seed)
        .map_err(|e| invalid(format!("split failed: {e}")))?;

    let train_path = ctx.out_dir.join("train.jsonl");
    let test_path = ctx.out_dir.join("test.jsonl");
    let rare_path = ctx.out_dir.join("rare.jsonl");
    let stats_path = ctx.out_dir.join("split_stats.json");
    for (ds, path, tag) in [
        (&split.train, &train_path, "train"),
        (&split.test, &test_path, "test"),
        (&split.rare, &rare_path, "rare"),
    ] {
        save_dataset_to(ds, path, Some(tag))
            .map_err(|e| runtime(format!("{}: {e}", path.display())))?;
    }

    let stats = SplitStats {
        min_count,
        train_frac,
        seed,
        input_rules: dataset.len(),
        train_rules: split.train.len(),
        test_rules: split.test.len(),
        rare_rules: split.rare.len(),
        core_techniques: split.train.label_universe().len(),
        rare_techniques: split.rare.label_universe().len(),
        train_label_counts: label_frequencies(&split.train),
        test_label_counts: label_frequencies(&split.test),
    };
    write_json_pretty(&stats_path, &stats)?;

    say!(
        "split {} rules -> {} train / {} test / {} rare (min-count {min_count}, seed {seed})",
        dataset.len(),
        split.train.len(),
        split.test.len(),
        split.rare.len()
    );

    RunManifest::new("split")
        .input("dataset", &args.input)
        .output("train", &train_path)
        .output("test", &test_path)
        .output("rare", &rare_path)
        .output("stats", &stats_path)
        .seed("split", seed)
        .append(&ctx.out_dir)
}

// ---------------------------------------------------------------------------
// train

/// Coarse starting grid around the configured parameters; `tune` refines
/// locally from whichever member validates best.
fn tuning_grid(base: &Hyperparams) -> Vec<Hyperparams> {
    let mut grid = vec![base.clone()];
    match base.model_type {
        ModelType::Svm => {
            for c in [base.svm.c / 10.0, base.svm.c * 10.0] {
                let mut hp = base.clone();
                hp.svm.c = c;
                grid.push(hp);
            }
        }
        ModelType::RandomForest => {
            let mut half = base.clone();
            half.rf.trees = (base.rf.trees / 2).max(1);
            let mut double = base.clone();
            double.rf.trees = base.rf.trees * 2;
            grid.extend([half, double]);
        }
        ModelType::Gbm => {
            let mut slow = base.clone();
            slow.gbm.learning_rate = base.gbm.learning_rate / 2.0;
            let mut long = base.clone();
            long.gbm.rounds = base.gbm.rounds * 2;
            grid.extend([slow, long]);
        }
    }
    grid
}

fn cmd_train(ctx: &Ctx, args: TrainArgs) -> Result<(), AppError> {
    let dataset = load_dataset_checked(&args.input)?;

    let mut hp = ctx.config.classifier.to_hyperparams();
    if let Some(model_type) = args.model_type {
        hp.model_type = model_type.into();
    }
    if let Some(seed) = args.seed {
        hp.seed = seed;
    }
    let mut tfidf = ctx.config.features.to_tfidf_config();
    if args.max_vocab.is_some() {
        tfidf.max_vocab = args.max_vocab;
    }
    if let Some(ngram_max) = args.ngram_max {
        tfidf.tokenizer.ngram_max = ngram_max;
    }
    let policy = ctx.config.classifier.threshold;

    let out = ctx.out(&args.out, "model.json");
    let mut manifest = RunManifest::new("train")
        .input("train", &args.input)
        .output("model", &out)
        .seed("classifier", hp.seed);

    let (model, tuning): (MultiLabelClassifier, Option<TuningReport>) = if args.tune {
        let rounds = args
            .tune_rounds
            .unwrap_or(ctx.config.classifier.tune_rounds);
        let grid = tuning_grid(&hp);
        let (model, report) = tune(&dataset, &grid, rounds, hp.seed, &tfidf, policy)
            .map_err(|e| invalid(format!("tuning failed: {e}")))?;
        (model, Some(report))
    } else {
        let model = train_multilabel(&dataset, &hp, &tfidf, policy)
            .map_err(|e| invalid(format!("training failed: {e}")))?;
        (model, None)
    };

    model
        .save(&out)
        .map_err(|e| runtime(format!("{}: {e}", out.display())))?;
    if let Some(report) = &tuning {
        let tuning_path = ctx.out_dir.join("tuning_report.json");
        write_json_pretty(&tuning_path, report)?;
        manifest = manifest.output("tuning_report", &tuning_path);
        say!(
            "tuned over {} rounds; best validation F1 {:.4}",
            report.rounds.len(),
            report.best_validation_f1
        );
    }

    say!(
        "trained {:?} on {} rules / {} labels -> {}",
        model.hyperparams.model_type,
        dataset.len(),
        model.label_universe.len(),
        out.display()
    );
    manifest.append(&ctx.out_dir)
}

// ---------------------------------------------------------------------------
// predict

fn cmd_predict(ctx: &Ctx, args: PredictArgs) -> Result<(), AppError> {
    let model = MultiLabelClassifier::load(&args.model)
        .map_err(|e| invalid(format!("{}: {e}", args.model.display())))?;
    let dataset = load_dataset_checked(&args.input)?;

    let records: Vec<PredictionRecord> = dataset
        .rules()
        .iter()
        .map(|rule| {
            let prediction = model.predict_rule(&rule.rule);
            let scores = args.scores.then(|| {
                prediction
                    .scores
                    .iter()
                    .map(|(id, score)| (id.to_string(), *score))
                    .collect()
            });
            PredictionRecord {
                sid: rule.sid,
                techniques: prediction.labels.into_iter().collect(),
                scores,
            }
        })
        .collect();

    let out = ctx.out(&args.out, "predictions.jsonl");
    write_predictions(&out, &records)?;
    say!("predicted {} rules -> {}", records.len(), out.display());

    RunManifest::new("predict")
        .input("model", &args.model)
        .input("dataset", &args.input)
        .output("predictions", &out)
        .seed("classifier", model.hyperparams.seed)
        .append(&ctx.out_dir)
}

// ---------------------------------------------------------------------------
// evaluate

fn cmd_evaluate(ctx: &Ctx, args: EvaluateArgs) -> Result<(), AppError> {
    let (catalog, catalog_path) = ctx.catalog()?;
    let gold = load_dataset_checked(&args.gold)?;
    let predictions = read_predictions(&args.pred)?;

    let options = EvalOptions {
        level: args.level.into(),
        rollup: args.rollup,
        strict: args.strict,
    };
    let report = evaluate_predictor(
        &gold,
        |rule| {
            predictions
                .get(&rule.sid)
                .cloned()
                .ok_or_else(|| format!("no prediction for sid {}", rule.sid))
        },
        &options,
        &catalog,
    )
    .map_err(|e| invalid(format!("evaluation failed: {e}")))?;

    let out = ctx.out(&args.out, "eval_report.json");
    write_json_pretty(&out, &report)?;
    say!("{}", report.render_text(args.per_label).trim_end());
    say!("report -> {}", out.display());

    RunManifest::new("evaluate")
        .input("gold", &args.gold)
        .input("predictions", &args.pred)
        .input("catalog", &catalog_path)
        .output("report", &out)
        .catalog_version(&catalog)
        .append(&ctx.out_dir)
}

// ---------------------------------------------------------------------------
// baseline

fn cmd_baseline(ctx: &Ctx, args: BaselineArgs) -> Result<(), AppError> {
    let dataset = load_dataset_checked(&args.input)?;
    let k = args.kind.k();
    let default_name = format!("baseline_{}.jsonl", args.kind.name());
    let out = ctx.out(&args.out, &default_name);
    let mut manifest = RunManifest::new("baseline").input("dataset", &args.input);

    let records: Vec<PredictionRecord> = match args.kind {
        BaselineKind::Top1 | BaselineKind::Top2 => {
            let train_path = args
                .train
                .as_ref()
                .ok_or_else(|| invalid(format!("--kind {} needs --train", args.kind.name())))?;
            let train = load_dataset_checked(train_path)?;
            let baseline =
                fit_top_k(&train, k).map_err(|e| invalid(format!("baseline fit: {e}")))?;
            manifest = manifest.input("train", train_path);
            dataset
                .rules()
                .iter()
                .map(|rule| PredictionRecord {
                    sid: rule.sid,
                    techniques: baseline.predict().iter().cloned().collect(),
                    scores: None,
                })
                .collect()
        }
        BaselineKind::Rt1 | BaselineKind::Rt2 => {
            let (catalog, catalog_path) = ctx.catalog()?;
            let seed = args.seed.unwrap_or(ctx.config.split.seed);
            manifest = manifest
                .input("catalog", &catalog_path)
                .seed("baseline", seed)
                .catalog_version(&catalog);
            let mut records = Vec::with_capacity(dataset.len());
            for rule in dataset.rules() {
                let tactics = derive_tactic_labels(&rule.technique_ids, &catalog)
                    .map_err(|e| invalid(format!("sid {}: {e}", rule.sid)))?;
                let drawn = random_within_tactic(&catalog, &tactics, k, seed, rule.sid);
                records.push(PredictionRecord {
                    sid: rule.sid,
                    techniques: drawn.into_iter().collect(),
                    scores: None,
                });
            }
            records
        }
    };

    write_predictions(&out, &records)?;
    say!(
        "baseline {} predicted {} rules -> {}",
        args.kind.name(),
        records.len(),
        out.display()
    );
    manifest.output("predictions", &out).append(&ctx.out_dir)
}

// ---------------------------------------------------------------------------
// llm-label / prompt-search shared plumbing

fn provider_endpoint(name: &str) -> Option<&'static str> {
    match name {
        "openai" => Some("https://api.openai.com/v1/chat/completions"),
        _ => None,
    }
}

struct ClientChoice {
    client: Box<dyn ChatClient>,
    /// ("mock", transcript path) or ("endpoint", URL), for the manifest.
    kind: &'static str,
    detail: String,
}

fn build_client(
    ctx: &Ctx,
    mock: &Option<PathBuf>,
    strict_mock: bool,
    provider: &Option<String>,
    endpoint: &Option<String>,
    model: &Option<String>,
) -> Result<ClientChoice, AppError> {
    if let Some(path) = mock {
        let client = ScriptedClient::from_path(path, strict_mock)
            .map_err(|e| invalid(format!("{}: {e}", path.display())))?;
        return Ok(ClientChoice {
            client: Box::new(client),
            kind: "mock",
            detail: path.display().to_string(),
        });
    }
    let provider = provider
        .clone()
        .unwrap_or_else(|| ctx.config.provider.name.clone());
    let endpoint = endpoint
        .clone()
        .or_else(|| ctx.config.provider.endpoint.clone())
        .or_else(|| provider_endpoint(&provider).map(str::to_string))
        .ok_or_else(|| {
            invalid(format!(
                "provider `{provider}` has no built-in endpoint; pass --endpoint"
            ))
        })?;
    if std::env::var("LLM_API_KEY").is_err() {
        return Err(invalid(
            "no API key: set the LLM_API_KEY environment variable (or use --mock)",
        ));
    }
    let model = model
        .clone()
        .unwrap_or_else(|| ctx.config.provider.model.clone());
    let client = HttpChatClient::new(HttpClientConfig::new(endpoint.clone(), model))
        .map_err(|e| runtime(format!("client setup: {e}")))?;
    Ok(ClientChoice {
        client: Box::new(client),
        kind: "endpoint",
        detail: endpoint,
    })
}

fn load_icl_examples(
    icl_from: &Option<PathBuf>,
    count: usize,
) -> Result<Vec<IclExample>, AppError> {
    if count == 0 {
        return Ok(Vec::new());
    }
    let path = icl_from.as_ref().ok_or_else(|| {
        invalid("the prompt config requests in-context examples; pass --icl-from <train.jsonl>")
    })?;
    let train = load_dataset_checked(path)?;
    let examples = select_icl_examples(&train, count);
    if examples.len() < count {
        return Err(invalid(format!(
            "{} has only {} usable in-context examples, {count} requested",
            path.display(),
            examples.len()
        )));
    }
    Ok(examples)
}

fn prompt_error(err: PromptError) -> AppError {
    match err {
        PromptError::Labeling { .. } => runtime(err),
        _ => invalid(err),
    }
}

// ---------------------------------------------------------------------------
// llm-label

fn cmd_llm_label(ctx: &Ctx, args: LlmLabelArgs) -> Result<(), AppError> {
    let (catalog, catalog_path) = ctx.catalog()?;
    let dataset = load_dataset_checked(&args.input)?;
    let prompt_config = ctx.config.prompt.clone();
    prompt_config.validate().map_err(prompt_error)?;

    // Competition mode replaces examples with restricted technique lists.
    let icl_count = if prompt_config.competition.is_some() {
        0
    } else {
        prompt_config.icl_count
    };
    let examples = load_icl_examples(&args.icl_from, icl_count)?;
    let choice = build_client(
        ctx,
        &args.mock,
        args.strict_mock,
        &args.provider,
        &args.endpoint,
        &args.model,
    )?;
    let options = LabelOptions::default();

    let mut records = Vec::with_capacity(dataset.len());
    let mut failures = 0usize;
    for rule in dataset.rules() {
        match label_with_llm(
            choice.client.as_ref(),
            &prompt_config,
            &rule.rule,
            &catalog,
            &examples,
            &options,
        ) {
            Ok(prediction) => records.push(PredictionRecord {
                sid: rule.sid,
                techniques: prediction.technique_ids.into_iter().collect(),
                scores: None,
            }),
            Err(err) if args.keep_going => {
                eprintln!(
                    "warning: sid {}: {err}; recording empty prediction",
                    rule.sid
                );
                failures += 1;
                records.push(PredictionRecord {
                    sid: rule.sid,
                    techniques: Vec::new(),
                    scores: None,
                });
            }
            Err(err) => return Err(prompt_error(err)),
        }
    }

    let out = ctx.out(&args.out, "llm_predictions.jsonl");
    write_predictions(&out, &records)?;
    say!(
        "labeled {} rules with prompt {} ({failures} failures) -> {}",
        records.len(),
        prompt_config.display_name(),
        out.display()
    );

    let mut manifest = RunManifest::new("llm-label")
        .input("dataset", &args.input)
        .input("catalog", &catalog_path)
        .output("predictions", &out)
        .catalog_version(&catalog);
    manifest.inputs.insert(choice.kind, choice.detail.clone());
    if let Some(icl_from) = &args.icl_from {
        manifest = manifest.input("icl_from", icl_from);
    }
    manifest.append(&ctx.out_dir)
}

// ---------------------------------------------------------------------------
// prompt-search

#[derive(Serialize)]
struct PromptSearchRow {
    name: String,
    config: PromptConfig,
    precision: f64,
    recall: f64,
    f1: f64,
    avg_prompt_tokens: f64,
    failures: usize,
}

#[derive(Serialize)]
struct PromptSearchOutput {
    best: String,
    best_config: PromptConfig,
    ranked: Vec<PromptSearchRow>,
}

/// The fixed search space: technique guide on/off crossed with 0–2
/// in-context examples, cheapest first.
fn prompt_search_space() -> Vec<PromptConfig> {
    let mut configs = Vec::new();
    for use_technique_guide in [false, true] {
        for icl_count in 0..=2 {
            configs.push(PromptConfig {
                use_technique_guide,
                icl_count,
                competition: None,
                temperature: 0.0,
            });
        }
    }
    configs
}

fn cmd_prompt_search(ctx: &Ctx, args: PromptSearchArgs) -> Result<(), AppError> {
    let (catalog, catalog_path) = ctx.catalog()?;
    let dev = load_dataset_checked(&args.dev)?;
    let examples = load_icl_examples(&Some(args.icl_from.clone()), 2)?;
    let choice = build_client(
        ctx,
        &args.mock,
        args.strict_mock,
        &args.provider,
        &args.endpoint,
        &args.model,
    )?;
    let configs = prompt_search_space();

    let result = select_best_prompt(
        &configs,
        &dev,
        choice.client.as_ref(),
        &catalog,
        &examples,
        &LabelOptions::default(),
    )
    .map_err(|e| invalid(format!("prompt search failed: {e}")))?;

    let output = PromptSearchOutput {
        best: result.best.display_name(),
        best_config: result.best.clone(),
        ranked: result
            .ranked
            .iter()
            .map(|candidate| PromptSearchRow {
                name: candidate.config.display_name(),
                config: candidate.config.clone(),
                precision: candidate.report.precision,
                recall: candidate.report.recall,
                f1: candidate.report.f1,
                avg_prompt_tokens: candidate.avg_prompt_tokens,
                failures: candidate.report.failures,
            })
            .collect(),
    };
    let out = ctx.out(&args.out, "prompt_search.json");
    write_json_pretty(&out, &output)?;

    say!(
        "{:<10} {:>8} {:>8} {:>8} {:>12}",
        "prompt",
        "prec",
        "rec",
        "f1",
        "avg tokens"
    );
    for row in &output.ranked {
        say!(
            "{:<10} {:>8.4} {:>8.4} {:>8.4} {:>12.1}",
            row.name,
            row.precision,
            row.recall,
            row.f1,
            row.avg_prompt_tokens
        );
    }
    say!("best: {} -> {}", output.best, out.display());

    let mut manifest = RunManifest::new("prompt-search")
        .input("dev", &args.dev)
        .input("catalog", &catalog_path)
        .input("icl_from", &args.icl_from)
        .output("result", &out)
        .catalog_version(&catalog);
    manifest.inputs.insert(choice.kind, choice.detail.clone());
    manifest.append(&ctx.out_dir)
}

// ---------------------------------------------------------------------------
// catalog check

fn cmd_catalog_check(ctx: &Ctx) -> Result<(), AppError> {
    let (catalog, catalog_path) = ctx.catalog()?;
    let total = catalog.len();
    let active = catalog.active_entries().count();
    let subs = catalog.entries().filter(|e| e.is_sub()).count();
    let tactics = catalog.tactic_universe().len();
    say!(
        "catalog ok: version {}, {} techniques ({} active, {} sub-techniques), {} tactics",
        catalog.version(),
        total,
        active,
        subs,
        tactics
    );

    RunManifest::new("catalog-check")
        .input("catalog", &catalog_path)
        .catalog_version(&catalog)
        .append(&ctx.out_dir)
}
