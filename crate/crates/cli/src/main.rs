//! `iea` — corpus tooling, dictionary building, training with grid
//! search, evaluation, response generation and explanation in one binary.
//!
//! Exit codes: 0 success, 2 usage error, 3 configuration error, 4 data or
//! file-format error, 5 training error, 6 generation error, 1 other IO.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use iea_cli::checkpoint;
use iea_cli::config::{AblationFlags, EncoderChoice, RunConfig, Task};
use iea_cli::evaluate::build_report;
use iea_cli::grid::run_grid_search;
use iea_cli::jsonl;
use iea_cli::predictions::{write_records, GenerationRecord};
use iea_core::corpus::{corpus_stats, Corpus};
use iea_core::generation::{
    assemble_context_only, assemble_input, expectation_template, generate, ConditioningMode,
    DecodeConfig, DecodeStrategy, GeneratorInput, ListenerConditioning,
};
use iea_core::intdic::{build_dictionary, IntentionDictionary, PriorDistribution};
use iea_core::labels::{EmotionLabel, SatisfactionLabel};
use iea_core::synth::{generate_synthetic_corpus, SyntheticSpec};

#[derive(Parser)]
#[command(name = "iea", version, about = "Intention-emotion-action dialogue toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and validate a corpus file, reporting schema violations.
    Ingest(IngestArgs),
    /// Label distributions and length histograms for a corpus.
    Stats(StatsArgs),
    /// Mine the intention dictionary from a training corpus.
    BuildDict(BuildDictArgs),
    /// Grid-search training for one task; writes checkpoint, predictions,
    /// report and manifest.
    Train(TrainArgs),
    /// Score prediction files against a gold corpus.
    Evaluate(EvaluateArgs),
    /// Decode responses for a corpus with a trained generation checkpoint.
    Generate(GenerateArgs),
    /// Print the emotion explanation for a label pair.
    Explain(ExplainArgs),
    /// Generate a synthetic corpus.
    Synth(SynthArgs),
}

#[derive(Args)]
struct IngestArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Emit the summary as JSON instead of text.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct StatsArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Write the JSON document here.
    #[arg(long)]
    json: Option<PathBuf>,
    /// Write the plain-text table here (also printed to stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BuildDictArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 2)]
    min_count: usize,
    #[arg(long, default_value_t = 5000)]
    max_entries: usize,
    #[arg(long, default_value_t = 0.1)]
    smoothing: f64,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, value_enum)]
    task: Task,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// JSON config file; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Learning-rate grid, comma separated.
    #[arg(long, value_delimiter = ',')]
    lr: Option<Vec<f64>>,
    /// Batch-size grid, comma separated.
    #[arg(long, value_delimiter = ',')]
    batch_size: Option<Vec<usize>>,
    /// Epoch grid, comma separated.
    #[arg(long, value_delimiter = ',')]
    epochs: Option<Vec<usize>>,
    /// recurrent | recurrent+attention
    #[arg(long)]
    encoder: Option<String>,
    #[arg(long)]
    embed_dim: Option<usize>,
    #[arg(long)]
    hidden: Option<usize>,
    /// Disable a component: intdic, fusion, multitask, full-conditioning.
    #[arg(long)]
    ablate: Vec<String>,
    /// Pretrained word-vector file.
    #[arg(long)]
    word_vectors: Option<PathBuf>,
    /// Reuse a trained emotion checkpoint as the generation conditioner.
    #[arg(long)]
    emotion_checkpoint: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long, value_enum)]
    task: Task,
    /// Gold corpus (JSON-lines).
    #[arg(long)]
    gold: PathBuf,
    /// Prediction files as name=path; repeatable for multi-row reports.
    #[arg(long = "pred", required = true)]
    preds: Vec<String>,
    /// Human-evaluation CSVs as name=path (generation task).
    #[arg(long = "human-eval")]
    human_eval: Vec<String>,
    /// Directory for report.txt and report.json.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "both")]
    mode: String,
    #[arg(long, default_value_t = 80)]
    max_length: usize,
    /// greedy | beam:<width> | sample:<temperature>
    #[arg(long, default_value = "greedy")]
    strategy: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Dictionary for the conditioning prior (uniform without it).
    #[arg(long)]
    dict: Option<PathBuf>,
    /// Fill the expectation template with the conditioner's predicted
    /// emotion instead of the gold label.
    #[arg(long)]
    predicted_emotion: bool,
}

#[derive(Args)]
struct ExplainArgs {
    #[arg(long)]
    emotion: EmotionLabel,
    #[arg(long)]
    satisfaction: SatisfactionLabel,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    injection: Option<f64>,
    #[arg(long)]
    vocab_size: Option<usize>,
    #[arg(long)]
    skew: Option<f64>,
    #[arg(long)]
    satisfied_rate: Option<f64>,
    /// Full SyntheticSpec as a JSON file; flags override its fields.
    #[arg(long)]
    spec: Option<PathBuf>,
}

/// Failure category drives the process exit code.
#[derive(Debug)]
enum CliError {
    Config(String),
    Data(String),
    Training(String),
    Generation(String),
    Io(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Io(_) => 1,
            CliError::Config(_) => 3,
            CliError::Data(_) => 4,
            CliError::Training(_) => 5,
            CliError::Generation(_) => 6,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Config(m)
            | CliError::Data(m)
            | CliError::Training(m)
            | CliError::Generation(m)
            | CliError::Io(m) => m,
        }
    }
}

impl From<jsonl::JsonlError> for CliError {
    fn from(e: jsonl::JsonlError) -> Self {
        match e {
            jsonl::JsonlError::Io { .. } => CliError::Io(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<iea_cli::grid::GridError> for CliError {
    fn from(e: iea_cli::grid::GridError) -> Self {
        use iea_cli::grid::GridError as G;
        match &e {
            G::Config(_) | G::CorpusTooSmall(_) | G::Dict(_) => CliError::Config(e.to_string()),
            G::Corpus(inner) => match inner {
                jsonl::JsonlError::Io { .. } => CliError::Io(e.to_string()),
                _ => CliError::Data(e.to_string()),
            },
            G::Split(_) => CliError::Config(e.to_string()),
            G::DictFile(_) | G::Checkpoint(_) | G::Predictions(_) | G::Manifest(_)
            | G::Glove(_) => CliError::Data(e.to_string()),
            G::Training(_) | G::AllPointsFailed(_) => CliError::Training(e.to_string()),
            G::Generation(_) => CliError::Generation(e.to_string()),
            G::Io { .. } => CliError::Io(e.to_string()),
        }
    }
}

impl From<iea_cli::evaluate::EvaluateError> for CliError {
    fn from(e: iea_cli::evaluate::EvaluateError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<iea_cli::checkpoint::CheckpointError> for CliError {
    fn from(e: iea_cli::checkpoint::CheckpointError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<iea_cli::dictfile::DictFileError> for CliError {
    fn from(e: iea_cli::dictfile::DictFileError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<iea_core::generation::GenerationError> for CliError {
    fn from(e: iea_core::generation::GenerationError) -> Self {
        CliError::Generation(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Ingest(args) => ingest(args),
        Command::Stats(args) => stats(args),
        Command::BuildDict(args) => build_dict(args),
        Command::Train(args) => train(args),
        Command::Evaluate(args) => evaluate(args),
        Command::Generate(args) => generate_cmd(args),
        Command::Explain(args) => {
            println!(
                "{}",
                iea_core::emotion::explain(args.emotion, args.satisfaction)
            );
            Ok(())
        }
        Command::Synth(args) => synth(args),
    }
}

fn ingest(args: IngestArgs) -> Result<(), CliError> {
    let (corpus, warnings) = jsonl::read_corpus(&args.corpus)?;
    let rate = jsonl::consistency_violation_rate(&corpus, &warnings);
    if args.json {
        let summary = serde_json::json!({
            "pairs": corpus.len(),
            "warnings": warnings.len(),
            "consistency_violation_rate": rate,
            "details": warnings,
        });
        println!("{}", serde_json::to_string_pretty(&summary).expect("serializes"));
    } else {
        println!("pairs: {}", corpus.len());
        println!("warnings: {}", warnings.len());
        println!("consistency violation rate: {rate:.4}");
        for w in &warnings {
            println!("  line {} ({}): {}", w.line, w.id, w.violation);
        }
    }
    Ok(())
}

fn stats(args: StatsArgs) -> Result<(), CliError> {
    let (corpus, _) = jsonl::read_corpus(&args.corpus)?;
    let report = corpus_stats(&corpus);
    let text = report.render_text();
    print!("{text}");
    if let Some(path) = args.out {
        std::fs::write(&path, &text).map_err(|e| CliError::Io(e.to_string()))?;
    }
    if let Some(path) = args.json {
        let json = serde_json::to_string_pretty(&report).expect("serializes");
        std::fs::write(&path, json).map_err(|e| CliError::Io(e.to_string()))?;
    }
    Ok(())
}

fn build_dict(args: BuildDictArgs) -> Result<(), CliError> {
    let (corpus, _) = jsonl::read_corpus(&args.corpus)?;
    let config = iea_core::intdic::DictConfig {
        min_count: args.min_count,
        max_entries: args.max_entries,
        smoothing_mass: args.smoothing,
    };
    let dict = build_dictionary(&corpus, &config)
        .map_err(|e| CliError::Config(e.to_string()))?;
    iea_cli::dictfile::save_dictionary(&args.out, &dict)?;
    println!(
        "dictionary: {} entries from {} pairs -> {}",
        dict.len(),
        corpus.len(),
        args.out.display()
    );
    Ok(())
}

fn train(args: TrainArgs) -> Result<(), CliError> {
    let mut config = match &args.config {
        Some(path) => RunConfig::load(path).map_err(|e| CliError::Config(e.to_string()))?,
        None => RunConfig::default(),
    };
    config.task = args.task;
    config.corpus = args.corpus;
    config.out_dir = args.out;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(lr) = args.lr {
        config.grid.learning_rates = lr;
    }
    if let Some(bs) = args.batch_size {
        config.grid.batch_sizes = bs;
    }
    if let Some(ep) = args.epochs {
        config.grid.epochs = ep;
    }
    if let Some(name) = &args.encoder {
        config.encoder =
            EncoderChoice::parse(name).map_err(|e| CliError::Config(e.to_string()))?;
    }
    if let Some(d) = args.embed_dim {
        config.embed_dim = d;
    }
    if let Some(h) = args.hidden {
        config.hidden = h;
    }
    if args.word_vectors.is_some() {
        config.word_vectors = args.word_vectors;
    }
    if args.emotion_checkpoint.is_some() {
        config.emotion_checkpoint = args.emotion_checkpoint;
    }
    let mut ablation = AblationFlags::default();
    for component in &args.ablate {
        ablation
            .disable(component)
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    if !args.ablate.is_empty() {
        config.ablation = ablation;
    }

    let outcome = run_grid_search(&config)?;
    println!(
        "best point: lr {} batch {} epochs {} (val metric {:.4})",
        outcome.manifest.best.learning_rate,
        outcome.manifest.best.batch_size,
        outcome.manifest.best.epochs,
        outcome.manifest.best.val_metric
    );
    for (name, value) in &outcome.manifest.test_metrics {
        println!("test {name}: {value:.4}");
    }
    println!("manifest: {}", outcome.manifest_path.display());
    Ok(())
}

fn parse_named(pairs: &[String]) -> Result<Vec<(String, PathBuf)>, CliError> {
    pairs
        .iter()
        .map(|p| {
            p.split_once('=')
                .map(|(name, path)| (name.to_string(), PathBuf::from(path)))
                .ok_or_else(|| {
                    CliError::Config(format!("expected name=path, got `{p}`"))
                })
        })
        .collect()
}

fn evaluate(args: EvaluateArgs) -> Result<(), CliError> {
    let (gold, _) = jsonl::read_corpus(&args.gold)?;
    let systems = parse_named(&args.preds)?;
    let human_eval = parse_named(&args.human_eval)?;
    let report = build_report(args.task, &gold, &systems, &human_eval)?;
    let text = report.render_text();
    print!("{text}");
    if let Some(dir) = args.out {
        std::fs::create_dir_all(&dir).map_err(|e| CliError::Io(e.to_string()))?;
        std::fs::write(dir.join("report.txt"), &text).map_err(|e| CliError::Io(e.to_string()))?;
        std::fs::write(
            dir.join("report.json"),
            serde_json::to_string_pretty(&report).expect("serializes"),
        )
        .map_err(|e| CliError::Io(e.to_string()))?;
    }
    Ok(())
}

fn parse_strategy(raw: &str) -> Result<DecodeStrategy, CliError> {
    if raw == "greedy" {
        return Ok(DecodeStrategy::Greedy);
    }
    if let Some(width) = raw.strip_prefix("beam:") {
        let width: usize = width
            .parse()
            .map_err(|_| CliError::Config(format!("bad beam width in `{raw}`")))?;
        return Ok(DecodeStrategy::Beam { width });
    }
    if let Some(temp) = raw.strip_prefix("sample:") {
        let temperature: f64 = temp
            .parse()
            .map_err(|_| CliError::Config(format!("bad temperature in `{raw}`")))?;
        return Ok(DecodeStrategy::Sample { temperature });
    }
    Err(CliError::Config(format!(
        "unknown strategy `{raw}` (greedy | beam:<width> | sample:<temperature>)"
    )))
}

fn generate_cmd(args: GenerateArgs) -> Result<(), CliError> {
    let pipeline = checkpoint::load_generation(&args.checkpoint)?;
    let (corpus, _) = jsonl::read_corpus(&args.corpus)?;
    let dict = match &args.dict {
        Some(path) => Some(iea_cli::dictfile::load_dictionary(path)?),
        None => None,
    };
    let modes: Vec<ConditioningMode> = match args.mode.as_str() {
        "full" => vec![ConditioningMode::Full],
        "context-only" | "context_only" => vec![ConditioningMode::ContextOnly],
        "both" => vec![ConditioningMode::Full, ConditioningMode::ContextOnly],
        other => {
            return Err(CliError::Config(format!(
                "unknown mode `{other}` (full | context-only | both)"
            )))
        }
    };
    let decode = DecodeConfig {
        max_length: args.max_length,
        strategy: parse_strategy(&args.strategy)?,
        seed: args.seed,
    };

    let mut records = Vec::new();
    for pair in corpus.iter() {
        for &mode in &modes {
            let input: GeneratorInput = match mode {
                ConditioningMode::Full => {
                    let emotion = if args.predicted_emotion {
                        pipeline
                            .conditioner
                            .predict(&pair.utterance_s, &pair.utterance_r, dict.as_ref())
                            .map_err(|e| CliError::Generation(e.to_string()))?
                            .emotion
                    } else {
                        pair.emotion_s
                    };
                    let conditioning = conditioning_for(&pipeline, dict.as_ref(), pair)?;
                    assemble_input(
                        &expectation_template(emotion),
                        &pair.utterance_s,
                        Some(conditioning),
                        decode.clone(),
                    )?
                }
                ConditioningMode::ContextOnly => {
                    assemble_context_only(&pair.utterance_s, decode.clone())?
                }
            };
            let response = generate(&pipeline.generator, &input)?;
            records.push(GenerationRecord {
                id: pair.id.clone(),
                input_text: input.conditioning_text.clone(),
                mode,
                response: response.text,
                finish_reason: response.finish_reason,
            });
        }
    }
    write_records(&args.out, &records).map_err(|e| CliError::Io(e.to_string()))?;
    println!("wrote {} responses to {}", records.len(), args.out.display());
    Ok(())
}

fn conditioning_for(
    pipeline: &checkpoint::GenerationPipeline,
    dict: Option<&IntentionDictionary>,
    pair: &iea_core::corpus::ConversationPair,
) -> Result<ListenerConditioning, CliError> {
    let h_s = pipeline
        .conditioner
        .encoder
        .encode_text(&pair.utterance_s)
        .map_err(|e| CliError::Generation(e.to_string()))?
        .representation;
    let alpha = match dict {
        Some(d) => d.lookup(&pair.utterance_s),
        None => PriorDistribution::uniform(),
    };
    let h_bar = pipeline
        .conditioner
        .intention_vector(&h_s, &alpha)
        .expect("dims fixed by checkpoint");
    let vector = pipeline
        .inference
        .infer_listener_intention(&h_bar)
        .expect("role is speaker");
    Ok(ListenerConditioning {
        vector,
        label: pair.intention_r,
    })
}

fn synth(args: SynthArgs) -> Result<(), CliError> {
    let mut spec = match &args.spec {
        Some(path) => {
            let text =
                std::fs::read_to_string(path).map_err(|e| CliError::Io(e.to_string()))?;
            serde_json::from_str::<SyntheticSpec>(&text)
                .map_err(|e| CliError::Config(format!("bad synthetic spec: {e}")))?
        }
        None => SyntheticSpec::default(),
    };
    spec.pair_count = args.count;
    if let Some(r) = args.injection {
        spec.injection_rate = r;
    }
    if let Some(v) = args.vocab_size {
        spec.vocab_size = v;
    }
    if let Some(s) = args.skew {
        spec.filler_class_skew = s;
    }
    if let Some(s) = args.satisfied_rate {
        spec.satisfied_rate = s;
    }
    let corpus: Corpus = generate_synthetic_corpus(&spec, args.seed)
        .map_err(|e| CliError::Config(e.to_string()))?;
    jsonl::write_corpus(&args.out, &corpus)?;
    println!("wrote {} pairs to {}", corpus.len(), args.out.display());
    Ok(())
}
