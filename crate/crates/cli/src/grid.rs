//! Grid search over the hyperparameter settings: one model per grid
//! point, best-point selection on the validation metric, test evaluation
//! of the winner, and a reproducible manifest of the whole run.
//!
//! Grid points run in deterministic order with per-point seeds derived
//! from the run seed. A diverging point is recorded as failed and the
//! search continues; the run only errors if every point fails.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use thiserror::Error;

use iea_core::abduction::{train_abduction, AbductionModel};
use iea_core::corpus::{split_corpus, Corpus};
use iea_core::emotion::{explain, train_emotion, EmotionModel};
use iea_core::encoder::{EncoderConfig, EncoderParams, Vocabulary};
use iea_core::eval::{bleu, prf1, rouge, EvalReport};
use iea_core::generation::{
    assemble_context_only, assemble_input, expectation_template, generate, ConditioningMode,
    DecodeConfig, DecodeStrategy, GenerationExample, Generator, GeneratorInput,
    ListenerConditioning, TinyCharGenerator, TinyGeneratorConfig,
};
use iea_core::intdic::{build_dictionary, IntentionDictionary, PriorDistribution};
use iea_core::labels::{EmotionLabel, IntentionLabel, SatisfactionLabel};
use iea_core::nn::{TrainHistory, TrainHparams};
use iea_core::rng::{derive_seed, rng_from_seed};

use crate::checkpoint::{self, GenerationPipeline};
use crate::config::{RunConfig, Task};
use crate::jsonl;
use crate::manifest::{
    sha256_file, write_manifest, BestPoint, CorpusInfo, DictInfo, GridPointResult, ManifestError,
    RunManifest, MANIFEST_VERSION,
};
use crate::predictions::{
    write_records, AbductionRecord, EmotionRecord, GenerationRecord, PredictionError,
};

#[derive(Debug, Error)]
pub enum GridError {
    #[error(transparent)]
    Config(#[from] crate::config::ConfigError),
    #[error(transparent)]
    Corpus(#[from] jsonl::JsonlError),
    #[error("corpus split produced an empty partition (corpus has {0} pairs; need at least 10)")]
    CorpusTooSmall(usize),
    #[error(transparent)]
    Split(#[from] iea_core::corpus::SplitError),
    #[error(transparent)]
    Dict(#[from] iea_core::intdic::DictError),
    #[error(transparent)]
    DictFile(#[from] crate::dictfile::DictFileError),
    #[error(transparent)]
    Training(#[from] iea_core::nn::TrainingError),
    #[error("all {0} grid points failed")]
    AllPointsFailed(usize),
    #[error(transparent)]
    Checkpoint(#[from] checkpoint::CheckpointError),
    #[error(transparent)]
    Predictions(#[from] PredictionError),
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error(transparent)]
    Glove(#[from] crate::glove::GloveError),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Generation(#[from] iea_core::generation::GenerationError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> GridError + '_ {
    move |source| GridError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub struct RunOutcome {
    pub manifest: RunManifest,
    pub manifest_path: PathBuf,
}

enum Winner {
    Abduction(AbductionModel),
    Emotion(EmotionModel),
    Generation(GenerationPipeline),
}

/// Lower is better for generation (validation token loss), higher for the
/// classification tasks (validation macro-F1).
fn better(task: Task, candidate: f64, incumbent: f64) -> bool {
    match task {
        Task::Generation => candidate < incumbent,
        _ => candidate > incumbent,
    }
}

fn build_encoder(config: &RunConfig, vocab: Vocabulary, seed: u64) -> EncoderParams {
    EncoderParams::new(
        vocab,
        EncoderConfig {
            embed_dim: config.embed_dim,
            hidden: config.hidden,
            attention: config.encoder.uses_attention(),
        },
        &mut rng_from_seed(seed),
    )
}

fn apply_word_vectors(
    config: &RunConfig,
    encoder: &mut EncoderParams,
) -> Result<usize, GridError> {
    if let Some(path) = &config.word_vectors {
        let entries = crate::glove::read_word_vectors(path, config.embed_dim)?;
        let loaded = encoder
            .load_pretrained_embeddings(entries)
            .map_err(|e| GridError::Config(crate::config::ConfigError::Invalid(e.to_string())))?;
        return Ok(loaded);
    }
    Ok(0)
}

/// Speaker-side conditioning for one pair: the listener intention vector
/// through the intention-inference map, plus the gold listener intention
/// label for plug-ins without native vector support.
fn listener_conditioning(
    pipeline_encoder: &EmotionModel,
    inference: &iea_core::generation::IntentionInference,
    dict: Option<&IntentionDictionary>,
    utterance_s: &str,
    intention_r: IntentionLabel,
) -> Result<ListenerConditioning, GridError> {
    let h_s = pipeline_encoder
        .encoder
        .encode_text(utterance_s)
        .map_err(|e| GridError::Config(crate::config::ConfigError::Invalid(e.to_string())))?
        .representation;
    let alpha = match dict {
        Some(d) => d.lookup(utterance_s),
        None => PriorDistribution::uniform(),
    };
    let h_bar_s = pipeline_encoder
        .intention_vector(&h_s, &alpha)
        .expect("dims fixed by model");
    let vector = inference
        .infer_listener_intention(&h_bar_s)
        .expect("role is speaker");
    Ok(ListenerConditioning {
        vector,
        label: intention_r,
    })
}

fn generation_examples(
    corpus: &Corpus,
    conditioner: &EmotionModel,
    inference: &iea_core::generation::IntentionInference,
    dict: Option<&IntentionDictionary>,
    full_conditioning: bool,
    decode: &DecodeConfig,
) -> Result<Vec<GenerationExample>, GridError> {
    corpus
        .iter()
        .map(|pair| {
            let input = if full_conditioning {
                assemble_input(
                    &expectation_template(pair.emotion_s),
                    &pair.utterance_s,
                    Some(listener_conditioning(
                        conditioner,
                        inference,
                        dict,
                        &pair.utterance_s,
                        pair.intention_r,
                    )?),
                    decode.clone(),
                )?
            } else {
                assemble_context_only(&pair.utterance_s, decode.clone())?
            };
            Ok(GenerationExample {
                input,
                target: pair.utterance_r.clone(),
            })
        })
        .collect()
}

fn abduction_metrics(
    model: &AbductionModel,
    dict: Option<&IntentionDictionary>,
    test: &Corpus,
) -> Result<(Vec<AbductionRecord>, BTreeMap<String, f64>), GridError> {
    let mut records = Vec::with_capacity(test.len());
    for pair in test.iter() {
        let out = model
            .abduce(&pair.utterance_s, dict)
            .map_err(|e| GridError::Config(crate::config::ConfigError::Invalid(e.to_string())))?;
        records.push(AbductionRecord {
            id: pair.id.clone(),
            predicted_intention: out.predicted,
            distribution: out.distribution,
        });
    }
    let preds: Vec<&str> = records.iter().map(|r| r.predicted_intention.as_str()).collect();
    let golds: Vec<&str> = test.iter().map(|p| p.intention_s.as_str()).collect();
    let classes: Vec<&str> = IntentionLabel::ALL.iter().map(|l| l.as_str()).collect();
    let result = prf1(&preds, &golds, &classes)
        .map_err(|e| GridError::Config(crate::config::ConfigError::Invalid(e.to_string())))?;
    let mut metrics = BTreeMap::new();
    metrics.insert("macro_precision".into(), result.macro_precision);
    metrics.insert("macro_recall".into(), result.macro_recall);
    metrics.insert("macro_f1".into(), result.macro_f1);
    metrics.insert("micro_f1".into(), result.micro_f1);
    metrics.insert("weighted_f1".into(), result.weighted_f1);
    metrics.insert("accuracy".into(), result.accuracy);
    Ok((records, metrics))
}

fn emotion_metrics(
    model: &EmotionModel,
    dict: Option<&IntentionDictionary>,
    test: &Corpus,
) -> Result<(Vec<EmotionRecord>, BTreeMap<String, f64>), GridError> {
    let mut records = Vec::with_capacity(test.len());
    let mut predictions = Vec::with_capacity(test.len());
    for pair in test.iter() {
        let pred = model.predict(&pair.utterance_s, &pair.utterance_r, dict)?;
        records.push(EmotionRecord {
            id: pair.id.clone(),
            predicted_emotion: pred.emotion,
            predicted_satisfaction: pred.satisfaction,
            emotion_distribution: pred.emotion_distribution,
            satisfaction_distribution: pred.satisfaction_distribution,
            explanation: explain(pred.emotion, pred.satisfaction),
        });
        predictions.push(pred);
    }
    let e_preds: Vec<&str> = records.iter().map(|r| r.predicted_emotion.as_str()).collect();
    let e_golds: Vec<&str> = test.iter().map(|p| p.emotion_s.as_str()).collect();
    let e_classes: Vec<&str> = EmotionLabel::ALL.iter().map(|l| l.as_str()).collect();
    let e = prf1(&e_preds, &e_golds, &e_classes)
        .map_err(|err| GridError::Config(crate::config::ConfigError::Invalid(err.to_string())))?;

    let s_preds: Vec<&str> = records
        .iter()
        .map(|r| r.predicted_satisfaction.as_str())
        .collect();
    let s_golds: Vec<&str> = test.iter().map(|p| p.satisfaction.as_str()).collect();
    let s_classes: Vec<&str> = SatisfactionLabel::ALL.iter().map(|l| l.as_str()).collect();
    let s = prf1(&s_preds, &s_golds, &s_classes)
        .map_err(|err| GridError::Config(crate::config::ConfigError::Invalid(err.to_string())))?;

    let mut metrics = BTreeMap::new();
    metrics.insert("emotion_macro_precision".into(), e.macro_precision);
    metrics.insert("emotion_macro_recall".into(), e.macro_recall);
    metrics.insert("emotion_macro_f1".into(), e.macro_f1);
    metrics.insert("emotion_micro_f1".into(), e.micro_f1);
    metrics.insert("emotion_weighted_f1".into(), e.weighted_f1);
    metrics.insert("satisfaction_macro_f1".into(), s.macro_f1);
    metrics.insert("satisfaction_accuracy".into(), s.accuracy);
    metrics.insert(
        "prediction_consistency_rate".into(),
        iea_core::emotion::prediction_consistency_rate(&predictions),
    );
    Ok((records, metrics))
}

fn generation_metrics(
    pipeline: &GenerationPipeline,
    dict: Option<&IntentionDictionary>,
    test: &Corpus,
    full_conditioning: bool,
    decode: &DecodeConfig,
) -> Result<(Vec<GenerationRecord>, BTreeMap<String, f64>), GridError> {
    let mut records = Vec::new();
    let mut metrics = BTreeMap::new();
    let mut modes = vec![ConditioningMode::ContextOnly];
    if full_conditioning {
        // paired outputs: the full mode and its context-only ablation
        modes.insert(0, ConditioningMode::Full);
    }
    for mode in modes {
        let mut responses: Vec<String> = Vec::with_capacity(test.len());
        for pair in test.iter() {
            let input: GeneratorInput = match mode {
                ConditioningMode::Full => assemble_input(
                    &expectation_template(pair.emotion_s),
                    &pair.utterance_s,
                    Some(listener_conditioning(
                        &pipeline.conditioner,
                        &pipeline.inference,
                        dict,
                        &pair.utterance_s,
                        pair.intention_r,
                    )?),
                    decode.clone(),
                )?,
                ConditioningMode::ContextOnly => {
                    assemble_context_only(&pair.utterance_s, decode.clone())?
                }
            };
            let response = generate(&pipeline.generator, &input)?;
            records.push(GenerationRecord {
                id: pair.id.clone(),
                input_text: input.conditioning_text.clone(),
                mode,
                response: response.text.clone(),
                finish_reason: response.finish_reason,
            });
            responses.push(response.text);
        }
        let cands: Vec<&str> = responses.iter().map(String::as_str).collect();
        let refs: Vec<&str> = test.iter().map(|p| p.utterance_r.as_str()).collect();
        let b = bleu(&cands, &refs)
            .map_err(|e| GridError::Config(crate::config::ConfigError::Invalid(e.to_string())))?;
        let r = rouge(&cands, &refs)
            .map_err(|e| GridError::Config(crate::config::ConfigError::Invalid(e.to_string())))?;
        let prefix = match mode {
            ConditioningMode::Full => "full",
            ConditioningMode::ContextOnly => "context_only",
        };
        metrics.insert(format!("{prefix}_bleu1"), b.bleu1);
        metrics.insert(format!("{prefix}_bleu2"), b.bleu2);
        metrics.insert(format!("{prefix}_bleu4"), b.bleu4);
        metrics.insert(format!("{prefix}_rouge1"), r.rouge1);
        metrics.insert(format!("{prefix}_rouge2"), r.rouge2);
        metrics.insert(format!("{prefix}_rouge_l"), r.rouge_l);
    }
    Ok((records, metrics))
}

/// Train one model per grid point, keep the best by validation metric,
/// evaluate it on the held-out test split and write every artifact plus
/// the manifest under `config.out_dir`.
pub fn run_grid_search(config: &RunConfig) -> Result<RunOutcome, GridError> {
    let started = Instant::now();
    let mut config = config.clone();
    config.resolve_plugin_cache();
    config.validate()?;
    std::fs::create_dir_all(&config.out_dir).map_err(io_err(&config.out_dir))?;

    let (corpus, warnings) = jsonl::read_corpus(&config.corpus)?;
    let (train, val, test) = split_corpus(&corpus, (0.8, 0.1, 0.1), config.seed)?;
    if train.is_empty() || val.is_empty() || test.is_empty() {
        return Err(GridError::CorpusTooSmall(corpus.len()));
    }

    let mut artifacts: Vec<String> = Vec::new();
    let dict = if config.ablation.intdic {
        let dict = build_dictionary(&train, &config.dict)?;
        let dict_path = config.out_dir.join("dictionary.json");
        crate::dictfile::save_dictionary(&dict_path, &dict)?;
        artifacts.push("dictionary.json".into());
        Some((dict, dict_path))
    } else {
        None
    };
    let dict_ref = dict.as_ref().map(|(d, _)| d);

    let vocab = Vocabulary::build(&train, config.vocab_min_freq);
    let points = config.grid.points();
    let mut results: Vec<GridPointResult> = Vec::new();
    let mut winner: Option<(f64, usize, Winner)> = None;

    for (index, &(lr, batch, epochs)) in points.iter().enumerate() {
        let point_seed = derive_seed(config.seed, index as u64);
        let hp = TrainHparams {
            learning_rate: lr,
            batch_size: batch,
            epochs,
            seed: point_seed,
            stop_at_val_metric: None,
        };

        let outcome: Result<(f64, Option<f64>, Option<usize>, Winner), String> = match config.task
        {
            Task::Abduction => {
                let mut encoder = build_encoder(&config, vocab.clone(), point_seed);
                apply_word_vectors(&config, &mut encoder).map_err(GridError::from)?;
                let mut model =
                    AbductionModel::new(encoder, &mut rng_from_seed(derive_seed(point_seed, 1)));
                match train_abduction(&mut model, dict_ref, &train, &val, &hp) {
                    Ok(history) => Ok(unpack(history, Winner::Abduction(model))),
                    Err(e) => Err(e.to_string()),
                }
            }
            Task::Emotion => {
                let mut encoder = build_encoder(&config, vocab.clone(), point_seed);
                apply_word_vectors(&config, &mut encoder).map_err(GridError::from)?;
                let mut model = EmotionModel::new(
                    encoder,
                    config.ablation.fusion,
                    &mut rng_from_seed(derive_seed(point_seed, 1)),
                );
                if !config.ablation.multitask {
                    model.lambda_satisfaction = 0.0;
                }
                match train_emotion(&mut model, dict_ref, &train, &val, &hp) {
                    Ok(history) => Ok(unpack(history, Winner::Emotion(model))),
                    Err(e) => Err(e.to_string()),
                }
            }
            Task::Generation => {
                let conditioner = match &config.emotion_checkpoint {
                    Some(path) => checkpoint::load_emotion(path)?,
                    None => {
                        let encoder = build_encoder(&config, vocab.clone(), point_seed);
                        EmotionModel::new(
                            encoder,
                            true,
                            &mut rng_from_seed(derive_seed(point_seed, 1)),
                        )
                    }
                };
                let inference = iea_core::generation::IntentionInference::new(
                    conditioner.hidden_dim(),
                    &mut rng_from_seed(derive_seed(point_seed, 2)),
                );
                let decode = DecodeConfig::default();
                let train_ex = generation_examples(
                    &train,
                    &conditioner,
                    &inference,
                    dict_ref,
                    config.ablation.full_conditioning,
                    &decode,
                )?;
                let val_ex = generation_examples(
                    &val,
                    &conditioner,
                    &inference,
                    dict_ref,
                    config.ablation.full_conditioning,
                    &decode,
                )?;
                let mut generator = TinyCharGenerator::new(
                    train.iter().map(|p| p.utterance_r.as_str()),
                    TinyGeneratorConfig {
                        cond_dim: config
                            .ablation
                            .full_conditioning
                            .then_some(conditioner.hidden_dim()),
                        ..TinyGeneratorConfig::default()
                    },
                    &mut rng_from_seed(derive_seed(point_seed, 3)),
                );
                match generator.train(&train_ex, &val_ex, &hp) {
                    Ok(history) => Ok(unpack_loss(
                        history,
                        Winner::Generation(GenerationPipeline {
                            conditioner,
                            inference,
                            generator,
                        }),
                    )),
                    Err(e) => Err(e.to_string()),
                }
            }
        };

        match outcome {
            Ok((metric, final_loss, best_epoch, model)) => {
                results.push(GridPointResult {
                    index,
                    learning_rate: lr,
                    batch_size: batch,
                    epochs,
                    seed: point_seed,
                    status: "ok".into(),
                    val_metric: Some(metric),
                    final_train_loss: final_loss,
                    best_epoch,
                });
                let improved = winner
                    .as_ref()
                    .map_or(true, |(best, _, _)| better(config.task, metric, *best));
                if improved {
                    winner = Some((metric, index, model));
                }
            }
            Err(message) => {
                results.push(GridPointResult {
                    index,
                    learning_rate: lr,
                    batch_size: batch,
                    epochs,
                    seed: point_seed,
                    status: format!("failed: {message}"),
                    val_metric: None,
                    final_train_loss: None,
                    best_epoch: None,
                });
            }
        }
    }

    let (best_metric, best_index, winner) =
        winner.ok_or(GridError::AllPointsFailed(points.len()))?;
    let (best_lr, best_batch, best_epochs) = points[best_index];

    // Winner artifacts: checkpoint, test predictions, report.
    let decode = DecodeConfig {
        max_length: 80,
        strategy: DecodeStrategy::Greedy,
        seed: derive_seed(config.seed, 0xdec0de),
    };
    let (test_metrics, checkpoint_name) = match &winner {
        Winner::Abduction(model) => {
            let (records, metrics) = abduction_metrics(model, dict_ref, &test)?;
            write_records(&config.out_dir.join("test_predictions.jsonl"), &records)?;
            checkpoint::save_abduction(&config.out_dir.join("model.ckpt.json"), model)?;
            (metrics, "model.ckpt.json")
        }
        Winner::Emotion(model) => {
            let (records, metrics) = emotion_metrics(model, dict_ref, &test)?;
            write_records(&config.out_dir.join("test_predictions.jsonl"), &records)?;
            checkpoint::save_emotion(&config.out_dir.join("model.ckpt.json"), model)?;
            (metrics, "model.ckpt.json")
        }
        Winner::Generation(pipeline) => {
            let (records, metrics) = generation_metrics(
                pipeline,
                dict_ref,
                &test,
                config.ablation.full_conditioning,
                &decode,
            )?;
            write_records(&config.out_dir.join("test_predictions.jsonl"), &records)?;
            checkpoint::save_generation(&config.out_dir.join("model.ckpt.json"), pipeline)?;
            (metrics, "model.ckpt.json")
        }
    };
    artifacts.push("test_predictions.jsonl".into());
    artifacts.push(checkpoint_name.into());

    let row_label = match config.task {
        Task::Generation => {
            if config.ablation.full_conditioning {
                "full".to_string()
            } else {
                "context_only".to_string()
            }
        }
        _ => config.ablation.row_label(),
    };
    let mut report = EvalReport::default();
    let metric_refs: Vec<(&str, f64)> = test_metrics
        .iter()
        .map(|(k, &v)| (k.as_str(), v))
        .collect();
    report.push(&row_label, &metric_refs);
    std::fs::write(config.out_dir.join("report.txt"), report.render_text())
        .map_err(io_err(&config.out_dir))?;
    std::fs::write(
        config.out_dir.join("report.json"),
        serde_json::to_string_pretty(&report).expect("report serializes"),
    )
    .map_err(io_err(&config.out_dir))?;
    artifacts.push("report.txt".into());
    artifacts.push("report.json".into());
    artifacts.push("manifest.json".into());

    let dictionary = match &dict {
        Some((d, path)) => Some(DictInfo {
            path: "dictionary.json".into(),
            sha256: sha256_file(path)?,
            entries: d.len(),
        }),
        None => None,
    };

    let manifest = RunManifest {
        version: MANIFEST_VERSION,
        task: config.task.as_str().to_string(),
        ablation_row: row_label,
        corpus: CorpusInfo {
            path: config.corpus.display().to_string(),
            sha256: sha256_file(&config.corpus)?,
            pairs: corpus.len(),
            train_pairs: train.len(),
            val_pairs: val.len(),
            test_pairs: test.len(),
            consistency_violation_rate: jsonl::consistency_violation_rate(&corpus, &warnings),
        },
        dictionary,
        grid_points: results,
        best: BestPoint {
            index: best_index,
            learning_rate: best_lr,
            batch_size: best_batch,
            epochs: best_epochs,
            val_metric: best_metric,
        },
        test_metrics,
        artifacts,
        seed: config.seed,
        wall_clock_secs: started.elapsed().as_secs_f64(),
        config,
    };
    let manifest_path = manifest_path_for(&manifest);
    write_manifest(&manifest_path, &manifest)?;
    Ok(RunOutcome {
        manifest,
        manifest_path,
    })
}

fn manifest_path_for(manifest: &RunManifest) -> PathBuf {
    manifest.config.out_dir.join("manifest.json")
}

fn unpack(history: TrainHistory, model: Winner) -> (f64, Option<f64>, Option<usize>, Winner) {
    let metric = history.best_val_metric().unwrap_or(0.0);
    let final_loss = history.epochs.last().map(|e| e.train_loss);
    (metric, final_loss, history.best_epoch, model)
}

/// Generation history: the validation metric is a loss (minimized).
fn unpack_loss(history: TrainHistory, model: Winner) -> (f64, Option<f64>, Option<usize>, Winner) {
    let metric = history
        .best_val_metric()
        .unwrap_or(f64::INFINITY);
    let final_loss = history.epochs.last().map(|e| e.train_loss);
    (metric, final_loss, history.best_epoch, model)
}
