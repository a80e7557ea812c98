//! The `evaluate` command: score prediction files against a gold corpus
//! and render multi-system reports in the ablation-table shape.

use std::collections::BTreeMap;
use std::path::Path;

use thiserror::Error;

use iea_core::corpus::Corpus;
use iea_core::emotion::EmotionPrediction;
use iea_core::eval::{
    aggregate_human_eval, bleu, prf1, rouge, EvalError, EvalReport, HumanEvalRecord,
};
use iea_core::generation::ConditioningMode;
use iea_core::labels::{EmotionLabel, IntentionLabel, SatisfactionLabel};

use crate::config::Task;
use crate::jsonl;
use crate::predictions::{
    read_records, AbductionRecord, EmotionRecord, GenerationRecord, PredictionError,
};

#[derive(Debug, Error)]
pub enum EvaluateError {
    #[error(transparent)]
    Corpus(#[from] jsonl::JsonlError),
    #[error(transparent)]
    Predictions(#[from] PredictionError),
    #[error(transparent)]
    Metric(#[from] EvalError),
    #[error("prediction id `{0}` is not in the gold corpus")]
    UnknownId(String),
    #[error("no predictions for gold pair `{0}`")]
    MissingPrediction(String),
    #[error(transparent)]
    HumanEval(#[from] crate::humaneval::HumanEvalError),
}

fn gold_index(corpus: &Corpus) -> BTreeMap<&str, &iea_core::corpus::ConversationPair> {
    corpus.iter().map(|p| (p.id.as_str(), p)).collect()
}

/// Metrics for one named system's abduction predictions.
pub fn score_abduction(
    gold: &Corpus,
    path: &Path,
) -> Result<Vec<(String, f64)>, EvaluateError> {
    let records: Vec<AbductionRecord> = read_records(path)?;
    let index = gold_index(gold);
    let mut preds = Vec::new();
    let mut golds = Vec::new();
    for r in &records {
        let pair = index
            .get(r.id.as_str())
            .ok_or_else(|| EvaluateError::UnknownId(r.id.clone()))?;
        preds.push(r.predicted_intention.as_str());
        golds.push(pair.intention_s.as_str());
    }
    let classes: Vec<&str> = IntentionLabel::ALL.iter().map(|l| l.as_str()).collect();
    let result = prf1(&preds, &golds, &classes)?;
    Ok(vec![
        ("P".into(), result.macro_precision),
        ("R".into(), result.macro_recall),
        ("F1".into(), result.macro_f1),
        ("micro_F1".into(), result.micro_f1),
        ("accuracy".into(), result.accuracy),
    ])
}

pub fn score_emotion(gold: &Corpus, path: &Path) -> Result<Vec<(String, f64)>, EvaluateError> {
    let records: Vec<EmotionRecord> = read_records(path)?;
    let index = gold_index(gold);
    let mut e_preds = Vec::new();
    let mut e_golds = Vec::new();
    let mut s_preds = Vec::new();
    let mut s_golds = Vec::new();
    let mut predictions = Vec::new();
    for r in &records {
        let pair = index
            .get(r.id.as_str())
            .ok_or_else(|| EvaluateError::UnknownId(r.id.clone()))?;
        e_preds.push(r.predicted_emotion.as_str());
        e_golds.push(pair.emotion_s.as_str());
        s_preds.push(r.predicted_satisfaction.as_str());
        s_golds.push(pair.satisfaction.as_str());
        predictions.push(EmotionPrediction {
            emotion: r.predicted_emotion,
            satisfaction: r.predicted_satisfaction,
            emotion_distribution: r.emotion_distribution,
            satisfaction_distribution: r.satisfaction_distribution,
        });
    }
    let e_classes: Vec<&str> = EmotionLabel::ALL.iter().map(|l| l.as_str()).collect();
    let s_classes: Vec<&str> = SatisfactionLabel::ALL.iter().map(|l| l.as_str()).collect();
    let e = prf1(&e_preds, &e_golds, &e_classes)?;
    let s = prf1(&s_preds, &s_golds, &s_classes)?;
    Ok(vec![
        ("emo_P".into(), e.macro_precision),
        ("emo_R".into(), e.macro_recall),
        ("emo_F1".into(), e.macro_f1),
        ("emo_micro_F1".into(), e.micro_f1),
        ("emo_weighted_F1".into(), e.weighted_f1),
        ("sat_P".into(), s.macro_precision),
        ("sat_R".into(), s.macro_recall),
        ("sat_F1".into(), s.macro_f1),
        (
            "consistency".into(),
            iea_core::emotion::prediction_consistency_rate(&predictions),
        ),
    ])
}

/// BLEU/ROUGE per conditioning mode present in the file. Scores are
/// reported on their native [0, 1] scale.
pub fn score_generation(
    gold: &Corpus,
    path: &Path,
) -> Result<Vec<(ConditioningMode, Vec<(String, f64)>)>, EvaluateError> {
    let records: Vec<GenerationRecord> = read_records(path)?;
    let index = gold_index(gold);
    let mut by_mode: BTreeMap<&'static str, (ConditioningMode, Vec<(String, String)>)> =
        BTreeMap::new();
    for r in &records {
        let pair = index
            .get(r.id.as_str())
            .ok_or_else(|| EvaluateError::UnknownId(r.id.clone()))?;
        let key = match r.mode {
            ConditioningMode::Full => "full",
            ConditioningMode::ContextOnly => "context_only",
        };
        by_mode
            .entry(key)
            .or_insert_with(|| (r.mode, Vec::new()))
            .1
            .push((r.response.clone(), pair.utterance_r.clone()));
    }
    let mut out = Vec::new();
    for (_, (mode, pairs)) in by_mode {
        let cands: Vec<&str> = pairs.iter().map(|(c, _)| c.as_str()).collect();
        let refs: Vec<&str> = pairs.iter().map(|(_, r)| r.as_str()).collect();
        let b = bleu(&cands, &refs)?;
        let r = rouge(&cands, &refs)?;
        out.push((
            mode,
            vec![
                ("B-1".into(), b.bleu1),
                ("B-2".into(), b.bleu2),
                ("B-4".into(), b.bleu4),
                ("R-1".into(), r.rouge1),
                ("R-2".into(), r.rouge2),
                ("R-L".into(), r.rouge_l),
            ],
        ));
    }
    Ok(out)
}

/// Human-evaluation means (1..3 scale) appended as extra columns.
pub fn human_eval_columns(path: &Path) -> Result<Vec<(String, f64)>, EvaluateError> {
    let records: Vec<HumanEvalRecord> = crate::humaneval::read_human_eval(path)?;
    let summary = aggregate_human_eval(&records)?;
    let mut cols = vec![
        ("coherent".into(), summary.mean_coherent),
        ("consistent".into(), summary.mean_consistent),
        ("intention".into(), summary.mean_intention),
        ("emotion".into(), summary.mean_emotion),
    ];
    if let Some(agreement) = summary.rater_agreement {
        cols.push(("rater_agreement".into(), agreement));
    }
    Ok(cols)
}

/// Assemble the report for `evaluate`: one row per named prediction file
/// (two for generation files carrying both modes).
pub fn build_report(
    task: Task,
    gold: &Corpus,
    systems: &[(String, std::path::PathBuf)],
    human_eval: &[(String, std::path::PathBuf)],
) -> Result<EvalReport, EvaluateError> {
    let mut report = EvalReport::default();
    for (name, path) in systems {
        match task {
            Task::Abduction => {
                let metrics = score_abduction(gold, path)?;
                let refs: Vec<(&str, f64)> =
                    metrics.iter().map(|(k, v)| (k.as_str(), *v)).collect();
                report.push(name, &refs);
            }
            Task::Emotion => {
                let metrics = score_emotion(gold, path)?;
                let refs: Vec<(&str, f64)> =
                    metrics.iter().map(|(k, v)| (k.as_str(), *v)).collect();
                report.push(name, &refs);
            }
            Task::Generation => {
                for (mode, mut metrics) in score_generation(gold, path)? {
                    let label = match mode {
                        ConditioningMode::Full => format!("{name} (full)"),
                        ConditioningMode::ContextOnly => format!("{name} (context_only)"),
                    };
                    if let Some((_, he_path)) =
                        human_eval.iter().find(|(he_name, _)| he_name == name)
                    {
                        metrics.extend(human_eval_columns(he_path)?);
                    }
                    let refs: Vec<(&str, f64)> =
                        metrics.iter().map(|(k, v)| (k.as_str(), *v)).collect();
                    report.push(&label, &refs);
                }
            }
        }
    }
    Ok(report)
}
