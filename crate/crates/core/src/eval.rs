//! Evaluation: precision/recall/F1 for the classification tasks, BLEU and
//! ROUGE for generation, human-evaluation aggregation, and table-shaped
//! reports.
//!
//! Conventions (all documented because oracle tests pin them):
//! - per-class P/R/F1 use the 0-denominator convention (absent class -> 0);
//!   macro aggregates average over classes present in gold only.
//! - BLEU is corpus-level with clipped modified n-gram precision, brevity
//!   penalty `exp(1 - r/c)` when the candidate side is shorter, and
//!   add-epsilon smoothing of zero match counts (epsilon 1e-9); an n-gram
//!   order with no candidate n-grams at all contributes a neutral 1.
//! - ROUGE-1/2 are per-pair F1 of clipped n-gram overlap, ROUGE-L the LCS
//!   F-measure; corpus scores are means over pairs. Empty candidates score
//!   0 rather than erroring.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::tokenize;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("input lengths differ: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error("label `{0}` is not in the class set")]
    UnknownClass(String),
    #[error("reference {index} is empty")]
    EmptyReference { index: usize },
    #[error("score {value} for `{field}` outside 1..=3")]
    ScoreOutOfRange { field: String, value: u8 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Gold occurrences of this class.
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationResult {
    pub classes: Vec<String>,
    pub per_class: Vec<ClassMetrics>,
    /// confusion[gold][pred]
    pub confusion: Vec<Vec<usize>>,
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub micro_precision: f64,
    pub micro_recall: f64,
    pub micro_f1: f64,
    pub weighted_f1: f64,
}

/// Precision/recall/F1 from aligned prediction and gold label lists over a
/// fixed class set.
pub fn prf1(
    preds: &[&str],
    golds: &[&str],
    classes: &[&str],
) -> Result<ClassificationResult, EvalError> {
    if preds.len() != golds.len() {
        return Err(EvalError::LengthMismatch {
            left: preds.len(),
            right: golds.len(),
        });
    }
    if preds.is_empty() {
        return Err(EvalError::EmptyInput(String::from("no predictions")));
    }
    let index: BTreeMap<&str, usize> = classes.iter().enumerate().map(|(i, &c)| (c, i)).collect();
    let k = classes.len();
    let mut confusion = alloc::vec![alloc::vec![0usize; k]; k];
    for (&p, &g) in preds.iter().zip(golds) {
        let pi = *index.get(p).ok_or_else(|| EvalError::UnknownClass(p.into()))?;
        let gi = *index.get(g).ok_or_else(|| EvalError::UnknownClass(g.into()))?;
        confusion[gi][pi] += 1;
    }

    let mut per_class = Vec::with_capacity(k);
    for c in 0..k {
        let tp = confusion[c][c];
        let pred_count: usize = (0..k).map(|g| confusion[g][c]).sum();
        let gold_count: usize = confusion[c].iter().sum();
        let precision = if pred_count == 0 {
            0.0
        } else {
            tp as f64 / pred_count as f64
        };
        let recall = if gold_count == 0 {
            0.0
        } else {
            tp as f64 / gold_count as f64
        };
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        per_class.push(ClassMetrics {
            class: classes[c].into(),
            precision,
            recall,
            f1,
            support: gold_count,
        });
    }

    let total = preds.len();
    let correct: usize = (0..k).map(|c| confusion[c][c]).sum();
    let accuracy = correct as f64 / total as f64;

    let in_gold: Vec<&ClassMetrics> = per_class.iter().filter(|m| m.support > 0).collect();
    let denom = in_gold.len() as f64;
    let macro_precision = in_gold.iter().map(|m| m.precision).sum::<f64>() / denom;
    let macro_recall = in_gold.iter().map(|m| m.recall).sum::<f64>() / denom;
    let macro_f1 = in_gold.iter().map(|m| m.f1).sum::<f64>() / denom;
    let weighted_f1 = in_gold
        .iter()
        .map(|m| m.f1 * m.support as f64 / total as f64)
        .sum::<f64>();

    Ok(ClassificationResult {
        classes: classes.iter().map(|&c| c.into()).collect(),
        per_class,
        confusion,
        accuracy,
        macro_precision,
        macro_recall,
        macro_f1,
        // single-label: micro P = R = F1 = accuracy
        micro_precision: accuracy,
        micro_recall: accuracy,
        micro_f1: accuracy,
        weighted_f1,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BleuScores {
    pub bleu1: f64,
    pub bleu2: f64,
    pub bleu4: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RougeScores {
    pub rouge1: f64,
    pub rouge2: f64,
    pub rouge_l: f64,
}

/// Combined automatic generation scores, all in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerationScores {
    pub bleu1: f64,
    pub bleu2: f64,
    pub bleu4: f64,
    pub rouge1: f64,
    pub rouge2: f64,
    pub rouge_l: f64,
}

impl GenerationScores {
    pub fn new(bleu: BleuScores, rouge: RougeScores) -> Self {
        GenerationScores {
            bleu1: bleu.bleu1,
            bleu2: bleu.bleu2,
            bleu4: bleu.bleu4,
            rouge1: rouge.rouge1,
            rouge2: rouge.rouge2,
            rouge_l: rouge.rouge_l,
        }
    }
}

pub const BLEU_EPSILON: f64 = 1e-9;

fn ngram_counts(tokens: &[String], n: usize) -> BTreeMap<&[String], usize> {
    let mut counts: BTreeMap<&[String], usize> = BTreeMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_default() += 1;
        }
    }
    counts
}

/// Corpus-level BLEU-1/2/4 with the default smoothing epsilon.
pub fn bleu(candidates: &[&str], references: &[&str]) -> Result<BleuScores, EvalError> {
    bleu_with_epsilon(candidates, references, BLEU_EPSILON)
}

/// BLEU with an explicit smoothing epsilon (0 disables smoothing).
pub fn bleu_with_epsilon(
    candidates: &[&str],
    references: &[&str],
    epsilon: f64,
) -> Result<BleuScores, EvalError> {
    if candidates.len() != references.len() {
        return Err(EvalError::LengthMismatch {
            left: candidates.len(),
            right: references.len(),
        });
    }
    if candidates.is_empty() {
        return Err(EvalError::EmptyInput(String::from("no candidate/reference pairs")));
    }

    const MAX_N: usize = 4;
    let mut matches = [0u64; MAX_N];
    let mut totals = [0u64; MAX_N];
    let mut cand_len = 0usize;
    let mut ref_len = 0usize;

    for (i, (&cand, &reference)) in candidates.iter().zip(references).enumerate() {
        let cand_toks = tokenize(cand);
        let ref_toks = tokenize(reference);
        if ref_toks.is_empty() {
            return Err(EvalError::EmptyReference { index: i });
        }
        cand_len += cand_toks.len();
        ref_len += ref_toks.len();
        for n in 1..=MAX_N {
            let c_counts = ngram_counts(&cand_toks, n);
            let r_counts = ngram_counts(&ref_toks, n);
            for (gram, &c) in &c_counts {
                let clipped = c.min(r_counts.get(gram).copied().unwrap_or(0));
                matches[n - 1] += clipped as u64;
            }
            totals[n - 1] += cand_toks.len().saturating_sub(n - 1) as u64;
        }
    }

    let brevity_penalty = if cand_len == 0 {
        0.0
    } else if cand_len >= ref_len {
        1.0
    } else {
        libm::exp(1.0 - ref_len as f64 / cand_len as f64)
    };

    let precision = |n: usize| -> f64 {
        if totals[n - 1] == 0 {
            // no candidate n-grams of this order anywhere: neutral
            return 1.0;
        }
        let m = matches[n - 1] as f64;
        let smoothed = if m == 0.0 { epsilon } else { m };
        smoothed / totals[n - 1] as f64
    };

    let bleu_k = |k: usize| -> f64 {
        let mut log_sum = 0.0;
        for n in 1..=k {
            let p = precision(n);
            if p <= 0.0 {
                return 0.0;
            }
            log_sum += libm::log(p);
        }
        brevity_penalty * libm::exp(log_sum / k as f64)
    };

    Ok(BleuScores {
        bleu1: bleu_k(1),
        bleu2: bleu_k(2),
        bleu4: bleu_k(4),
    })
}

fn rouge_n_pair(cand: &[String], reference: &[String], n: usize) -> f64 {
    let c_total = cand.len().saturating_sub(n - 1);
    let r_total = reference.len().saturating_sub(n - 1);
    if c_total == 0 || r_total == 0 {
        return 0.0;
    }
    let c_counts = ngram_counts(cand, n);
    let r_counts = ngram_counts(reference, n);
    let mut m = 0usize;
    for (gram, &c) in &c_counts {
        m += c.min(r_counts.get(gram).copied().unwrap_or(0));
    }
    let p = m as f64 / c_total as f64;
    let r = m as f64 / r_total as f64;
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut prev = alloc::vec![0usize; b.len() + 1];
    let mut cur = alloc::vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                prev[j + 1].max(cur[j])
            };
        }
        core::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

fn rouge_l_pair(cand: &[String], reference: &[String]) -> f64 {
    if cand.is_empty() || reference.is_empty() {
        return 0.0;
    }
    let l = lcs_len(cand, reference) as f64;
    let p = l / cand.len() as f64;
    let r = l / reference.len() as f64;
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Mean per-pair ROUGE-1/2/L.
pub fn rouge(candidates: &[&str], references: &[&str]) -> Result<RougeScores, EvalError> {
    if candidates.len() != references.len() {
        return Err(EvalError::LengthMismatch {
            left: candidates.len(),
            right: references.len(),
        });
    }
    if candidates.is_empty() {
        return Err(EvalError::EmptyInput(String::from("no candidate/reference pairs")));
    }
    let mut r1 = 0.0;
    let mut r2 = 0.0;
    let mut rl = 0.0;
    for (&cand, &reference) in candidates.iter().zip(references) {
        let c = tokenize(cand);
        let r = tokenize(reference);
        r1 += rouge_n_pair(&c, &r, 1);
        r2 += rouge_n_pair(&c, &r, 2);
        rl += rouge_l_pair(&c, &r);
    }
    let n = candidates.len() as f64;
    Ok(RougeScores {
        rouge1: r1 / n,
        rouge2: r2 / n,
        rouge_l: rl / n,
    })
}

/// One human rating of one generated response, each criterion on 1..=3.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HumanEvalRecord {
    pub id: String,
    pub rater: String,
    pub coherent: u8,
    pub consistent: u8,
    pub intention: u8,
    pub emotion: u8,
}

impl HumanEvalRecord {
    fn check(&self) -> Result<(), EvalError> {
        for (field, value) in [
            ("coherent", self.coherent),
            ("consistent", self.consistent),
            ("intention", self.intention),
            ("emotion", self.emotion),
        ] {
            if !(1..=3).contains(&value) {
                return Err(EvalError::ScoreOutOfRange {
                    field: field.into(),
                    value,
                });
            }
        }
        Ok(())
    }

    fn scores(&self) -> [u8; 4] {
        [self.coherent, self.consistent, self.intention, self.emotion]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HumanEvalSummary {
    pub record_count: usize,
    pub rater_count: usize,
    pub mean_coherent: f64,
    pub mean_consistent: f64,
    pub mean_intention: f64,
    pub mean_emotion: f64,
    /// Exact-match rate over shared (item, criterion) cells, averaged over
    /// rater pairs; `None` with fewer than two raters.
    pub rater_agreement: Option<f64>,
}

pub fn aggregate_human_eval(records: &[HumanEvalRecord]) -> Result<HumanEvalSummary, EvalError> {
    if records.is_empty() {
        return Err(EvalError::EmptyInput(String::from("no human eval records")));
    }
    for r in records {
        r.check()?;
    }
    let n = records.len() as f64;
    let mean = |f: fn(&HumanEvalRecord) -> u8| records.iter().map(|r| f(r) as f64).sum::<f64>() / n;

    let raters: BTreeSet<&str> = records.iter().map(|r| r.rater.as_str()).collect();
    let by_rater: BTreeMap<&str, BTreeMap<&str, [u8; 4]>> = raters
        .iter()
        .map(|&rater| {
            let items = records
                .iter()
                .filter(|r| r.rater == rater)
                .map(|r| (r.id.as_str(), r.scores()))
                .collect();
            (rater, items)
        })
        .collect();

    let rater_list: Vec<&str> = raters.into_iter().collect();
    let mut pair_rates = Vec::new();
    for i in 0..rater_list.len() {
        for j in i + 1..rater_list.len() {
            let a = &by_rater[rater_list[i]];
            let b = &by_rater[rater_list[j]];
            let mut cells = 0usize;
            let mut agree = 0usize;
            for (id, sa) in a {
                if let Some(sb) = b.get(id) {
                    for (x, y) in sa.iter().zip(sb) {
                        cells += 1;
                        if x == y {
                            agree += 1;
                        }
                    }
                }
            }
            if cells > 0 {
                pair_rates.push(agree as f64 / cells as f64);
            }
        }
    }
    let rater_agreement = if pair_rates.is_empty() {
        None
    } else {
        Some(pair_rates.iter().sum::<f64>() / pair_rates.len() as f64)
    };

    Ok(HumanEvalSummary {
        record_count: records.len(),
        rater_count: rater_list.len(),
        mean_coherent: mean(|r| r.coherent),
        mean_consistent: mean(|r| r.consistent),
        mean_intention: mean(|r| r.intention),
        mean_emotion: mean(|r| r.emotion),
        rater_agreement,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricValue {
    pub name: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub system: String,
    pub metrics: Vec<MetricValue>,
}

/// Rows keyed by system or ablation name, each with an ordered metric list.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<ReportRow>,
}

impl EvalReport {
    pub fn push(&mut self, system: &str, metrics: &[(&str, f64)]) {
        self.rows.push(ReportRow {
            system: system.into(),
            metrics: metrics
                .iter()
                .map(|(n, v)| MetricValue {
                    name: String::from(*n),
                    value: *v,
                })
                .collect(),
        });
    }

    /// Column order: first appearance across rows.
    fn columns(&self) -> Vec<&str> {
        let mut cols: Vec<&str> = Vec::new();
        for row in &self.rows {
            for m in &row.metrics {
                if !cols.contains(&m.name.as_str()) {
                    cols.push(&m.name);
                }
            }
        }
        cols
    }

    /// Aligned plain-text table; values render with four decimals.
    pub fn render_text(&self) -> String {
        use core::fmt::Write;
        let cols = self.columns();
        let sys_width = self
            .rows
            .iter()
            .map(|r| r.system.len())
            .chain(core::iter::once("system".len()))
            .max()
            .unwrap_or(6);
        let col_width = |name: &str| name.len().max(8);

        let mut out = String::new();
        let _ = write!(out, "{:<sys_width$}", "system");
        for c in &cols {
            let _ = write!(out, "  {:>width$}", c, width = col_width(c));
        }
        out.push('\n');
        for row in &self.rows {
            let _ = write!(out, "{:<sys_width$}", row.system);
            for c in &cols {
                let cell = row.metrics.iter().find(|m| m.name == *c);
                match cell {
                    Some(m) => {
                        let _ = write!(out, "  {:>width$.4}", m.value, width = col_width(c));
                    }
                    None => {
                        let _ = write!(out, "  {:>width$}", "-", width = col_width(c));
                    }
                }
            }
            out.push('\n');
        }
        out
    }
}
