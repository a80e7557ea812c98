//! The intention dictionary: a keyword -> intention-distribution knowledge
//! base mined from training data, serving a prior over the seven intentions
//! for any utterance.
//!
//! Scores are smoothed class-conditional n-gram frequencies over speaker
//! utterances: `score(g, c) = (count(g, c) + s) / (count(g) + 7 s)`.
//! Only n-grams whose peak score exceeds the uniform 1/7 are kept, ranked
//! by that peak, so every retained keyword actually discriminates.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{fingerprint, tokenize, Corpus};
use crate::labels::IntentionLabel;

/// Keywords are n-grams of 1 to 3 tokens.
pub const MAX_NGRAM: usize = 3;

const CLASSES: usize = IntentionLabel::COUNT;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DictConfig {
    /// Minimum total occurrences for a candidate n-gram.
    pub min_count: usize,
    /// Upper bound on retained entries.
    pub max_entries: usize,
    /// Additive smoothing mass per class.
    pub smoothing_mass: f64,
}

impl Default for DictConfig {
    fn default() -> Self {
        DictConfig {
            min_count: 2,
            max_entries: 5000,
            smoothing_mass: 0.1,
        }
    }
}

/// Prior distribution over the seven intentions (the dictionary's output).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorDistribution {
    pub alpha: [f64; 7],
}

impl PriorDistribution {
    pub fn uniform() -> Self {
        PriorDistribution {
            alpha: [1.0 / 7.0; 7],
        }
    }

    pub fn is_valid(&self) -> bool {
        self.alpha.iter().all(|&a| a >= 0.0 && a.is_finite())
            && libm::fabs(self.alpha.iter().sum::<f64>() - 1.0) <= 1e-9
    }

    pub fn argmax(&self) -> IntentionLabel {
        IntentionLabel::from_index(crate::tensor::argmax(&self.alpha)).unwrap()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub corpus_fingerprint: String,
    pub pair_count: usize,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DictError {
    #[error("cannot build a dictionary from an empty corpus")]
    EmptyTrainingCorpus,
    #[error("invalid dictionary config: {0}")]
    BadConfig(String),
    #[error("entry `{keyword}` is not a distribution (sum {sum})")]
    InvalidEntry { keyword: String, sum: f64 },
}

/// Immutable after construction; `lookup` is pure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntentionDictionary {
    entries: BTreeMap<String, [f64; 7]>,
    smoothing_mass: f64,
    pub provenance: Option<Provenance>,
}

impl IntentionDictionary {
    /// Construct from raw entries, enforcing the per-entry distribution
    /// invariant. Keywords are lowercased and whitespace-normalized.
    pub fn from_entries(
        entries: BTreeMap<String, [f64; 7]>,
        smoothing_mass: f64,
    ) -> Result<Self, DictError> {
        let mut normalized = BTreeMap::new();
        for (keyword, scores) in entries {
            let sum: f64 = scores.iter().sum();
            if scores.iter().any(|&s| s < 0.0 || !s.is_finite()) || libm::fabs(sum - 1.0) > 1e-6 {
                return Err(DictError::InvalidEntry { keyword, sum });
            }
            let key = normalize_keyword(&keyword);
            normalized.insert(key, scores);
        }
        Ok(IntentionDictionary {
            entries: normalized,
            smoothing_mass,
            provenance: None,
        })
    }

    pub fn entries(&self) -> &BTreeMap<String, [f64; 7]> {
        &self.entries
    }

    pub fn smoothing_mass(&self) -> f64 {
        self.smoothing_mass
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Prior over intentions for an utterance: the normalized sum of the
    /// score vectors of every dictionary n-gram occurrence in the tokenized
    /// text, or uniform when nothing matches.
    pub fn lookup(&self, utterance: &str) -> PriorDistribution {
        let tokens = tokenize(utterance);
        let mut acc = [0.0f64; 7];
        let mut matched = false;
        for n in 1..=MAX_NGRAM {
            if tokens.len() < n {
                break;
            }
            for window in tokens.windows(n) {
                let key = window.join(" ");
                if let Some(scores) = self.entries.get(&key) {
                    for (a, &s) in acc.iter_mut().zip(scores) {
                        *a += s;
                    }
                    matched = true;
                }
            }
        }
        if !matched {
            return PriorDistribution::uniform();
        }
        let total: f64 = acc.iter().sum();
        for a in acc.iter_mut() {
            *a /= total;
        }
        PriorDistribution { alpha: acc }
    }
}

fn normalize_keyword(raw: &str) -> String {
    let parts: Vec<String> = tokenize(raw);
    parts.join(" ")
}

/// Mine the dictionary from the speaker utterances of a training corpus.
/// Deterministic: counts are order-independent and ties in the retention
/// ranking break lexicographically.
pub fn build_dictionary(
    train: &Corpus,
    config: &DictConfig,
) -> Result<IntentionDictionary, DictError> {
    if train.is_empty() {
        return Err(DictError::EmptyTrainingCorpus);
    }
    if config.min_count < 1 {
        return Err(DictError::BadConfig(String::from("min_count must be >= 1")));
    }
    if !(config.smoothing_mass > 0.0) {
        return Err(DictError::BadConfig(String::from(
            "smoothing_mass must be > 0",
        )));
    }

    let mut counts: BTreeMap<String, [u64; CLASSES]> = BTreeMap::new();
    for pair in train.iter() {
        let class = pair.intention_s.index();
        let tokens = tokenize(&pair.utterance_s);
        for n in 1..=MAX_NGRAM {
            if tokens.len() < n {
                break;
            }
            for window in tokens.windows(n) {
                let key = window.join(" ");
                counts.entry(key).or_default()[class] += 1;
            }
        }
    }

    let s = config.smoothing_mass;
    let mut candidates: Vec<(String, [f64; 7], f64)> = Vec::new();
    for (keyword, class_counts) in counts {
        let total: u64 = class_counts.iter().sum();
        if (total as usize) < config.min_count {
            continue;
        }
        let denom = total as f64 + CLASSES as f64 * s;
        let mut scores = [0.0f64; 7];
        for (score, &c) in scores.iter_mut().zip(&class_counts) {
            *score = (c as f64 + s) / denom;
        }
        let concentration = scores.iter().copied().fold(0.0f64, f64::max);
        // strictly above uniform; (c+s)/(t+7s) > 1/7 reduces to 7c > t,
        // checked in integers to dodge rounding at exact ties
        let max_count = class_counts.iter().copied().max().unwrap_or(0);
        if CLASSES as u64 * max_count > total {
            candidates.push((keyword, scores, concentration));
        }
    }

    candidates.sort_by(|a, b| {
        b.2.partial_cmp(&a.2)
            .unwrap_or(core::cmp::Ordering::Equal)
            .then_with(|| a.0.cmp(&b.0))
    });
    candidates.truncate(config.max_entries);

    let entries = candidates
        .into_iter()
        .map(|(k, scores, _)| (k, scores))
        .collect();

    Ok(IntentionDictionary {
        entries,
        smoothing_mass: s,
        provenance: Some(Provenance {
            corpus_fingerprint: alloc::format!("{:016x}", fingerprint(train)),
            pair_count: train.len(),
        }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::ConversationPair;
    use crate::labels::{EmotionLabel, SatisfactionLabel};
    use alloc::vec;
    use alloc::vec::Vec;

    fn pair(id: &str, utterance_s: &str, intention_s: IntentionLabel) -> ConversationPair {
        ConversationPair {
            id: id.into(),
            utterance_s: utterance_s.into(),
            utterance_r: "ok".into(),
            intention_s,
            intention_r: IntentionLabel::Accept,
            emotion_s: EmotionLabel::Happy,
            satisfaction: SatisfactionLabel::Satisfied,
        }
    }

    fn corpus(pairs: Vec<ConversationPair>) -> Corpus {
        Corpus::new(pairs).unwrap()
    }

    #[test]
    fn request_keyword_points_at_request() {
        let c = corpus(vec![
            pair("a", "i ask for help", IntentionLabel::Request),
            pair("b", "we ask for water", IntentionLabel::Request),
            pair("c", "nice weather today", IntentionLabel::Inform),
        ]);
        let dict = build_dictionary(
            &c,
            &DictConfig {
                min_count: 2,
                ..DictConfig::default()
            },
        )
        .unwrap();
        let scores = dict.entries().get("ask for").expect("`ask for` retained");
        assert_eq!(
            crate::tensor::argmax(scores),
            IntentionLabel::Request.index()
        );
    }

    #[test]
    fn uniform_ngram_is_excluded() {
        // "hello" appears exactly once per class: concentration == 1/7.
        let pairs = IntentionLabel::ALL
            .iter()
            .enumerate()
            .map(|(i, &l)| pair(&alloc::format!("p{i}"), "hello", l))
            .collect();
        let dict = build_dictionary(
            &corpus(pairs),
            &DictConfig {
                min_count: 1,
                ..DictConfig::default()
            },
        )
        .unwrap();
        assert!(dict.entries().get("hello").is_none());
    }

    #[test]
    fn single_match_returns_entry_scores() {
        let mut entries = BTreeMap::new();
        let v = [0.4, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1];
        entries.insert("ask for".into(), v);
        let dict = IntentionDictionary::from_entries(entries, 0.1).unwrap();
        let alpha = dict.lookup("please ask for it").alpha;
        for (a, e) in alpha.iter().zip(&v) {
            assert!((a - e).abs() < 1e-12);
        }
    }

    #[test]
    fn no_match_returns_uniform() {
        let dict = IntentionDictionary::from_entries(BTreeMap::new(), 0.1).unwrap();
        let p = dict.lookup("completely unrelated words");
        assert_eq!(p, PriorDistribution::uniform());
        assert!(p.is_valid());
    }

    #[test]
    fn mirrored_keywords_give_symmetric_alpha() {
        let mut entries = BTreeMap::new();
        entries.insert(
            "ask for".into(),
            [0.58, 0.07, 0.07, 0.07, 0.07, 0.07, 0.07],
        );
        entries.insert(
            "how about".into(),
            [0.07, 0.58, 0.07, 0.07, 0.07, 0.07, 0.07],
        );
        let dict = IntentionDictionary::from_entries(entries, 0.1).unwrap();
        let alpha = dict.lookup("ask for it or how about this").alpha;
        // hand sum: (0.65, 0.65, 0.14, ...) / 2 -> request == suggest
        assert!((alpha[0] - alpha[1]).abs() < 1e-12);
        assert!((alpha[0] - 0.325).abs() < 1e-12);
        assert!((alpha[2] - 0.07).abs() < 1e-12);
    }

    #[test]
    fn invalid_entry_rejected() {
        let mut entries = BTreeMap::new();
        entries.insert("broken".into(), [0.1, 0.1, 0.1, 0.1, 0.05, 0.025, 0.025]);
        let err = IntentionDictionary::from_entries(entries, 0.1).unwrap_err();
        assert!(matches!(err, DictError::InvalidEntry { .. }));
    }

    #[test]
    fn build_is_permutation_invariant() {
        let mut pairs = vec![
            pair("a", "i ask for help", IntentionLabel::Request),
            pair("b", "how about tea", IntentionLabel::Suggest),
            pair("c", "do it now", IntentionLabel::Command),
            pair("d", "i ask for tea", IntentionLabel::Request),
        ];
        let cfg = DictConfig {
            min_count: 1,
            ..DictConfig::default()
        };
        let d1 = build_dictionary(&corpus(pairs.clone()), &cfg).unwrap();
        pairs.reverse();
        let d2 = build_dictionary(&corpus(pairs), &cfg).unwrap();
        assert_eq!(d1.entries(), d2.entries());
    }

    #[test]
    fn empty_corpus_is_an_error() {
        let err = build_dictionary(&corpus(vec![]), &DictConfig::default()).unwrap_err();
        assert_eq!(err, DictError::EmptyTrainingCorpus);
    }
}
