//! Corpus data model: single-turn conversation pairs with intention,
//! emotion and satisfaction labels, plus validation, splitting and
//! statistics.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::labels::{EmotionLabel, IntentionLabel, Polarity, SatisfactionLabel};
use crate::rng::rng_from_seed;

/// One single-turn exchange. `utterance_s` is the speaker's action,
/// `utterance_r` the listener's response; `emotion_s` is the speaker's
/// emotional reaction to that response, and `satisfaction` records whether
/// the response satisfied the speaker's intention.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConversationPair {
    pub id: String,
    pub utterance_s: String,
    pub utterance_r: String,
    pub intention_s: IntentionLabel,
    pub intention_r: IntentionLabel,
    pub emotion_s: EmotionLabel,
    pub satisfaction: SatisfactionLabel,
}

/// The interaction-chain view of a pair. Node order is fixed:
/// the speaker's motives trigger their action, the listener's action
/// responds, and the speaker's emotional reaction closes the cycle.
/// The speaker's emotional expectation is positive by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionChain<'a> {
    pub intention_s: IntentionLabel,
    pub emotional_expectation_s: Polarity,
    pub action_s: &'a str,
    pub action_r: &'a str,
    pub emotional_reaction_s: EmotionLabel,
}

impl<'a> InteractionChain<'a> {
    pub fn of(pair: &'a ConversationPair) -> Self {
        InteractionChain {
            intention_s: pair.intention_s,
            emotional_expectation_s: Polarity::Positive,
            action_s: &pair.utterance_s,
            action_r: &pair.utterance_r,
            emotional_reaction_s: pair.emotion_s,
        }
    }

    /// Chain nodes in their fixed order, for reporting.
    pub fn nodes(&self) -> [ChainNode<'a>; 4] {
        [
            ChainNode::Motives {
                intention: self.intention_s,
                expectation: self.emotional_expectation_s,
            },
            ChainNode::SpeakerAction(self.action_s),
            ChainNode::ListenerAction(self.action_r),
            ChainNode::EmotionalReaction(self.emotional_reaction_s),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ChainNode<'a> {
    Motives {
        intention: IntentionLabel,
        expectation: Polarity,
    },
    SpeakerAction(&'a str),
    ListenerAction(&'a str),
    EmotionalReaction(EmotionLabel),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitTag {
    Train,
    Val,
    Test,
}

/// An ordered collection of pairs with unique ids.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pairs: Vec<ConversationPair>,
    pub split_tag: Option<SplitTag>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CorpusError {
    #[error("duplicate pair id `{0}`")]
    DuplicateId(String),
}

impl Corpus {
    pub fn new(pairs: Vec<ConversationPair>) -> Result<Self, CorpusError> {
        let mut seen = alloc::collections::BTreeSet::new();
        for p in &pairs {
            if !seen.insert(p.id.as_str()) {
                return Err(CorpusError::DuplicateId(p.id.clone()));
            }
        }
        Ok(Corpus {
            pairs,
            split_tag: None,
        })
    }

    pub fn pairs(&self) -> &[ConversationPair] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn iter(&self) -> core::slice::Iter<'_, ConversationPair> {
        self.pairs.iter()
    }
}

/// Lowercased tokenization with punctuation split into its own tokens.
/// Alphanumeric runs (plus apostrophes) form words; every other
/// non-whitespace character is emitted as a single-character token.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut word = String::new();
    for ch in text.chars() {
        if ch.is_alphanumeric() || ch == '\'' {
            for lc in ch.to_lowercase() {
                word.push(lc);
            }
        } else {
            if !word.is_empty() {
                tokens.push(core::mem::take(&mut word));
            }
            if !ch.is_whitespace() {
                let mut t = String::new();
                t.push(ch);
                tokens.push(t);
            }
        }
    }
    if !word.is_empty() {
        tokens.push(word);
    }
    tokens
}

/// A violated pair invariant. The consistency rule is an annotation
/// guideline rather than a schema constraint, so violations are reported,
/// not rejected.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum Violation {
    EmptySpeakerUtterance,
    EmptyListenerUtterance,
    /// satisfied pairs should carry positive emotion; unsatisfied pairs
    /// neutral or negative emotion.
    ConsistencyRule {
        satisfaction: SatisfactionLabel,
        emotion: EmotionLabel,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptySpeakerUtterance => {
                write!(f, "speaker utterance empty after tokenization")
            }
            Violation::EmptyListenerUtterance => {
                write!(f, "listener utterance empty after tokenization")
            }
            Violation::ConsistencyRule {
                satisfaction,
                emotion,
            } => write!(
                f,
                "satisfaction `{satisfaction}` inconsistent with emotion `{emotion}` ({:?} polarity)",
                emotion.polarity()
            ),
        }
    }
}

/// Check a pair against the schema invariants. Returns an empty list iff
/// all invariants hold.
pub fn validate_pair(pair: &ConversationPair) -> Vec<Violation> {
    let mut violations = Vec::new();
    if tokenize(&pair.utterance_s).is_empty() {
        violations.push(Violation::EmptySpeakerUtterance);
    }
    if tokenize(&pair.utterance_r).is_empty() {
        violations.push(Violation::EmptyListenerUtterance);
    }
    let consistent = match pair.satisfaction {
        SatisfactionLabel::Satisfied => pair.emotion_s.polarity() == Polarity::Positive,
        SatisfactionLabel::Unsatisfied => pair.emotion_s.polarity() != Polarity::Positive,
    };
    if !consistent {
        violations.push(Violation::ConsistencyRule {
            satisfaction: pair.satisfaction,
            emotion: pair.emotion_s,
        });
    }
    violations
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SplitError {
    #[error("split ratios {0:?} do not sum to 1")]
    RatiosDoNotSumToOne((f64, f64, f64)),
    #[error("cannot split an empty corpus")]
    EmptyCorpus,
}

/// Deterministic shuffled train/val/test split.
///
/// Sizes: train gets `floor(n * r_train)`; the remainder is divided between
/// val and test in proportion, with val receiving the extra element when
/// the remainder is odd under equal ratios.
pub fn split_corpus(
    corpus: &Corpus,
    ratios: (f64, f64, f64),
    seed: u64,
) -> Result<(Corpus, Corpus, Corpus), SplitError> {
    let (rt, rv, rs) = ratios;
    if libm::fabs(rt + rv + rs - 1.0) > 1e-9 {
        return Err(SplitError::RatiosDoNotSumToOne(ratios));
    }
    if corpus.is_empty() {
        return Err(SplitError::EmptyCorpus);
    }
    let n = corpus.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_from_seed(seed));

    let n_train = libm::floor(n as f64 * rt) as usize;
    let rem = n - n_train;
    let n_val = if rem == 0 || rv + rs <= 0.0 {
        0
    } else {
        // ceil with a guard against representation noise on exact integers
        // (e.g. 6 * 0.1 / 0.2 evaluating to 3.0000000000000004)
        let share = rem as f64 * (rv / (rv + rs));
        (libm::ceil(share - 1e-9) as usize).min(rem)
    };

    let take = |slice: &[usize], tag: SplitTag| -> Corpus {
        Corpus {
            pairs: slice.iter().map(|&i| corpus.pairs[i].clone()).collect(),
            split_tag: Some(tag),
        }
    };
    let train = take(&order[..n_train], SplitTag::Train);
    let val = take(&order[n_train..n_train + n_val], SplitTag::Val);
    let test = take(&order[n_train + n_val..], SplitTag::Test);
    Ok((train, val, test))
}

/// FNV-1a fingerprint over all pair fields, for provenance records.
pub fn fingerprint(corpus: &Corpus) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    let mut eat = |bytes: &[u8]| {
        for &b in bytes {
            hash ^= b as u64;
            hash = hash.wrapping_mul(0x100000001b3);
        }
        hash ^= 0x1f;
        hash = hash.wrapping_mul(0x100000001b3);
    };
    for p in corpus.iter() {
        eat(p.id.as_bytes());
        eat(p.utterance_s.as_bytes());
        eat(p.utterance_r.as_bytes());
        eat(p.intention_s.as_str().as_bytes());
        eat(p.intention_r.as_str().as_bytes());
        eat(p.emotion_s.as_str().as_bytes());
        eat(p.satisfaction.as_str().as_bytes());
    }
    hash
}

/// Per-label counts and proportions for one category.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CategoryStats {
    pub counts: BTreeMap<String, u64>,
    pub proportions: BTreeMap<String, f64>,
}

impl CategoryStats {
    fn from_counts(counts: BTreeMap<String, u64>) -> Self {
        let total: u64 = counts.values().sum();
        let proportions = counts
            .iter()
            .map(|(k, &v)| {
                let p = if total == 0 {
                    0.0
                } else {
                    v as f64 / total as f64
                };
                (k.clone(), p)
            })
            .collect();
        CategoryStats {
            counts,
            proportions,
        }
    }
}

/// Dataset statistics: label distributions per category plus utterance
/// length histograms (token counts).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub total_pairs: usize,
    pub intention_s: CategoryStats,
    pub intention_r: CategoryStats,
    pub emotion_s: CategoryStats,
    pub satisfaction: CategoryStats,
    pub speaker_len_hist: BTreeMap<usize, u64>,
    pub listener_len_hist: BTreeMap<usize, u64>,
}

pub fn corpus_stats(corpus: &Corpus) -> StatsReport {
    let mut int_s: BTreeMap<String, u64> = BTreeMap::new();
    let mut int_r: BTreeMap<String, u64> = BTreeMap::new();
    let mut emo: BTreeMap<String, u64> = BTreeMap::new();
    let mut sat: BTreeMap<String, u64> = BTreeMap::new();
    let mut len_s: BTreeMap<usize, u64> = BTreeMap::new();
    let mut len_r: BTreeMap<usize, u64> = BTreeMap::new();

    for pair in corpus.iter() {
        *int_s.entry(pair.intention_s.as_str().into()).or_default() += 1;
        *int_r.entry(pair.intention_r.as_str().into()).or_default() += 1;
        *emo.entry(pair.emotion_s.as_str().into()).or_default() += 1;
        *sat.entry(pair.satisfaction.as_str().into()).or_default() += 1;
        *len_s.entry(tokenize(&pair.utterance_s).len()).or_default() += 1;
        *len_r.entry(tokenize(&pair.utterance_r).len()).or_default() += 1;
    }

    StatsReport {
        total_pairs: corpus.len(),
        intention_s: CategoryStats::from_counts(int_s),
        intention_r: CategoryStats::from_counts(int_r),
        emotion_s: CategoryStats::from_counts(emo),
        satisfaction: CategoryStats::from_counts(sat),
        speaker_len_hist: len_s,
        listener_len_hist: len_r,
    }
}

impl StatsReport {
    /// Aligned plain-text rendering.
    pub fn render_text(&self) -> String {
        use core::fmt::Write;
        let mut out = String::new();
        let _ = writeln!(out, "pairs: {}", self.total_pairs);
        let categories = [
            ("speaker intention", &self.intention_s),
            ("listener intention", &self.intention_r),
            ("speaker emotion", &self.emotion_s),
            ("satisfaction", &self.satisfaction),
        ];
        for (name, stats) in categories {
            let _ = writeln!(out, "\n{name}:");
            let width = stats.counts.keys().map(|k| k.len()).max().unwrap_or(0);
            for (label, count) in &stats.counts {
                let prop = stats.proportions[label];
                let _ = writeln!(out, "  {label:<width$}  {count:>6}  {prop:>8.4}");
            }
        }
        let hists = [
            ("speaker utterance length", &self.speaker_len_hist),
            ("listener utterance length", &self.listener_len_hist),
        ];
        for (name, hist) in hists {
            let _ = writeln!(out, "\n{name} (tokens -> pairs):");
            for (len, count) in hist {
                let _ = writeln!(out, "  {len:>4}  {count:>6}");
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use alloc::vec;

    pub(crate) fn pair(
        id: &str,
        us: &str,
        ur: &str,
        is: IntentionLabel,
        ir: IntentionLabel,
        e: EmotionLabel,
        sat: SatisfactionLabel,
    ) -> ConversationPair {
        ConversationPair {
            id: id.into(),
            utterance_s: us.into(),
            utterance_r: ur.into(),
            intention_s: is,
            intention_r: ir,
            emotion_s: e,
            satisfaction: sat,
        }
    }

    fn small_corpus(n: usize) -> Corpus {
        let pairs = (0..n)
            .map(|i| {
                pair(
                    &alloc::format!("p{i}"),
                    "could you pass the salt ?",
                    "sure here you go .",
                    IntentionLabel::Request,
                    IntentionLabel::Accept,
                    EmotionLabel::Happy,
                    SatisfactionLabel::Satisfied,
                )
            })
            .collect();
        Corpus::new(pairs).unwrap()
    }

    #[test]
    fn tokenize_lowercases_and_splits_punctuation() {
        assert_eq!(
            tokenize("Can I have a burger?"),
            vec!["can", "i", "have", "a", "burger", "?"]
        );
        assert_eq!(tokenize("Don't!"), vec!["don't", "!"]);
        assert_eq!(tokenize("   "), Vec::<String>::new());
    }

    #[test]
    fn validate_accepts_consistent_pairs() {
        let p = pair(
            "a",
            "hi",
            "hello",
            IntentionLabel::Inform,
            IntentionLabel::Inform,
            EmotionLabel::Happy,
            SatisfactionLabel::Satisfied,
        );
        assert!(validate_pair(&p).is_empty());
    }

    #[test]
    fn validate_flags_consistency_violation() {
        let p = pair(
            "a",
            "hi",
            "hello",
            IntentionLabel::Inform,
            IntentionLabel::Inform,
            EmotionLabel::Sadness,
            SatisfactionLabel::Satisfied,
        );
        let v = validate_pair(&p);
        assert_eq!(v.len(), 1);
        assert!(matches!(v[0], Violation::ConsistencyRule { .. }));
    }

    #[test]
    fn unsatisfied_neutral_is_consistent() {
        let p = pair(
            "a",
            "hi",
            "hello",
            IntentionLabel::Inform,
            IntentionLabel::Inform,
            EmotionLabel::Neutral,
            SatisfactionLabel::Unsatisfied,
        );
        assert!(validate_pair(&p).is_empty());
    }

    #[test]
    fn empty_utterance_is_flagged() {
        let p = pair(
            "a",
            " . ",
            "",
            IntentionLabel::Inform,
            IntentionLabel::Inform,
            EmotionLabel::Neutral,
            SatisfactionLabel::Unsatisfied,
        );
        // " . " tokenizes to ["."], non-empty; "" is empty.
        assert_eq!(validate_pair(&p), vec![Violation::EmptyListenerUtterance]);
    }

    #[test]
    fn duplicate_ids_rejected() {
        let p = pair(
            "same",
            "a",
            "b",
            IntentionLabel::Inform,
            IntentionLabel::Inform,
            EmotionLabel::Neutral,
            SatisfactionLabel::Unsatisfied,
        );
        let err = Corpus::new(vec![p.clone(), p]).unwrap_err();
        assert_eq!(err, CorpusError::DuplicateId("same".to_string()));
    }

    #[test]
    fn split_sizes_follow_rounding_rule() {
        // floor(2106 * 0.8) = 1684; the even remainder splits 211/211.
        let c = small_corpus(2106);
        let (train, val, test) = split_corpus(&c, (0.8, 0.1, 0.1), 1).unwrap();
        assert_eq!((train.len(), val.len(), test.len()), (1684, 211, 211));

        let c = small_corpus(10);
        let (train, val, test) = split_corpus(&c, (0.8, 0.1, 0.1), 1).unwrap();
        assert_eq!((train.len(), val.len(), test.len()), (8, 1, 1));

        // Odd remainder: val receives the extra element.
        let c = small_corpus(11);
        let (train, val, test) = split_corpus(&c, (0.8, 0.1, 0.1), 1).unwrap();
        assert_eq!((train.len(), val.len(), test.len()), (8, 2, 1));
    }

    #[test]
    fn split_is_deterministic_and_partitions() {
        let c = small_corpus(53);
        let (t1, v1, s1) = split_corpus(&c, (0.8, 0.1, 0.1), 9).unwrap();
        let (t2, v2, s2) = split_corpus(&c, (0.8, 0.1, 0.1), 9).unwrap();
        assert_eq!(t1, t2);
        assert_eq!(v1, v2);
        assert_eq!(s1, s2);

        let mut ids: Vec<&str> = t1
            .iter()
            .chain(v1.iter())
            .chain(s1.iter())
            .map(|p| p.id.as_str())
            .collect();
        ids.sort_unstable();
        ids.dedup();
        assert_eq!(ids.len(), c.len());
    }

    #[test]
    fn bad_ratios_rejected() {
        let c = small_corpus(5);
        assert!(matches!(
            split_corpus(&c, (0.5, 0.2, 0.2), 1),
            Err(SplitError::RatiosDoNotSumToOne(_))
        ));
    }

    #[test]
    fn stats_count_all_categories() {
        let c = small_corpus(3);
        let stats = corpus_stats(&c);
        assert_eq!(stats.total_pairs, 3);
        assert_eq!(stats.intention_s.counts["request"], 3);
        assert!((stats.intention_s.proportions["request"] - 1.0).abs() < 1e-12);
        assert_eq!(stats.speaker_len_hist[&6], 3);
    }

    #[test]
    fn stats_on_empty_corpus_are_zero() {
        let stats = corpus_stats(&Corpus::new(vec![]).unwrap());
        assert_eq!(stats.total_pairs, 0);
        assert!(stats.intention_s.counts.is_empty());
    }

    #[test]
    fn chain_has_fixed_node_order_and_positive_expectation() {
        let p = pair(
            "a",
            "pass the salt",
            "here",
            IntentionLabel::Request,
            IntentionLabel::Accept,
            EmotionLabel::Happy,
            SatisfactionLabel::Satisfied,
        );
        let chain = InteractionChain::of(&p);
        assert_eq!(chain.emotional_expectation_s, Polarity::Positive);
        let nodes = chain.nodes();
        assert!(matches!(nodes[0], ChainNode::Motives { .. }));
        assert!(matches!(nodes[1], ChainNode::SpeakerAction(_)));
        assert!(matches!(nodes[2], ChainNode::ListenerAction(_)));
        assert!(matches!(nodes[3], ChainNode::EmotionalReaction(_)));
    }
}
