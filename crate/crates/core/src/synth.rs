//! Deterministic synthetic corpus generation for desk-scale testing.
//!
//! Generated pairs always satisfy the satisfaction/emotion polarity rule
//! (hard, unlike real data where the validator merely warns), and at the
//! configured injection rate the speaker utterance contains a trigger
//! phrase of its intention class while the listener response contains a
//! phrase of the speaker's emotion class. Everything else is filler drawn
//! from a synthetic vocabulary, so corpora are separable exactly to the
//! degree the injection rate dictates.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, ConversationPair};
use crate::labels::{EmotionLabel, IntentionLabel, Polarity, SatisfactionLabel};
use crate::rng::rng_from_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub pair_count: usize,
    /// Number of distinct filler tokens.
    pub vocab_size: usize,
    /// Probability that an utterance carries its class trigger phrase.
    pub injection_rate: f64,
    /// Probability that a pair is labeled satisfied.
    pub satisfied_rate: f64,
    /// Probability that a filler token is drawn from the label's own token
    /// pool instead of the full vocabulary. At 0 the filler carries no
    /// class signal and trigger phrases are the only evidence; above 0
    /// every utterance is statistically separable.
    pub filler_class_skew: f64,
    /// Filler tokens per utterance, inclusive bounds.
    pub min_filler: usize,
    pub max_filler: usize,
    /// Trigger phrases per speaker intention; n-grams of length 1 to 3.
    pub intention_phrases: BTreeMap<IntentionLabel, Vec<String>>,
    /// Response phrases per speaker emotion; the emotion determines the
    /// satisfaction polarity, so these also carry the satisfaction signal.
    pub emotion_phrases: BTreeMap<EmotionLabel, Vec<String>>,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        let mut intention_phrases = BTreeMap::new();
        let phrases: [(IntentionLabel, &[&str]); 7] = [
            (IntentionLabel::Request, &["ask for", "would like", "could you please"]),
            (IntentionLabel::Suggest, &["how about", "proposal", "why not try"]),
            (IntentionLabel::Command, &["do it now", "you must", "right away"]),
            (IntentionLabel::Accept, &["yes of course", "sounds good", "i agree"]),
            (IntentionLabel::Reject, &["no way", "i refuse", "absolutely not"]),
            (IntentionLabel::Question, &["what time", "how much", "where is"]),
            (IntentionLabel::Inform, &["just letting", "heads up", "for the record"]),
        ];
        for (label, list) in phrases {
            intention_phrases.insert(label, list.iter().map(|s| String::from(*s)).collect());
        }

        let mut emotion_phrases = BTreeMap::new();
        let responses: [(EmotionLabel, &[&str]); 6] = [
            (EmotionLabel::Happy, &["wonderful here you go", "gladly done"]),
            (EmotionLabel::Content, &["sure that works", "fine by me"]),
            (EmotionLabel::Neutral, &["we will see", "maybe later"]),
            (EmotionLabel::Sadness, &["sorry i cannot", "sadly impossible"]),
            (EmotionLabel::Anger, &["stop asking me", "leave me alone"]),
            (EmotionLabel::Disgust, &["that is gross", "how revolting"]),
        ];
        for (label, list) in responses {
            emotion_phrases.insert(label, list.iter().map(|s| String::from(*s)).collect());
        }

        SyntheticSpec {
            pair_count: 2000,
            vocab_size: 120,
            injection_rate: 0.8,
            satisfied_rate: 0.5,
            filler_class_skew: 0.5,
            min_filler: 3,
            max_filler: 7,
            intention_phrases,
            emotion_phrases,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthError {
    #[error("injection rate {0} outside [0, 1]")]
    InjectionRateOutOfRange(f64),
    #[error("satisfied rate {0} outside [0, 1]")]
    SatisfiedRateOutOfRange(f64),
    #[error("filler class skew {0} outside [0, 1]")]
    SkewOutOfRange(f64),
    #[error("filler bounds ({0}, {1}) invalid")]
    BadFillerBounds(usize, usize),
    #[error("no phrases configured for {0}")]
    MissingPhrases(String),
}

impl SyntheticSpec {
    fn check(&self) -> Result<(), SynthError> {
        if !(0.0..=1.0).contains(&self.injection_rate) {
            return Err(SynthError::InjectionRateOutOfRange(self.injection_rate));
        }
        if !(0.0..=1.0).contains(&self.satisfied_rate) {
            return Err(SynthError::SatisfiedRateOutOfRange(self.satisfied_rate));
        }
        if !(0.0..=1.0).contains(&self.filler_class_skew) {
            return Err(SynthError::SkewOutOfRange(self.filler_class_skew));
        }
        if self.min_filler > self.max_filler || self.max_filler == 0 {
            return Err(SynthError::BadFillerBounds(self.min_filler, self.max_filler));
        }
        for label in IntentionLabel::ALL {
            if self.intention_phrases.get(&label).map_or(true, Vec::is_empty) {
                return Err(SynthError::MissingPhrases(String::from(label.as_str())));
            }
        }
        for label in EmotionLabel::ALL {
            if self.emotion_phrases.get(&label).map_or(true, Vec::is_empty) {
                return Err(SynthError::MissingPhrases(String::from(label.as_str())));
            }
        }
        Ok(())
    }
}

/// Filler tokens, optionally skewed toward the pool of tokens whose index
/// is congruent to `class` modulo `classes`.
fn filler_utterance(
    rng: &mut impl Rng,
    spec: &SyntheticSpec,
    class: usize,
    classes: usize,
) -> Vec<String> {
    let len = rng.gen_range(spec.min_filler..=spec.max_filler);
    (0..len)
        .map(|_| {
            let tok = if rng.gen_bool(spec.filler_class_skew) {
                let pool = spec.vocab_size.div_ceil(classes).max(1);
                let pick = rng.gen_range(0..pool);
                (pick * classes + class).min(spec.vocab_size.saturating_sub(1))
            } else {
                rng.gen_range(0..spec.vocab_size)
            };
            format!("t{tok:03}")
        })
        .collect()
}

fn inject_phrase(rng: &mut impl Rng, tokens: &mut Vec<String>, phrase: &str) {
    let pos = rng.gen_range(0..=tokens.len());
    let mut phrase_tokens: Vec<String> = phrase.split_whitespace().map(String::from).collect();
    phrase_tokens.reverse();
    for t in phrase_tokens {
        tokens.insert(pos, t);
    }
}

/// Generate a corpus of `spec.pair_count` valid pairs, byte-identical for
/// identical spec and seed.
pub fn generate_synthetic_corpus(spec: &SyntheticSpec, seed: u64) -> Result<Corpus, SynthError> {
    spec.check()?;
    let mut rng = rng_from_seed(seed);
    let mut pairs = Vec::with_capacity(spec.pair_count);

    for i in 0..spec.pair_count {
        let intention_s = IntentionLabel::ALL[rng.gen_range(0..IntentionLabel::COUNT)];
        let satisfied = rng.gen_bool(spec.satisfied_rate);
        let emotion_s = if satisfied {
            // positive polarity
            let pool = [EmotionLabel::Happy, EmotionLabel::Content];
            pool[rng.gen_range(0..pool.len())]
        } else {
            let pool = [
                EmotionLabel::Neutral,
                EmotionLabel::Sadness,
                EmotionLabel::Anger,
                EmotionLabel::Disgust,
            ];
            pool[rng.gen_range(0..pool.len())]
        };
        debug_assert!(match satisfied {
            true => emotion_s.polarity() == Polarity::Positive,
            false => emotion_s.polarity() != Polarity::Positive,
        });
        let (satisfaction, intention_r) = if satisfied {
            (SatisfactionLabel::Satisfied, IntentionLabel::Accept)
        } else {
            (SatisfactionLabel::Unsatisfied, IntentionLabel::Reject)
        };

        let mut toks_s = filler_utterance(
            &mut rng,
            spec,
            intention_s.index(),
            IntentionLabel::COUNT,
        );
        if rng.gen_bool(spec.injection_rate) {
            let phrases = &spec.intention_phrases[&intention_s];
            let phrase = &phrases[rng.gen_range(0..phrases.len())];
            inject_phrase(&mut rng, &mut toks_s, phrase);
        }

        let mut toks_r = filler_utterance(&mut rng, spec, emotion_s.index(), EmotionLabel::COUNT);
        if rng.gen_bool(spec.injection_rate) {
            let phrases = &spec.emotion_phrases[&emotion_s];
            let phrase = &phrases[rng.gen_range(0..phrases.len())];
            inject_phrase(&mut rng, &mut toks_r, phrase);
        }

        pairs.push(ConversationPair {
            id: format!("synth-{i:06}"),
            utterance_s: toks_s.join(" "),
            utterance_r: toks_r.join(" "),
            intention_s,
            intention_r,
            emotion_s,
            satisfaction,
        });
    }

    Ok(Corpus::new(pairs).expect("generated ids are unique"))
}
