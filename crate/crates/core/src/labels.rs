//! Closed label sets for the corpus schema.

use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A label string that is not a member of its closed label set.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown {kind} label `{value}` (expected one of: {expected})")]
pub struct UnknownLabel {
    pub kind: &'static str,
    pub value: alloc::string::String,
    pub expected: &'static str,
}

/// The seven interaction intentions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IntentionLabel {
    Request,
    Suggest,
    Command,
    Accept,
    Reject,
    Question,
    Inform,
}

impl IntentionLabel {
    pub const COUNT: usize = 7;
    pub const ALL: [IntentionLabel; 7] = [
        IntentionLabel::Request,
        IntentionLabel::Suggest,
        IntentionLabel::Command,
        IntentionLabel::Accept,
        IntentionLabel::Reject,
        IntentionLabel::Question,
        IntentionLabel::Inform,
    ];

    /// Dense index in enum order; ties in argmax operations break toward
    /// the lowest index.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            IntentionLabel::Request => "request",
            IntentionLabel::Suggest => "suggest",
            IntentionLabel::Command => "command",
            IntentionLabel::Accept => "accept",
            IntentionLabel::Reject => "reject",
            IntentionLabel::Question => "question",
            IntentionLabel::Inform => "inform",
        }
    }
}

impl FromStr for IntentionLabel {
    type Err = UnknownLabel;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .iter()
            .copied()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| UnknownLabel {
                kind: "intention",
                value: s.into(),
                expected: "request, suggest, command, accept, reject, question, inform",
            })
    }
}

impl fmt::Display for IntentionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Emotion polarity, a total function of the emotion label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Positive,
    Neutral,
    Negative,
}

/// The six emotional reactions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmotionLabel {
    Happy,
    Content,
    Neutral,
    Sadness,
    Anger,
    Disgust,
}

impl EmotionLabel {
    pub const COUNT: usize = 6;
    pub const ALL: [EmotionLabel; 6] = [
        EmotionLabel::Happy,
        EmotionLabel::Content,
        EmotionLabel::Neutral,
        EmotionLabel::Sadness,
        EmotionLabel::Anger,
        EmotionLabel::Disgust,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    pub fn polarity(self) -> Polarity {
        match self {
            EmotionLabel::Happy | EmotionLabel::Content => Polarity::Positive,
            EmotionLabel::Neutral => Polarity::Neutral,
            EmotionLabel::Sadness | EmotionLabel::Anger | EmotionLabel::Disgust => {
                Polarity::Negative
            }
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EmotionLabel::Happy => "happy",
            EmotionLabel::Content => "content",
            EmotionLabel::Neutral => "neutral",
            EmotionLabel::Sadness => "sadness",
            EmotionLabel::Anger => "anger",
            EmotionLabel::Disgust => "disgust",
        }
    }
}

impl FromStr for EmotionLabel {
    type Err = UnknownLabel;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .iter()
            .copied()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| UnknownLabel {
                kind: "emotion",
                value: s.into(),
                expected: "happy, content, neutral, sadness, anger, disgust",
            })
    }
}

impl fmt::Display for EmotionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Whether the listener's action satisfied the speaker's intention.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SatisfactionLabel {
    Satisfied,
    Unsatisfied,
}

impl SatisfactionLabel {
    pub const COUNT: usize = 2;
    pub const ALL: [SatisfactionLabel; 2] =
        [SatisfactionLabel::Satisfied, SatisfactionLabel::Unsatisfied];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SatisfactionLabel::Satisfied => "satisfied",
            SatisfactionLabel::Unsatisfied => "unsatisfied",
        }
    }
}

impl FromStr for SatisfactionLabel {
    type Err = UnknownLabel;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .iter()
            .copied()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| UnknownLabel {
                kind: "satisfaction",
                value: s.into(),
                expected: "satisfied, unsatisfied",
            })
    }
}

impl fmt::Display for SatisfactionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;

    #[test]
    fn intention_set_is_closed() {
        assert_eq!(IntentionLabel::ALL.len(), 7);
        for l in IntentionLabel::ALL {
            assert_eq!(l.as_str().parse::<IntentionLabel>().unwrap(), l);
            assert_eq!(IntentionLabel::from_index(l.index()), Some(l));
        }
        assert!("greet".parse::<IntentionLabel>().is_err());
    }

    #[test]
    fn polarity_is_total() {
        use Polarity::*;
        let expected = [Positive, Positive, Neutral, Negative, Negative, Negative];
        for (l, p) in EmotionLabel::ALL.iter().zip(expected) {
            assert_eq!(l.polarity(), p);
        }
    }

    #[test]
    fn satisfaction_is_binary() {
        assert_eq!(SatisfactionLabel::ALL.len(), 2);
        assert!("maybe".parse::<SatisfactionLabel>().is_err());
    }

    #[test]
    fn unknown_label_names_the_value() {
        let err = "greet".parse::<IntentionLabel>().unwrap_err();
        assert!(err.to_string().contains("greet"));
        assert!(err.to_string().contains("intention"));
    }
}
