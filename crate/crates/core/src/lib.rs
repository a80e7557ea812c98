//! Core library for intention-emotion-action interaction modeling on
//! single-turn dialogues.
//!
//! The crate is `no_std` (alloc required) and contains no IO: corpora,
//! dictionaries and models are plain values, and everything here is a pure
//! function of its inputs plus an explicit seed. File formats, checkpoints
//! and the command-line driver live in the companion `iea-cli` crate.
//!
//! The pipeline has three tasks over a speaker/listener exchange:
//! abducing the speaker's intention from their utterance, predicting the
//! speaker's emotional reaction (jointly with whether their intention was
//! satisfied), and generating the listener's response under intention and
//! emotional-expectation conditioning.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod abduction;
pub mod corpus;
pub mod emotion;
pub mod encoder;
pub mod eval;
pub mod generation;
pub mod graph;
pub mod intdic;
pub mod labels;
pub mod nn;
pub mod rng;
pub mod synth;
pub mod tensor;

pub use corpus::{Corpus, ConversationPair, InteractionChain, StatsReport, Violation};
pub use intdic::{IntentionDictionary, PriorDistribution};
pub use labels::{EmotionLabel, IntentionLabel, Polarity, SatisfactionLabel};
