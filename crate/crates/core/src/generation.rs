//! Action generation for the listener: infer the listener intention vector
//! from the speaker's, build the emotional-expectation template sentence,
//! assemble the conditioned generator input, and decode a response through
//! a pluggable generator.
//!
//! A self-contained character-level recurrent generator ships here so the
//! full pipeline trains and decodes at desk scale with no external models.


use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::emotion::{IntentionVector, Role};
use crate::graph::{Graph, Var};
use crate::labels::{EmotionLabel, IntentionLabel};
use crate::nn::{Adam, GruLayer, Linear, TrainHistory, TrainHparams, TrainingError};
use crate::rng::{derive_seed, rng_from_seed};
use crate::tensor::{argmax, softmax, Tensor};

pub const DEFAULT_SEPARATOR: &str = "</s>";

const EXPECTATION_PREFIX: &str = "The emotional expectation of the listener is ";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GenerationError {
    #[error("speaker utterance is empty")]
    EmptyUtterance,
    #[error("intention vector has role {got:?}, expected {expected:?}")]
    WrongRole { got: Role, expected: Role },
    #[error("vector has dimension {got}, expected {expected}")]
    DimensionMismatch { got: usize, expected: usize },
    #[error("`{0}` is not an expectation template sentence")]
    NotATemplate(String),
    #[error("generator `{name}` does not support training")]
    TrainingUnsupported { name: String },
    #[error("generator failed: {0}")]
    PluginFailure(String),
    #[error(transparent)]
    Training(#[from] TrainingError),
}

/// The exact template sentence carrying the listener's emotional
/// expectation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpectationSentence {
    text: String,
    pub emotion: EmotionLabel,
}

impl ExpectationSentence {
    pub fn text(&self) -> &str {
        &self.text
    }
}

/// `The emotional expectation of the listener is {emotion}.`
pub fn expectation_template(emotion: EmotionLabel) -> ExpectationSentence {
    ExpectationSentence {
        text: format!("{EXPECTATION_PREFIX}{}.", emotion.as_str()),
        emotion,
    }
}

/// Inverse of `expectation_template`.
pub fn extract_expectation(text: &str) -> Result<EmotionLabel, GenerationError> {
    let bad = || GenerationError::NotATemplate(text.to_string());
    let rest = text.strip_prefix(EXPECTATION_PREFIX).ok_or_else(bad)?;
    let word = rest.strip_suffix('.').ok_or_else(bad)?;
    word.parse::<EmotionLabel>().map_err(|_| bad())
}

/// Maps the speaker intention space to the listener intention space
/// (a linear transform of the intention vector).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntentionInference {
    pub map: Linear,
}

impl IntentionInference {
    pub fn new(hidden: usize, rng: &mut impl Rng) -> Self {
        IntentionInference {
            map: Linear::new(hidden, hidden, rng),
        }
    }

    pub fn identity(hidden: usize) -> Self {
        IntentionInference {
            map: Linear::identity(hidden),
        }
    }

    pub fn infer_listener_intention(
        &self,
        h_bar_s: &IntentionVector,
    ) -> Result<IntentionVector, GenerationError> {
        if h_bar_s.role != Role::Speaker {
            return Err(GenerationError::WrongRole {
                got: h_bar_s.role,
                expected: Role::Speaker,
            });
        }
        if h_bar_s.values.len() != self.map.in_dim() {
            return Err(GenerationError::DimensionMismatch {
                got: h_bar_s.values.len(),
                expected: self.map.in_dim(),
            });
        }
        let mut out = self.map.w.matmul_nn(&Tensor::vector(h_bar_s.values.clone()));
        out.add_assign(&self.map.b);
        Ok(IntentionVector {
            values: out.data,
            role: Role::Listener,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DecodeStrategy {
    Greedy,
    Beam { width: usize },
    Sample { temperature: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeConfig {
    pub max_length: usize,
    pub strategy: DecodeStrategy,
    pub seed: u64,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        DecodeConfig {
            max_length: 60,
            strategy: DecodeStrategy::Greedy,
            seed: 0,
        }
    }
}

/// Listener-intention conditioning: the dense vector for plug-ins that
/// accept it natively, and the label used as a textual prefix otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ListenerConditioning {
    pub vector: IntentionVector,
    pub label: IntentionLabel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditioningMode {
    Full,
    ContextOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorInput {
    pub conditioning_text: String,
    pub intention: Option<ListenerConditioning>,
    pub decode: DecodeConfig,
    pub mode: ConditioningMode,
}

/// Full conditioning: `{template} {separator} {utterance_s}` plus the
/// listener intention.
pub fn assemble_input(
    template: &ExpectationSentence,
    utterance_s: &str,
    intention: Option<ListenerConditioning>,
    decode: DecodeConfig,
) -> Result<GeneratorInput, GenerationError> {
    assemble_input_with_separator(template, utterance_s, intention, decode, DEFAULT_SEPARATOR)
}

pub fn assemble_input_with_separator(
    template: &ExpectationSentence,
    utterance_s: &str,
    intention: Option<ListenerConditioning>,
    decode: DecodeConfig,
    separator: &str,
) -> Result<GeneratorInput, GenerationError> {
    if crate::corpus::tokenize(utterance_s).is_empty() {
        return Err(GenerationError::EmptyUtterance);
    }
    Ok(GeneratorInput {
        conditioning_text: format!("{} {separator} {utterance_s}", template.text()),
        intention,
        decode,
        mode: ConditioningMode::Full,
    })
}

/// Context-only ablation: the raw speaker utterance with no template and
/// no intention conditioning.
pub fn assemble_context_only(
    utterance_s: &str,
    decode: DecodeConfig,
) -> Result<GeneratorInput, GenerationError> {
    if crate::corpus::tokenize(utterance_s).is_empty() {
        return Err(GenerationError::EmptyUtterance);
    }
    Ok(GeneratorInput {
        conditioning_text: utterance_s.to_string(),
        intention: None,
        decode,
        mode: ConditioningMode::ContextOnly,
    })
}

/// Recover (template part, utterance part) from an assembled conditioning
/// text; assembly is injective given the separator.
pub fn split_conditioning<'a>(text: &'a str, separator: &str) -> Option<(&'a str, &'a str)> {
    let needle = format!(" {separator} ");
    let at = text.find(&needle)?;
    Some((&text[..at], &text[at + needle.len()..]))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinishReason {
    EndToken,
    MaxLength,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedResponse {
    pub tokens: Vec<String>,
    pub text: String,
    pub finish_reason: FinishReason,
}

/// One teacher-forcing example: assembled input plus the gold response.
#[derive(Debug, Clone)]
pub struct GenerationExample {
    pub input: GeneratorInput,
    pub target: String,
}

/// Pluggable response generator.
pub trait Generator {
    fn name(&self) -> &str;
    /// Whether the plug-in consumes the listener intention vector natively.
    fn supports_vector_conditioning(&self) -> bool {
        false
    }
    fn supports_training(&self) -> bool {
        false
    }
    fn generate(&self, input: &GeneratorInput) -> Result<GeneratedResponse, GenerationError>;
    fn train(
        &mut self,
        _train: &[GenerationExample],
        _val: &[GenerationExample],
        _hp: &TrainHparams,
    ) -> Result<TrainHistory, GenerationError> {
        Err(GenerationError::TrainingUnsupported {
            name: self.name().to_string(),
        })
    }
}

/// Run a plug-in on an assembled input. Plug-ins without native vector
/// conditioning get the listener intention as the textual label prefix
/// `intention: {label}.` prepended to the conditioning text.
pub fn generate(
    plugin: &dyn Generator,
    input: &GeneratorInput,
) -> Result<GeneratedResponse, GenerationError> {
    match &input.intention {
        Some(cond) if !plugin.supports_vector_conditioning() => {
            let mut textual = input.clone();
            textual.conditioning_text =
                format!("intention: {}. {}", cond.label.as_str(), input.conditioning_text);
            textual.intention = None;
            plugin.generate(&textual)
        }
        _ => plugin.generate(input),
    }
}

/// Fine-tune a trainable plug-in with teacher forcing; zero epochs leaves
/// the plug-in untouched.
pub fn train_generator_adapter(
    plugin: &mut dyn Generator,
    train: &[GenerationExample],
    val: &[GenerationExample],
    hp: &TrainHparams,
) -> Result<TrainHistory, GenerationError> {
    if !plugin.supports_training() {
        return Err(GenerationError::TrainingUnsupported {
            name: plugin.name().to_string(),
        });
    }
    if hp.epochs == 0 {
        return Ok(TrainHistory::default());
    }
    plugin.train(train, val, hp)
}

/// Test/debug stub: echoes the conditioning text back, truncated to the
/// decode length budget.
pub struct EchoGenerator;

impl Generator for EchoGenerator {
    fn name(&self) -> &str {
        "echo"
    }

    fn generate(&self, input: &GeneratorInput) -> Result<GeneratedResponse, GenerationError> {
        let all: Vec<String> = input
            .conditioning_text
            .split_whitespace()
            .map(String::from)
            .collect();
        let truncated = all.len() > input.decode.max_length;
        let tokens: Vec<String> = all.into_iter().take(input.decode.max_length).collect();
        Ok(GeneratedResponse {
            text: tokens.join(" "),
            tokens,
            finish_reason: if truncated {
                FinishReason::MaxLength
            } else {
                FinishReason::EndToken
            },
        })
    }
}

const CHAR_UNK: usize = 0;
const CHAR_BOS: usize = 1;
const CHAR_EOS: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CharVocab {
    chars: Vec<char>,
    index: BTreeMap<char, usize>,
}

impl CharVocab {
    /// Specials occupy indices 0..3; corpus characters follow, sorted.
    pub fn build<'a>(texts: impl Iterator<Item = &'a str>) -> Self {
        let mut set: alloc::collections::BTreeSet<char> = alloc::collections::BTreeSet::new();
        for t in texts {
            set.extend(t.chars());
        }
        let mut chars = alloc::vec!['\u{0}', '\u{1}', '\u{2}'];
        chars.extend(set);
        let index = chars
            .iter()
            .enumerate()
            .skip(3)
            .map(|(i, &c)| (c, i))
            .collect();
        CharVocab { chars, index }
    }

    pub fn len(&self) -> usize {
        self.chars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chars.is_empty()
    }

    fn encode(&self, text: &str) -> Vec<usize> {
        text.chars()
            .map(|c| self.index.get(&c).copied().unwrap_or(CHAR_UNK))
            .collect()
    }

    fn decode_char(&self, idx: usize) -> Option<char> {
        if idx <= CHAR_EOS {
            None
        } else {
            self.chars.get(idx).copied()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TinyGeneratorConfig {
    pub embed_dim: usize,
    pub hidden: usize,
    /// Dimension of the conditioning vector, when vector conditioning is
    /// wired in.
    pub cond_dim: Option<usize>,
}

impl Default for TinyGeneratorConfig {
    fn default() -> Self {
        TinyGeneratorConfig {
            embed_dim: 16,
            hidden: 48,
            cond_dim: None,
        }
    }
}

/// Character-level recurrent decoder: consumes the conditioning text, then
/// decodes the response char by char. The optional conditioning vector is
/// projected into the initial hidden state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TinyCharGenerator {
    pub config: TinyGeneratorConfig,
    pub vocab: CharVocab,
    pub embedding: Tensor,
    pub cell: GruLayer,
    pub out: Linear,
    pub cond: Option<Linear>,
}

impl TinyCharGenerator {
    pub fn new<'a>(
        texts: impl Iterator<Item = &'a str>,
        config: TinyGeneratorConfig,
        rng: &mut impl Rng,
    ) -> Self {
        let vocab = CharVocab::build(texts);
        TinyCharGenerator {
            embedding: crate::nn::uniform(vocab.len(), config.embed_dim, 0.1, rng),
            cell: GruLayer::new(config.hidden, config.embed_dim, rng),
            out: Linear::new(vocab.len(), config.hidden, rng),
            cond: config.cond_dim.map(|d| Linear::new(config.hidden, d, rng)),
            vocab,
            config,
        }
    }

    fn initial_state(&self, input: &GeneratorInput) -> Vec<f64> {
        match (&self.cond, &input.intention) {
            (Some(proj), Some(cond)) => {
                let mut h = proj.w.matmul_nn(&Tensor::vector(cond.vector.values.clone()));
                h.add_assign(&proj.b);
                h.map(libm::tanh).data
            }
            _ => alloc::vec![0.0; self.config.hidden],
        }
    }

    fn consume(&self, state: &mut Vec<f64>, char_ids: &[usize]) {
        for &id in char_ids {
            let x = self.embedding.row(id).to_vec();
            *state = self.cell.step_infer(&x, state);
        }
    }

    fn logits(&self, state: &[f64]) -> Vec<f64> {
        let mut l = self.out.w.matmul_nn(&Tensor::vector(state.to_vec()));
        l.add_assign(&self.out.b);
        l.data
    }

    fn decode_greedy_or_sample(
        &self,
        mut state: Vec<f64>,
        decode: &DecodeConfig,
    ) -> (Vec<usize>, FinishReason) {
        let mut rng = rng_from_seed(decode.seed);
        let mut out = Vec::new();
        self.consume(&mut state, &[CHAR_BOS]);
        for _ in 0..decode.max_length {
            let logits = self.logits(&state);
            let next = match &decode.strategy {
                DecodeStrategy::Greedy => argmax(&logits),
                DecodeStrategy::Sample { temperature } => {
                    let t = temperature.max(1e-6);
                    let scaled: Vec<f64> = logits.iter().map(|&l| l / t).collect();
                    let probs = softmax(&scaled);
                    let mut u: f64 = rng.gen_range(0.0..1.0);
                    let mut pick = probs.len() - 1;
                    for (i, &p) in probs.iter().enumerate() {
                        if u < p {
                            pick = i;
                            break;
                        }
                        u -= p;
                    }
                    pick
                }
                DecodeStrategy::Beam { .. } => unreachable!("beam handled separately"),
            };
            if next == CHAR_EOS {
                return (out, FinishReason::EndToken);
            }
            out.push(next);
            self.consume(&mut state, &[next]);
        }
        (out, FinishReason::MaxLength)
    }

    fn decode_beam(
        &self,
        state: Vec<f64>,
        width: usize,
        max_length: usize,
    ) -> (Vec<usize>, FinishReason) {
        struct Hyp {
            state: Vec<f64>,
            chars: Vec<usize>,
            logprob: f64,
            done: bool,
        }
        let width = width.max(1);
        let mut start = state;
        self.consume(&mut start, &[CHAR_BOS]);
        let mut beams = alloc::vec![Hyp {
            state: start,
            chars: Vec::new(),
            logprob: 0.0,
            done: false,
        }];
        for _ in 0..max_length {
            if beams.iter().all(|b| b.done) {
                break;
            }
            let mut next: Vec<Hyp> = Vec::new();
            for hyp in &beams {
                if hyp.done {
                    next.push(Hyp {
                        state: hyp.state.clone(),
                        chars: hyp.chars.clone(),
                        logprob: hyp.logprob,
                        done: true,
                    });
                    continue;
                }
                let probs = softmax(&self.logits(&hyp.state));
                let mut ranked: Vec<(usize, f64)> =
                    probs.iter().copied().enumerate().collect();
                ranked.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(core::cmp::Ordering::Equal));
                for &(c, p) in ranked.iter().take(width) {
                    let logprob = hyp.logprob + libm::log(p.max(1e-300));
                    if c == CHAR_EOS {
                        next.push(Hyp {
                            state: hyp.state.clone(),
                            chars: hyp.chars.clone(),
                            logprob,
                            done: true,
                        });
                    } else {
                        let mut s = hyp.state.clone();
                        self.consume(&mut s, &[c]);
                        let mut chars = hyp.chars.clone();
                        chars.push(c);
                        next.push(Hyp {
                            state: s,
                            chars,
                            logprob,
                            done: false,
                        });
                    }
                }
            }
            next.sort_by(|a, b| {
                b.logprob
                    .partial_cmp(&a.logprob)
                    .unwrap_or(core::cmp::Ordering::Equal)
            });
            next.truncate(width);
            beams = next;
        }
        let best = beams
            .into_iter()
            .max_by(|a, b| {
                a.logprob
                    .partial_cmp(&b.logprob)
                    .unwrap_or(core::cmp::Ordering::Equal)
            })
            .expect("at least one beam");
        let reason = if best.done {
            FinishReason::EndToken
        } else {
            FinishReason::MaxLength
        };
        (best.chars, reason)
    }

    /// Teacher-forced loss subgraph for one example; returns the summed
    /// char loss, the number of predicted positions, and the embedding
    /// rows used.
    fn forward_loss(
        &self,
        g: &mut Graph,
        vars: &TinyVars,
        ex: &GenerationExample,
    ) -> (Var, usize, Vec<(usize, Var)>) {
        let prompt = self.vocab.encode(&ex.input.conditioning_text);
        let target = self.vocab.encode(&ex.target);

        let mut h = match (&vars.cond, &ex.input.intention) {
            (Some(proj), Some(cond)) => {
                let v = g.input(Tensor::vector(cond.vector.values.clone()));
                let projected = proj.forward(g, v);
                g.tanh(projected)
            }
            _ => g.zeros_input(self.config.hidden, 1),
        };

        let mut rows: Vec<(usize, Var)> = Vec::new();
        let feed = |g: &mut Graph, h: Var, id: usize, rows: &mut Vec<(usize, Var)>| {
            let x = g.input(Tensor::vector(self.embedding.row(id).to_vec()));
            rows.push((id, x));
            vars.cell.step(g, x, h)
        };

        for &id in prompt.iter().chain(core::iter::once(&CHAR_BOS)) {
            h = feed(g, h, id, &mut rows);
        }

        let mut losses: Vec<Var> = Vec::new();
        for (pos, &t) in target.iter().chain(core::iter::once(&CHAR_EOS)).enumerate() {
            let logits = vars.out.forward(g, h);
            losses.push(g.ce_loss(logits, t));
            let _ = pos;
            if t != CHAR_EOS {
                h = feed(g, h, t, &mut rows);
            }
        }
        let mut total = losses[0];
        for &l in &losses[1..] {
            total = g.add(total, l);
        }
        (total, losses.len(), rows)
    }

    /// Mean per-character validation loss.
    pub fn validation_loss(&self, examples: &[GenerationExample]) -> f64 {
        let mut total = 0.0;
        let mut count = 0usize;
        for ex in examples {
            let mut g = Graph::new();
            let vars = self.bind(&mut g);
            let (loss, positions, _) = self.forward_loss(&mut g, &vars, ex);
            total += g.value(loss).data[0];
            count += positions;
        }
        if count == 0 {
            0.0
        } else {
            total / count as f64
        }
    }

    fn bind(&self, g: &mut Graph) -> TinyVars {
        TinyVars {
            cell: self.cell.bind(g),
            out: self.out.bind(g),
            cond: self.cond.as_ref().map(|c| c.bind(g)),
        }
    }
}

struct TinyVars {
    cell: crate::nn::GruVars,
    out: crate::nn::LinearVars,
    cond: Option<crate::nn::LinearVars>,
}

impl Generator for TinyCharGenerator {
    fn name(&self) -> &str {
        "tiny-char"
    }

    fn supports_vector_conditioning(&self) -> bool {
        self.cond.is_some()
    }

    fn supports_training(&self) -> bool {
        true
    }

    fn generate(&self, input: &GeneratorInput) -> Result<GeneratedResponse, GenerationError> {
        let mut state = self.initial_state(input);
        self.consume(&mut state, &self.vocab.encode(&input.conditioning_text));
        let (chars, finish_reason) = match input.decode.strategy {
            DecodeStrategy::Beam { width } => {
                self.decode_beam(state, width, input.decode.max_length)
            }
            _ => self.decode_greedy_or_sample(state, &input.decode),
        };
        let text: String = chars
            .iter()
            .filter_map(|&c| self.vocab.decode_char(c))
            .collect();
        Ok(GeneratedResponse {
            tokens: chars
                .iter()
                .filter_map(|&c| self.vocab.decode_char(c).map(|c| c.to_string()))
                .collect(),
            text,
            finish_reason,
        })
    }

    fn train(
        &mut self,
        train: &[GenerationExample],
        val: &[GenerationExample],
        hp: &TrainHparams,
    ) -> Result<TrainHistory, GenerationError> {
        if train.is_empty() {
            return Err(GenerationError::Training(TrainingError::EmptyCorpus));
        }
        let mut history = TrainHistory::default();
        let mut adam = Adam::new(hp.learning_rate);
        let mut best: Option<(f64, usize, TinyCharGenerator)> = None;
        let mut order: Vec<usize> = (0..train.len()).collect();
        let batch_size = hp.batch_size.max(1);

        for epoch in 0..hp.epochs {
            let mut rng = rng_from_seed(derive_seed(hp.seed, epoch as u64));
            rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut rng);

            let mut loss_sum = 0.0;
            let mut char_count = 0usize;
            for batch in order.chunks(batch_size) {
                let mut g = Graph::new();
                let vars = self.bind(&mut g);
                let mut batch_loss: Option<Var> = None;
                let mut batch_chars = 0usize;
                let mut emb_rows: Vec<(usize, Var)> = Vec::new();
                for &i in batch {
                    let (loss, positions, rows) = self.forward_loss(&mut g, &vars, &train[i]);
                    loss_sum += g.value(loss).data[0];
                    char_count += positions;
                    batch_chars += positions;
                    emb_rows.extend(rows);
                    batch_loss = Some(match batch_loss {
                        Some(acc) => g.add(acc, loss),
                        None => loss,
                    });
                }
                let total = batch_loss.expect("non-empty batch");
                let mean = g.scale(total, 1.0 / batch_chars.max(1) as f64);
                if !g.value(mean).data[0].is_finite() {
                    return Err(GenerationError::Training(TrainingError::Diverged {
                        step: adam.steps_taken() + 1,
                        what: String::from("loss"),
                    }));
                }
                g.backward(mean);
                self.apply_step(&g, &vars, &emb_rows, &mut adam)?;
            }

            let val_metric = self.validation_loss(val);
            history.epochs.push(crate::nn::EpochStats {
                epoch,
                train_loss: loss_sum / char_count.max(1) as f64,
                val_metric,
            });
            // lower validation loss is better here
            let improved = best.as_ref().map_or(true, |(b, _, _)| val_metric < *b);
            if improved {
                best = Some((val_metric, epoch, self.clone()));
            }
        }

        if let Some((_, epoch, params)) = best {
            *self = params;
            history.best_epoch = Some(epoch);
        }
        Ok(history)
    }
}

impl TinyCharGenerator {
    fn apply_step(
        &mut self,
        g: &Graph,
        vars: &TinyVars,
        emb_rows: &[(usize, Var)],
        adam: &mut Adam,
    ) -> Result<(), GenerationError> {
        let mut emb_grad = self.embedding.zeros_like();
        for &(row, var) in emb_rows {
            let gr = g.grad(var);
            for (c, &v) in gr.data.iter().enumerate() {
                emb_grad.data[row * emb_grad.cols + c] += v;
            }
        }
        let mut grads: Vec<Tensor> = Vec::new();
        for v in vars.cell.vars().into_iter().chain(vars.out.vars()) {
            grads.push(g.grad(v).clone());
        }
        if let Some(c) = &vars.cond {
            for v in c.vars() {
                grads.push(g.grad(v).clone());
            }
        }
        let mut pairs: Vec<(&mut Tensor, &Tensor)> = Vec::new();
        let mut it = grads.iter();
        pairs.push((&mut self.embedding, &emb_grad));
        for p in self.cell.params_mut().into_iter().chain(self.out.params_mut()) {
            pairs.push((p, it.next().expect("gradient per parameter")));
        }
        if let Some(c) = self.cond.as_mut() {
            for p in c.params_mut() {
                pairs.push((p, it.next().expect("gradient per parameter")));
            }
        }
        adam.step(&mut pairs).map_err(GenerationError::Training)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn expectation_template_exact_strings() {
        assert_eq!(
            expectation_template(EmotionLabel::Happy).text(),
            "The emotional expectation of the listener is happy."
        );
        assert_eq!(
            expectation_template(EmotionLabel::Disgust).text(),
            "The emotional expectation of the listener is disgust."
        );
        for e in EmotionLabel::ALL {
            assert_eq!(extract_expectation(expectation_template(e).text()), Ok(e));
        }
        assert!(extract_expectation("not a template").is_err());
    }

    #[test]
    fn identity_inference_preserves_vector() {
        let inference = IntentionInference::identity(3);
        let h = IntentionVector {
            values: vec![0.5, 0.1, 0.9],
            role: Role::Speaker,
        };
        let out = inference.infer_listener_intention(&h).unwrap();
        assert_eq!(out.values, h.values);
        assert_eq!(out.role, Role::Listener);
    }

    #[test]
    fn inference_hand_example_and_role_check() {
        let mut inference = IntentionInference::identity(2);
        inference.map.w = Tensor::from_vec(2, 2, vec![1.0, 2.0, -1.0, 0.5]);
        inference.map.b = Tensor::from_vec(2, 1, vec![0.1, -0.1]);
        let h = IntentionVector {
            values: vec![0.4, 0.2],
            role: Role::Speaker,
        };
        let out = inference.infer_listener_intention(&h).unwrap();
        assert!((out.values[0] - (0.4 + 0.4 + 0.1)).abs() < 1e-12);
        assert!((out.values[1] - (-0.4 + 0.1 - 0.1)).abs() < 1e-12);

        let wrong = IntentionVector {
            values: vec![0.0, 0.0],
            role: Role::Listener,
        };
        assert!(matches!(
            inference.infer_listener_intention(&wrong),
            Err(GenerationError::WrongRole { .. })
        ));
    }

    #[test]
    fn zero_inference_gives_zero_vector() {
        let mut inference = IntentionInference::identity(2);
        inference.map.w = Tensor::zeros(2, 2);
        inference.map.b = Tensor::zeros(2, 1);
        let h = IntentionVector {
            values: vec![0.7, -0.7],
            role: Role::Speaker,
        };
        assert_eq!(inference.infer_listener_intention(&h).unwrap().values, vec![0.0, 0.0]);
    }

    #[test]
    fn assembled_input_matches_contract() {
        let input = assemble_input(
            &expectation_template(EmotionLabel::Happy),
            "Can I have a burger?",
            None,
            DecodeConfig::default(),
        )
        .unwrap();
        assert_eq!(
            input.conditioning_text,
            "The emotional expectation of the listener is happy. </s> Can I have a burger?"
        );
        let (tpl, utt) = split_conditioning(&input.conditioning_text, DEFAULT_SEPARATOR).unwrap();
        assert_eq!(tpl, "The emotional expectation of the listener is happy.");
        assert_eq!(utt, "Can I have a burger?");
    }

    #[test]
    fn empty_utterance_rejected() {
        assert!(matches!(
            assemble_input(
                &expectation_template(EmotionLabel::Happy),
                "  ",
                None,
                DecodeConfig::default(),
            ),
            Err(GenerationError::EmptyUtterance)
        ));
    }

    #[test]
    fn context_only_mode_drops_conditioning() {
        let input = assemble_context_only("hello there", DecodeConfig::default()).unwrap();
        assert_eq!(input.conditioning_text, "hello there");
        assert_eq!(input.mode, ConditioningMode::ContextOnly);
        assert!(input.intention.is_none());
    }

    #[test]
    fn echo_plugin_round_trips_the_template() {
        let input = assemble_input(
            &expectation_template(EmotionLabel::Content),
            "pass the salt",
            Some(ListenerConditioning {
                vector: IntentionVector {
                    values: vec![0.0; 4],
                    role: Role::Listener,
                },
                label: IntentionLabel::Accept,
            }),
            DecodeConfig::default(),
        )
        .unwrap();
        let out = generate(&EchoGenerator, &input).unwrap();
        // echo has no vector conditioning, so the label prefix appears
        assert!(out.text.starts_with("intention: accept."));
        assert!(out
            .text
            .contains("The emotional expectation of the listener is content."));
    }

    #[test]
    fn echo_respects_max_length() {
        let input = GeneratorInput {
            conditioning_text: "one two three four five six".into(),
            intention: None,
            decode: DecodeConfig {
                max_length: 3,
                ..DecodeConfig::default()
            },
            mode: ConditioningMode::ContextOnly,
        };
        let out = EchoGenerator.generate(&input).unwrap();
        assert_eq!(out.tokens.len(), 3);
        assert_eq!(out.finish_reason, FinishReason::MaxLength);
    }

    fn tiny_gen(cond: bool, seed: u64) -> TinyCharGenerator {
        let texts = ["hello there", "sure thing", "no problem"];
        TinyCharGenerator::new(
            texts.iter().copied(),
            TinyGeneratorConfig {
                embed_dim: 6,
                hidden: 10,
                cond_dim: cond.then_some(4),
            },
            &mut rng_from_seed(seed),
        )
    }

    #[test]
    fn greedy_decode_is_deterministic_and_bounded() {
        let gen = tiny_gen(false, 4);
        let input = assemble_context_only(
            "hello",
            DecodeConfig {
                max_length: 5,
                ..DecodeConfig::default()
            },
        )
        .unwrap();
        let a = gen.generate(&input).unwrap();
        let b = gen.generate(&input).unwrap();
        assert_eq!(a, b);
        assert!(a.tokens.len() <= 5);
        if a.tokens.len() == 5 {
            assert_eq!(a.finish_reason, FinishReason::MaxLength);
        }
    }

    #[test]
    fn beam_width_one_matches_greedy() {
        let gen = tiny_gen(false, 5);
        let mut input = assemble_context_only(
            "sure",
            DecodeConfig {
                max_length: 8,
                ..DecodeConfig::default()
            },
        )
        .unwrap();
        let greedy = gen.generate(&input).unwrap();
        input.decode.strategy = DecodeStrategy::Beam { width: 1 };
        let beam = gen.generate(&input).unwrap();
        assert_eq!(greedy.text, beam.text);
    }

    #[test]
    fn training_reduces_validation_loss_on_copy_task() {
        let mut gen = tiny_gen(true, 6);
        let make = |text: &str| GenerationExample {
            input: GeneratorInput {
                conditioning_text: text.into(),
                intention: Some(ListenerConditioning {
                    vector: IntentionVector {
                        values: vec![0.1, 0.2, 0.3, 0.4],
                        role: Role::Listener,
                    },
                    label: IntentionLabel::Accept,
                }),
                decode: DecodeConfig::default(),
                mode: ConditioningMode::Full,
            },
            target: "sure thing".into(),
        };
        let data: Vec<GenerationExample> =
            ["hello there", "no problem", "sure thing"].iter().map(|t| make(t)).collect();
        let before = gen.validation_loss(&data);
        let hp = TrainHparams {
            learning_rate: 0.01,
            batch_size: 3,
            epochs: 8,
            seed: 0,
        };
        let history = train_generator_adapter(&mut gen, &data, &data, &hp).unwrap();
        let after = gen.validation_loss(&data);
        assert!(after < before, "val loss {before} -> {after}");
        assert_eq!(history.epochs.len(), 8);
    }

    #[test]
    fn zero_epochs_leaves_plugin_unchanged() {
        let mut gen = tiny_gen(false, 7);
        let snapshot = gen.clone();
        let hp = TrainHparams {
            epochs: 0,
            ..TrainHparams::default()
        };
        let history = train_generator_adapter(&mut gen, &[], &[], &hp).unwrap();
        assert!(history.epochs.is_empty());
        assert_eq!(gen, snapshot);
    }

    #[test]
    fn untrained_plugin_reports_capability_error() {
        let mut echo = EchoGenerator;
        let hp = TrainHparams::default();
        assert!(matches!(
            train_generator_adapter(&mut echo, &[], &[], &hp),
            Err(GenerationError::TrainingUnsupported { .. })
        ));
    }
}
