//! Utterance encoders: vocabulary, embeddings, a trainable two-layer
//! recurrent (GRU) encoder with optional self-attention pooling, and a
//! plug-in interface for external contextual encoders.
//!
//! The recurrent scan runs right-to-left, so the emitted state at the first
//! token position has consumed the whole utterance; that first state is the
//! utterance representation. With attention enabled the representation is
//! instead the attention-pooled mean over all states.

use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{tokenize, Corpus};
use crate::graph::{Graph, Var};
use crate::nn::{glorot, uniform, GruLayer, GruVars};
use crate::tensor::Tensor;

pub const PAD: usize = 0;
pub const UNK: usize = 1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EncodeError {
    #[error("cannot encode an empty token sequence")]
    EmptySequence,
    #[error("token index {index} out of range for vocabulary of {vocab_size}")]
    TokenOutOfRange { index: usize, vocab_size: usize },
    #[error("embedding dimension {got} does not match configured {expected}")]
    EmbeddingDimMismatch { got: usize, expected: usize },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RegistryError {
    #[error("no contextual encoder registered under `{0}`")]
    Unknown(String),
    #[error("encoder `{name}` declares dimension {declared} but {expected} is required")]
    DimensionMismatch {
        name: String,
        declared: usize,
        expected: usize,
    },
}

/// Token -> dense index map with reserved padding and unknown entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: BTreeMap<String, usize>,
}

impl Vocabulary {
    /// Every token with frequency >= `min_freq`, ordered by frequency
    /// descending then lexicographically, after the two specials.
    pub fn build(corpus: &Corpus, min_freq: usize) -> Self {
        let mut freq: BTreeMap<String, usize> = BTreeMap::new();
        for pair in corpus.iter() {
            for tok in tokenize(&pair.utterance_s).into_iter().chain(tokenize(&pair.utterance_r)) {
                *freq.entry(tok).or_default() += 1;
            }
        }
        let mut ranked: Vec<(String, usize)> =
            freq.into_iter().filter(|(_, c)| *c >= min_freq).collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));

        let mut tokens = Vec::with_capacity(ranked.len() + 2);
        tokens.push(String::from("<pad>"));
        tokens.push(String::from("<unk>"));
        tokens.extend(ranked.into_iter().map(|(t, _)| t));
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Vocabulary { tokens, index }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, index: usize) -> Option<&str> {
        self.tokens.get(index).map(String::as_str)
    }

    /// Tokenize and map to indices, unknown tokens to `UNK`.
    pub fn encode_ids(&self, text: &str) -> Vec<usize> {
        tokenize(text)
            .iter()
            .map(|t| self.index_of(t).unwrap_or(UNK))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub embed_dim: usize,
    pub hidden: usize,
    pub attention: bool,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            embed_dim: 300,
            hidden: 128,
            attention: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionParams {
    pub wq: Tensor,
    pub wk: Tensor,
    pub wv: Tensor,
}

impl AttentionParams {
    fn new(hidden: usize, rng: &mut impl Rng) -> Self {
        AttentionParams {
            wq: glorot(hidden, hidden, rng),
            wk: glorot(hidden, hidden, rng),
            wv: glorot(hidden, hidden, rng),
        }
    }
}

/// All trainable tensors of the recurrent encoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderParams {
    pub config: EncoderConfig,
    pub vocab: Vocabulary,
    pub embedding: Tensor,
    pub layer1: GruLayer,
    pub layer2: GruLayer,
    pub attention: Option<AttentionParams>,
}

/// Hidden-state sequence plus the utterance representation vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodedUtterance {
    pub hidden_states: Vec<Vec<f64>>,
    pub representation: Vec<f64>,
}

/// Graph handles produced when binding the encoder for training.
pub struct EncoderVars {
    pub layer1: GruVars,
    pub layer2: GruVars,
    pub attention: Option<AttentionVars>,
}

#[derive(Debug, Clone, Copy)]
pub struct AttentionVars {
    pub wq: Var,
    pub wk: Var,
    pub wv: Var,
}

/// Result of an on-graph encode: states in token-position order, the
/// representation node, and the embedding rows that were bound as inputs
/// (token id, var) so the trainer can scatter their gradients back.
pub struct EncodedOnGraph {
    pub states: Vec<Var>,
    pub representation: Var,
    pub token_vars: Vec<(usize, Var)>,
}

impl EncoderParams {
    pub fn new(vocab: Vocabulary, config: EncoderConfig, rng: &mut impl Rng) -> Self {
        let embedding = uniform(vocab.len(), config.embed_dim, 0.1, rng);
        let layer1 = GruLayer::new(config.hidden, config.embed_dim, rng);
        let layer2 = GruLayer::new(config.hidden, config.hidden, rng);
        let attention = config.attention.then(|| AttentionParams::new(config.hidden, rng));
        EncoderParams {
            config,
            vocab,
            embedding,
            layer1,
            layer2,
            attention,
        }
    }

    pub fn hidden_dim(&self) -> usize {
        self.config.hidden
    }

    /// Overwrite embedding rows for tokens present in the vocabulary.
    /// Returns how many rows were set.
    pub fn load_pretrained_embeddings<I>(&mut self, entries: I) -> Result<usize, EncodeError>
    where
        I: IntoIterator<Item = (String, Vec<f64>)>,
    {
        let mut loaded = 0;
        for (token, vector) in entries {
            if vector.len() != self.config.embed_dim {
                return Err(EncodeError::EmbeddingDimMismatch {
                    got: vector.len(),
                    expected: self.config.embed_dim,
                });
            }
            if let Some(idx) = self.vocab.index_of(&token) {
                for (c, v) in vector.into_iter().enumerate() {
                    self.embedding.set(idx, c, v);
                }
                loaded += 1;
            }
        }
        Ok(loaded)
    }

    pub fn bind(&self, g: &mut Graph) -> EncoderVars {
        EncoderVars {
            layer1: self.layer1.bind(g),
            layer2: self.layer2.bind(g),
            attention: self.attention.as_ref().map(|a| AttentionVars {
                wq: g.input(a.wq.clone()),
                wk: g.input(a.wk.clone()),
                wv: g.input(a.wv.clone()),
            }),
        }
    }

    /// All trainable tensors in update order: embedding first, then the
    /// recurrent layers, then attention projections.
    pub fn all_params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut params: Vec<&mut Tensor> = alloc::vec![&mut self.embedding];
        params.extend(self.layer1.params_mut());
        params.extend(self.layer2.params_mut());
        if let Some(a) = self.attention.as_mut() {
            params.push(&mut a.wq);
            params.push(&mut a.wk);
            params.push(&mut a.wv);
        }
        params
    }

    pub fn dense_vars(&self, vars: &EncoderVars) -> Vec<Var> {
        let mut v = vars.layer1.vars();
        v.extend(vars.layer2.vars());
        if let Some(a) = &vars.attention {
            v.push(a.wq);
            v.push(a.wk);
            v.push(a.wv);
        }
        v
    }

    /// Build the encoder subgraph for one token sequence.
    pub fn encode_on_graph(
        &self,
        g: &mut Graph,
        vars: &EncoderVars,
        tokens: &[usize],
    ) -> Result<EncodedOnGraph, EncodeError> {
        if tokens.is_empty() {
            return Err(EncodeError::EmptySequence);
        }
        let t_len = tokens.len();
        let mut token_vars = Vec::with_capacity(t_len);
        for &tok in tokens {
            if tok >= self.vocab.len() {
                return Err(EncodeError::TokenOutOfRange {
                    index: tok,
                    vocab_size: self.vocab.len(),
                });
            }
            let row = Tensor::vector(self.embedding.row(tok).to_vec());
            token_vars.push((tok, g.input(row)));
        }

        // Right-to-left scan: the state at position 0 is computed last and
        // has consumed every token.
        let rev_inputs: Vec<Var> = token_vars.iter().rev().map(|&(_, v)| v).collect();
        let states1_rev = vars.layer1.scan(g, &rev_inputs, self.config.hidden);
        let mut h1: Vec<Var> = states1_rev;
        h1.reverse(); // position order

        let rev_h1: Vec<Var> = h1.iter().rev().copied().collect();
        let states2_rev = vars.layer2.scan(g, &rev_h1, self.config.hidden);
        let mut states: Vec<Var> = states2_rev;
        states.reverse();

        let representation = match &vars.attention {
            Some(attn) => attend_on_graph(g, attn, &states, states.len(), self.config.hidden),
            None => states[0],
        };

        Ok(EncodedOnGraph {
            states,
            representation,
            token_vars,
        })
    }

    /// Inference-mode encoding: pure function of the frozen parameters.
    pub fn encode(&self, tokens: &[usize]) -> Result<EncodedUtterance, EncodeError> {
        let mut g = Graph::new();
        let vars = self.bind(&mut g);
        let out = self.encode_on_graph(&mut g, &vars, tokens)?;
        Ok(EncodedUtterance {
            hidden_states: out
                .states
                .iter()
                .map(|&s| g.value(s).data.clone())
                .collect(),
            representation: g.value(out.representation).data.clone(),
        })
    }

    /// Convenience: tokenize with the internal vocabulary and encode.
    pub fn encode_text(&self, text: &str) -> Result<EncodedUtterance, EncodeError> {
        self.encode(&self.vocab.encode_ids(text))
    }

    /// Scaled dot-product self-attention over the first `valid_len` states
    /// followed by mean pooling. Positions at and beyond `valid_len` are
    /// masked out entirely and cannot affect the result.
    pub fn attend(
        &self,
        hidden_states: &[Vec<f64>],
        valid_len: usize,
    ) -> Result<Vec<f64>, EncodeError> {
        let attn = self.attention.as_ref().expect("attention not configured");
        if hidden_states.is_empty() || valid_len == 0 {
            return Err(EncodeError::EmptySequence);
        }
        let mut g = Graph::new();
        let vars = AttentionVars {
            wq: g.input(attn.wq.clone()),
            wk: g.input(attn.wk.clone()),
            wv: g.input(attn.wv.clone()),
        };
        let states: Vec<Var> = hidden_states
            .iter()
            .map(|h| g.input(Tensor::vector(h.clone())))
            .collect();
        let pooled = attend_on_graph(&mut g, &vars, &states, valid_len, self.config.hidden);
        Ok(g.value(pooled).data.clone())
    }

    /// Attention weight matrix (rows are per-query distributions) for the
    /// first `valid_len` states. Inspection/diagnostics only.
    pub fn attention_weights(
        &self,
        hidden_states: &[Vec<f64>],
        valid_len: usize,
    ) -> Result<Vec<Vec<f64>>, EncodeError> {
        let attn = self.attention.as_ref().expect("attention not configured");
        if hidden_states.is_empty() || valid_len == 0 {
            return Err(EncodeError::EmptySequence);
        }
        let mut g = Graph::new();
        let wq = g.input(attn.wq.clone());
        let wk = g.input(attn.wk.clone());
        let states: Vec<Var> = hidden_states[..valid_len]
            .iter()
            .map(|h| g.input(Tensor::vector(h.clone())))
            .collect();
        let h = g.stack_rows(&states);
        let q = g.matmul_nt(h, wq);
        let k = g.matmul_nt(h, wk);
        let logits = g.matmul_nt(q, k);
        let scaled = g.scale(logits, 1.0 / libm::sqrt(self.config.hidden as f64));
        let a = g.softmax_rows(scaled);
        let t = g.value(a);
        Ok((0..t.rows).map(|r| t.row(r).to_vec()).collect())
    }
}

/// Attention subgraph shared by training and inference paths.
pub fn attend_on_graph(
    g: &mut Graph,
    attn: &AttentionVars,
    states: &[Var],
    valid_len: usize,
    hidden: usize,
) -> Var {
    let h = g.stack_rows(&states[..valid_len]);
    let q = g.matmul_nt(h, attn.wq);
    let k = g.matmul_nt(h, attn.wk);
    let v = g.matmul_nt(h, attn.wv);
    let logits = g.matmul_nt(q, k);
    let scaled = g.scale(logits, 1.0 / libm::sqrt(hidden as f64));
    let a = g.softmax_rows(scaled);
    let z = g.matmul(a, v);
    g.mean_rows(z)
}

/// Adapter interface for external contextual encoders (pretrained language
/// models and the like). Implementations own their tokenizers and declare
/// their native representation dimension up front.
pub trait ContextualEncoder {
    fn name(&self) -> &str;
    fn dim(&self) -> usize;
    fn encode(&self, utterance: &str) -> Result<EncodedUtterance, EncodeError>;
}

/// Named registry of encoder plug-ins.
#[derive(Default)]
pub struct EncoderRegistry {
    plugins: BTreeMap<String, Box<dyn ContextualEncoder>>,
}

impl EncoderRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, plugin: Box<dyn ContextualEncoder>) {
        self.plugins.insert(String::from(plugin.name()), plugin);
    }

    pub fn get(&self, name: &str) -> Result<&dyn ContextualEncoder, RegistryError> {
        self.plugins
            .get(name)
            .map(|b| b.as_ref())
            .ok_or_else(|| RegistryError::Unknown(String::from(name)))
    }

    pub fn names(&self) -> Vec<&str> {
        self.plugins.keys().map(String::as_str).collect()
    }

    /// Encode through a named plug-in.
    pub fn encode_external(
        &self,
        name: &str,
        utterance: &str,
    ) -> Result<EncodedUtterance, RegistryError> {
        let plugin = self.get(name)?;
        plugin.encode(utterance).map_err(|_| RegistryError::Unknown(String::from(name)))
    }

    /// Fail-fast wiring check: the plug-in's declared dimension must match
    /// what the downstream model was built for.
    pub fn check_dim(&self, name: &str, expected: usize) -> Result<(), RegistryError> {
        let plugin = self.get(name)?;
        if plugin.dim() != expected {
            return Err(RegistryError::DimensionMismatch {
                name: String::from(name),
                declared: plugin.dim(),
                expected,
            });
        }
        Ok(())
    }
}
