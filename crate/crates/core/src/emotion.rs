//! Emotion prediction: build the speaker intention vector from their
//! encoding and the dictionary prior, fuse it with the listener encoding,
//! and classify emotion and satisfaction jointly through a double-head
//! classifier. Includes the template-based explanation of the predicted
//! emotion.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Corpus;
use crate::encoder::{EncoderParams, EncoderVars};
use crate::eval;
use crate::graph::{Graph, Var};
use crate::intdic::{IntentionDictionary, PriorDistribution};
use crate::labels::{EmotionLabel, IntentionLabel, Polarity, SatisfactionLabel};
use crate::nn::{Adam, Linear, LinearVars, TrainHistory, TrainHparams, TrainingError};
use crate::rng::{derive_seed, rng_from_seed};
use crate::tensor::{argmax, softmax, Tensor};

const PRIOR_DIM: usize = IntentionLabel::COUNT;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Speaker,
    Listener,
}

/// Dense intention representation for one side of the exchange.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntentionVector {
    pub values: Vec<f64>,
    pub role: Role,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusedRepresentation {
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WiringError {
    #[error("vector has dimension {got}, expected {expected}")]
    DimensionMismatch { got: usize, expected: usize },
    #[error("intention vector has role {got:?}, expected {expected:?}")]
    WrongRole { got: Role, expected: Role },
}

/// Gated fusion over `m = [h_r; hbar_s; h_r*hbar_s; h_r-hbar_s]`:
/// `f = g . tanh(Wc m + bc) + (1 - g) . h_r` with `g = sigmoid(Wg m + bg)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GatedFusion {
    pub candidate: Linear,
    pub gate: Linear,
}

/// Fusion used by the model; the linear variant is the disabled-fusion
/// ablation (plain projection of the concatenation).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FusionKind {
    Gated(GatedFusion),
    Linear(Linear),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmotionModel {
    pub encoder: EncoderParams,
    /// Intention projection applied to `[h_s; alpha]`, shaped (h, h+7); no
    /// bias, ReLU output.
    pub we: Tensor,
    pub fusion: FusionKind,
    pub emotion_head: Linear,
    pub satisfaction_head: Linear,
    pub lambda_emotion: f64,
    pub lambda_satisfaction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmotionPrediction {
    pub emotion: EmotionLabel,
    pub satisfaction: SatisfactionLabel,
    pub emotion_distribution: [f64; 6],
    pub satisfaction_distribution: [f64; 2],
}

impl EmotionModel {
    pub fn new(encoder: EncoderParams, gated_fusion: bool, rng: &mut impl Rng) -> Self {
        let h = encoder.hidden_dim();
        let fusion = if gated_fusion {
            FusionKind::Gated(GatedFusion {
                candidate: Linear::new(h, 4 * h, rng),
                gate: Linear::new(h, 4 * h, rng),
            })
        } else {
            FusionKind::Linear(Linear::new(h, 2 * h, rng))
        };
        EmotionModel {
            we: crate::nn::glorot(h, h + PRIOR_DIM, rng),
            encoder,
            fusion,
            emotion_head: Linear::new(EmotionLabel::COUNT, h, rng),
            satisfaction_head: Linear::new(SatisfactionLabel::COUNT, h, rng),
            lambda_emotion: 1.0,
            lambda_satisfaction: 1.0,
        }
    }

    pub fn hidden_dim(&self) -> usize {
        self.we.rows
    }

    /// Speaker intention vector: `relu(We [h_s; alpha])`. Entries are
    /// always non-negative.
    pub fn intention_vector(
        &self,
        h_s: &[f64],
        alpha: &PriorDistribution,
    ) -> Result<IntentionVector, WiringError> {
        let h = self.hidden_dim();
        if h_s.len() != h {
            return Err(WiringError::DimensionMismatch {
                got: h_s.len(),
                expected: h,
            });
        }
        let mut joint = Vec::with_capacity(h + PRIOR_DIM);
        joint.extend_from_slice(h_s);
        joint.extend_from_slice(&alpha.alpha);
        let projected = self.we.matmul_nn(&Tensor::vector(joint));
        Ok(IntentionVector {
            values: projected.data.iter().map(|&v| v.max(0.0)).collect(),
            role: Role::Speaker,
        })
    }

    /// Fuse the listener encoding with the speaker intention vector.
    pub fn fuse(
        &self,
        h_r: &[f64],
        h_bar_s: &IntentionVector,
    ) -> Result<FusedRepresentation, WiringError> {
        let h = self.hidden_dim();
        if h_r.len() != h {
            return Err(WiringError::DimensionMismatch {
                got: h_r.len(),
                expected: h,
            });
        }
        if h_bar_s.values.len() != h {
            return Err(WiringError::DimensionMismatch {
                got: h_bar_s.values.len(),
                expected: h,
            });
        }
        let values = match &self.fusion {
            FusionKind::Gated(gf) => {
                let mut m = Vec::with_capacity(4 * h);
                m.extend_from_slice(h_r);
                m.extend_from_slice(&h_bar_s.values);
                m.extend(h_r.iter().zip(&h_bar_s.values).map(|(&a, &b)| a * b));
                m.extend(h_r.iter().zip(&h_bar_s.values).map(|(&a, &b)| a - b));
                let m = Tensor::vector(m);
                let mut c = gf.candidate.w.matmul_nn(&m);
                c.add_assign(&gf.candidate.b);
                let c = c.map(libm::tanh);
                let mut gate = gf.gate.w.matmul_nn(&m);
                gate.add_assign(&gf.gate.b);
                let gate = gate.map(|v| 1.0 / (1.0 + libm::exp(-v)));
                gate.data
                    .iter()
                    .zip(&c.data)
                    .zip(h_r)
                    .map(|((&g, &c), &r)| g * c + (1.0 - g) * r)
                    .collect()
            }
            FusionKind::Linear(lin) => {
                let mut m = Vec::with_capacity(2 * h);
                m.extend_from_slice(h_r);
                m.extend_from_slice(&h_bar_s.values);
                let mut f = lin.w.matmul_nn(&Tensor::vector(m));
                f.add_assign(&lin.b);
                f.data
            }
        };
        Ok(FusedRepresentation { values })
    }

    /// Both head distributions with enum-order tie-break argmax.
    pub fn predict_heads(&self, f: &FusedRepresentation) -> EmotionPrediction {
        let fv = Tensor::vector(f.values.clone());
        let mut e_logits = self.emotion_head.w.matmul_nn(&fv);
        e_logits.add_assign(&self.emotion_head.b);
        let e = softmax(&e_logits.data);
        let mut s_logits = self.satisfaction_head.w.matmul_nn(&fv);
        s_logits.add_assign(&self.satisfaction_head.b);
        let s = softmax(&s_logits.data);
        let mut emotion_distribution = [0.0; 6];
        emotion_distribution.copy_from_slice(&e);
        let mut satisfaction_distribution = [0.0; 2];
        satisfaction_distribution.copy_from_slice(&s);
        EmotionPrediction {
            emotion: EmotionLabel::from_index(argmax(&e)).unwrap(),
            satisfaction: SatisfactionLabel::from_index(argmax(&s)).unwrap(),
            emotion_distribution,
            satisfaction_distribution,
        }
    }

    /// Full inference for one exchange. `None` dictionary is the disabled
    /// IntDic ablation (uniform prior).
    pub fn predict(
        &self,
        utterance_s: &str,
        utterance_r: &str,
        dict: Option<&IntentionDictionary>,
    ) -> Result<EmotionPrediction, TrainingError> {
        let h_s = self
            .encoder
            .encode_text(utterance_s)
            .map_err(|_| TrainingError::MissingData {
                id: String::from("<speaker utterance>"),
            })?
            .representation;
        let h_r = self
            .encoder
            .encode_text(utterance_r)
            .map_err(|_| TrainingError::MissingData {
                id: String::from("<listener utterance>"),
            })?
            .representation;
        let alpha = match dict {
            Some(d) => d.lookup(utterance_s),
            None => PriorDistribution::uniform(),
        };
        let h_bar = self.intention_vector(&h_s, &alpha).expect("dims fixed by model");
        let fused = self.fuse(&h_r, &h_bar).expect("dims fixed by model");
        Ok(self.predict_heads(&fused))
    }
}

/// Fill the explanation template. Exact string contract:
/// `The speaker's emotion is {emotion} because his intention is
/// {satisfied|not satisfied} by the listener.`
pub fn explain(emotion: EmotionLabel, satisfaction: SatisfactionLabel) -> String {
    let outcome = match satisfaction {
        SatisfactionLabel::Satisfied => "satisfied",
        SatisfactionLabel::Unsatisfied => "not satisfied",
    };
    format!(
        "The speaker's emotion is {} because his intention is {} by the listener.",
        emotion.as_str(),
        outcome
    )
}

/// Fraction of predictions whose satisfaction matches the emotion polarity
/// (satisfied with positive emotion, unsatisfied otherwise).
pub fn prediction_consistency_rate(predictions: &[EmotionPrediction]) -> f64 {
    if predictions.is_empty() {
        return 1.0;
    }
    let consistent = predictions
        .iter()
        .filter(|p| {
            let positive = p.emotion.polarity() == Polarity::Positive;
            match p.satisfaction {
                SatisfactionLabel::Satisfied => positive,
                SatisfactionLabel::Unsatisfied => !positive,
            }
        })
        .count();
    consistent as f64 / predictions.len() as f64
}

struct BoundEmotion {
    encoder: EncoderVars,
    heads: HeadVars,
}

/// Graph handles for everything after the encoder: the intention
/// projection, fusion, and both classifier heads. Public so the composite
/// can be gradient-checked externally against the real training subgraph.
pub struct HeadVars {
    pub we: Var,
    fusion: BoundFusion,
    emotion_head: LinearVars,
    satisfaction_head: LinearVars,
}

enum BoundFusion {
    Gated { candidate: LinearVars, gate: LinearVars },
    Linear(LinearVars),
}

impl HeadVars {
    /// Bound parameter nodes in the same order as
    /// [`EmotionModel::head_params`].
    pub fn vars(&self) -> Vec<Var> {
        let mut v = alloc::vec![self.we];
        match &self.fusion {
            BoundFusion::Gated { candidate, gate } => {
                v.extend(candidate.vars());
                v.extend(gate.vars());
            }
            BoundFusion::Linear(lin) => v.extend(lin.vars()),
        }
        v.extend(self.emotion_head.vars());
        v.extend(self.satisfaction_head.vars());
        v
    }
}

impl EmotionModel {
    /// Bind the post-encoder parameters into a graph.
    pub fn bind_heads(&self, g: &mut Graph) -> HeadVars {
        HeadVars {
            we: g.input(self.we.clone()),
            fusion: match &self.fusion {
                FusionKind::Gated(gf) => BoundFusion::Gated {
                    candidate: gf.candidate.bind(g),
                    gate: gf.gate.bind(g),
                },
                FusionKind::Linear(lin) => BoundFusion::Linear(lin.bind(g)),
            },
            emotion_head: self.emotion_head.bind(g),
            satisfaction_head: self.satisfaction_head.bind(g),
        }
    }

    /// Post-encoder parameter tensors in the same order as
    /// [`HeadVars::vars`].
    pub fn head_params(&self) -> Vec<&Tensor> {
        let mut p = alloc::vec![&self.we];
        match &self.fusion {
            FusionKind::Gated(gf) => {
                p.extend(gf.candidate.params());
                p.extend(gf.gate.params());
            }
            FusionKind::Linear(lin) => p.extend(lin.params()),
        }
        p.extend(self.emotion_head.params());
        p.extend(self.satisfaction_head.params());
        p
    }

    pub fn head_params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut p: Vec<&mut Tensor> = alloc::vec![&mut self.we];
        match &mut self.fusion {
            FusionKind::Gated(gf) => {
                p.extend(gf.candidate.params_mut());
                p.extend(gf.gate.params_mut());
            }
            FusionKind::Linear(lin) => p.extend(lin.params_mut()),
        }
        p.extend(self.emotion_head.params_mut());
        p.extend(self.satisfaction_head.params_mut());
        p
    }

    /// Every trainable tensor, encoder included, in optimizer order.
    pub fn all_params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut p = self.encoder.all_params_mut();
        p.push(&mut self.we);
        match &mut self.fusion {
            FusionKind::Gated(gf) => {
                p.extend(gf.candidate.params_mut());
                p.extend(gf.gate.params_mut());
            }
            FusionKind::Linear(lin) => p.extend(lin.params_mut()),
        }
        p.extend(self.emotion_head.params_mut());
        p.extend(self.satisfaction_head.params_mut());
        p
    }

    /// The weighted two-head loss subgraph from representation nodes: the
    /// intention projection (ReLU over `We [h_s; alpha]`), fusion, both
    /// heads, and `lambda_e * CE + lambda_s * CE`. This is the exact
    /// subgraph the trainer uses.
    pub fn heads_loss_on_graph(
        &self,
        g: &mut Graph,
        heads: &HeadVars,
        h_s: Var,
        h_r: Var,
        alpha: Var,
        emotion: EmotionLabel,
        satisfaction: SatisfactionLabel,
    ) -> Var {
        let joint = g.concat_rows(&[h_s, alpha]);
        let projected = g.matmul(heads.we, joint);
        let h_bar = g.relu(projected);

        let fused = match &heads.fusion {
            BoundFusion::Gated { candidate, gate } => {
                let prod = g.mul(h_r, h_bar);
                let diff = g.sub(h_r, h_bar);
                let m = g.concat_rows(&[h_r, h_bar, prod, diff]);
                let c = candidate.forward(g, m);
                let c = g.tanh(c);
                let gate = gate.forward(g, m);
                let gate = g.sigmoid(gate);
                let gated = g.mul(gate, c);
                let keep = g.one_minus(gate);
                let kept = g.mul(keep, h_r);
                g.add(gated, kept)
            }
            BoundFusion::Linear(lin) => {
                let m = g.concat_rows(&[h_r, h_bar]);
                lin.forward(g, m)
            }
        };

        let e_logits = heads.emotion_head.forward(g, fused);
        let s_logits = heads.satisfaction_head.forward(g, fused);
        let e_loss = g.ce_loss(e_logits, emotion.index());
        let s_loss = g.ce_loss(s_logits, satisfaction.index());
        let e_scaled = g.scale(e_loss, self.lambda_emotion);
        let s_scaled = g.scale(s_loss, self.lambda_satisfaction);
        g.add(e_scaled, s_scaled)
    }

    /// Inference-path value of the same composite loss, for finite
    /// differences.
    pub fn heads_loss_value(
        &self,
        h_s: &[f64],
        h_r: &[f64],
        alpha: &PriorDistribution,
        emotion: EmotionLabel,
        satisfaction: SatisfactionLabel,
    ) -> f64 {
        let h_bar = self.intention_vector(h_s, alpha).expect("dims");
        let fused = self.fuse(h_r, &h_bar).expect("dims");
        let pred = self.predict_heads(&fused);
        let e = -libm::log(pred.emotion_distribution[emotion.index()].max(1e-300));
        let s = -libm::log(pred.satisfaction_distribution[satisfaction.index()].max(1e-300));
        self.lambda_emotion * e + self.lambda_satisfaction * s
    }
}

fn bind(model: &EmotionModel, g: &mut Graph) -> BoundEmotion {
    BoundEmotion {
        encoder: model.encoder.bind(g),
        heads: model.bind_heads(g),
    }
}

struct EmotionExample {
    tokens_s: Vec<usize>,
    tokens_r: Vec<usize>,
    alpha: PriorDistribution,
    emotion: EmotionLabel,
    satisfaction: SatisfactionLabel,
}

fn corpus_examples(
    model: &EmotionModel,
    corpus: &Corpus,
    dict: Option<&IntentionDictionary>,
) -> Result<Vec<EmotionExample>, TrainingError> {
    corpus
        .iter()
        .map(|pair| {
            let tokens_s = model.encoder.vocab.encode_ids(&pair.utterance_s);
            let tokens_r = model.encoder.vocab.encode_ids(&pair.utterance_r);
            if tokens_s.is_empty() || tokens_r.is_empty() {
                return Err(TrainingError::MissingData {
                    id: pair.id.clone(),
                });
            }
            let alpha = match dict {
                Some(d) => d.lookup(&pair.utterance_s),
                None => PriorDistribution::uniform(),
            };
            Ok(EmotionExample {
                tokens_s,
                tokens_r,
                alpha,
                emotion: pair.emotion_s,
                satisfaction: pair.satisfaction,
            })
        })
        .collect()
}

/// Forward pass for one example. Returns the weighted multi-task loss plus
/// the embedding rows touched by both encodes.
fn forward_loss(
    model: &EmotionModel,
    g: &mut Graph,
    bound: &BoundEmotion,
    ex: &EmotionExample,
) -> Result<(Var, Vec<(usize, Var)>), TrainingError> {
    let bad = |_| TrainingError::MissingData {
        id: String::from("<bad token sequence>"),
    };
    let enc_s = model
        .encoder
        .encode_on_graph(g, &bound.encoder, &ex.tokens_s)
        .map_err(bad)?;
    let enc_r = model
        .encoder
        .encode_on_graph(g, &bound.encoder, &ex.tokens_r)
        .map_err(bad)?;
    let mut rows = enc_s.token_vars;
    rows.extend(enc_r.token_vars);

    let alpha = g.input(Tensor::vector(ex.alpha.alpha.to_vec()));
    let loss = model.heads_loss_on_graph(
        g,
        &bound.heads,
        enc_s.representation,
        enc_r.representation,
        alpha,
        ex.emotion,
        ex.satisfaction,
    );
    Ok((loss, rows))
}

fn predict_example(model: &EmotionModel, ex: &EmotionExample) -> EmotionPrediction {
    let h_s = model
        .encoder
        .encode(&ex.tokens_s)
        .expect("validated example")
        .representation;
    let h_r = model
        .encoder
        .encode(&ex.tokens_r)
        .expect("validated example")
        .representation;
    let h_bar = model.intention_vector(&h_s, &ex.alpha).expect("model dims");
    let fused = model.fuse(&h_r, &h_bar).expect("model dims");
    model.predict_heads(&fused)
}

fn emotion_macro_f1(model: &EmotionModel, examples: &[EmotionExample]) -> f64 {
    let preds: Vec<&str> = examples
        .iter()
        .map(|e| predict_example(model, e).emotion.as_str())
        .collect();
    let golds: Vec<&str> = examples.iter().map(|e| e.emotion.as_str()).collect();
    let classes: Vec<&str> = EmotionLabel::ALL.iter().map(|l| l.as_str()).collect();
    eval::prf1(&preds, &golds, &classes)
        .map(|r| r.macro_f1)
        .unwrap_or(0.0)
}

/// Joint training of `lambda_e * CE(emotion) + lambda_s * CE(satisfaction)`
/// with Adam; best-epoch selection on the emotion head's validation
/// macro-F1.
pub fn train_emotion(
    model: &mut EmotionModel,
    dict: Option<&IntentionDictionary>,
    train: &Corpus,
    val: &Corpus,
    hp: &TrainHparams,
) -> Result<TrainHistory, TrainingError> {
    if train.is_empty() {
        return Err(TrainingError::EmptyCorpus);
    }
    let train_examples = corpus_examples(model, train, dict)?;
    let val_examples = corpus_examples(model, val, dict)?;

    let mut history = TrainHistory::default();
    let mut adam = Adam::new(hp.learning_rate);
    let mut best: Option<(f64, usize, EmotionModel)> = None;
    let mut order: Vec<usize> = (0..train_examples.len()).collect();
    let batch_size = hp.batch_size.max(1);

    for epoch in 0..hp.epochs {
        let mut rng = rng_from_seed(derive_seed(hp.seed, epoch as u64));
        rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut rng);

        let mut loss_sum = 0.0;
        for batch in order.chunks(batch_size) {
            let mut g = Graph::new();
            let bound = bind(model, &mut g);
            let mut batch_loss: Option<Var> = None;
            let mut emb_rows: Vec<(usize, Var)> = Vec::new();
            for &i in batch {
                let (loss, rows) = forward_loss(model, &mut g, &bound, &train_examples[i])?;
                loss_sum += g.value(loss).data[0];
                emb_rows.extend(rows);
                batch_loss = Some(match batch_loss {
                    Some(acc) => g.add(acc, loss),
                    None => loss,
                });
            }
            let total = batch_loss.expect("non-empty batch");
            let mean = g.scale(total, 1.0 / batch.len() as f64);
            if !g.value(mean).data[0].is_finite() {
                return Err(TrainingError::Diverged {
                    step: adam.steps_taken() + 1,
                    what: String::from("loss"),
                });
            }
            g.backward(mean);
            apply_step(model, &g, &bound, &emb_rows, &mut adam)?;
        }

        let val_metric = emotion_macro_f1(model, &val_examples);
        history.epochs.push(crate::nn::EpochStats {
            epoch,
            train_loss: loss_sum / train_examples.len() as f64,
            val_metric,
        });
        let improved = best.as_ref().map_or(true, |(b, _, _)| val_metric > *b);
        if improved {
            best = Some((val_metric, epoch, model.clone()));
        }
        if hp.stop_at_val_metric.map_or(false, |t| val_metric >= t) {
            break;
        }
    }

    if let Some((_, epoch, params)) = best {
        *model = params;
        history.best_epoch = Some(epoch);
    }
    Ok(history)
}

fn apply_step(
    model: &mut EmotionModel,
    g: &Graph,
    bound: &BoundEmotion,
    emb_rows: &[(usize, Var)],
    adam: &mut Adam,
) -> Result<(), TrainingError> {
    let mut emb_grad = model.encoder.embedding.zeros_like();
    for &(row, var) in emb_rows {
        let gr = g.grad(var);
        for (c, &v) in gr.data.iter().enumerate() {
            emb_grad.data[row * emb_grad.cols + c] += v;
        }
    }

    let mut all_grads: Vec<Tensor> = alloc::vec![emb_grad];
    for v in model.encoder.dense_vars(&bound.encoder) {
        all_grads.push(g.grad(v).clone());
    }
    for v in bound.heads.vars() {
        all_grads.push(g.grad(v).clone());
    }

    let params = model.all_params_mut();

    debug_assert_eq!(params.len(), all_grads.len());
    let mut pairs: Vec<(&mut Tensor, &Tensor)> =
        params.into_iter().zip(all_grads.iter()).collect();
    adam.step(&mut pairs)
}

/// Per-example predictions over a corpus, with explanations.
pub fn predict_corpus(
    model: &EmotionModel,
    corpus: &Corpus,
    dict: Option<&IntentionDictionary>,
) -> Result<Vec<(String, EmotionPrediction, String)>, TrainingError> {
    corpus
        .iter()
        .map(|pair| {
            let pred = model.predict(&pair.utterance_s, &pair.utterance_r, dict)?;
            let text = explain(pred.emotion, pred.satisfaction);
            Ok((pair.id.clone(), pred, text))
        })
        .collect()
}
