//! Action abduction: predict the speaker's intention from their utterance
//! by combining the encoder posterior with the dictionary prior through an
//! abductive classifier.
//!
//! The posterior is `beta = softmax(W h_s + b)`; the classifier consumes
//! the concatenation `[beta; alpha]` (14 values) through one hidden ReLU
//! layer to 7 logits. Argmax ties break toward the lowest label index.

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
use crate::labels::IntentionLabel;
use crate::nn::{Adam, Linear, LinearVars, TrainHistory, TrainHparams, TrainingError};
use crate::rng::{derive_seed, rng_from_seed};
use crate::tensor::{argmax, softmax, Tensor};

const CLASSES: usize = IntentionLabel::COUNT;

/// Encoder-derived posterior over the seven intentions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorDistribution {
    pub beta: [f64; 7],
}

impl PosteriorDistribution {
    pub fn is_valid(&self) -> bool {
        self.beta.iter().all(|&b| b >= 0.0 && b.is_finite())
            && libm::fabs(self.beta.iter().sum::<f64>() - 1.0) <= 1e-9
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AbduceError {
    #[error("utterance is empty")]
    EmptyUtterance,
    #[error("representation has dimension {got}, model expects {expected}")]
    DimensionMismatch { got: usize, expected: usize },
    #[error("representation contains non-finite values")]
    NotFinite,
    #[error("model uses external encoder `{0}`; supply a representation")]
    NeedsExternalRepresentation(String),
    #[error(transparent)]
    Encode(#[from] crate::encoder::EncodeError),
}

/// Where utterance representations come from: the in-crate trainable
/// recurrent encoder, or a frozen external plug-in of a declared dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Representer {
    Recurrent(EncoderParams),
    External { name: String, dim: usize },
}

impl Representer {
    pub fn dim(&self) -> usize {
        match self {
            Representer::Recurrent(enc) => enc.hidden_dim(),
            Representer::External { dim, .. } => *dim,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbductionModel {
    pub representer: Representer,
    /// h_s -> 7 logits (the posterior head).
    pub beta_head: Linear,
    /// [beta; alpha] -> hidden ReLU layer.
    pub clf_hidden: Linear,
    /// hidden -> 7 logits.
    pub clf_out: Linear,
}

/// Full abduction output; `beta` and `alpha` are kept for ablation
/// reporting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbductionOutput {
    pub predicted: IntentionLabel,
    pub distribution: [f64; 7],
    pub beta: PosteriorDistribution,
    pub alpha: PriorDistribution,
}

pub const DEFAULT_CLF_HIDDEN: usize = 32;

impl AbductionModel {
    pub fn new(encoder: EncoderParams, rng: &mut impl Rng) -> Self {
        let dim = encoder.hidden_dim();
        Self::with_representer(Representer::Recurrent(encoder), dim, rng)
    }

    /// Model over a frozen external encoder of the declared dimension.
    pub fn external(name: &str, dim: usize, rng: &mut impl Rng) -> Self {
        Self::with_representer(
            Representer::External {
                name: String::from(name),
                dim,
            },
            dim,
            rng,
        )
    }

    fn with_representer(representer: Representer, dim: usize, rng: &mut impl Rng) -> Self {
        AbductionModel {
            representer,
            beta_head: Linear::new(CLASSES, dim, rng),
            clf_hidden: Linear::new(DEFAULT_CLF_HIDDEN, 2 * CLASSES, rng),
            clf_out: Linear::new(CLASSES, DEFAULT_CLF_HIDDEN, rng),
        }
    }

    pub fn rep_dim(&self) -> usize {
        self.representer.dim()
    }

    /// Eq-1 posterior: softmax over a linear map of the representation.
    pub fn compute_beta(&self, h_s: &[f64]) -> Result<PosteriorDistribution, AbduceError> {
        if h_s.len() != self.beta_head.in_dim() {
            return Err(AbduceError::DimensionMismatch {
                got: h_s.len(),
                expected: self.beta_head.in_dim(),
            });
        }
        if h_s.iter().any(|v| !v.is_finite()) {
            return Err(AbduceError::NotFinite);
        }
        let mut logits = self.beta_head.w.matmul_nn(&Tensor::vector(h_s.to_vec()));
        logits.add_assign(&self.beta_head.b);
        let probs = softmax(&logits.data);
        let mut beta = [0.0; 7];
        beta.copy_from_slice(&probs);
        Ok(PosteriorDistribution { beta })
    }

    /// Final distribution from the abductive classifier over `[beta; alpha]`.
    pub fn classify(&self, beta: &PosteriorDistribution, alpha: &PriorDistribution) -> [f64; 7] {
        let mut joint = Vec::with_capacity(2 * CLASSES);
        joint.extend_from_slice(&beta.beta);
        joint.extend_from_slice(&alpha.alpha);
        let mut hidden = self.clf_hidden.w.matmul_nn(&Tensor::vector(joint));
        hidden.add_assign(&self.clf_hidden.b);
        let hidden = hidden.map(|v| if v > 0.0 { v } else { 0.0 });
        let mut logits = self.clf_out.w.matmul_nn(&hidden);
        logits.add_assign(&self.clf_out.b);
        let probs = softmax(&logits.data);
        let mut out = [0.0; 7];
        out.copy_from_slice(&probs);
        out
    }

    /// Abduce the speaker's intention from an utterance. A `None`
    /// dictionary is the disabled-dictionary ablation: alpha falls back to
    /// uniform.
    pub fn abduce(
        &self,
        utterance: &str,
        dict: Option<&IntentionDictionary>,
    ) -> Result<AbductionOutput, AbduceError> {
        if crate::corpus::tokenize(utterance).is_empty() {
            return Err(AbduceError::EmptyUtterance);
        }
        let rep = match &self.representer {
            Representer::Recurrent(enc) => enc.encode_text(utterance)?.representation,
            Representer::External { name, .. } => {
                return Err(AbduceError::NeedsExternalRepresentation(name.clone()))
            }
        };
        self.abduce_with_representation(&rep, utterance, dict)
    }

    /// Abduce from a caller-supplied representation (external encoders).
    pub fn abduce_with_representation(
        &self,
        h_s: &[f64],
        utterance: &str,
        dict: Option<&IntentionDictionary>,
    ) -> Result<AbductionOutput, AbduceError> {
        if crate::corpus::tokenize(utterance).is_empty() {
            return Err(AbduceError::EmptyUtterance);
        }
        let alpha = match dict {
            Some(d) => d.lookup(utterance),
            None => PriorDistribution::uniform(),
        };
        let beta = self.compute_beta(h_s)?;
        let distribution = self.classify(&beta, &alpha);
        let predicted = IntentionLabel::from_index(argmax(&distribution)).unwrap();
        Ok(AbductionOutput {
            predicted,
            distribution,
            beta,
            alpha,
        })
    }
}

/// One training example with its prior resolved up front (the dictionary
/// is frozen during training).
#[derive(Debug, Clone)]
pub struct AbductionExample {
    pub rep: RepInput,
    pub alpha: PriorDistribution,
    pub target: IntentionLabel,
}

/// Token ids for the trainable encoder, or a frozen representation vector.
#[derive(Debug, Clone)]
pub enum RepInput {
    Tokens(Vec<usize>),
    Fixed(Vec<f64>),
}

/// Build training examples from a corpus using the model's own vocabulary.
pub fn corpus_examples(
    model: &AbductionModel,
    corpus: &Corpus,
    dict: Option<&IntentionDictionary>,
) -> Result<Vec<AbductionExample>, TrainingError> {
    let enc = match &model.representer {
        Representer::Recurrent(enc) => enc,
        Representer::External { .. } => {
            return Err(TrainingError::MissingData {
                id: String::from("<external encoder requires precomputed representations>"),
            })
        }
    };
    corpus
        .iter()
        .map(|pair| {
            let ids = enc.vocab.encode_ids(&pair.utterance_s);
            if ids.is_empty() {
                return Err(TrainingError::MissingData {
                    id: pair.id.clone(),
                });
            }
            let alpha = match dict {
                Some(d) => d.lookup(&pair.utterance_s),
                None => PriorDistribution::uniform(),
            };
            Ok(AbductionExample {
                rep: RepInput::Tokens(ids),
                alpha,
                target: pair.intention_s,
            })
        })
        .collect()
}

struct BoundModel {
    encoder: Option<EncoderVars>,
    beta_head: LinearVars,
    clf_hidden: LinearVars,
    clf_out: LinearVars,
}

fn bind(model: &AbductionModel, g: &mut Graph) -> BoundModel {
    let encoder = match &model.representer {
        Representer::Recurrent(enc) => Some(enc.bind(g)),
        Representer::External { .. } => None,
    };
    BoundModel {
        encoder,
        beta_head: model.beta_head.bind(g),
        clf_hidden: model.clf_hidden.bind(g),
        clf_out: model.clf_out.bind(g),
    }
}

/// Forward pass for one example; returns (loss node, embedding rows used).
fn forward_loss(
    model: &AbductionModel,
    g: &mut Graph,
    bound: &BoundModel,
    example: &AbductionExample,
) -> Result<(Var, Vec<(usize, Var)>), TrainingError> {
    let (rep, token_vars) = match (&example.rep, &model.representer, &bound.encoder) {
        (RepInput::Tokens(ids), Representer::Recurrent(enc), Some(enc_vars)) => {
            let out = enc.encode_on_graph(g, enc_vars, ids).map_err(|_| {
                TrainingError::MissingData {
                    id: String::from("<bad token sequence>"),
                }
            })?;
            (out.representation, out.token_vars)
        }
        (RepInput::Fixed(v), _, _) => (g.input(Tensor::vector(v.clone())), Vec::new()),
        _ => {
            return Err(TrainingError::MissingData {
                id: String::from("<token input without recurrent encoder>"),
            })
        }
    };
    let beta_logits = bound.beta_head.forward(g, rep);
    let beta = g.softmax_vec(beta_logits);
    let alpha = g.input(Tensor::vector(example.alpha.alpha.to_vec()));
    let joint = g.concat_rows(&[beta, alpha]);
    let hidden = bound.clf_hidden.forward(g, joint);
    let hidden = g.relu(hidden);
    let logits = bound.clf_out.forward(g, hidden);
    let loss = g.ce_loss(logits, example.target.index());
    Ok((loss, token_vars))
}

fn predict_example(model: &AbductionModel, example: &AbductionExample) -> IntentionLabel {
    let rep = match (&example.rep, &model.representer) {
        (RepInput::Tokens(ids), Representer::Recurrent(enc)) => {
            enc.encode(ids).expect("validated example").representation
        }
        (RepInput::Fixed(v), _) => v.clone(),
        _ => unreachable!("examples validated against the representer"),
    };
    let beta = model.compute_beta(&rep).expect("finite representation");
    let dist = model.classify(&beta, &example.alpha);
    IntentionLabel::from_index(argmax(&dist)).unwrap()
}

fn macro_f1(model: &AbductionModel, examples: &[AbductionExample]) -> f64 {
    let preds: Vec<&str> = examples
        .iter()
        .map(|e| predict_example(model, e).as_str())
        .collect();
    let golds: Vec<&str> = examples.iter().map(|e| e.target.as_str()).collect();
    let classes: Vec<&str> = IntentionLabel::ALL.iter().map(|l| l.as_str()).collect();
    eval::prf1(&preds, &golds, &classes)
        .map(|r| r.macro_f1)
        .unwrap_or(0.0)
}

/// Minimize mean cross-entropy with Adam; select the epoch with the best
/// validation macro-F1 and leave those parameters in the model.
pub fn train_abduction(
    model: &mut AbductionModel,
    dict: Option<&IntentionDictionary>,
    train: &Corpus,
    val: &Corpus,
    hp: &TrainHparams,
) -> Result<TrainHistory, TrainingError> {
    let train_examples = corpus_examples(model, train, dict)?;
    let val_examples = corpus_examples(model, val, dict)?;
    train_abduction_examples(model, &train_examples, &val_examples, hp)
}

/// Example-level training entry point (also used for frozen external
/// representations).
pub fn train_abduction_examples(
    model: &mut AbductionModel,
    train: &[AbductionExample],
    val: &[AbductionExample],
    hp: &TrainHparams,
) -> Result<TrainHistory, TrainingError> {
    if train.is_empty() {
        return Err(TrainingError::EmptyCorpus);
    }
    let mut history = TrainHistory::default();
    let mut adam = Adam::new(hp.learning_rate);
    let mut best: Option<(f64, usize, AbductionModel)> = None;
    let mut order: Vec<usize> = (0..train.len()).collect();
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
                let (loss, rows) = forward_loss(model, &mut g, &bound, &train[i])?;
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

        let val_metric = macro_f1(model, val);
        history.epochs.push(crate::nn::EpochStats {
            epoch,
            train_loss: loss_sum / train.len() as f64,
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
    model: &mut AbductionModel,
    g: &Graph,
    bound: &BoundModel,
    emb_rows: &[(usize, Var)],
    adam: &mut Adam,
) -> Result<(), TrainingError> {
    // Gradients in update order: embedding (scattered from the bound rows),
    // encoder tensors, then the heads.
    let mut grads: Vec<Tensor> = Vec::new();
    if let (Representer::Recurrent(enc), Some(enc_vars)) = (&model.representer, &bound.encoder) {
        let mut buffer = enc.embedding.zeros_like();
        for &(row, var) in emb_rows {
            let gr = g.grad(var);
            for (c, &v) in gr.data.iter().enumerate() {
                buffer.data[row * buffer.cols + c] += v;
            }
        }
        grads.push(buffer);
        for v in enc.dense_vars(enc_vars) {
            grads.push(g.grad(v).clone());
        }
    }
    for v in bound
        .beta_head
        .vars()
        .into_iter()
        .chain(bound.clf_hidden.vars())
        .chain(bound.clf_out.vars())
    {
        grads.push(g.grad(v).clone());
    }

    let mut params: Vec<&mut Tensor> = Vec::new();
    if let Representer::Recurrent(enc) = &mut model.representer {
        params.extend(enc.all_params_mut());
    }
    params.extend(model.beta_head.params_mut());
    params.extend(model.clf_hidden.params_mut());
    params.extend(model.clf_out.params_mut());

    debug_assert_eq!(params.len(), grads.len());
    let mut pairs: Vec<(&mut Tensor, &Tensor)> =
        params.into_iter().zip(grads.iter()).collect();
    adam.step(&mut pairs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::{EncoderConfig, Vocabulary};
    use crate::synth::{generate_synthetic_corpus, SyntheticSpec};
    use alloc::collections::BTreeMap;
    use alloc::vec;

    fn tiny_model(seed: u64) -> AbductionModel {
        let spec = SyntheticSpec {
            pair_count: 30,
            ..SyntheticSpec::default()
        };
        let corpus = generate_synthetic_corpus(&spec, seed).unwrap();
        let vocab = Vocabulary::build(&corpus, 1);
        let mut rng = rng_from_seed(seed);
        let enc = EncoderParams::new(
            vocab,
            EncoderConfig {
                embed_dim: 8,
                hidden: 6,
                attention: false,
            },
            &mut rng,
        );
        AbductionModel::new(enc, &mut rng)
    }

    #[test]
    fn beta_of_zero_logits_is_uniform() {
        let mut model = tiny_model(1);
        model.beta_head.w = Tensor::zeros(7, 6);
        model.beta_head.b = Tensor::zeros(7, 1);
        let beta = model.compute_beta(&[0.5, -0.5, 1.0, 0.0, 0.2, -0.2]).unwrap();
        for b in beta.beta {
            assert!((b - 1.0 / 7.0).abs() < 1e-12);
        }
        assert!(beta.is_valid());
    }

    #[test]
    fn softmax_shift_invariance() {
        let a = softmax(&[2.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let b = softmax(&[5.0, 3.0, 3.0, 3.0, 3.0, 3.0, 3.0]);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-9);
        }
        // direct evaluation: e^2 / (e^2 + 6)
        let e2 = libm::exp(2.0);
        assert!((a[0] - e2 / (e2 + 6.0)).abs() < 1e-12);
    }

    #[test]
    fn non_finite_representation_is_an_error() {
        let model = tiny_model(2);
        let err = model
            .compute_beta(&[f64::NAN, 0.0, 0.0, 0.0, 0.0, 0.0])
            .unwrap_err();
        assert_eq!(err, AbduceError::NotFinite);
    }

    #[test]
    fn alpha_passthrough_matches_dictionary_argmax() {
        // Freeze the classifier to copy alpha through: the beta half of the
        // joint input gets zero weight, the alpha half an identity into the
        // first 7 hidden units, and the output layer reads them back.
        let mut model = tiny_model(3);
        model.clf_hidden.w = Tensor::zeros(DEFAULT_CLF_HIDDEN, 14);
        for j in 0..7 {
            model.clf_hidden.w.set(j, 7 + j, 1.0);
        }
        model.clf_hidden.b = Tensor::zeros(DEFAULT_CLF_HIDDEN, 1);
        model.clf_out.w = Tensor::zeros(7, DEFAULT_CLF_HIDDEN);
        for c in 0..7 {
            model.clf_out.w.set(c, c, 1.0);
        }
        model.clf_out.b = Tensor::zeros(7, 1);

        let mut entries = BTreeMap::new();
        entries.insert(
            "ask for".into(),
            [0.52, 0.08, 0.08, 0.08, 0.08, 0.08, 0.08],
        );
        entries.insert(
            "how about".into(),
            [0.08, 0.52, 0.08, 0.08, 0.08, 0.08, 0.08],
        );
        let dict = IntentionDictionary::from_entries(entries, 0.1).unwrap();

        for utt in ["i ask for help", "how about tea", "nothing matches here"] {
            let out = model.abduce(utt, Some(&dict)).unwrap();
            assert_eq!(out.predicted, dict.lookup(utt).argmax(), "utterance {utt}");
        }
    }

    #[test]
    fn argmax_invariant_to_logit_shift() {
        let mut model = tiny_model(4);
        let dict = None;
        let before = model.abduce("could you please help", dict).unwrap();
        for i in 0..7 {
            let v = model.clf_out.b.get(i, 0);
            model.clf_out.b.set(i, 0, v + 3.5);
        }
        let after = model.abduce("could you please help", dict).unwrap();
        assert_eq!(before.predicted, after.predicted);
        for (x, y) in before.distribution.iter().zip(&after.distribution) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn abduce_is_deterministic_and_valid() {
        let model = tiny_model(5);
        let a = model.abduce("do it now", None).unwrap();
        let b = model.abduce("do it now", None).unwrap();
        assert_eq!(a, b);
        let sum: f64 = a.distribution.iter().sum();
        assert!((sum - 1.0).abs() < 1e-9);
        assert!(a.distribution.iter().all(|&p| p >= 0.0));
    }

    #[test]
    fn empty_utterance_is_an_error() {
        let model = tiny_model(6);
        assert_eq!(
            model.abduce("   ", None).unwrap_err(),
            AbduceError::EmptyUtterance
        );
    }

    #[test]
    fn zero_epochs_returns_initial_parameters() {
        let mut model = tiny_model(7);
        let snapshot = model.clone();
        let spec = SyntheticSpec {
            pair_count: 20,
            ..SyntheticSpec::default()
        };
        let corpus = generate_synthetic_corpus(&spec, 8).unwrap();
        let hp = TrainHparams {
            epochs: 0,
            ..TrainHparams::default()
        };
        let history = train_abduction(&mut model, None, &corpus, &corpus, &hp).unwrap();
        assert!(history.epochs.is_empty());
        assert_eq!(history.best_epoch, None);
        assert_eq!(model, snapshot);
    }

    #[test]
    fn external_model_trains_on_fixed_representations() {
        let mut rng = rng_from_seed(10);
        let mut model = AbductionModel::external("stub", 4, &mut rng);
        // Frozen representations that encode the class directly.
        let make = |class: usize| AbductionExample {
            rep: RepInput::Fixed(vec![
                (class % 2) as f64,
                ((class >> 1) % 2) as f64,
                ((class >> 2) % 2) as f64,
                1.0,
            ]),
            alpha: PriorDistribution::uniform(),
            target: IntentionLabel::from_index(class).unwrap(),
        };
        let data: Vec<AbductionExample> = (0..7).cycle().take(140).map(make).collect();
        let hp = TrainHparams {
            learning_rate: 0.05,
            batch_size: 16,
            epochs: 30,
            seed: 0,
        };
        let history = train_abduction_examples(&mut model, &data, &data, &hp).unwrap();
        assert!(
            history.best_val_metric().unwrap() > 0.9,
            "frozen-representation training reached {:?}",
            history.best_val_metric()
        );
    }
}
