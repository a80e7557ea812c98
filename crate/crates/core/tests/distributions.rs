//! Property suite: every distribution-valued output must be non-negative
//! and sum to 1 within 1e-9, for at least a thousand random inputs each.

use std::collections::BTreeMap;

use iea_core::abduction::AbductionModel;
use iea_core::emotion::{EmotionModel, FusedRepresentation};
use iea_core::encoder::{EncoderConfig, EncoderParams, Vocabulary};
use iea_core::intdic::IntentionDictionary;
use iea_core::rng::rng_from_seed;
use iea_core::synth::{generate_synthetic_corpus, SyntheticSpec};

use proptest::prelude::*;

fn is_distribution(values: &[f64], tolerance: f64) -> bool {
    values.iter().all(|&v| v >= 0.0 && v.is_finite())
        && (values.iter().sum::<f64>() - 1.0).abs() <= tolerance
}

fn fixtures() -> (AbductionModel, EmotionModel, IntentionDictionary) {
    let spec = SyntheticSpec {
        pair_count: 40,
        ..SyntheticSpec::default()
    };
    let corpus = generate_synthetic_corpus(&spec, 33).unwrap();
    let vocab = Vocabulary::build(&corpus, 1);
    let mut rng = rng_from_seed(33);
    let config = EncoderConfig {
        embed_dim: 6,
        hidden: 5,
        attention: true,
    };
    let abduction = AbductionModel::new(
        EncoderParams::new(vocab.clone(), config.clone(), &mut rng),
        &mut rng,
    );
    let emotion = EmotionModel::new(EncoderParams::new(vocab, config, &mut rng), true, &mut rng);

    let mut entries = BTreeMap::new();
    entries.insert("ask for".to_string(), [0.52, 0.08, 0.08, 0.08, 0.08, 0.08, 0.08]);
    entries.insert("no way".to_string(), [0.08, 0.08, 0.08, 0.08, 0.52, 0.08, 0.08]);
    entries.insert("what".to_string(), [0.08, 0.08, 0.08, 0.08, 0.08, 0.52, 0.08]);
    let dict = IntentionDictionary::from_entries(entries, 0.1).unwrap();
    (abduction, emotion, dict)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn alpha_is_a_distribution(text in ".{0,60}") {
        let (_, _, dict) = FIXTURES.with(|f| (f.0.clone(), f.1.clone(), f.2.clone()));
        let alpha = dict.lookup(&text);
        prop_assert!(is_distribution(&alpha.alpha, 1e-9));
    }

    #[test]
    fn beta_is_a_distribution(h in proptest::collection::vec(-50.0f64..50.0, 5)) {
        FIXTURES.with(|f| {
            let beta = f.0.compute_beta(&h).unwrap();
            prop_assert!(is_distribution(&beta.beta, 1e-9));
            Ok(())
        })?;
    }

    #[test]
    fn final_abduction_distribution_is_valid(words in proptest::collection::vec("[a-z]{1,8}", 1..12)) {
        FIXTURES.with(|f| {
            let utterance = words.join(" ");
            let out = f.0.abduce(&utterance, Some(&f.2)).unwrap();
            prop_assert!(is_distribution(&out.distribution, 1e-9));
            prop_assert!(is_distribution(&out.beta.beta, 1e-9));
            prop_assert!(is_distribution(&out.alpha.alpha, 1e-9));
            Ok(())
        })?;
    }

    #[test]
    fn both_heads_emit_distributions(f_values in proptest::collection::vec(-20.0f64..20.0, 5)) {
        FIXTURES.with(|f| {
            let pred = f.1.predict_heads(&FusedRepresentation { values: f_values.clone() });
            prop_assert!(is_distribution(&pred.emotion_distribution, 1e-9));
            prop_assert!(is_distribution(&pred.satisfaction_distribution, 1e-9));
            Ok(())
        })?;
    }

    #[test]
    fn attention_rows_are_distributions(
        states in proptest::collection::vec(proptest::collection::vec(-5.0f64..5.0, 5), 1..6)
    ) {
        FIXTURES.with(|f| {
            let enc = match &f.0.representer {
                iea_core::abduction::Representer::Recurrent(enc) => enc,
                _ => unreachable!(),
            };
            let rows = enc.attention_weights(&states, states.len()).unwrap();
            for row in rows {
                prop_assert!(is_distribution(&row, 1e-9));
            }
            Ok(())
        })?;
    }
}

thread_local! {
    static FIXTURES: (AbductionModel, EmotionModel, IntentionDictionary) = fixtures();
}
