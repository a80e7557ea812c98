//! Dictionary scores must equal an independent brute-force recount on
//! small corpora, and lookup must behave like normalized averaging of
//! matched entries.

use std::collections::BTreeMap;

use iea_core::corpus::{tokenize, Corpus, ConversationPair};
use iea_core::intdic::{build_dictionary, DictConfig, IntentionDictionary};
use iea_core::labels::{EmotionLabel, IntentionLabel, SatisfactionLabel};
use iea_core::synth::{generate_synthetic_corpus, SyntheticSpec};

use proptest::prelude::*;

/// Clean-room recount: occurrences of every 1..=3-gram per intention
/// class, smoothed scores, retention by the strictly-above-uniform rule.
/// Structured differently from the implementation on purpose (flat list of
/// (gram, class) observations, then aggregation).
fn oracle_scores(corpus: &Corpus, config: &DictConfig) -> BTreeMap<String, [f64; 7]> {
    let mut observations: Vec<(String, usize)> = Vec::new();
    for pair in corpus.iter() {
        let toks = tokenize(&pair.utterance_s);
        for n in 1..=3usize {
            for start in 0..toks.len().saturating_sub(n - 1) {
                let gram = toks[start..start + n].join(" ");
                observations.push((gram, pair.intention_s.index()));
            }
        }
    }
    let mut counts: BTreeMap<String, [u64; 7]> = BTreeMap::new();
    for (gram, class) in observations {
        counts.entry(gram).or_insert([0; 7])[class] += 1;
    }
    let s = config.smoothing_mass;
    let mut out = BTreeMap::new();
    for (gram, c) in counts {
        let total: u64 = c.iter().sum();
        if (total as usize) < config.min_count {
            continue;
        }
        let max = *c.iter().max().unwrap();
        if 7 * max <= total {
            continue;
        }
        let mut scores = [0.0f64; 7];
        for i in 0..7 {
            scores[i] = (c[i] as f64 + s) / (total as f64 + 7.0 * s);
        }
        out.insert(gram, scores);
    }
    out
}

#[test]
fn dictionary_matches_brute_force_oracle_on_small_corpora() {
    for (pairs, seed) in [(25usize, 3u64), (50, 17), (100, 99)] {
        let spec = SyntheticSpec {
            pair_count: pairs,
            ..SyntheticSpec::default()
        };
        let corpus = generate_synthetic_corpus(&spec, seed).unwrap();
        let config = DictConfig {
            min_count: 1,
            max_entries: usize::MAX,
            smoothing_mass: 0.1,
        };
        let dict = build_dictionary(&corpus, &config).unwrap();
        let oracle = oracle_scores(&corpus, &config);

        assert_eq!(
            dict.entries().len(),
            oracle.len(),
            "retained keyword sets differ at {pairs} pairs"
        );
        for (keyword, scores) in dict.entries() {
            let want = oracle
                .get(keyword)
                .unwrap_or_else(|| panic!("oracle missing `{keyword}`"));
            for (got, want) in scores.iter().zip(want) {
                assert_eq!(got, want, "score mismatch for `{keyword}`");
            }
        }
    }
}

#[test]
fn each_entry_is_itself_a_distribution() {
    let spec = SyntheticSpec {
        pair_count: 80,
        ..SyntheticSpec::default()
    };
    let corpus = generate_synthetic_corpus(&spec, 5).unwrap();
    let dict = build_dictionary(&corpus, &DictConfig::default()).unwrap();
    assert!(!dict.is_empty());
    for (keyword, scores) in dict.entries() {
        let sum: f64 = scores.iter().sum();
        assert!((sum - 1.0).abs() < 1e-9, "`{keyword}` sums to {sum}");
        assert!(scores.iter().all(|&v| v > 0.0));
    }
}

fn pair(id: usize, text: &str, label: IntentionLabel) -> ConversationPair {
    ConversationPair {
        id: format!("p{id}"),
        utterance_s: text.into(),
        utterance_r: "ok".into(),
        intention_s: label,
        intention_r: IntentionLabel::Accept,
        emotion_s: EmotionLabel::Happy,
        satisfaction: SatisfactionLabel::Satisfied,
    }
}

#[test]
fn max_entries_keeps_highest_concentration() {
    // "aa" appears 3/3 in request; "bb" 2/3 in suggest: aa is retained first.
    let corpus = Corpus::new(vec![
        pair(0, "aa", IntentionLabel::Request),
        pair(1, "aa", IntentionLabel::Request),
        pair(2, "aa", IntentionLabel::Request),
        pair(3, "bb", IntentionLabel::Suggest),
        pair(4, "bb", IntentionLabel::Suggest),
        pair(5, "bb", IntentionLabel::Inform),
    ])
    .unwrap();
    let dict = build_dictionary(
        &corpus,
        &DictConfig {
            min_count: 1,
            max_entries: 1,
            smoothing_mass: 0.1,
        },
    )
    .unwrap();
    assert_eq!(dict.len(), 1);
    assert!(dict.entries().contains_key("aa"));
}

/// Random single-token dictionary over a disjoint token pool, so that
/// appending one keyword occurrence adds exactly one matched entry.
fn unigram_dict(concentrations: &[(usize, f64)]) -> IntentionDictionary {
    let mut entries = BTreeMap::new();
    for (i, &(class, peak)) in concentrations.iter().enumerate() {
        let rest = (1.0 - peak) / 6.0;
        let mut v = [rest; 7];
        v[class] = peak;
        entries.insert(format!("kw{i}"), v);
    }
    IntentionDictionary::from_entries(entries, 0.1).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    /// lookup returns a valid distribution for arbitrary text.
    #[test]
    fn lookup_is_always_a_distribution(text in ".*", peaks in proptest::collection::vec((0usize..7, 0.2f64..0.9), 1..6)) {
        let dict = unigram_dict(&peaks);
        let alpha = dict.lookup(&text);
        prop_assert!(alpha.is_valid(), "alpha {:?} for {text:?}", alpha.alpha);
    }

    /// Appending one occurrence of keyword k pulls alpha coordinatewise
    /// toward k's score vector (alpha is the mean of matched entries), and
    /// never decreases alpha at k's argmax class when that class is not
    /// already above k's own score.
    #[test]
    fn evidence_pulls_alpha_toward_the_keyword(
        peaks in proptest::collection::vec((0usize..7, 0.2f64..0.9), 2..6),
        base in proptest::collection::vec(0usize..6, 1..8),
        extra in 0usize..6,
    ) {
        let dict = unigram_dict(&peaks);
        let k = extra % peaks.len();
        let utterance: Vec<String> = base
            .iter()
            .map(|i| format!("kw{}", i % peaks.len()))
            .collect();
        let before = dict.lookup(&utterance.join(" "));
        let appended = format!("{} kw{k}", utterance.join(" "));
        let after = dict.lookup(&appended);

        let entry = dict.entries()[&format!("kw{k}")];
        for c in 0..7 {
            let d_before = (before.alpha[c] - entry[c]).abs();
            let d_after = (after.alpha[c] - entry[c]).abs();
            prop_assert!(
                d_after <= d_before + 1e-12,
                "coordinate {c} moved away from the keyword vector"
            );
        }
        let argmax_class = peaks[k].0;
        if entry[argmax_class] >= before.alpha[argmax_class] {
            prop_assert!(after.alpha[argmax_class] >= before.alpha[argmax_class] - 1e-12);
        }
    }
}
