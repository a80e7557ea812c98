//! Metric implementations checked against independent clean-room oracles.

use std::collections::HashMap;

use iea_core::eval::{bleu, bleu_with_epsilon, prf1, rouge, BLEU_EPSILON};
use proptest::prelude::*;

// ---------------------------------------------------------------------
// P/R/F1 oracle: per-class TP/FP/FN by direct scanning.
// ---------------------------------------------------------------------

struct OracleClass {
    precision: f64,
    recall: f64,
    f1: f64,
    support: usize,
}

fn oracle_prf1(preds: &[&str], golds: &[&str], classes: &[&str]) -> (Vec<OracleClass>, f64, f64) {
    let mut per_class = Vec::new();
    for &c in classes {
        let tp = preds
            .iter()
            .zip(golds)
            .filter(|(&p, &g)| p == c && g == c)
            .count();
        let fp = preds
            .iter()
            .zip(golds)
            .filter(|(&p, &g)| p == c && g != c)
            .count();
        let fn_ = preds
            .iter()
            .zip(golds)
            .filter(|(&p, &g)| p != c && g == c)
            .count();
        let precision = if tp + fp == 0 {
            0.0
        } else {
            tp as f64 / (tp + fp) as f64
        };
        let recall = if tp + fn_ == 0 {
            0.0
        } else {
            tp as f64 / (tp + fn_) as f64
        };
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        per_class.push(OracleClass {
            precision,
            recall,
            f1,
            support: tp + fn_,
        });
    }
    let present: Vec<&OracleClass> = per_class.iter().filter(|m| m.support > 0).collect();
    let macro_f1 = present.iter().map(|m| m.f1).sum::<f64>() / present.len() as f64;
    let accuracy = preds.iter().zip(golds).filter(|(p, g)| p == g).count() as f64
        / preds.len() as f64;
    (per_class, macro_f1, accuracy)
}

#[test]
fn prf1_spec_hand_example() {
    let r = prf1(&["a", "b", "b", "b"], &["a", "a", "b", "b"], &["a", "b"]).unwrap();
    assert!((r.macro_f1 - 11.0 / 15.0).abs() < 1e-12);
}

#[test]
fn all_one_class_against_uniform_gold_matches_oracle() {
    let classes = ["c0", "c1", "c2", "c3", "c4", "c5", "c6"];
    let golds: Vec<&str> = classes.iter().copied().cycle().take(28).collect();
    let preds: Vec<&str> = std::iter::repeat("c0").take(28).collect();
    let r = prf1(&preds, &golds, &classes).unwrap();
    let (_, oracle_macro, oracle_acc) = oracle_prf1(&preds, &golds, &classes);
    assert_eq!(r.macro_f1, oracle_macro);
    assert_eq!(r.accuracy, oracle_acc);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    /// Exact agreement with the brute-force confusion oracle on random
    /// instances of up to 50 items.
    #[test]
    fn prf1_matches_oracle(
        labels in proptest::collection::vec((0usize..5, 0usize..5), 1..50)
    ) {
        let classes = ["c0", "c1", "c2", "c3", "c4"];
        let preds: Vec<&str> = labels.iter().map(|&(p, _)| classes[p]).collect();
        let golds: Vec<&str> = labels.iter().map(|&(_, g)| classes[g]).collect();
        let r = prf1(&preds, &golds, &classes).unwrap();
        let (per_class, macro_f1, accuracy) = oracle_prf1(&preds, &golds, &classes);
        for (got, want) in r.per_class.iter().zip(&per_class) {
            prop_assert_eq!(got.precision, want.precision);
            prop_assert_eq!(got.recall, want.recall);
            prop_assert_eq!(got.f1, want.f1);
            prop_assert_eq!(got.support, want.support);
        }
        prop_assert_eq!(r.macro_f1, macro_f1);
        // micro F1 equals accuracy for single-label classification
        prop_assert_eq!(r.micro_f1, accuracy);
        prop_assert_eq!(r.accuracy, accuracy);
        // everything in [0, 1]
        prop_assert!(r.macro_f1 >= 0.0 && r.macro_f1 <= 1.0);
        prop_assert!(r.weighted_f1 >= 0.0 && r.weighted_f1 <= 1.0);
    }
}

// ---------------------------------------------------------------------
// BLEU oracle: string-keyed hash maps, explicit per-order loops, same
// documented convention (clipped counts, BP, epsilon smoothing, neutral
// empty orders).
// ---------------------------------------------------------------------

fn toks(s: &str) -> Vec<String> {
    iea_core::corpus::tokenize(s)
}

fn gram_map(tokens: &[String], n: usize) -> HashMap<String, usize> {
    let mut map = HashMap::new();
    if tokens.len() >= n {
        for i in 0..=tokens.len() - n {
            *map.entry(tokens[i..i + n].join("\u{1}")).or_insert(0) += 1;
        }
    }
    map
}

fn oracle_bleu(cands: &[&str], refs: &[&str], epsilon: f64) -> (f64, f64, f64) {
    let mut num = [0f64; 4];
    let mut den = [0f64; 4];
    let mut c_len = 0usize;
    let mut r_len = 0usize;
    for (c, r) in cands.iter().zip(refs) {
        let ct = toks(c);
        let rt = toks(r);
        c_len += ct.len();
        r_len += rt.len();
        for n in 1..=4 {
            let cm = gram_map(&ct, n);
            let rm = gram_map(&rt, n);
            for (g, &count) in &cm {
                num[n - 1] += count.min(rm.get(g).copied().unwrap_or(0)) as f64;
            }
            den[n - 1] += ct.len().saturating_sub(n - 1) as f64;
        }
    }
    let bp = if c_len == 0 {
        0.0
    } else if c_len >= r_len {
        1.0
    } else {
        (1.0 - r_len as f64 / c_len as f64).exp()
    };
    let p = |n: usize| -> f64 {
        if den[n - 1] == 0.0 {
            1.0
        } else if num[n - 1] == 0.0 {
            epsilon / den[n - 1]
        } else {
            num[n - 1] / den[n - 1]
        }
    };
    let score = |k: usize| -> f64 {
        let mut acc = 0.0;
        for n in 1..=k {
            let pn = p(n);
            if pn <= 0.0 {
                return 0.0;
            }
            acc += pn.ln();
        }
        bp * (acc / k as f64).exp()
    };
    (score(1), score(2), score(4))
}

fn twenty_pairs() -> (Vec<&'static str>, Vec<&'static str>) {
    let cands = vec![
        "the cat sat on the mat",
        "a dog barked at the moon",
        "i would like a cup of tea please",
        "no way that works",
        "sure here you go right now",
        "what time does the shop open",
        "pass me the salt",
        "that is a gross idea",
        "we will see about it later",
        "sorry i cannot help with that",
        "yes of course i agree",
        "how about a walk in the park",
        "do it now or never",
        "heads up the meeting moved",
        "leave me alone please",
        "fine by me as always",
        "gladly done my friend",
        "maybe later after lunch",
        "stop asking me questions",
        "wonderful here you go again",
    ];
    let refs = vec![
        "the cat sat on a mat",
        "the dog barked at a moon",
        "i want a cup of tea",
        "there is no way that works",
        "sure take it right now",
        "when does the shop open",
        "please pass the salt over",
        "that idea is gross",
        "we shall see later",
        "sorry i can not help",
        "yes i agree of course",
        "how about walking in a park",
        "do it immediately",
        "heads up they moved the meeting",
        "please leave me alone",
        "that is fine by me",
        "done gladly friend",
        "perhaps later after we eat",
        "stop asking so many questions",
        "wonderful take it again",
    ];
    (cands, refs)
}

#[test]
fn bleu_matches_oracle_within_1e6() {
    let (cands, refs) = twenty_pairs();
    let got = bleu(&cands, &refs).unwrap();
    let (b1, b2, b4) = oracle_bleu(&cands, &refs, BLEU_EPSILON);
    assert!((got.bleu1 - b1).abs() < 1e-6, "{} vs {b1}", got.bleu1);
    assert!((got.bleu2 - b2).abs() < 1e-6, "{} vs {b2}", got.bleu2);
    assert!((got.bleu4 - b4).abs() < 1e-6, "{} vs {b4}", got.bleu4);
    for v in [got.bleu1, got.bleu2, got.bleu4] {
        assert!((0.0..=1.0).contains(&v));
    }
}

#[test]
fn bleu_is_permutation_invariant() {
    let (mut cands, mut refs) = twenty_pairs();
    let before = bleu(&cands, &refs).unwrap();
    // consistent reordering of (candidate, reference) pairs
    cands.rotate_left(7);
    refs.rotate_left(7);
    let after = bleu(&cands, &refs).unwrap();
    assert_eq!(before, after);
}

#[test]
fn unsmoothed_zero_overlap_is_exactly_zero() {
    let s = bleu_with_epsilon(&["aa bb", "cc dd"], &["xx yy", "zz ww"], 0.0).unwrap();
    assert_eq!((s.bleu1, s.bleu2, s.bleu4), (0.0, 0.0, 0.0));
}

// ---------------------------------------------------------------------
// ROUGE oracle: memoized recursive LCS and string-keyed overlap counting.
// ---------------------------------------------------------------------

fn lcs_rec(a: &[String], b: &[String], i: usize, j: usize, memo: &mut HashMap<(usize, usize), usize>) -> usize {
    if i == 0 || j == 0 {
        return 0;
    }
    if let Some(&v) = memo.get(&(i, j)) {
        return v;
    }
    let v = if a[i - 1] == b[j - 1] {
        lcs_rec(a, b, i - 1, j - 1, memo) + 1
    } else {
        lcs_rec(a, b, i - 1, j, memo).max(lcs_rec(a, b, i, j - 1, memo))
    };
    memo.insert((i, j), v);
    v
}

fn oracle_rouge(cands: &[&str], refs: &[&str]) -> (f64, f64, f64) {
    let mut r1 = 0.0;
    let mut r2 = 0.0;
    let mut rl = 0.0;
    for (c, r) in cands.iter().zip(refs) {
        let ct = toks(c);
        let rt = toks(r);
        for (n, acc) in [(1usize, &mut r1), (2, &mut r2)] {
            let c_total = ct.len().saturating_sub(n - 1);
            let r_total = rt.len().saturating_sub(n - 1);
            if c_total == 0 || r_total == 0 {
                continue;
            }
            let cm = gram_map(&ct, n);
            let rm = gram_map(&rt, n);
            let mut m = 0usize;
            for (g, &count) in &cm {
                m += count.min(rm.get(g).copied().unwrap_or(0));
            }
            let p = m as f64 / c_total as f64;
            let rec = m as f64 / r_total as f64;
            if p + rec > 0.0 {
                *acc += 2.0 * p * rec / (p + rec);
            }
        }
        if !ct.is_empty() && !rt.is_empty() {
            let mut memo = HashMap::new();
            let l = lcs_rec(&ct, &rt, ct.len(), rt.len(), &mut memo) as f64;
            let p = l / ct.len() as f64;
            let rec = l / rt.len() as f64;
            if p + rec > 0.0 {
                rl += 2.0 * p * rec / (p + rec);
            }
        }
    }
    let n = cands.len() as f64;
    (r1 / n, r2 / n, rl / n)
}

#[test]
fn rouge_matches_oracle_within_1e6() {
    let (cands, refs) = twenty_pairs();
    let got = rouge(&cands, &refs).unwrap();
    let (r1, r2, rl) = oracle_rouge(&cands, &refs);
    assert!((got.rouge1 - r1).abs() < 1e-6);
    assert!((got.rouge2 - r2).abs() < 1e-6);
    assert!((got.rouge_l - rl).abs() < 1e-6);
    for v in [got.rouge1, got.rouge2, got.rouge_l] {
        assert!((0.0..=1.0).contains(&v));
    }
}

#[test]
fn rouge_is_permutation_invariant() {
    let (mut cands, mut refs) = twenty_pairs();
    let before = rouge(&cands, &refs).unwrap();
    cands.rotate_left(11);
    refs.rotate_left(11);
    let after = rouge(&cands, &refs).unwrap();
    assert_eq!(before, after);
}
