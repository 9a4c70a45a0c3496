//! Corpus BLEU (4-gram, brevity penalty, unsmoothed — the multi-bleu
//! convention, 0–100) plus an add-one-smoothed sentence-level variant for
//! per-sentence diagnostics.

use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BleuError {
    #[error("hypothesis and reference counts differ: {hypotheses} vs {references}")]
    LengthMismatch {
        hypotheses: usize,
        references: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct BleuReport {
    /// BP · exp(Σ ln p_n / 4) · 100 when all p_n > 0; otherwise 0.
    pub bleu: f64,
    pub precisions: [f64; 4],
    pub brevity_penalty: f64,
    pub hyp_length: usize,
    pub ref_length: usize,
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts: HashMap<&[String], usize> = HashMap::new();
    if tokens.len() >= n {
        for gram in tokens.windows(n) {
            *counts.entry(gram).or_insert(0) += 1;
        }
    }
    counts
}

fn brevity_penalty(hyp_length: usize, ref_length: usize) -> f64 {
    if hyp_length == 0 {
        0.0
    } else if hyp_length > ref_length {
        1.0
    } else {
        (1.0 - ref_length as f64 / hyp_length as f64).exp()
    }
}

/// Unsmoothed corpus BLEU with one reference per hypothesis.
pub fn corpus_bleu(
    hypotheses: &[Vec<String>],
    references: &[Vec<String>],
) -> Result<BleuReport, BleuError> {
    if hypotheses.len() != references.len() {
        return Err(BleuError::LengthMismatch {
            hypotheses: hypotheses.len(),
            references: references.len(),
        });
    }
    let mut matches = [0usize; 4];
    let mut totals = [0usize; 4];
    let mut hyp_length = 0usize;
    let mut ref_length = 0usize;
    for (hyp, reference) in hypotheses.iter().zip(references) {
        hyp_length += hyp.len();
        ref_length += reference.len();
        for n in 1..=4 {
            let ref_counts = ngram_counts(reference, n);
            for (gram, count) in ngram_counts(hyp, n) {
                totals[n - 1] += count;
                let clip = ref_counts.get(gram).copied().unwrap_or(0);
                matches[n - 1] += count.min(clip);
            }
        }
    }
    let mut precisions = [0.0f64; 4];
    for n in 0..4 {
        if totals[n] > 0 {
            precisions[n] = matches[n] as f64 / totals[n] as f64;
        }
    }
    let bp = brevity_penalty(hyp_length, ref_length);
    let bleu = if precisions.iter().all(|&p| p > 0.0) {
        let log_mean = precisions.iter().map(|p| p.ln()).sum::<f64>() / 4.0;
        bp * log_mean.exp() * 100.0
    } else {
        0.0
    };
    Ok(BleuReport {
        bleu,
        precisions,
        brevity_penalty: bp,
        hyp_length,
        ref_length,
    })
}

/// Sentence-level BLEU with add-one smoothing on the n ≥ 2 precisions,
/// for per-sentence diagnostics only.
pub fn sentence_bleu(hypothesis: &[String], reference: &[String]) -> f64 {
    let mut log_sum = 0.0f64;
    for n in 1..=4 {
        let ref_counts = ngram_counts(reference, n);
        let hyp_counts = ngram_counts(hypothesis, n);
        let mut matched = 0usize;
        let mut total = 0usize;
        for (gram, count) in hyp_counts {
            total += count;
            matched += count.min(ref_counts.get(gram).copied().unwrap_or(0));
        }
        let (num, den) = if n == 1 {
            (matched as f64, total as f64)
        } else {
            ((matched + 1) as f64, (total + 1) as f64)
        };
        if num == 0.0 || den == 0.0 {
            return 0.0;
        }
        log_sum += (num / den).ln();
    }
    brevity_penalty(hypothesis.len(), reference.len()) * (log_sum / 4.0).exp() * 100.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(|t| t.to_string()).collect()
    }

    #[test]
    fn perfect_match_is_100() {
        let sents = vec![toks("the cat sat on the mat"), toks("he ate the cake")];
        let report = corpus_bleu(&sents, &sents).unwrap();
        assert!((report.bleu - 100.0).abs() < 1e-9);
        assert_eq!(report.brevity_penalty, 1.0);
        for p in report.precisions {
            assert_eq!(p, 1.0);
        }
    }

    #[test]
    fn zero_fourgram_matches_give_zero() {
        let hyp = vec![toks("a b c d e")];
        let reference = vec![toks("a b x c d")];
        // p4 = 0 (no common 4-gram) → unsmoothed BLEU 0.
        let report = corpus_bleu(&hyp, &reference).unwrap();
        assert_eq!(report.bleu, 0.0);
        assert!(report.precisions[0] > 0.0);
        assert_eq!(report.precisions[3], 0.0);
    }

    #[test]
    fn two_sentence_hand_example() {
        // Counted by hand:
        //   sentence 1: hyp == ref, 6 tokens → 6/6, 5/5, 4/4, 3/3;
        //   sentence 2: hyp [he ate the cake], ref [he ate the big cake]
        //     → 4/4 unigrams, 2/3 bigrams, 1/2 trigrams, 0/1 4-grams.
        // Totals: p1 = 10/10, p2 = 7/8, p3 = 5/6, p4 = 3/4;
        // lengths: hyp 10, ref 11 → BP = exp(1 − 11/10).
        let hyps = vec![toks("the cat sat on the mat"), toks("he ate the cake")];
        let refs = vec![toks("the cat sat on the mat"), toks("he ate the big cake")];
        let report = corpus_bleu(&hyps, &refs).unwrap();
        assert_eq!(report.precisions, [1.0, 7.0 / 8.0, 5.0 / 6.0, 3.0 / 4.0]);
        assert_eq!((report.hyp_length, report.ref_length), (10, 11));
        let expected_bp = (1.0f64 - 11.0 / 10.0).exp();
        assert!((report.brevity_penalty - expected_bp).abs() < 1e-12);
        let expected =
            expected_bp * ((7.0f64 / 8.0) * (5.0 / 6.0) * (3.0 / 4.0)).powf(0.25) * 100.0;
        assert!((report.bleu - expected).abs() < 1e-9);
    }

    #[test]
    fn clipping_counts() {
        // "the the the" against "the cat": only one "the" may count.
        let report = corpus_bleu(&[toks("the the the")], &[toks("the cat")]).unwrap();
        assert!((report.precisions[0] - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn length_mismatch_is_error() {
        assert!(matches!(
            corpus_bleu(&[toks("a")], &[]).unwrap_err(),
            BleuError::LengthMismatch { hypotheses: 1, references: 0 }
        ));
    }

    #[test]
    fn empty_hypothesis_scores_zero() {
        let report = corpus_bleu(&[vec![]], &[toks("a b")]).unwrap();
        assert_eq!(report.bleu, 0.0);
        assert_eq!(report.brevity_penalty, 0.0);
    }

    #[test]
    fn sentence_bleu_smoothing() {
        // Identical sentences: every smoothed ratio is (m+1)/(m+1) = 1.
        assert!((sentence_bleu(&toks("a b"), &toks("a b")) - 100.0).abs() < 1e-9);
        assert_eq!(sentence_bleu(&toks("x y"), &toks("a b")), 0.0);
        // One substitution kills all 4-grams, yet smoothing keeps the
        // score strictly positive (unsmoothed corpus BLEU would be 0).
        let worse = sentence_bleu(&toks("a b x d"), &toks("a b c d"));
        assert!(worse > 0.0 && worse < 100.0);
        let better = sentence_bleu(&toks("a b c e"), &toks("a b c d"));
        assert!(better > worse);
    }

    proptest! {
        #[test]
        fn bleu_self_is_100(
            sents in proptest::collection::vec(
                proptest::collection::vec("[abc]", 4..9), 1..5),
        ) {
            let report = corpus_bleu(&sents, &sents).unwrap();
            prop_assert!((report.bleu - 100.0).abs() < 1e-9);
        }

        #[test]
        fn bleu_permutation_invariant(
            pairs in proptest::collection::vec(
                (proptest::collection::vec("[ab]", 4..8),
                 proptest::collection::vec("[ab]", 4..8)), 2..6),
            rot in 1usize..5,
        ) {
            let hyps: Vec<Vec<String>> = pairs.iter().map(|(h, _)| h.clone()).collect();
            let refs: Vec<Vec<String>> = pairs.iter().map(|(_, r)| r.clone()).collect();
            let base = corpus_bleu(&hyps, &refs).unwrap();
            let mut order: Vec<usize> = (0..pairs.len()).collect();
            order.rotate_left(rot % pairs.len());
            let hyps2: Vec<Vec<String>> = order.iter().map(|&i| hyps[i].clone()).collect();
            let refs2: Vec<Vec<String>> = order.iter().map(|&i| refs[i].clone()).collect();
            let permuted = corpus_bleu(&hyps2, &refs2).unwrap();
            prop_assert!((permuted.bleu - base.bleu).abs() < 1e-9);
            prop_assert_eq!(permuted.precisions, base.precisions);
        }
    }
}
