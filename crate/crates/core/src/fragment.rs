//! Fragment-level TM construction: LCS between the input and the TM source,
//! Viterbi projection onto the TM target, contiguity grouping, and
//! punctuation/stop-word filtering.

use crate::align::{align_viterbi, Model1Table};
use crate::text::is_punct_token;
use std::collections::HashSet;
use std::path::Path;

/// A longest common subsequence with its positions in both sequences.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommonSubsequence {
    pub words: Vec<String>,
    pub positions_in_x: Vec<usize>,
    pub positions_in_xtm: Vec<usize>,
}

impl CommonSubsequence {
    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

/// Longest common subsequence of `x` and `x_tm`. Among equal-length
/// solutions the result prefers the earliest positions in `x_tm`
/// (deterministic walk: match when tokens agree, otherwise advance in `x`
/// when that keeps the optimum, else advance in `x_tm`).
pub fn lcs(x: &[String], x_tm: &[String]) -> CommonSubsequence {
    let n = x.len();
    let m = x_tm.len();
    // dp[i][j] = LCS length of the suffixes x[i..] and x_tm[j..].
    let mut dp = vec![vec![0u32; m + 1]; n + 1];
    for i in (0..n).rev() {
        for j in (0..m).rev() {
            dp[i][j] = if x[i] == x_tm[j] {
                dp[i + 1][j + 1] + 1
            } else {
                dp[i + 1][j].max(dp[i][j + 1])
            };
        }
    }
    let mut words = Vec::new();
    let mut positions_in_x = Vec::new();
    let mut positions_in_xtm = Vec::new();
    let (mut i, mut j) = (0, 0);
    while i < n && j < m {
        if x[i] == x_tm[j] {
            words.push(x[i].clone());
            positions_in_x.push(i);
            positions_in_xtm.push(j);
            i += 1;
            j += 1;
        } else if dp[i + 1][j] >= dp[i][j + 1] {
            i += 1;
        } else {
            j += 1;
        }
    }
    CommonSubsequence {
        words,
        positions_in_x,
        positions_in_xtm,
    }
}

/// Ordered parenthesizable fragments for both TM sides. Either list may be
/// empty after filtering; such a set is unusable and callers fall back to
/// decoding without a TM.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FragmentSet {
    pub source_fragments: Vec<Vec<String>>,
    pub target_fragments: Vec<Vec<String>>,
}

impl FragmentSet {
    pub fn is_usable(&self) -> bool {
        !self.source_fragments.is_empty() && !self.target_fragments.is_empty()
    }
}

/// Built-in stop words for the filtering step; unknown languages get an
/// empty set. Matching is case-insensitive.
pub fn builtin_stop_words(lang: &str) -> HashSet<String> {
    let words: &[&str] = match lang {
        "en" => &[
            "a", "an", "the", "of", "to", "in", "on", "at", "by", "for", "with", "and", "or",
            "but", "is", "are", "was", "were", "be", "been", "it", "its", "he", "she", "they",
            "we", "you", "i", "this", "that", "as", "from", "us",
        ],
        "de" => &[
            "der", "die", "das", "den", "dem", "des", "ein", "eine", "einen", "einem", "eines",
            "und", "oder", "aber", "ist", "sind", "war", "waren", "zu", "in", "an", "auf", "mit",
            "von", "für", "als", "es", "er", "sie", "wir", "ihr", "ich", "dass",
        ],
        _ => &[],
    };
    words.iter().map(|w| w.to_string()).collect()
}

/// One stop word per line; `#` starts a comment.
pub fn load_stop_words(path: &Path) -> std::io::Result<HashSet<String>> {
    let text = std::fs::read_to_string(path)?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| l.to_lowercase())
        .collect())
}

fn group_consecutive(positions: &[usize]) -> Vec<Vec<usize>> {
    let mut runs: Vec<Vec<usize>> = Vec::new();
    for &p in positions {
        match runs.last_mut() {
            Some(run) if *run.last().unwrap() + 1 == p => run.push(p),
            _ => runs.push(vec![p]),
        }
    }
    runs
}

/// Trim boundary punctuation, then drop the fragment if it is empty or a
/// single stop word.
fn filter_fragment(tokens: &[String], stop_words: &HashSet<String>) -> Option<Vec<String>> {
    let mut start = 0;
    let mut end = tokens.len();
    while start < end && is_punct_token(&tokens[start]) {
        start += 1;
    }
    while end > start && is_punct_token(&tokens[end - 1]) {
        end -= 1;
    }
    let kept = &tokens[start..end];
    if kept.is_empty() {
        return None;
    }
    if kept.len() == 1 && stop_words.contains(&kept[0].to_lowercase()) {
        return None;
    }
    Some(kept.to_vec())
}

/// Build fragment-level TMs for input `x` against the retrieved pair
/// (`x_tm`, `y_tm`):
/// 1. LCS positions in `x_tm` mark the shared words;
/// 2. maximal consecutive runs of those positions become source fragments;
/// 3. Viterbi-aligned target positions of each run, grouped into maximal
///    consecutive runs, become target fragments (source order first, target
///    position order within a source run);
/// 4. boundary punctuation is trimmed and empty or single-stop-word
///    fragments are dropped, each side independently.
pub fn build_fragment_tm(
    x: &[String],
    x_tm: &[String],
    y_tm: &[String],
    table: &Model1Table,
    stop_words: &HashSet<String>,
) -> FragmentSet {
    let cs = lcs(x, x_tm);
    let alignment = align_viterbi(table, x_tm, y_tm);
    let source_runs = group_consecutive(&cs.positions_in_xtm);

    let mut source_fragments = Vec::new();
    let mut target_fragments = Vec::new();
    for run in &source_runs {
        let tokens: Vec<String> = run.iter().map(|&p| x_tm[p].clone()).collect();
        if let Some(f) = filter_fragment(&tokens, stop_words) {
            source_fragments.push(f);
        }
        let run_set: HashSet<usize> = run.iter().copied().collect();
        let mut targets: Vec<usize> = alignment
            .links
            .iter()
            .filter(|&&(i, _)| run_set.contains(&i))
            .map(|&(_, j)| j)
            .collect();
        targets.sort_unstable();
        for target_run in group_consecutive(&targets) {
            let tokens: Vec<String> = target_run.iter().map(|&p| y_tm[p].clone()).collect();
            if let Some(f) = filter_fragment(&tokens, stop_words) {
                target_fragments.push(f);
            }
        }
    }
    FragmentSet {
        source_fragments,
        target_fragments,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::align::Model1Table;
    use proptest::prelude::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(|t| t.to_string()).collect()
    }

    #[test]
    fn lcs_identity_and_disjoint() {
        let s = toks("a b c");
        let cs = lcs(&s, &s);
        assert_eq!(cs.words, s);
        assert_eq!(cs.positions_in_x, [0, 1, 2]);
        assert_eq!(cs.positions_in_xtm, [0, 1, 2]);
        let empty = lcs(&toks("a"), &toks("b"));
        assert!(empty.is_empty());
    }

    #[test]
    fn lcs_prefers_earliest_tm_positions() {
        // Both "a" (at tm position 1) and "b" (at tm position 0) are
        // length-1 solutions; the earliest tm position must win.
        let cs = lcs(&toks("a b"), &toks("b a"));
        assert_eq!(cs.words, ["b"]);
        assert_eq!(cs.positions_in_xtm, [0]);
    }

    #[test]
    fn lcs_table_pair() {
        let x = toks("She gave us a full account of the traffic accident .");
        let x_tm = toks("She gave the police a full account of the incident .");
        let cs = lcs(&x, &x_tm);
        assert_eq!(
            cs.words,
            ["She", "gave", "a", "full", "account", "of", "the", "."]
        );
        assert_eq!(cs.positions_in_x, [0, 1, 3, 4, 5, 6, 7, 10]);
        assert_eq!(cs.positions_in_xtm, [0, 1, 4, 5, 6, 7, 8, 10]);
    }

    #[test]
    fn group_runs() {
        assert_eq!(
            group_consecutive(&[0, 1, 4, 5, 6, 10]),
            vec![vec![0, 1], vec![4, 5, 6], vec![10]]
        );
        assert!(group_consecutive(&[]).is_empty());
    }

    #[test]
    fn filter_trims_punct_and_drops_stop_words() {
        let stops = builtin_stop_words("en");
        assert_eq!(
            filter_fragment(&toks(", a b ."), &stops),
            Some(toks("a b"))
        );
        assert_eq!(filter_fragment(&toks(". ,"), &stops), None);
        assert_eq!(filter_fragment(&toks("the"), &stops), None);
        assert_eq!(filter_fragment(&toks("The"), &stops), None);
        assert_eq!(filter_fragment(&toks("cat"), &stops), Some(toks("cat")));
    }

    /// Hand-built lexical table for the worked example: every probability
    /// chosen so the Viterbi argmax is unambiguous where it matters.
    fn worked_example_table() -> Model1Table {
        let source_vocab: Vec<String> =
            toks("She gave the police a full account of incident .");
        let target_vocab: Vec<String> =
            toks("Sie gab der Polizei einen voll@@ ständigen Bericht über den Vorfall .");
        let uniform: Vec<(u32, f64)> = (0..12).map(|i| (i, 1.0 / 12.0)).collect();
        let rows = vec![
            uniform,                          // NULL
            vec![(0, 1.0)],                   // She → Sie
            vec![(1, 1.0)],                   // gave → gab
            vec![(2, 0.6), (9, 0.4)],         // the → der | den
            vec![(3, 1.0)],                   // police → Polizei
            vec![(4, 1.0)],                   // a → einen
            vec![(5, 0.5), (6, 0.5)],         // full → voll@@ | ständigen
            vec![(7, 1.0)],                   // account → Bericht
            vec![(8, 0.5), (9, 0.5)],         // of → über | den
            vec![(10, 1.0)],                  // incident → Vorfall
            vec![(11, 1.0)],                  // . → .
        ];
        Model1Table::from_rows(source_vocab, target_vocab, rows).unwrap()
    }

    #[test]
    fn worked_example_fragments() {
        let x = toks("She gave us a full account of the traffic accident .");
        let x_tm = toks("She gave the police a full account of the incident .");
        let y_tm = toks("Sie gab der Polizei einen voll@@ ständigen Bericht über den Vorfall .");
        let table = worked_example_table();
        let stops = builtin_stop_words("en");
        let set = build_fragment_tm(&x, &x_tm, &y_tm, &table, &stops);
        assert_eq!(
            set.source_fragments,
            vec![toks("She gave"), toks("a full account of the")]
        );
        assert_eq!(
            set.target_fragments,
            vec![toks("Sie gab"), toks("einen voll@@ ständigen Bericht über den")]
        );
        assert!(set.is_usable());
    }

    #[test]
    fn disjoint_inputs_give_unusable_set() {
        let table = worked_example_table();
        let set = build_fragment_tm(
            &toks("x y z"),
            &toks("p q r"),
            &toks("P Q R"),
            &table,
            &HashSet::new(),
        );
        assert!(!set.is_usable());
        assert!(set.source_fragments.is_empty());
        assert!(set.target_fragments.is_empty());
    }

    /// Exhaustive oracle: every subsequence of `x` (bitmask) that embeds
    /// into `x_tm`, taking per-word-sequence earliest embeddings; returns
    /// (max length, lexicographically smallest tm-position vector).
    fn oracle_best(x: &[String], x_tm: &[String]) -> (usize, Vec<usize>) {
        let n = x.len();
        let mut best_len = 0usize;
        let mut best_pt: Vec<usize> = Vec::new();
        for mask in 0u32..(1 << n) {
            let words: Vec<&String> =
                (0..n).filter(|&i| mask & (1 << i) != 0).map(|i| &x[i]).collect();
            // Greedy earliest embedding into x_tm.
            let mut pt = Vec::with_capacity(words.len());
            let mut j = 0usize;
            let mut ok = true;
            for w in &words {
                match x_tm[j..].iter().position(|t| &t == w) {
                    Some(off) => {
                        pt.push(j + off);
                        j += off + 1;
                    }
                    None => {
                        ok = false;
                        break;
                    }
                }
            }
            if !ok {
                continue;
            }
            if words.len() > best_len || (words.len() == best_len && pt < best_pt) {
                best_len = words.len();
                best_pt = pt;
            }
        }
        (best_len, best_pt)
    }

    proptest! {
        #[test]
        fn lcs_matches_enumeration_oracle(
            x in proptest::collection::vec("[abc]", 0..8),
            x_tm in proptest::collection::vec("[abc]", 0..8),
        ) {
            let cs = lcs(&x, &x_tm);
            // Validity: claimed positions carry the claimed words.
            for (k, w) in cs.words.iter().enumerate() {
                prop_assert_eq!(&x[cs.positions_in_x[k]], w);
                prop_assert_eq!(&x_tm[cs.positions_in_xtm[k]], w);
            }
            prop_assert!(cs.positions_in_x.windows(2).all(|w| w[0] < w[1]));
            prop_assert!(cs.positions_in_xtm.windows(2).all(|w| w[0] < w[1]));
            let (best_len, best_pt) = oracle_best(&x, &x_tm);
            prop_assert_eq!(cs.len(), best_len);
            prop_assert_eq!(&cs.positions_in_xtm, &best_pt);
        }

        #[test]
        fn fragments_are_contiguous_substrings(
            x in proptest::collection::vec("[ab.]", 1..8),
            x_tm in proptest::collection::vec("[ab.]", 1..8),
        ) {
            let table = worked_example_table();
            let y_tm = x_tm.clone();
            let set = build_fragment_tm(&x, &x_tm, &y_tm, &table, &HashSet::new());
            let contains = |hay: &[String], needle: &[String]| {
                hay.windows(needle.len()).any(|w| w == needle)
            };
            for f in &set.source_fragments {
                prop_assert!(contains(&x_tm, f));
            }
            for f in &set.target_fragments {
                prop_assert!(contains(&y_tm, f));
            }
        }
    }
}
