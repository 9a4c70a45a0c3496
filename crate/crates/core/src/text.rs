//! Rule tokenizer and retrieval normalization.
//!
//! Tokenization is language-independent: split on whitespace, then split
//! every chunk into maximal runs of punctuation vs. non-punctuation
//! characters, so "a,b" becomes ["a", ",", "b"] and "(2000)" becomes
//! ["(", "2000", ")"]. Retrieval normalization drops tokens that are pure
//! punctuation or pure numbers and lowercases the rest. Lowercasing is a
//! deliberate choice; see the crate docs for the rationale.

use regex::Regex;
use std::sync::OnceLock;

fn punct_char_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\A\p{P}\z").unwrap())
}

fn number_token_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\A[0-9]+([.,][0-9]+)*\z").unwrap())
}

/// True if `c` belongs to a Unicode punctuation category (P*).
pub fn is_punct_char(c: char) -> bool {
    let mut buf = [0u8; 4];
    punct_char_re().is_match(c.encode_utf8(&mut buf))
}

/// True for non-empty tokens made entirely of punctuation characters.
pub fn is_punct_token(token: &str) -> bool {
    !token.is_empty() && token.chars().all(is_punct_char)
}

/// True for decimal numbers, optionally with `.`/`,` group or decimal
/// separators ("42", "3.14", "1,325").
pub fn is_number_token(token: &str) -> bool {
    number_token_re().is_match(token)
}

/// Split `text` into tokens: whitespace first, then maximal punctuation /
/// non-punctuation runs inside each chunk. Never yields empty tokens, and is
/// idempotent when tokens are re-joined with single spaces. The language
/// code is accepted for interface symmetry; the rules do not depend on it.
pub fn tokenize(text: &str, _lang: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    for chunk in text.split_whitespace() {
        let mut run = String::new();
        let mut run_punct = false;
        for c in chunk.chars() {
            let punct = is_punct_char(c);
            if !run.is_empty() && punct != run_punct {
                tokens.push(std::mem::take(&mut run));
            }
            run.push(c);
            run_punct = punct;
        }
        if !run.is_empty() {
            tokens.push(run);
        }
    }
    tokens
}

/// Drop pure-punctuation and pure-number tokens, lowercase the remainder.
/// Order is preserved; the operation is idempotent.
pub fn normalize_for_retrieval<S: AsRef<str>>(tokens: &[S]) -> Vec<String> {
    tokens
        .iter()
        .map(|t| t.as_ref())
        .filter(|t| !is_punct_token(t) && !is_number_token(t))
        .map(|t| t.to_lowercase())
        .collect()
}

/// True if the final token is pure punctuation. Empty input yields false.
pub fn ends_with_punct<S: AsRef<str>>(tokens: &[S]) -> bool {
    tokens.last().is_some_and(|t| is_punct_token(t.as_ref()))
}
