//! Prompt templates: join the retrieved TM pair and the input sentence into
//! an encoder input and a forced decoder prefix.
//!
//! Five sentence-level renderings of a TM side:
//!   directly    — append "." unless the TM already ends with punctuation;
//!   comma       — replace a trailing punctuation token with "," (append if none);
//!   semicolon   — likewise with ";";
//!   conjunction — ensure ".", then add the language's conjunction word and ",";
//!   parenthesis — wrap in "(" ... ")" leaving TM punctuation untouched.
//! The encoder side is the rendered source TM followed by the unmodified
//! input; the forced prefix is the rendered target TM. Any begin-of-sentence
//! symbol is the decoder's concern, never part of the prefix.

use crate::text::ends_with_punct;
use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TemplateKind {
    Directly,
    Comma,
    Semicolon,
    Conjunction,
    Parenthesis,
    Fragment,
}

impl TemplateKind {
    pub const SENTENCE_LEVEL: [TemplateKind; 5] = [
        TemplateKind::Directly,
        TemplateKind::Comma,
        TemplateKind::Semicolon,
        TemplateKind::Conjunction,
        TemplateKind::Parenthesis,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TemplateKind::Directly => "directly",
            TemplateKind::Comma => "comma",
            TemplateKind::Semicolon => "semicolon",
            TemplateKind::Conjunction => "conjunction",
            TemplateKind::Parenthesis => "parenthesis",
            TemplateKind::Fragment => "fragment",
        }
    }
}

impl fmt::Display for TemplateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TemplateKind {
    type Err = TemplateError;

    fn from_str(s: &str) -> Result<Self, TemplateError> {
        match s.to_ascii_lowercase().as_str() {
            "directly" => Ok(TemplateKind::Directly),
            "comma" => Ok(TemplateKind::Comma),
            "semicolon" => Ok(TemplateKind::Semicolon),
            "conjunction" => Ok(TemplateKind::Conjunction),
            "parenthesis" => Ok(TemplateKind::Parenthesis),
            "fragment" => Ok(TemplateKind::Fragment),
            other => Err(TemplateError::UnknownKind(other.to_string())),
        }
    }
}

#[derive(Debug, Error)]
pub enum TemplateError {
    #[error("unknown template kind {0:?}")]
    UnknownKind(String),
    #[error("fragment templates are built with apply_fragment_template")]
    FragmentKind,
    #[error("no conjunction entry for language {0:?}")]
    MissingConjunction(String),
    #[error("{0} must be non-empty")]
    EmptySequence(&'static str),
    #[error("fragment lists must be non-empty on both sides")]
    EmptyFragmentList,
    #[error("{side} fragment {index} is empty")]
    EmptyFragment { side: &'static str, index: usize },
    #[error("i/o error")]
    Io(#[from] std::io::Error),
    #[error("conjunction file line {line}: expected lang=word[ comma]")]
    BadConjunctionLine { line: usize },
}

/// Per-language juxtaposing conjunction word plus the comma token appended
/// after it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConjunctionTable {
    entries: BTreeMap<String, (String, String)>,
}

impl Default for ConjunctionTable {
    fn default() -> Self {
        let mut t = ConjunctionTable {
            entries: BTreeMap::new(),
        };
        t.insert("en", "And", ",");
        t.insert("de", "Und", ",");
        t
    }
}

impl ConjunctionTable {
    pub fn insert(&mut self, lang: &str, word: &str, comma: &str) {
        self.entries
            .insert(lang.to_string(), (word.to_string(), comma.to_string()));
    }

    pub fn get(&self, lang: &str) -> Option<&(String, String)> {
        self.entries.get(lang)
    }

    /// Extend the default table from a key-value file: one `lang=word` or
    /// `lang=word comma` per line; `#` starts a comment.
    pub fn load(path: &Path) -> Result<Self, TemplateError> {
        let mut table = ConjunctionTable::default();
        let text = std::fs::read_to_string(path)?;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (lang, value) = line
                .split_once('=')
                .ok_or(TemplateError::BadConjunctionLine { line: i + 1 })?;
            let mut parts = value.split_whitespace();
            let word = parts
                .next()
                .ok_or(TemplateError::BadConjunctionLine { line: i + 1 })?;
            let comma = parts.next().unwrap_or(",");
            table.insert(lang.trim(), word, comma);
        }
        Ok(table)
    }
}

/// The decoder-ready product of a template: encoder input and forced prefix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptedPair {
    pub encoder_tokens: Vec<String>,
    pub forced_prefix: Vec<String>,
    pub template: TemplateKind,
}

fn render_side(
    tm: &[String],
    kind: TemplateKind,
    lang: &str,
    conj: &ConjunctionTable,
) -> Result<Vec<String>, TemplateError> {
    let mut out = tm.to_vec();
    match kind {
        TemplateKind::Directly => {
            if !ends_with_punct(&out) {
                out.push(".".to_string());
            }
        }
        TemplateKind::Comma | TemplateKind::Semicolon => {
            let mark = if kind == TemplateKind::Comma { "," } else { ";" };
            if ends_with_punct(&out) {
                *out.last_mut().unwrap() = mark.to_string();
            } else {
                out.push(mark.to_string());
            }
        }
        TemplateKind::Conjunction => {
            if !ends_with_punct(&out) {
                out.push(".".to_string());
            }
            let (word, comma) = conj
                .get(lang)
                .ok_or_else(|| TemplateError::MissingConjunction(lang.to_string()))?;
            out.push(word.clone());
            out.push(comma.clone());
        }
        TemplateKind::Parenthesis => {
            out.insert(0, "(".to_string());
            out.push(")".to_string());
        }
        TemplateKind::Fragment => return Err(TemplateError::FragmentKind),
    }
    Ok(out)
}

/// Build the prompt for a sentence-level template: encoder side is the
/// rendered source TM (in `source_lang`) followed by the input; the forced
/// prefix is the rendered target TM (in `target_lang`).
pub fn apply_sentence_template(
    kind: TemplateKind,
    src_tm: &[String],
    tgt_tm: &[String],
    input: &[String],
    source_lang: &str,
    target_lang: &str,
    conj: &ConjunctionTable,
) -> Result<PromptedPair, TemplateError> {
    if kind == TemplateKind::Fragment {
        return Err(TemplateError::FragmentKind);
    }
    if src_tm.is_empty() {
        return Err(TemplateError::EmptySequence("source TM"));
    }
    if tgt_tm.is_empty() {
        return Err(TemplateError::EmptySequence("target TM"));
    }
    if input.is_empty() {
        return Err(TemplateError::EmptySequence("input"));
    }
    let mut encoder_tokens = render_side(src_tm, kind, source_lang, conj)?;
    encoder_tokens.extend(input.iter().cloned());
    let forced_prefix = render_side(tgt_tm, kind, target_lang, conj)?;
    Ok(PromptedPair {
        encoder_tokens,
        forced_prefix,
        template: kind,
    })
}

/// Build the prompt for fragment-level TMs: each fragment is wrapped in
/// parentheses, source groups precede the input on the encoder side, target
/// groups form the forced prefix.
pub fn apply_fragment_template(
    src_fragments: &[Vec<String>],
    tgt_fragments: &[Vec<String>],
    input: &[String],
) -> Result<PromptedPair, TemplateError> {
    if src_fragments.is_empty() || tgt_fragments.is_empty() {
        return Err(TemplateError::EmptyFragmentList);
    }
    if input.is_empty() {
        return Err(TemplateError::EmptySequence("input"));
    }
    let wrap = |fragments: &[Vec<String>], side| -> Result<Vec<String>, TemplateError> {
        let mut out = Vec::new();
        for (index, f) in fragments.iter().enumerate() {
            if f.is_empty() {
                return Err(TemplateError::EmptyFragment { side, index });
            }
            out.push("(".to_string());
            out.extend(f.iter().cloned());
            out.push(")".to_string());
        }
        Ok(out)
    };
    let mut encoder_tokens = wrap(src_fragments, "source")?;
    encoder_tokens.extend(input.iter().cloned());
    let forced_prefix = wrap(tgt_fragments, "target")?;
    Ok(PromptedPair {
        encoder_tokens,
        forced_prefix,
        template: TemplateKind::Fragment,
    })
}
