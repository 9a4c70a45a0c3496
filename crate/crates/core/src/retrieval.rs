//! Fuzzy-match retrieval: idf-weighted token-overlap candidate generation
//! over an inverted index, then a Fuzzy Match Score rerank.
//!
//! FMS(x, x_tm) = 1 − LD(x, x_tm) / max(|x|, |x_tm|), with LD the word-level
//! Levenshtein distance over retrieval-normalized tokens. Candidate scoring:
//! score(e) = Σ idf(t) over distinct query tokens t appearing in e, with
//! idf(t) = ln(1 + N / df(t)); ties rank smaller ids first.
//!
//! Persisted index format: a single UTF-8 JSON object with a version header,
//! `{"format":"tm-index","version":1,"entry_count":N,"doc_lengths":[...],
//! "postings":{token:[ids]}}`, posting lists strictly increasing.

use crate::store::{Query, TmStore};
use crate::text::normalize_for_retrieval;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;
use thiserror::Error;

pub const DEFAULT_CANDIDATES: usize = 500;
pub const INDEX_FORMAT: &str = "tm-index";
pub const INDEX_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("cannot build an index over an empty store")]
    EmptyStore,
    #[error("fuzzy match score is undefined when both sequences normalize to nothing")]
    EmptyFms,
    #[error("i/o error")]
    Io(#[from] std::io::Error),
    #[error("invalid json")]
    Json(#[from] serde_json::Error),
    #[error("malformed index file: {0}")]
    Format(String),
    #[error(
        "unsupported index format {found_format:?} version {found_version} \
         (expected {INDEX_FORMAT:?} version {INDEX_VERSION})"
    )]
    Version {
        found_format: String,
        found_version: u32,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TmIndex {
    format: String,
    version: u32,
    pub entry_count: u32,
    /// Distinct normalized tokens per entry, indexed by id.
    pub doc_lengths: Vec<u32>,
    /// Normalized token → strictly increasing list of entry ids.
    pub postings: BTreeMap<String, Vec<u32>>,
}

impl TmIndex {
    pub fn idf(&self, token: &str) -> Option<f64> {
        self.postings
            .get(token)
            .map(|list| (1.0 + self.entry_count as f64 / list.len() as f64).ln())
    }
}

pub fn build_index(store: &TmStore) -> Result<TmIndex, RetrievalError> {
    if store.is_empty() {
        return Err(RetrievalError::EmptyStore);
    }
    let mut postings: BTreeMap<String, Vec<u32>> = BTreeMap::new();
    let mut doc_lengths = Vec::with_capacity(store.len());
    for entry in &store.entries {
        let distinct: BTreeSet<&String> = entry.source_retrieval_tokens.iter().collect();
        doc_lengths.push(distinct.len() as u32);
        for token in distinct {
            postings.entry(token.clone()).or_default().push(entry.id);
        }
    }
    Ok(TmIndex {
        format: INDEX_FORMAT.to_string(),
        version: INDEX_VERSION,
        entry_count: store.len() as u32,
        doc_lengths,
        postings,
    })
}

/// Entry ids with nonzero idf-overlap against the query, ranked by score
/// descending (ties: smaller id first), capped at `k`.
pub fn candidate_search(index: &TmIndex, query: &Query, k: usize) -> Vec<u32> {
    let distinct: BTreeSet<&String> = query.retrieval_tokens.iter().collect();
    let mut scores: HashMap<u32, f64> = HashMap::new();
    for token in distinct {
        if let Some(list) = index.postings.get(token.as_str()) {
            let idf = (1.0 + index.entry_count as f64 / list.len() as f64).ln();
            for &id in list {
                *scores.entry(id).or_insert(0.0) += idf;
            }
        }
    }
    let mut ranked: Vec<(u32, f64)> = scores.into_iter().collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    ranked.truncate(k);
    ranked.into_iter().map(|(id, _)| id).collect()
}

/// Word-level edit distance (insertions, deletions, substitutions).
pub fn levenshtein<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0usize; b.len() + 1];
    for (i, ai) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, bj) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ai != bj);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

fn fms_on_normalized(a: &[String], b: &[String]) -> f64 {
    let denom = a.len().max(b.len());
    if denom == 0 {
        return 0.0;
    }
    1.0 - levenshtein(a, b) as f64 / denom as f64
}

/// Fuzzy Match Score of two raw token sequences. Both sides are
/// retrieval-normalized internally; if both normalize to nothing the score
/// is undefined and an error is returned.
pub fn fms<S: AsRef<str>>(x: &[S], x_tm: &[S]) -> Result<f64, RetrievalError> {
    let a = normalize_for_retrieval(x);
    let b = normalize_for_retrieval(x_tm);
    if a.is_empty() && b.is_empty() {
        return Err(RetrievalError::EmptyFms);
    }
    Ok(fms_on_normalized(&a, &b))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalResult {
    pub entry_id: u32,
    pub fms: f64,
    /// Zero-based rank the entry held in the candidate list.
    pub candidate_rank: usize,
}

/// Retrieve the TM entry maximizing FMS among the top-`k` overlap candidates.
/// FMS ties keep the candidate ranked earlier (higher overlap, then smaller
/// id). Returns `None` when no entry shares a token with the query.
pub fn retrieve_best(
    index: &TmIndex,
    store: &TmStore,
    query: &Query,
    k: usize,
) -> Option<RetrievalResult> {
    let candidates = candidate_search(index, query, k);
    let mut best: Option<RetrievalResult> = None;
    for (rank, id) in candidates.into_iter().enumerate() {
        let entry = &store.entries[id as usize];
        let score = fms_on_normalized(&query.retrieval_tokens, &entry.source_retrieval_tokens);
        if best.as_ref().is_none_or(|b| score > b.fms) {
            best = Some(RetrievalResult {
                entry_id: id,
                fms: score,
                candidate_rank: rank,
            });
        }
    }
    best
}

pub fn save_index(index: &TmIndex, path: &Path) -> Result<(), RetrievalError> {
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer(&mut out, index)?;
    use std::io::Write as _;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

pub fn load_index(path: &Path) -> Result<TmIndex, RetrievalError> {
    let file = File::open(path)?;
    let index: TmIndex = serde_json::from_reader(BufReader::new(file))
        .map_err(|e| RetrievalError::Format(e.to_string()))?;
    if index.format != INDEX_FORMAT || index.version != INDEX_VERSION {
        return Err(RetrievalError::Version {
            found_format: index.format,
            found_version: index.version,
        });
    }
    if index.doc_lengths.len() != index.entry_count as usize {
        return Err(RetrievalError::Format(format!(
            "doc_lengths has {} entries, header says {}",
            index.doc_lengths.len(),
            index.entry_count
        )));
    }
    Ok(index)
}
