//! Lexical translation table: IBM Model 1 trained by EM, plus Viterbi
//! word alignment.
//!
//! The table holds t(f | e) for target words f and source words e, with a
//! NULL source word at row 0 absorbing unaligned targets. Initialization is
//! uniform over each source word's co-occurring targets (NULL ranges over
//! the whole target vocabulary); every EM iteration renormalizes rows.
//!
//! Persisted format: one UTF-8 JSON object,
//! `{"format":"model1","version":1,"source_vocab":[..],"target_vocab":[..],
//! "rows":[[[target_id,prob],..],..]}` where `rows[0]` is NULL and
//! `rows[k]` (k ≥ 1) belongs to `source_vocab[k-1]`; rows are sorted by
//! target id and sum to 1 within 1e-9.

use crate::store::TmStore;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;
use thiserror::Error;

pub const ALIGNER_FORMAT: &str = "model1";
pub const ALIGNER_VERSION: u32 = 1;
const ROW_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum AlignError {
    #[error("cannot train an aligner on an empty store")]
    EmptyStore,
    #[error("iterations must be at least 1")]
    NoIterations,
    #[error("row {row} sums to {sum}, expected 1")]
    BadRowSum { row: usize, sum: f64 },
    #[error("row {row} is not sorted by target id or contains duplicates")]
    UnsortedRow { row: usize },
    #[error("row {row} references target id {id} outside the vocabulary")]
    BadTargetId { row: usize, id: u32 },
    #[error("expected {expected} rows (NULL + source vocabulary), found {found}")]
    RowCount { expected: usize, found: usize },
    #[error("i/o error")]
    Io(#[from] std::io::Error),
    #[error("invalid json")]
    Json(#[from] serde_json::Error),
    #[error("malformed aligner file: {0}")]
    Format(String),
    #[error(
        "unsupported aligner format {found_format:?} version {found_version} \
         (expected {ALIGNER_FORMAT:?} version {ALIGNER_VERSION})"
    )]
    Version {
        found_format: String,
        found_version: u32,
    },
}

/// t(f | e) with NULL at row 0 and source word k at row k+1. Rows are
/// sparse, sorted by target id, and normalized.
#[derive(Debug, Clone, PartialEq)]
pub struct Model1Table {
    pub source_vocab: Vec<String>,
    pub target_vocab: Vec<String>,
    rows: Vec<Vec<(u32, f64)>>,
    source_index: HashMap<String, u32>,
    target_index: HashMap<String, u32>,
}

impl Model1Table {
    /// Assemble a table from explicit rows; `rows[0]` is NULL. Validates
    /// shape, ordering, and normalization.
    pub fn from_rows(
        source_vocab: Vec<String>,
        target_vocab: Vec<String>,
        rows: Vec<Vec<(u32, f64)>>,
    ) -> Result<Self, AlignError> {
        if rows.len() != source_vocab.len() + 1 {
            return Err(AlignError::RowCount {
                expected: source_vocab.len() + 1,
                found: rows.len(),
            });
        }
        for (r, row) in rows.iter().enumerate() {
            if !row.windows(2).all(|w| w[0].0 < w[1].0) {
                return Err(AlignError::UnsortedRow { row: r });
            }
            if let Some(&(id, _)) = row.iter().find(|(id, _)| *id as usize >= target_vocab.len()) {
                return Err(AlignError::BadTargetId { row: r, id });
            }
            let sum: f64 = row.iter().map(|(_, p)| p).sum();
            if row.is_empty() || (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(AlignError::BadRowSum { row: r, sum });
            }
        }
        let source_index = source_vocab
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i as u32))
            .collect();
        let target_index = target_vocab
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i as u32))
            .collect();
        Ok(Model1Table {
            source_vocab,
            target_vocab,
            rows,
            source_index,
            target_index,
        })
    }

    pub fn target_id(&self, word: &str) -> Option<u32> {
        self.target_index.get(word).copied()
    }

    /// Row index for a source word; `None` selects the NULL row.
    fn row_of(&self, source: Option<&str>) -> Option<usize> {
        match source {
            None => Some(0),
            Some(w) => self.source_index.get(w).map(|&i| i as usize + 1),
        }
    }

    fn prob_by_ids(&self, row: usize, target: u32) -> f64 {
        let row = &self.rows[row];
        match row.binary_search_by_key(&target, |&(id, _)| id) {
            Ok(pos) => row[pos].1,
            Err(_) => 0.0,
        }
    }

    /// t(f | e); `e = None` is NULL. Out-of-vocabulary words yield 0.
    pub fn t(&self, f: &str, e: Option<&str>) -> f64 {
        let (Some(row), Some(tid)) = (self.row_of(e), self.target_id(f)) else {
            return 0.0;
        };
        self.prob_by_ids(row, tid)
    }

    /// Sparse row for a source word (`None` = NULL): (target id, prob)
    /// pairs sorted by target id. `None` result means the word is unknown.
    pub fn row(&self, source: Option<&str>) -> Option<&[(u32, f64)]> {
        self.row_of(source).map(|r| self.rows[r].as_slice())
    }

    pub fn has_source(&self, e: &str) -> bool {
        self.source_index.contains_key(e)
    }

    pub fn rows_cloned(&self) -> Vec<Vec<(u32, f64)>> {
        self.rows.clone()
    }

    /// Σ_f t(f|e) for every row, for invariant checks.
    pub fn row_sums(&self) -> Vec<f64> {
        self.rows
            .iter()
            .map(|row| row.iter().map(|(_, p)| p).sum())
            .collect()
    }
}

/// Incremental EM driver; each `step` scores the current table and then
/// replaces it with the re-estimated one.
pub struct Model1Em {
    table: Model1Table,
    /// Sentence pairs as (source row indices incl. implicit NULL, target ids).
    pairs: Vec<(Vec<u32>, Vec<u32>)>,
}

impl Model1Em {
    pub fn new(store: &TmStore) -> Result<Self, AlignError> {
        if store.is_empty() {
            return Err(AlignError::EmptyStore);
        }
        let mut source_vocab = Vec::new();
        let mut target_vocab = Vec::new();
        let mut source_index: HashMap<String, u32> = HashMap::new();
        let mut target_index: HashMap<String, u32> = HashMap::new();
        let mut pairs = Vec::with_capacity(store.len());
        for entry in &store.entries {
            let src: Vec<u32> = entry
                .source_tokens
                .iter()
                .map(|w| {
                    *source_index.entry(w.clone()).or_insert_with(|| {
                        source_vocab.push(w.clone());
                        source_vocab.len() as u32 - 1
                    })
                })
                .collect();
            let tgt: Vec<u32> = entry
                .target_tokens
                .iter()
                .map(|w| {
                    *target_index.entry(w.clone()).or_insert_with(|| {
                        target_vocab.push(w.clone());
                        target_vocab.len() as u32 - 1
                    })
                })
                .collect();
            pairs.push((src, tgt));
        }

        // Support-restricted uniform init: each source row spreads over the
        // targets it co-occurs with; NULL spreads over the full vocabulary.
        let mut supports: Vec<Vec<u32>> = vec![Vec::new(); source_vocab.len() + 1];
        supports[0] = (0..target_vocab.len() as u32).collect();
        {
            let mut seen: Vec<std::collections::BTreeSet<u32>> =
                vec![std::collections::BTreeSet::new(); source_vocab.len()];
            for (src, tgt) in &pairs {
                for &e in src {
                    for &f in tgt {
                        seen[e as usize].insert(f);
                    }
                }
            }
            for (e, set) in seen.into_iter().enumerate() {
                supports[e + 1] = set.into_iter().collect();
            }
        }
        let rows: Vec<Vec<(u32, f64)>> = supports
            .into_iter()
            .map(|support| {
                let p = 1.0 / support.len() as f64;
                support.into_iter().map(|id| (id, p)).collect()
            })
            .collect();

        let table = Model1Table::from_rows(source_vocab, target_vocab, rows)?;
        Ok(Model1Em { table, pairs })
    }

    pub fn table(&self) -> &Model1Table {
        &self.table
    }

    pub fn into_table(self) -> Model1Table {
        self.table
    }

    /// One EM iteration. Returns the training log-likelihood of the table
    /// as it stood before the update (Σ_j ln P(y_j | x) with the uniform
    /// 1/(n+1) alignment prior folded in).
    pub fn step(&mut self) -> f64 {
        let n_rows = self.table.rows.len();
        let mut counts: Vec<HashMap<u32, f64>> = vec![HashMap::new(); n_rows];
        let mut log_likelihood = 0.0;
        for (src, tgt) in &self.pairs {
            let alignment_prior = ((src.len() + 1) as f64).ln();
            for &f in tgt {
                let p_null = self.table.prob_by_ids(0, f);
                let mut denom = p_null;
                for &e in src {
                    denom += self.table.prob_by_ids(e as usize + 1, f);
                }
                log_likelihood += denom.ln() - alignment_prior;
                if denom == 0.0 {
                    continue;
                }
                let scale = 1.0 / denom;
                *counts[0].entry(f).or_insert(0.0) += p_null * scale;
                for &e in src {
                    let p = self.table.prob_by_ids(e as usize + 1, f);
                    *counts[e as usize + 1].entry(f).or_insert(0.0) += p * scale;
                }
            }
        }
        for (row, row_counts) in counts.into_iter().enumerate() {
            if row_counts.is_empty() {
                continue;
            }
            let total: f64 = row_counts.values().sum();
            let mut new_row: Vec<(u32, f64)> = row_counts
                .into_iter()
                .map(|(id, c)| (id, c / total))
                .collect();
            new_row.sort_by_key(|&(id, _)| id);
            self.table.rows[row] = new_row;
        }
        log_likelihood
    }
}

pub fn train_model1(store: &TmStore, iterations: usize) -> Result<Model1Table, AlignError> {
    if iterations == 0 {
        return Err(AlignError::NoIterations);
    }
    let mut em = Model1Em::new(store)?;
    for _ in 0..iterations {
        em.step();
    }
    Ok(em.into_table())
}

/// Word alignment as a target→source function: each link is
/// (source index, target index), at most one link per target position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Alignment {
    pub links: Vec<(usize, usize)>,
}

impl Alignment {
    /// Source indices linked to target position j, if any.
    pub fn source_of(&self, j: usize) -> Option<usize> {
        self.links
            .iter()
            .find(|&&(_, tj)| tj == j)
            .map(|&(i, _)| i)
    }
}

/// Viterbi alignment under the table: each target position links to the
/// source position maximizing t(y_j | x_i), competing against NULL. NULL
/// wins ties; among source positions, the smallest index wins. NULL links
/// are dropped.
pub fn align_viterbi(table: &Model1Table, x_tm: &[String], y_tm: &[String]) -> Alignment {
    let rows: Vec<Option<usize>> = x_tm.iter().map(|w| table.row_of(Some(w))).collect();
    let mut links = Vec::new();
    for (j, f) in y_tm.iter().enumerate() {
        let Some(tid) = table.target_id(f) else {
            continue;
        };
        let mut best_p = table.prob_by_ids(0, tid);
        let mut best_i: Option<usize> = None;
        for (i, row) in rows.iter().enumerate() {
            let p = row.map_or(0.0, |r| table.prob_by_ids(r, tid));
            if p > best_p {
                best_p = p;
                best_i = Some(i);
            }
        }
        if let Some(i) = best_i {
            links.push((i, j));
        }
    }
    Alignment { links }
}

#[derive(Serialize, Deserialize)]
struct AlignerFile {
    format: String,
    version: u32,
    source_vocab: Vec<String>,
    target_vocab: Vec<String>,
    rows: Vec<Vec<(u32, f64)>>,
}

pub fn save_aligner(table: &Model1Table, path: &Path) -> Result<(), AlignError> {
    let file = AlignerFile {
        format: ALIGNER_FORMAT.to_string(),
        version: ALIGNER_VERSION,
        source_vocab: table.source_vocab.clone(),
        target_vocab: table.target_vocab.clone(),
        rows: table.rows.clone(),
    };
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer(&mut out, &file)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

pub fn load_aligner(path: &Path) -> Result<Model1Table, AlignError> {
    let file = File::open(path)?;
    let parsed: AlignerFile = serde_json::from_reader(BufReader::new(file))
        .map_err(|e| AlignError::Format(e.to_string()))?;
    if parsed.format != ALIGNER_FORMAT || parsed.version != ALIGNER_VERSION {
        return Err(AlignError::Version {
            found_format: parsed.format,
            found_version: parsed.version,
        });
    }
    Model1Table::from_rows(parsed.source_vocab, parsed.target_vocab, parsed.rows)
}
