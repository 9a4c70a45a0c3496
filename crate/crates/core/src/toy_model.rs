//! A small self-contained translation model so the whole prompting pipeline
//! runs without any external NMT system.
//!
//! P(w | source, prefix) = λ·P_lm(w | last(prefix) or BOS)
//!                       + (1−λ)·P_lex(w | source),
//! where P_lex(w | source) = (1/(|source|+1)) Σ_{e ∈ source ∪ {NULL}} t(w|e)
//! averages a lexical table over every encoder-side token. EOS carries only
//! the LM term; the final vector is renormalized (its raw sum is already 1
//! up to rounding). Because P_lex averages over the whole encoder input, a
//! prompt that prepends a similar TM raises the probability of TM-consistent
//! target words — which is what makes prompting effective here.
//!
//! Out-of-vocabulary source words contribute the NULL row to the lexical
//! average, keeping the average normalized while treating the unknown word
//! as uninformative.
//!
//! Persisted format: one UTF-8 JSON object,
//! `{"format":"toy-model","version":1,"lambda":..,"add_k":..,"vocab":[..],
//! "lm":[[..],..],"lex":{...}}` with `lm` the dense (V+1)×(V+1) bigram
//! matrix (contexts: vocab then BOS; nexts: vocab then EOS).

use crate::align::{train_model1, AlignError, Model1Table};
use crate::decoder::TranslationModel;
use crate::store::TmStore;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::{Arc, RwLock};
use thiserror::Error;

pub const MODEL_FORMAT: &str = "toy-model";
pub const MODEL_VERSION: u32 = 1;
pub const DEFAULT_EM_ITERATIONS: usize = 8;
pub const DEFAULT_ADD_K: f64 = 0.1;
pub const DEFAULT_LAMBDA: f64 = 0.5;

/// Template punctuation and conjunction words are added to the vocabulary
/// so forced prefixes never fall outside it.
pub const DEFAULT_EXTRA_VOCAB: [&str; 9] = ["(", ")", ",", ";", ".", "?", "!", "And", "Und"];

#[derive(Debug, Error)]
pub enum ToyError {
    #[error("cannot train a model on an empty store")]
    EmptyStore,
    #[error("add_k must be positive, got {0}")]
    BadAddK(f64),
    #[error("lambda must lie in [0, 1], got {0}")]
    BadLambda(f64),
    #[error(transparent)]
    Align(#[from] AlignError),
    #[error("i/o error")]
    Io(#[from] std::io::Error),
    #[error("invalid json")]
    Json(#[from] serde_json::Error),
    #[error("malformed model file: {0}")]
    Format(String),
    #[error(
        "unsupported model format {found_format:?} version {found_version} \
         (expected {MODEL_FORMAT:?} version {MODEL_VERSION})"
    )]
    Version {
        found_format: String,
        found_version: u32,
    },
}

/// Add-k-smoothed bigram conditionals over target vocabulary ∪ {BOS, EOS}.
/// Contexts are vocabulary ids plus BOS at index V; next-token ids are
/// vocabulary ids plus EOS at index V.
#[derive(Debug, Clone, PartialEq)]
pub struct BigramLm {
    probs: Vec<Vec<f64>>,
}

impl BigramLm {
    /// Maximum-likelihood bigram estimates with add-k smoothing over id
    /// sequences (ids < vocab_len).
    pub fn train(sentences: &[Vec<usize>], vocab_len: usize, add_k: f64) -> BigramLm {
        let bos = vocab_len;
        let eos = vocab_len;
        let mut counts = vec![vec![0u64; vocab_len + 1]; vocab_len + 1];
        for sent in sentences {
            let mut ctx = bos;
            for &id in sent {
                counts[ctx][id] += 1;
                ctx = id;
            }
            counts[ctx][eos] += 1;
        }
        let probs = counts
            .into_iter()
            .map(|row| {
                let total: u64 = row.iter().sum();
                let denom = total as f64 + add_k * (vocab_len + 1) as f64;
                row.into_iter().map(|c| (c as f64 + add_k) / denom).collect()
            })
            .collect();
        BigramLm { probs }
    }

    /// P(next | context); `context = None` is BOS, `next = vocab_len` is EOS.
    pub fn prob(&self, context: Option<usize>, next: usize) -> f64 {
        let ctx = context.unwrap_or(self.probs.len() - 1);
        self.probs[ctx][next]
    }

    pub fn row(&self, context: Option<usize>) -> &[f64] {
        let ctx = context.unwrap_or(self.probs.len() - 1);
        &self.probs[ctx]
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.probs.iter().map(|r| r.iter().sum()).collect()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ToyTrainConfig {
    pub em_iterations: usize,
    pub add_k: f64,
    pub lambda: f64,
}

impl Default for ToyTrainConfig {
    fn default() -> Self {
        ToyTrainConfig {
            em_iterations: DEFAULT_EM_ITERATIONS,
            add_k: DEFAULT_ADD_K,
            lambda: DEFAULT_LAMBDA,
        }
    }
}

#[derive(Debug)]
pub struct ToyModel {
    vocab: Vec<String>,
    index: HashMap<String, usize>,
    lm: BigramLm,
    lex: Model1Table,
    /// Aligner target id → model vocabulary id.
    lex_to_vocab: Vec<usize>,
    pub lambda: f64,
    pub add_k: f64,
    /// Memo of P_lex vectors keyed by source sentence: the lexical term is
    /// constant across every decoding step of one sentence.
    lex_cache: RwLock<HashMap<Vec<String>, Arc<Vec<f64>>>>,
}

impl Clone for ToyModel {
    fn clone(&self) -> Self {
        ToyModel {
            vocab: self.vocab.clone(),
            index: self.index.clone(),
            lm: self.lm.clone(),
            lex: self.lex.clone(),
            lex_to_vocab: self.lex_to_vocab.clone(),
            lambda: self.lambda,
            add_k: self.add_k,
            lex_cache: RwLock::new(HashMap::new()),
        }
    }
}

impl PartialEq for ToyModel {
    fn eq(&self, other: &Self) -> bool {
        self.vocab == other.vocab
            && self.lm == other.lm
            && self.lex == other.lex
            && self.lambda == other.lambda
            && self.add_k == other.add_k
    }
}

impl ToyModel {
    pub fn lm(&self) -> &BigramLm {
        &self.lm
    }

    pub fn lex(&self) -> &Model1Table {
        &self.lex
    }

    pub fn set_lambda(&mut self, lambda: f64) -> Result<(), ToyError> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(ToyError::BadLambda(lambda));
        }
        self.lambda = lambda;
        Ok(())
    }

    /// P_lex(· | source) over the vocabulary (EOS excluded), cached.
    fn lexical_term(&self, source: &[String]) -> Arc<Vec<f64>> {
        if let Some(hit) = self.lex_cache.read().unwrap().get(source) {
            return Arc::clone(hit);
        }
        let mut acc = vec![0.0f64; self.vocab.len()];
        let weight = 1.0 / (source.len() + 1) as f64;
        let add_row = |row: &[(u32, f64)], acc: &mut Vec<f64>| {
            for &(tid, p) in row {
                acc[self.lex_to_vocab[tid as usize]] += weight * p;
            }
        };
        let null_row = self.lex.row(None).expect("NULL row always exists");
        add_row(null_row, &mut acc);
        for e in source {
            // Unknown source words fall back to the NULL row.
            let row = self.lex.row(Some(e.as_str())).unwrap_or(null_row);
            add_row(row, &mut acc);
        }
        let arc = Arc::new(acc);
        self.lex_cache
            .write()
            .unwrap()
            .insert(source.to_vec(), Arc::clone(&arc));
        arc
    }
}

impl TranslationModel for ToyModel {
    fn vocab(&self) -> &[String] {
        &self.vocab
    }

    fn token_id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    fn next_distribution(&self, source: &[String], prefix: &[String]) -> Vec<f64> {
        let context = prefix.last().and_then(|t| self.token_id(t));
        let v = self.vocab.len();
        let lm_row: Vec<f64> = if prefix.is_empty() || context.is_some() {
            self.lm.row(context).to_vec()
        } else {
            // Defensive: a prefix ending in an unknown token gets a uniform
            // LM term (unreachable through the decoder, which validates
            // forced tokens and only emits vocabulary tokens).
            vec![1.0 / (v + 1) as f64; v + 1]
        };
        let lex = self.lexical_term(source);
        let mut dist = vec![0.0f64; v + 1];
        for id in 0..v {
            dist[id] = self.lambda * lm_row[id] + (1.0 - self.lambda) * lex[id];
        }
        dist[v] = self.lambda * lm_row[v];
        let sum: f64 = dist.iter().sum();
        if sum > 0.0 {
            for p in &mut dist {
                *p /= sum;
            }
        }
        dist
    }
}

/// Map every aligner target word onto the model vocabulary.
fn lex_vocab_map(
    lex: &Model1Table,
    index: &HashMap<String, usize>,
) -> Result<Vec<usize>, ToyError> {
    lex.target_vocab
        .iter()
        .map(|w| {
            index.get(w).copied().ok_or_else(|| {
                ToyError::Format(format!("lexical target word {w:?} missing from vocabulary"))
            })
        })
        .collect()
}

/// Train LM and lexical table from the store's target/source sides.
pub fn train_toy_with(store: &TmStore, config: &ToyTrainConfig) -> Result<ToyModel, ToyError> {
    if store.is_empty() {
        return Err(ToyError::EmptyStore);
    }
    if config.add_k <= 0.0 {
        return Err(ToyError::BadAddK(config.add_k));
    }
    if !(0.0..=1.0).contains(&config.lambda) {
        return Err(ToyError::BadLambda(config.lambda));
    }
    let mut vocab: Vec<String> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let intern = |w: &str, vocab: &mut Vec<String>, index: &mut HashMap<String, usize>| {
        *index.entry(w.to_string()).or_insert_with(|| {
            vocab.push(w.to_string());
            vocab.len() - 1
        })
    };
    let mut sentences = Vec::with_capacity(store.len());
    for entry in &store.entries {
        let ids: Vec<usize> = entry
            .target_tokens
            .iter()
            .map(|w| intern(w, &mut vocab, &mut index))
            .collect();
        sentences.push(ids);
    }
    for w in DEFAULT_EXTRA_VOCAB {
        intern(w, &mut vocab, &mut index);
    }
    let lm = BigramLm::train(&sentences, vocab.len(), config.add_k);
    let lex = train_model1(store, config.em_iterations.max(1))?;
    let lex_to_vocab = lex_vocab_map(&lex, &index)?;
    Ok(ToyModel {
        vocab,
        index,
        lm,
        lex,
        lex_to_vocab,
        lambda: config.lambda,
        add_k: config.add_k,
        lex_cache: RwLock::new(HashMap::new()),
    })
}

pub fn train_toy(store: &TmStore, em_iters: usize, add_k: f64) -> Result<ToyModel, ToyError> {
    train_toy_with(
        store,
        &ToyTrainConfig {
            em_iterations: em_iters,
            add_k,
            lambda: DEFAULT_LAMBDA,
        },
    )
}

#[derive(Serialize, Deserialize)]
struct LexFile {
    source_vocab: Vec<String>,
    target_vocab: Vec<String>,
    rows: Vec<Vec<(u32, f64)>>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    lambda: f64,
    add_k: f64,
    vocab: Vec<String>,
    lm: Vec<Vec<f64>>,
    lex: LexFile,
}

pub fn save_model(model: &ToyModel, path: &Path) -> Result<(), ToyError> {
    let file = ModelFile {
        format: MODEL_FORMAT.to_string(),
        version: MODEL_VERSION,
        lambda: model.lambda,
        add_k: model.add_k,
        vocab: model.vocab.clone(),
        lm: model.lm.probs.clone(),
        lex: LexFile {
            source_vocab: model.lex.source_vocab.clone(),
            target_vocab: model.lex.target_vocab.clone(),
            rows: model.lex.rows_cloned(),
        },
    };
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer(&mut out, &file)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<ToyModel, ToyError> {
    let file = File::open(path)?;
    let parsed: ModelFile = serde_json::from_reader(BufReader::new(file))
        .map_err(|e| ToyError::Format(e.to_string()))?;
    if parsed.format != MODEL_FORMAT || parsed.version != MODEL_VERSION {
        return Err(ToyError::Version {
            found_format: parsed.format,
            found_version: parsed.version,
        });
    }
    if !(0.0..=1.0).contains(&parsed.lambda) {
        return Err(ToyError::BadLambda(parsed.lambda));
    }
    let v = parsed.vocab.len();
    if parsed.lm.len() != v + 1 || parsed.lm.iter().any(|row| row.len() != v + 1) {
        return Err(ToyError::Format(format!(
            "bigram matrix must be {}x{}",
            v + 1,
            v + 1
        )));
    }
    let lex = Model1Table::from_rows(
        parsed.lex.source_vocab,
        parsed.lex.target_vocab,
        parsed.lex.rows,
    )?;
    let index: HashMap<String, usize> = parsed
        .vocab
        .iter()
        .enumerate()
        .map(|(i, w)| (w.clone(), i))
        .collect();
    let lex_to_vocab = lex_vocab_map(&lex, &index)?;
    Ok(ToyModel {
        vocab: parsed.vocab,
        index,
        lm: BigramLm { probs: parsed.lm },
        lex,
        lex_to_vocab,
        lambda: parsed.lambda,
        add_k: parsed.add_k,
        lex_cache: RwLock::new(HashMap::new()),
    })
}
