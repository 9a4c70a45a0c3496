//! Experiment harness: run one or more systems over a test set, score them
//! with corpus BLEU, and break results down by TM similarity or sentence
//! length.
//!
//! A *system* is a way of producing a translation for one sentence:
//! plain beam search, a sentence-level prompt template, or the fragment
//! template. Retrieval is resolved once per sentence and shared by every
//! system so comparisons see identical TMs. Any per-sentence failure
//! (template or decode) is recorded on that sentence — scored as an empty
//! hypothesis — and the run continues.
//!
//! Reports are order-stable: sentences keep input order, systems keep
//! config order, and no hash-map iteration feeds the output, so a run is
//! byte-identical regardless of the worker count.

use crate::align::Model1Table;
use crate::bleu::{corpus_bleu, sentence_bleu, BleuError, BleuReport};
use crate::decoder::{
    beam_search_alpha, forced_beam_search_alpha, strip_prompt, DecodeError, TranslationModel,
    DEFAULT_ALPHA,
};
use crate::fragment::build_fragment_tm;
use crate::retrieval::{fms, retrieve_best, RetrievalError, TmIndex, DEFAULT_CANDIDATES};
use crate::store::{Query, TmStore};
use crate::template::{
    apply_fragment_template, apply_sentence_template, ConjunctionTable, PromptedPair,
    TemplateError, TemplateKind,
};
use rayon::prelude::*;
use serde::Serialize;
use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

pub const DEFAULT_BEAM_WIDTH: usize = 5;
pub const DEFAULT_MAX_LEN: usize = 64;
/// Threshold applied when similarity gating is switched on without an
/// explicit value.
pub const DEFAULT_FMS_THRESHOLD: f64 = 0.8;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("test set is empty")]
    EmptyTestSet,
    #[error("retrieval mode needs an index but none was supplied")]
    MissingIndex,
    #[error("fragment system needs an alignment table but none was supplied")]
    MissingAligner,
    #[error("assigned TM list has {found} entries for {expected} sentences")]
    AssignedLength { expected: usize, found: usize },
    #[error("assigned TM id {0} is not in the store")]
    BadAssignedId(u32),
    #[error("bucket spec invalid: {0}")]
    BadBucketSpec(String),
    #[error("jobs must be at least 1")]
    BadJobs,
    #[error("could not build worker pool: {0}")]
    Pool(String),
    #[error(transparent)]
    Bleu(#[from] BleuError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
}

/// Failure on a single sentence; recorded, never fatal to the run.
#[derive(Debug, Error)]
pub enum SentenceError {
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error("fragment system needs an alignment table")]
    MissingAligner,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SystemKind {
    /// Plain beam search over the bare input.
    Baseline,
    /// One sentence-level template around the whole retrieved TM.
    Sentence(TemplateKind),
    /// Aligned TM fragments, each wrapped in parentheses.
    Fragment,
}

impl SystemKind {
    pub fn name(self) -> &'static str {
        match self {
            SystemKind::Baseline => "baseline",
            SystemKind::Sentence(kind) => kind.name(),
            SystemKind::Fragment => "fragment",
        }
    }

    /// Baseline, the five sentence-level templates, then fragments.
    pub fn all() -> Vec<SystemKind> {
        let mut v = vec![SystemKind::Baseline];
        v.extend(TemplateKind::SENTENCE_LEVEL.map(SystemKind::Sentence));
        v.push(SystemKind::Fragment);
        v
    }
}

impl fmt::Display for SystemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SystemKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "baseline" => Ok(SystemKind::Baseline),
            "fragment" => Ok(SystemKind::Fragment),
            other => match other.parse::<TemplateKind>() {
                Ok(TemplateKind::Fragment) => Ok(SystemKind::Fragment),
                Ok(kind) => Ok(SystemKind::Sentence(kind)),
                Err(_) => Err(format!("unknown system {other:?}")),
            },
        }
    }
}

/// How each test sentence gets its TM.
#[derive(Debug, Clone, PartialEq)]
pub enum RetrievalMode {
    /// Fuzzy retrieval from the store via the inverted index.
    Index { k: usize },
    /// Each sentence's own reference acts as its TM (upper-bound probe).
    SelfTm,
    /// Pre-assigned store ids, e.g. replayed from a staging file;
    /// `None` disables the TM for that sentence.
    Assigned(Vec<Option<u32>>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalItem {
    pub source: Vec<String>,
    pub reference: Vec<String>,
}

/// The TM chosen for one sentence, shared by all systems.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedTm {
    pub source: Vec<String>,
    pub target: Vec<String>,
    pub entry_id: Option<u32>,
    pub fms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BucketKind {
    Fms,
    Length,
}

impl BucketKind {
    pub fn name(self) -> &'static str {
        match self {
            BucketKind::Fms => "fms",
            BucketKind::Length => "length",
        }
    }
}

/// Half-open buckets `[b_i, b_{i+1})` over FMS or source length; the last
/// bucket is closed so a covering set of boundaries partitions every
/// sentence. Values outside the range clamp into the edge buckets.
#[derive(Debug, Clone, PartialEq)]
pub struct BucketSpec {
    pub kind: BucketKind,
    pub boundaries: Vec<f64>,
}

impl BucketSpec {
    pub fn new(kind: BucketKind, boundaries: Vec<f64>) -> Result<Self, EvalError> {
        if boundaries.len() < 2 {
            return Err(EvalError::BadBucketSpec(
                "need at least two boundaries".to_string(),
            ));
        }
        if boundaries.iter().any(|b| !b.is_finite()) {
            return Err(EvalError::BadBucketSpec(
                "boundaries must be finite".to_string(),
            ));
        }
        for pair in boundaries.windows(2) {
            if pair[0] >= pair[1] {
                return Err(EvalError::BadBucketSpec(format!(
                    "boundaries must be strictly ascending, got {} then {}",
                    pair[0], pair[1]
                )));
            }
        }
        Ok(BucketSpec { kind, boundaries })
    }

    pub fn fms_default() -> Self {
        BucketSpec {
            kind: BucketKind::Fms,
            boundaries: vec![0.0, 0.2, 0.4, 0.6, 0.8, 1.0],
        }
    }

    /// Width-10 length buckets covering `max_value`.
    pub fn length_default(max_value: usize) -> Self {
        let top = (max_value / 10 + 1) * 10;
        let boundaries = (0..=top / 10).map(|i| (i * 10) as f64).collect();
        BucketSpec {
            kind: BucketKind::Length,
            boundaries,
        }
    }

    pub fn bucket_count(&self) -> usize {
        self.boundaries.len() - 1
    }

    fn bucket_of(&self, value: f64) -> usize {
        let last = self.bucket_count() - 1;
        for i in 0..last {
            if value < self.boundaries[i + 1] {
                return i;
            }
        }
        last
    }

    pub fn label(&self, i: usize) -> String {
        let close = if i + 1 == self.bucket_count() { ']' } else { ')' };
        match self.kind {
            BucketKind::Fms => format!(
                "[{:.2}, {:.2}{close}",
                self.boundaries[i],
                self.boundaries[i + 1]
            ),
            BucketKind::Length => format!(
                "[{}, {}{close}",
                self.boundaries[i] as i64,
                self.boundaries[i + 1] as i64
            ),
        }
    }
}

impl FromStr for BucketSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (kind_str, list) = s
            .split_once(':')
            .ok_or_else(|| format!("expected kind:b0,b1,... got {s:?}"))?;
        let kind = match kind_str {
            "fms" => BucketKind::Fms,
            "length" => BucketKind::Length,
            other => return Err(format!("unknown bucket kind {other:?}")),
        };
        let boundaries: Vec<f64> = list
            .split(',')
            .map(|b| {
                b.trim()
                    .parse::<f64>()
                    .map_err(|_| format!("bad boundary {b:?}"))
            })
            .collect::<Result<_, _>>()?;
        BucketSpec::new(kind, boundaries).map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub systems: Vec<SystemKind>,
    pub retrieval: RetrievalMode,
    pub width: usize,
    pub max_len: usize,
    pub alpha: f64,
    /// TMs below this similarity are dropped per sentence (the score is
    /// still recorded for bucketing).
    pub fms_threshold: Option<f64>,
    pub bucket_specs: Vec<BucketSpec>,
    pub jobs: usize,
    pub conj: ConjunctionTable,
    pub stop_words: HashSet<String>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            systems: SystemKind::all(),
            retrieval: RetrievalMode::Index {
                k: DEFAULT_CANDIDATES,
            },
            width: DEFAULT_BEAM_WIDTH,
            max_len: DEFAULT_MAX_LEN,
            alpha: DEFAULT_ALPHA,
            fms_threshold: None,
            bucket_specs: vec![BucketSpec::fms_default()],
            jobs: 1,
            conj: ConjunctionTable::default(),
            stop_words: HashSet::new(),
        }
    }
}

/// Everything `decode_one` needs besides the sentence itself.
#[derive(Debug, Clone, Copy)]
pub struct DecodePlan<'a> {
    pub width: usize,
    pub max_len: usize,
    pub alpha: f64,
    pub source_lang: &'a str,
    pub target_lang: &'a str,
    pub conj: &'a ConjunctionTable,
    pub stop_words: &'a HashSet<String>,
}

#[derive(Debug, Clone)]
pub struct SingleOutcome {
    pub output: Vec<String>,
    /// The prompt actually used; `None` means plain decoding (baseline,
    /// no TM, or fragment fallback).
    pub prompt: Option<PromptedPair>,
}

/// Translate one sentence under one system. A missing or unusable TM
/// falls back to plain decoding rather than erroring.
pub fn decode_one<M: TranslationModel + ?Sized>(
    model: &M,
    aligner: Option<&Model1Table>,
    system: SystemKind,
    tm: Option<&ResolvedTm>,
    source: &[String],
    plan: &DecodePlan<'_>,
) -> Result<SingleOutcome, SentenceError> {
    let prompt = match (system, tm) {
        (SystemKind::Baseline, _) | (_, None) => None,
        (SystemKind::Sentence(kind), Some(tm)) => Some(apply_sentence_template(
            kind,
            &tm.source,
            &tm.target,
            source,
            plan.source_lang,
            plan.target_lang,
            plan.conj,
        )?),
        (SystemKind::Fragment, Some(tm)) => {
            let table = aligner.ok_or(SentenceError::MissingAligner)?;
            let set = build_fragment_tm(source, &tm.source, &tm.target, table, plan.stop_words);
            if set.is_usable() {
                Some(apply_fragment_template(
                    &set.source_fragments,
                    &set.target_fragments,
                    source,
                )?)
            } else {
                None
            }
        }
    };
    let result = match &prompt {
        Some(p) => forced_beam_search_alpha(model, p, plan.width, plan.max_len, plan.alpha)?,
        None => beam_search_alpha(model, source, plan.width, plan.max_len, plan.alpha)?,
    };
    Ok(SingleOutcome {
        output: strip_prompt(&result),
        prompt,
    })
}

/// Pick each sentence's TM once, up front.
pub fn resolve_tms(
    store: &TmStore,
    index: Option<&TmIndex>,
    items: &[EvalItem],
    mode: &RetrievalMode,
) -> Result<Vec<Option<ResolvedTm>>, EvalError> {
    match mode {
        RetrievalMode::Index { k } => {
            let index = index.ok_or(EvalError::MissingIndex)?;
            Ok(items
                .iter()
                .map(|item| {
                    let query = Query::new(item.source.clone());
                    retrieve_best(index, store, &query, *k).map(|r| {
                        let entry = &store.entries[r.entry_id as usize];
                        ResolvedTm {
                            source: entry.source_tokens.clone(),
                            target: entry.target_tokens.clone(),
                            entry_id: Some(r.entry_id),
                            fms: r.fms,
                        }
                    })
                })
                .collect())
        }
        RetrievalMode::SelfTm => Ok(items
            .iter()
            .map(|item| {
                Some(ResolvedTm {
                    source: item.source.clone(),
                    target: item.reference.clone(),
                    entry_id: None,
                    fms: 1.0,
                })
            })
            .collect()),
        RetrievalMode::Assigned(ids) => {
            if ids.len() != items.len() {
                return Err(EvalError::AssignedLength {
                    expected: items.len(),
                    found: ids.len(),
                });
            }
            ids.iter()
                .zip(items)
                .map(|(id, item)| match id {
                    None => Ok(None),
                    Some(id) => {
                        let entry = store
                            .entries
                            .get(*id as usize)
                            .ok_or(EvalError::BadAssignedId(*id))?;
                        // An all-punctuation pair has no similarity signal;
                        // treat it as maximally dissimilar.
                        let score = fms(&item.source, &entry.source_tokens).unwrap_or(0.0);
                        Ok(Some(ResolvedTm {
                            source: entry.source_tokens.clone(),
                            target: entry.target_tokens.clone(),
                            entry_id: Some(*id),
                            fms: score,
                        }))
                    }
                })
                .collect()
        }
    }
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct SentenceRecord {
    pub id: usize,
    pub system: String,
    pub tm_id: Option<u32>,
    pub fms: Option<f64>,
    pub output: String,
    pub bleu: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct SystemResult {
    pub name: String,
    pub bleu: BleuReport,
    pub outputs: Vec<Vec<String>>,
    pub records: Vec<SentenceRecord>,
    pub failures: usize,
}

/// Per-sentence facts the bucket breakdown keys on.
#[derive(Debug, Clone, PartialEq)]
pub struct ItemInfo {
    pub id: usize,
    pub source_len: usize,
    pub tm_id: Option<u32>,
    /// Retrieval score before any threshold; `None` when nothing was
    /// retrieved (bucketed as 0).
    pub fms: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BucketRow {
    pub label: String,
    pub count: usize,
    /// One entry per system; `None` marks an empty bucket (absent score,
    /// not a zero).
    pub scores: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BucketTable {
    pub kind: BucketKind,
    pub system_names: Vec<String>,
    pub rows: Vec<BucketRow>,
}

#[derive(Debug)]
pub struct ExperimentReport {
    pub items: Vec<ItemInfo>,
    pub systems: Vec<SystemResult>,
    pub buckets: Vec<BucketTable>,
}

/// Corpus BLEU per bucket per system. Bucket counts always sum to the
/// test-set size; empty buckets carry no score.
pub fn bucket_eval(
    spec: &BucketSpec,
    items: &[ItemInfo],
    references: &[Vec<String>],
    systems: &[SystemResult],
) -> Result<BucketTable, EvalError> {
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); spec.bucket_count()];
    for item in items {
        let value = match spec.kind {
            BucketKind::Fms => item.fms.unwrap_or(0.0),
            BucketKind::Length => item.source_len as f64,
        };
        members[spec.bucket_of(value)].push(item.id);
    }
    let mut rows = Vec::with_capacity(spec.bucket_count());
    for (i, ids) in members.iter().enumerate() {
        let mut scores = Vec::with_capacity(systems.len());
        for system in systems {
            if ids.is_empty() {
                scores.push(None);
            } else {
                let hyp: Vec<Vec<String>> = ids.iter().map(|&id| system.outputs[id].clone()).collect();
                let refs: Vec<Vec<String>> = ids.iter().map(|&id| references[id].clone()).collect();
                scores.push(Some(corpus_bleu(&hyp, &refs)?.bleu));
            }
        }
        rows.push(BucketRow {
            label: spec.label(i),
            count: ids.len(),
            scores,
        });
    }
    Ok(BucketTable {
        kind: spec.kind,
        system_names: systems.iter().map(|s| s.name.clone()).collect(),
        rows,
    })
}

pub fn run_experiment<M: TranslationModel + ?Sized>(
    store: &TmStore,
    index: Option<&TmIndex>,
    model: &M,
    aligner: Option<&Model1Table>,
    items: &[EvalItem],
    config: &ExperimentConfig,
) -> Result<ExperimentReport, EvalError> {
    if items.is_empty() {
        return Err(EvalError::EmptyTestSet);
    }
    if config.jobs == 0 {
        return Err(EvalError::BadJobs);
    }
    if config.systems.contains(&SystemKind::Fragment) && aligner.is_none() {
        return Err(EvalError::MissingAligner);
    }

    let resolved = resolve_tms(store, index, items, &config.retrieval)?;
    let item_infos: Vec<ItemInfo> = items
        .iter()
        .enumerate()
        .map(|(id, item)| ItemInfo {
            id,
            source_len: item.source.len(),
            tm_id: resolved[id].as_ref().and_then(|tm| tm.entry_id),
            fms: resolved[id].as_ref().map(|tm| tm.fms),
        })
        .collect();
    // TMs visible to the decoders, after the optional similarity gate.
    let effective: Vec<Option<&ResolvedTm>> = resolved
        .iter()
        .map(|r| match (r.as_ref(), config.fms_threshold) {
            (Some(tm), Some(th)) if tm.fms < th => None,
            (tm, _) => tm,
        })
        .collect();
    let references: Vec<Vec<String>> = items.iter().map(|i| i.reference.clone()).collect();
    let plan = DecodePlan {
        width: config.width,
        max_len: config.max_len,
        alpha: config.alpha,
        source_lang: &store.source_lang,
        target_lang: &store.target_lang,
        conj: &config.conj,
        stop_words: &config.stop_words,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.jobs)
        .build()
        .map_err(|e| EvalError::Pool(e.to_string()))?;

    let mut systems = Vec::with_capacity(config.systems.len());
    for &system in &config.systems {
        // Indexed parallel collect keeps input order regardless of worker
        // scheduling.
        let decoded: Vec<Result<SingleOutcome, SentenceError>> = pool.install(|| {
            items
                .par_iter()
                .enumerate()
                .map(|(i, item)| decode_one(model, aligner, system, effective[i], &item.source, &plan))
                .collect()
        });
        let mut outputs = Vec::with_capacity(items.len());
        let mut errors: Vec<Option<String>> = Vec::with_capacity(items.len());
        for result in decoded {
            match result {
                Ok(outcome) => {
                    outputs.push(outcome.output);
                    errors.push(None);
                }
                Err(e) => {
                    outputs.push(Vec::new());
                    errors.push(Some(e.to_string()));
                }
            }
        }
        let failures = errors.iter().filter(|e| e.is_some()).count();
        let bleu = corpus_bleu(&outputs, &references)?;
        let records: Vec<SentenceRecord> = item_infos
            .iter()
            .map(|info| SentenceRecord {
                id: info.id,
                system: system.name().to_string(),
                tm_id: info.tm_id,
                fms: info.fms,
                output: outputs[info.id].join(" "),
                bleu: sentence_bleu(&outputs[info.id], &references[info.id]),
                error: errors[info.id].clone(),
            })
            .collect();
        systems.push(SystemResult {
            name: system.name().to_string(),
            bleu,
            outputs,
            records,
            failures,
        });
    }

    let buckets = config
        .bucket_specs
        .iter()
        .map(|spec| bucket_eval(spec, &item_infos, &references, &systems))
        .collect::<Result<Vec<_>, _>>()?;

    Ok(ExperimentReport {
        items: item_infos,
        systems,
        buckets,
    })
}

/// Fixed-width human-readable tables. Deterministic: fixed-point numbers,
/// stable orders, no timestamps.
pub fn render_report(report: &ExperimentReport) -> String {
    let mut out = String::new();
    let name_w = report
        .systems
        .iter()
        .map(|s| s.name.len())
        .max()
        .unwrap_or(6)
        .max(6);
    out.push_str(&format!(
        "{:<name_w$}  {:>8}  {:>6}  {:>6}  {:>6}  {:>6}  {:>6}  {:>6}\n",
        "system", "BLEU", "BP", "p1", "p2", "p3", "p4", "failed"
    ));
    for s in &report.systems {
        out.push_str(&format!(
            "{:<name_w$}  {:>8.3}  {:>6.3}  {:>6.3}  {:>6.3}  {:>6.3}  {:>6.3}  {:>6}\n",
            s.name,
            s.bleu.bleu,
            s.bleu.brevity_penalty,
            s.bleu.precisions[0],
            s.bleu.precisions[1],
            s.bleu.precisions[2],
            s.bleu.precisions[3],
            s.failures
        ));
    }
    for table in &report.buckets {
        out.push('\n');
        out.push_str(&render_bucket_table(table));
    }
    out
}

pub fn render_bucket_table(table: &BucketTable) -> String {
    let mut out = String::new();
    let label_w = table
        .rows
        .iter()
        .map(|r| r.label.len())
        .max()
        .unwrap_or(6)
        .max(table.kind.name().len())
        .max(6);
    let col_w: Vec<usize> = table
        .system_names
        .iter()
        .map(|n| n.len().max(8))
        .collect();
    out.push_str(&format!("{:<label_w$}  {:>6}", table.kind.name(), "count"));
    for (name, w) in table.system_names.iter().zip(&col_w) {
        out.push_str(&format!("  {name:>w$}"));
    }
    out.push('\n');
    for row in &table.rows {
        out.push_str(&format!("{:<label_w$}  {:>6}", row.label, row.count));
        for (score, w) in row.scores.iter().zip(&col_w) {
            match score {
                Some(b) => out.push_str(&format!("  {b:>w$.3}")),
                None => out.push_str(&format!("  {:>w$}", "-")),
            }
        }
        out.push('\n');
    }
    out
}

/// One JSON object per line, systems in config order, sentences in input
/// order within each system.
pub fn render_records(report: &ExperimentReport) -> String {
    let mut out = String::new();
    for system in &report.systems {
        for record in &system.records {
            out.push_str(&serde_json::to_string(record).expect("record serializes"));
            out.push('\n');
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::align::train_model1;
    use crate::retrieval::build_index;
    use crate::toy_model::{train_toy_with, ToyTrainConfig};

    /// A tiny copy language: target tokens equal source tokens, so a
    /// trained toy model translates by reproducing the input. Sentences
    /// are positional (A-word, B-word, C-word) so end-of-sentence is only
    /// ever seen after a C-word, and a few entries carry connectors
    /// mid-sentence so the bigram model learns what follows each
    /// template's junction token.
    fn copy_store() -> TmStore {
        let sentences: Vec<&str> = vec![
            "mira tova dan",
            "mira sol dan",
            "bel tova dan",
            "bel sol pek",
            "bel tova pek",
            "mira tova pek",
            "mira sol pek . bel tova dan",
            "bel tova pek . mira sol dan",
            "bel sol dan , mira tova pek",
            "mira sol dan , bel tova pek",
            "mira tova dan ; bel sol dan",
            "bel sol pek ; mira tova dan",
            "( bel tova dan ) mira sol pek",
            "( mira sol pek ) bel tova dan",
        ];
        let pairs: Vec<(Vec<String>, Vec<String>)> = sentences
            .iter()
            .map(|s| {
                let toks: Vec<String> = s.split(' ').map(str::to_string).collect();
                (toks.clone(), toks)
            })
            .collect();
        TmStore::from_pairs(pairs, "xx", "yy")
    }

    fn copy_model(store: &TmStore) -> crate::toy_model::ToyModel {
        train_toy_with(store, &ToyTrainConfig::default()).unwrap()
    }

    fn copy_items() -> Vec<EvalItem> {
        ["mira tova dan", "bel sol dan", "mira sol pek"]
            .iter()
            .map(|s| {
                let toks: Vec<String> = s.split(' ').map(str::to_string).collect();
                EvalItem {
                    source: toks.clone(),
                    reference: toks,
                }
            })
            .collect()
    }

    fn conj_for_test_langs() -> ConjunctionTable {
        let mut conj = ConjunctionTable::default();
        conj.insert("xx", "And", ",");
        conj.insert("yy", "Und", ",");
        conj
    }

    #[test]
    fn system_kind_parsing() {
        assert_eq!("baseline".parse::<SystemKind>().unwrap(), SystemKind::Baseline);
        assert_eq!(
            "comma".parse::<SystemKind>().unwrap(),
            SystemKind::Sentence(TemplateKind::Comma)
        );
        assert_eq!("fragment".parse::<SystemKind>().unwrap(), SystemKind::Fragment);
        assert!("nonsense".parse::<SystemKind>().is_err());
        assert_eq!(SystemKind::all().len(), 7);
    }

    #[test]
    fn bucket_spec_validation_and_parsing() {
        assert!(BucketSpec::new(BucketKind::Fms, vec![0.0]).is_err());
        assert!(BucketSpec::new(BucketKind::Fms, vec![0.0, 0.0]).is_err());
        assert!(BucketSpec::new(BucketKind::Fms, vec![0.3, 0.1]).is_err());
        let spec: BucketSpec = "fms:0,0.2,0.4,0.6,0.8,1.0".parse().unwrap();
        assert_eq!(spec.kind, BucketKind::Fms);
        assert_eq!(spec.bucket_count(), 5);
        let spec: BucketSpec = "length:0,10,20".parse().unwrap();
        assert_eq!(spec.kind, BucketKind::Length);
        assert!("fms".parse::<BucketSpec>().is_err());
        assert!("size:0,1".parse::<BucketSpec>().is_err());
    }

    #[test]
    fn bucket_assignment_clamps_and_closes_last() {
        let spec = BucketSpec::fms_default();
        assert_eq!(spec.bucket_of(0.0), 0);
        assert_eq!(spec.bucket_of(0.19), 0);
        assert_eq!(spec.bucket_of(0.2), 1);
        assert_eq!(spec.bucket_of(0.999), 4);
        // Last bucket is closed: the top boundary belongs to it.
        assert_eq!(spec.bucket_of(1.0), 4);
        // Out-of-range values clamp rather than vanish.
        assert_eq!(spec.bucket_of(-0.5), 0);
        assert_eq!(spec.bucket_of(1.5), 4);
        assert_eq!(spec.label(0), "[0.00, 0.20)");
        assert_eq!(spec.label(4), "[0.80, 1.00]");
        let lens = BucketSpec::length_default(25);
        assert_eq!(lens.boundaries, vec![0.0, 10.0, 20.0, 30.0]);
        assert_eq!(lens.label(2), "[20, 30]");
    }

    fn fake_system(name: &str, outputs: Vec<Vec<String>>) -> SystemResult {
        SystemResult {
            name: name.to_string(),
            bleu: BleuReport {
                bleu: 0.0,
                precisions: [0.0; 4],
                brevity_penalty: 0.0,
                hyp_length: 0,
                ref_length: 0,
            },
            outputs,
            records: Vec::new(),
            failures: 0,
        }
    }

    #[test]
    fn bucket_eval_counts_and_absence() {
        let toks = |s: &str| -> Vec<String> { s.split(' ').map(str::to_string).collect() };
        let references = vec![toks("a b c d e"), toks("f g h i j"), toks("k l m n o")];
        let items = vec![
            ItemInfo { id: 0, source_len: 5, tm_id: Some(0), fms: Some(0.9) },
            ItemInfo { id: 1, source_len: 5, tm_id: None, fms: None },
            ItemInfo { id: 2, source_len: 5, tm_id: Some(1), fms: Some(0.85) },
        ];
        let system = fake_system(
            "copy",
            vec![toks("a b c d e"), toks("f g h i j"), toks("x l m n o")],
        );
        let table = bucket_eval(&BucketSpec::fms_default(), &items, &references, &[system]).unwrap();
        assert_eq!(table.rows.len(), 5);
        let total: usize = table.rows.iter().map(|r| r.count).sum();
        assert_eq!(total, items.len());
        // fms None buckets as zero-similarity.
        assert_eq!(table.rows[0].count, 1);
        assert_eq!(table.rows[4].count, 2);
        // Middle buckets are empty: absent scores, not zeros.
        for i in 1..4 {
            assert_eq!(table.rows[i].count, 0);
            assert_eq!(table.rows[i].scores, vec![None]);
        }
        assert_eq!(table.rows[0].scores[0], Some(100.0));
        let high = table.rows[4].scores[0].unwrap();
        assert!(high > 0.0 && high < 100.0);
    }

    #[test]
    fn experiment_on_copy_language() {
        let store = copy_store();
        let index = build_index(&store).unwrap();
        let model = copy_model(&store);
        let aligner = train_model1(&store, 5).unwrap();
        let items = copy_items();
        // Greedy decoding: under the gentle length penalty a wider beam can
        // keep a two-token finish alive on a corpus this small, and this test
        // is about the plumbing, not beam pathology.
        let config = ExperimentConfig {
            width: 1,
            conj: conj_for_test_langs(),
            ..ExperimentConfig::default()
        };
        let report = run_experiment(&store, Some(&index), &model, Some(&aligner), &items, &config)
            .unwrap();
        assert_eq!(report.systems.len(), 7);
        assert_eq!(report.items.len(), 3);
        for system in &report.systems {
            assert_eq!(system.outputs.len(), 3);
            assert_eq!(system.records.len(), 3);
            assert_eq!(system.failures, 0, "{} failed", system.name);
            for record in &system.records {
                assert!(record.error.is_none());
            }
        }
        // The first item is stored verbatim, so retrieval pins it at 1.0
        // and a copy model under any template reproduces it exactly.
        assert_eq!(report.items[0].fms, Some(1.0));
        for system in &report.systems {
            assert_eq!(
                system.outputs[0], items[0].source,
                "{} mangled an exact-match sentence",
                system.name
            );
        }
        assert_eq!(report.buckets.len(), 1);
        let counts: usize = report.buckets[0].rows.iter().map(|r| r.count).sum();
        assert_eq!(counts, 3);
    }

    #[test]
    fn threshold_disables_tm_and_matches_baseline() {
        let store = copy_store();
        let index = build_index(&store).unwrap();
        let model = copy_model(&store);
        let items = copy_items();
        let config = ExperimentConfig {
            systems: vec![
                SystemKind::Baseline,
                SystemKind::Sentence(TemplateKind::Directly),
            ],
            fms_threshold: Some(1.1),
            conj: conj_for_test_langs(),
            ..ExperimentConfig::default()
        };
        let report =
            run_experiment(&store, Some(&index), &model, None, &items, &config).unwrap();
        // Every TM is gated off, so the template system degenerates to the
        // baseline output for output purposes...
        assert_eq!(report.systems[0].outputs, report.systems[1].outputs);
        // ...while the retrieval scores stay visible for bucketing.
        assert!(report.items.iter().all(|i| i.fms.is_some()));
    }

    #[test]
    fn sentence_errors_are_recorded_not_fatal() {
        let store = copy_store();
        let index = build_index(&store).unwrap();
        let model = copy_model(&store);
        let items = copy_items();
        // Store languages are "xx"/"yy": the default table has no
        // conjunction for them, so that one system fails per sentence.
        let config = ExperimentConfig {
            systems: vec![
                SystemKind::Baseline,
                SystemKind::Sentence(TemplateKind::Conjunction),
            ],
            ..ExperimentConfig::default()
        };
        let report =
            run_experiment(&store, Some(&index), &model, None, &items, &config).unwrap();
        assert_eq!(report.systems[0].failures, 0);
        assert_eq!(report.systems[1].failures, items.len());
        for record in &report.systems[1].records {
            assert!(record.error.as_deref().unwrap().contains("conjunction"));
            assert!(record.output.is_empty());
            assert_eq!(record.bleu, 0.0);
        }
        // Failed sentences score as empty hypotheses.
        assert_eq!(report.systems[1].bleu.bleu, 0.0);
    }

    #[test]
    fn self_tm_mode_uses_references() {
        let store = copy_store();
        let model = copy_model(&store);
        let items = copy_items();
        let config = ExperimentConfig {
            systems: vec![SystemKind::Sentence(TemplateKind::Directly)],
            retrieval: RetrievalMode::SelfTm,
            conj: conj_for_test_langs(),
            ..ExperimentConfig::default()
        };
        let report = run_experiment(&store, None, &model, None, &items, &config).unwrap();
        assert!(report.items.iter().all(|i| i.fms == Some(1.0)));
        assert!(report.items.iter().all(|i| i.tm_id.is_none()));
        assert_eq!(report.systems[0].failures, 0);
    }

    #[test]
    fn assigned_mode_validates_and_computes_fms() {
        let store = copy_store();
        let items = copy_items();
        let assigned = resolve_tms(
            &store,
            None,
            &items,
            &RetrievalMode::Assigned(vec![Some(0), None, Some(7)]),
        )
        .unwrap();
        assert_eq!(assigned[0].as_ref().unwrap().fms, 1.0);
        assert!(assigned[1].is_none());
        // Entry 7 normalizes to six tokens; "mira sol pek" needs four
        // edits against it.
        assert_eq!(assigned[2].as_ref().unwrap().entry_id, Some(7));
        assert!((assigned[2].as_ref().unwrap().fms - (1.0 - 4.0 / 6.0)).abs() < 1e-12);
        let short = resolve_tms(&store, None, &items, &RetrievalMode::Assigned(vec![None]));
        assert!(matches!(short, Err(EvalError::AssignedLength { .. })));
        let bad = resolve_tms(
            &store,
            None,
            &items,
            &RetrievalMode::Assigned(vec![Some(99), None, None]),
        );
        assert!(matches!(bad, Err(EvalError::BadAssignedId(99))));
    }

    #[test]
    fn reports_identical_across_job_counts() {
        let store = copy_store();
        let index = build_index(&store).unwrap();
        let model = copy_model(&store);
        let aligner = train_model1(&store, 5).unwrap();
        let items = copy_items();
        let run = |jobs: usize| {
            let config = ExperimentConfig {
                jobs,
                conj: conj_for_test_langs(),
                ..ExperimentConfig::default()
            };
            let report =
                run_experiment(&store, Some(&index), &model, Some(&aligner), &items, &config)
                    .unwrap();
            (render_report(&report), render_records(&report))
        };
        let (report_1, records_1) = run(1);
        let (report_4, records_4) = run(4);
        assert_eq!(report_1, report_4);
        assert_eq!(records_1, records_4);
        assert!(report_1.contains("baseline"));
        assert!(records_1.lines().count() == 7 * 3);
    }

    #[test]
    fn missing_prerequisites_are_rejected() {
        let store = copy_store();
        let model = copy_model(&store);
        let items = copy_items();
        let config = ExperimentConfig::default();
        // Index mode without an index.
        let err = run_experiment(&store, None, &model, None, &items, &config);
        assert!(matches!(err, Err(EvalError::MissingAligner)));
        let no_fragment = ExperimentConfig {
            systems: vec![SystemKind::Baseline],
            ..ExperimentConfig::default()
        };
        let err = run_experiment(&store, None, &model, None, &items, &no_fragment);
        assert!(matches!(err, Err(EvalError::MissingIndex)));
        let err = run_experiment(&store, None, &model, None, &[], &no_fragment);
        assert!(matches!(err, Err(EvalError::EmptyTestSet)));
        let zero_jobs = ExperimentConfig {
            jobs: 0,
            systems: vec![SystemKind::Baseline],
            retrieval: RetrievalMode::SelfTm,
            ..ExperimentConfig::default()
        };
        let err = run_experiment(&store, None, &model, None, &items, &zero_jobs);
        assert!(matches!(err, Err(EvalError::BadJobs)));
    }
}
