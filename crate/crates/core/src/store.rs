//! Translation-memory store: tokenized bilingual entries plus persistence.
//!
//! On-disk format (`save_store`/`load_store`): UTF-8 JSON Lines, LF line
//! endings. Line 1 is a header object
//! `{"format":"tm-store","version":1,"source_lang":..,"target_lang":..,"entries":N}`;
//! lines 2..N+1 are entry records `{"id":i,"source":[tokens],"target":[tokens]}`
//! with ids equal to their zero-based position. Retrieval tokens are not
//! stored; they are recomputed on load (normalization is deterministic).

use crate::text::{normalize_for_retrieval, tokenize};
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use thiserror::Error;

pub const STORE_FORMAT: &str = "tm-store";
pub const STORE_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("i/o error")]
    Io(#[from] std::io::Error),
    #[error(
        "line count mismatch: source file has {source_lines} lines, target file has {target_lines}"
    )]
    LineCountMismatch {
        source_lines: usize,
        target_lines: usize,
    },
    #[error("line {line}: expected source<TAB>target")]
    MissingTab { line: usize },
    #[error("malformed store file: {0}")]
    Format(String),
    #[error(
        "unsupported store format {found_format:?} version {found_version} \
         (expected {STORE_FORMAT:?} version {STORE_VERSION})"
    )]
    Version {
        found_format: String,
        found_version: u32,
    },
    #[error("invalid json")]
    Json(#[from] serde_json::Error),
}

/// One bilingual segment. `source_retrieval_tokens` is the normalized view
/// used for indexing and fuzzy matching; it is derived, never stored.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TmEntry {
    pub id: u32,
    pub source_tokens: Vec<String>,
    pub target_tokens: Vec<String>,
    pub source_retrieval_tokens: Vec<String>,
}

impl TmEntry {
    pub fn new(id: u32, source_tokens: Vec<String>, target_tokens: Vec<String>) -> Self {
        let source_retrieval_tokens = normalize_for_retrieval(&source_tokens);
        TmEntry {
            id,
            source_tokens,
            target_tokens,
            source_retrieval_tokens,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TmStore {
    pub entries: Vec<TmEntry>,
    pub source_lang: String,
    pub target_lang: String,
}

impl TmStore {
    /// Build a store from already-tokenized pairs, skipping pairs empty on
    /// either side. Ids are assigned densely in input order.
    pub fn from_pairs<I>(pairs: I, source_lang: &str, target_lang: &str) -> Self
    where
        I: IntoIterator<Item = (Vec<String>, Vec<String>)>,
    {
        let mut entries = Vec::new();
        for (source, target) in pairs {
            if source.is_empty() || target.is_empty() {
                continue;
            }
            entries.push(TmEntry::new(entries.len() as u32, source, target));
        }
        TmStore {
            entries,
            source_lang: source_lang.to_string(),
            target_lang: target_lang.to_string(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// An input sentence paired with its normalized retrieval form.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Query {
    pub tokens: Vec<String>,
    pub retrieval_tokens: Vec<String>,
}

impl Query {
    pub fn new(tokens: Vec<String>) -> Self {
        let retrieval_tokens = normalize_for_retrieval(&tokens);
        Query {
            tokens,
            retrieval_tokens,
        }
    }

    pub fn from_text(text: &str, lang: &str) -> Self {
        Query::new(tokenize(text, lang))
    }
}

#[derive(Debug)]
pub struct IngestOutcome {
    pub store: TmStore,
    /// Line pairs dropped because one side tokenized to nothing.
    pub skipped: usize,
}

fn read_lines(path: &Path) -> Result<Vec<String>, StoreError> {
    let file = File::open(path)?;
    BufReader::new(file)
        .lines()
        .collect::<Result<Vec<_>, _>>()
        .map_err(StoreError::from)
}

fn build_from_line_pairs(
    pairs: Vec<(String, String)>,
    source_lang: &str,
    target_lang: &str,
) -> IngestOutcome {
    let mut entries = Vec::new();
    let mut skipped = 0usize;
    for (src, tgt) in pairs {
        let source = tokenize(&src, source_lang);
        let target = tokenize(&tgt, target_lang);
        if source.is_empty() || target.is_empty() {
            skipped += 1;
            continue;
        }
        entries.push(TmEntry::new(entries.len() as u32, source, target));
    }
    IngestOutcome {
        store: TmStore {
            entries,
            source_lang: source_lang.to_string(),
            target_lang: target_lang.to_string(),
        },
        skipped,
    }
}

/// Read a line-aligned file pair and build a store. Pairs blank on either
/// side are skipped and counted, not fatal; a line-count mismatch is fatal.
pub fn ingest_corpus(
    source_path: &Path,
    target_path: &Path,
    source_lang: &str,
    target_lang: &str,
) -> Result<IngestOutcome, StoreError> {
    let source_lines = read_lines(source_path)?;
    let target_lines = read_lines(target_path)?;
    if source_lines.len() != target_lines.len() {
        return Err(StoreError::LineCountMismatch {
            source_lines: source_lines.len(),
            target_lines: target_lines.len(),
        });
    }
    let pairs = source_lines.into_iter().zip(target_lines).collect();
    Ok(build_from_line_pairs(pairs, source_lang, target_lang))
}

/// Read a single TSV file (`source<TAB>target` per line) and build a store.
pub fn ingest_corpus_tsv(
    path: &Path,
    source_lang: &str,
    target_lang: &str,
) -> Result<IngestOutcome, StoreError> {
    let mut pairs = Vec::new();
    for (i, line) in read_lines(path)?.into_iter().enumerate() {
        let (src, tgt) = line
            .split_once('\t')
            .ok_or(StoreError::MissingTab { line: i + 1 })?;
        pairs.push((src.to_string(), tgt.to_string()));
    }
    Ok(build_from_line_pairs(pairs, source_lang, target_lang))
}

#[derive(Serialize, Deserialize)]
struct StoreHeader {
    format: String,
    version: u32,
    source_lang: String,
    target_lang: String,
    entries: u64,
}

#[derive(Serialize, Deserialize)]
struct StoreRecord {
    id: u32,
    source: Vec<String>,
    target: Vec<String>,
}

pub fn save_store(store: &TmStore, path: &Path) -> Result<(), StoreError> {
    let mut out = BufWriter::new(File::create(path)?);
    let header = StoreHeader {
        format: STORE_FORMAT.to_string(),
        version: STORE_VERSION,
        source_lang: store.source_lang.clone(),
        target_lang: store.target_lang.clone(),
        entries: store.entries.len() as u64,
    };
    serde_json::to_writer(&mut out, &header)?;
    out.write_all(b"\n")?;
    for entry in &store.entries {
        let record = StoreRecord {
            id: entry.id,
            source: entry.source_tokens.clone(),
            target: entry.target_tokens.clone(),
        };
        serde_json::to_writer(&mut out, &record)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn load_store(path: &Path) -> Result<TmStore, StoreError> {
    let file = File::open(path)?;
    let mut lines = BufReader::new(file).lines();
    let header_line = lines
        .next()
        .ok_or_else(|| StoreError::Format("missing header line".to_string()))??;
    let header: StoreHeader = serde_json::from_str(&header_line)
        .map_err(|e| StoreError::Format(format!("bad header: {e}")))?;
    if header.format != STORE_FORMAT || header.version != STORE_VERSION {
        return Err(StoreError::Version {
            found_format: header.format,
            found_version: header.version,
        });
    }
    let mut entries = Vec::with_capacity(header.entries as usize);
    for i in 0..header.entries {
        let line = lines.next().ok_or_else(|| {
            StoreError::Format(format!(
                "truncated: expected {} entries, file ends after {i}",
                header.entries
            ))
        })??;
        let record: StoreRecord = serde_json::from_str(&line)
            .map_err(|e| StoreError::Format(format!("entry {i}: {e}")))?;
        if u64::from(record.id) != i {
            return Err(StoreError::Format(format!(
                "entry {i} carries id {}",
                record.id
            )));
        }
        if record.source.is_empty() || record.target.is_empty() {
            return Err(StoreError::Format(format!("entry {i} has an empty side")));
        }
        entries.push(TmEntry::new(record.id, record.source, record.target));
    }
    for line in lines {
        if !line?.trim().is_empty() {
            return Err(StoreError::Format(
                "trailing data after final entry".to_string(),
            ));
        }
    }
    Ok(TmStore {
        entries,
        source_lang: header.source_lang,
        target_lang: header.target_lang,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_file(dir: &Path, name: &str, contents: &str) -> std::path::PathBuf {
        let path = dir.join(name);
        let mut f = File::create(&path).unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        path
    }

    #[test]
    fn ingest_three_lines() {
        let dir = tempfile::tempdir().unwrap();
        let src = write_file(dir.path(), "s.txt", "a b\nc d\ne f\n");
        let tgt = write_file(dir.path(), "t.txt", "x\ny\nz\n");
        let out = ingest_corpus(&src, &tgt, "en", "de").unwrap();
        assert_eq!(out.store.len(), 3);
        assert_eq!(out.skipped, 0);
        assert_eq!(
            out.store.entries.iter().map(|e| e.id).collect::<Vec<_>>(),
            [0, 1, 2]
        );
        assert_eq!(out.store.entries[1].source_tokens, ["c", "d"]);
    }

    #[test]
    fn ingest_skips_blank_pairs() {
        let dir = tempfile::tempdir().unwrap();
        let src = write_file(dir.path(), "s.txt", "a\nb\nc\n");
        let tgt = write_file(dir.path(), "t.txt", "x\n\nz\n");
        let out = ingest_corpus(&src, &tgt, "en", "de").unwrap();
        assert_eq!(out.store.len(), 2);
        assert_eq!(out.skipped, 1);
        assert_eq!(out.store.entries[1].id, 1);
        assert_eq!(out.store.entries[1].source_tokens, ["c"]);
    }

    #[test]
    fn ingest_line_count_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let src = write_file(dir.path(), "s.txt", "a\nb\n");
        let tgt = write_file(dir.path(), "t.txt", "x\n");
        let err = ingest_corpus(&src, &tgt, "en", "de").unwrap_err();
        match err {
            StoreError::LineCountMismatch {
                source_lines,
                target_lines,
            } => {
                assert_eq!((source_lines, target_lines), (2, 1));
            }
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn ingest_tsv() {
        let dir = tempfile::tempdir().unwrap();
        let tsv = write_file(dir.path(), "c.tsv", "a b\tx y\nc\tz\n");
        let out = ingest_corpus_tsv(&tsv, "en", "de").unwrap();
        assert_eq!(out.store.len(), 2);
        assert_eq!(out.store.entries[0].target_tokens, ["x", "y"]);
        let bad = write_file(dir.path(), "bad.tsv", "no tab here\n");
        assert!(matches!(
            ingest_corpus_tsv(&bad, "en", "de").unwrap_err(),
            StoreError::MissingTab { line: 1 }
        ));
    }

    #[test]
    fn retrieval_tokens_derived() {
        let e = TmEntry::new(
            0,
            vec!["Resolution".into(), "1325".into(), "(".into(), "2000".into(), ")".into()],
            vec!["x".into()],
        );
        assert_eq!(e.source_retrieval_tokens, ["resolution"]);
    }

    #[test]
    fn round_trip_small() {
        let dir = tempfile::tempdir().unwrap();
        let store = TmStore::from_pairs(
            vec![
                (vec!["A".into(), ",".into(), "b".into()], vec!["x".into()]),
                (vec!["C".into()], vec!["y".into(), ".".into()]),
            ],
            "en",
            "de",
        );
        let path = dir.path().join("store.jsonl");
        save_store(&store, &path).unwrap();
        let loaded = load_store(&path).unwrap();
        assert_eq!(loaded, store);
    }

    #[test]
    fn load_rejects_truncation_and_versions() {
        let dir = tempfile::tempdir().unwrap();
        let store = TmStore::from_pairs(
            vec![(vec!["a".into()], vec!["x".into()]); 3],
            "en",
            "de",
        );
        let path = dir.path().join("store.jsonl");
        save_store(&store, &path).unwrap();
        let full = std::fs::read_to_string(&path).unwrap();
        let truncated: Vec<&str> = full.lines().take(2).collect();
        let tpath = write_file(dir.path(), "trunc.jsonl", &(truncated.join("\n") + "\n"));
        assert!(matches!(
            load_store(&tpath).unwrap_err(),
            StoreError::Format(_)
        ));

        let bumped = full.replacen("\"version\":1", "\"version\":9", 1);
        let vpath = write_file(dir.path(), "vers.jsonl", &bumped);
        assert!(matches!(
            load_store(&vpath).unwrap_err(),
            StoreError::Version { found_version: 9, .. }
        ));
    }

    #[test]
    fn round_trip_million_entries() {
        let dir = tempfile::tempdir().unwrap();
        let n = 1_000_000u32;
        let pairs = (0..n).map(|i| {
            (
                vec![format!("s{}", i % 9973), format!("s{}", i % 89)],
                vec![format!("t{}", i % 9967), format!("t{i}")],
            )
        });
        let store = TmStore::from_pairs(pairs, "en", "de");
        assert_eq!(store.len(), n as usize);
        let path = dir.path().join("big.jsonl");
        save_store(&store, &path).unwrap();
        let loaded = load_store(&path).unwrap();
        assert_eq!(loaded.entries[999_999], store.entries[999_999]);
        assert_eq!(
            loaded.entries[999_999].target_tokens,
            vec![format!("t{}", 999_999 % 9967), "t999999".to_string()]
        );
        assert_eq!(loaded, store);
    }
}
