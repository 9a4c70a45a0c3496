//! Seeded synthetic parallel corpus with controllable TM similarity.
//!
//! The language is engineered so that (a) a bigram-plus-lexicon toy model
//! can translate it reliably, and (b) a matched translation memory carries
//! information the input alone does not. Every clause has three parts:
//!
//! * a *track*: one of a few fixed ten-word runs. Within a track each word
//!   determines its successor, so the target bigram model is confident at
//!   every step and beam search has no cheap early exit;
//! * two *determiner groups*, each `determiner + term + link`: a term's
//!   target side is ambiguous (variant u or v) and is resolved only by the
//!   link word next to it — collocate A forces u, collocate B forces v,
//!   neutral fillers leave a coin flip. Link words all map to one shared
//!   target per group, so the target side never reveals which link word
//!   was present;
//! * link choices cycle deterministically through (A, B, filler+u,
//!   filler+v) per term, keeping every variant's training counts balanced
//!   so no bigram row leaks a preference. Tracks likewise rotate per clause
//!   context (sentence start, after each connector), so clause-head rows
//!   stay balanced and the input's lexical evidence decides which track a
//!   clause continues on.
//!
//! Test items are built from a stored "parent" clause by swapping a few
//! source words for *query fillers* — words that occur in no training
//! pair. High-similarity items replace one mid-track word and both link
//! words (similarity exactly 13/16 = 0.8125 against the parent, which
//! stays the reference): the variant choices become unresolvable from the
//! input, while a prompted parent still carries its collocates.
//! Low-similarity items keep only three trained words (similarity at most
//! 3/16 = 0.1875 against any entry). Both scores are dyadic rationals on
//! purpose: they compare exactly against 0.8 and 0.2 bucket boundaries in
//! floating point.
//!
//! Besides plain clauses, training mixes comma-, semicolon-, and
//! period-joined clause pairs plus a leading parenthetical pattern, so the
//! target bigram model learns informative continuation rows for every
//! template connector token.

use crate::retrieval::fms;
use crate::store::TmStore;
use rand::{Rng, SeedableRng};
// ChaCha8 rather than StdRng: its stream is specified, so generated corpora
// stay reproducible across rand upgrades.
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;

pub const TRACKS: usize = 8;
pub const TRACK_LEN: usize = 10;
pub const LINK_GROUPS: usize = 2;
pub const TERMS_PER_GROUP: usize = 8;
pub const FILLERS_PER_GROUP: usize = 4;
pub const QUERY_FILLERS: usize = 6;
/// Content tokens per clause: the track run plus two determiner groups.
pub const CLAUSE_LEN: usize = TRACK_LEN + 3 * LINK_GROUPS;

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub train_pairs: usize,
    /// High-similarity test items (parent TM at similarity 0.8125).
    pub high_items: usize,
    /// Low-similarity test items (best match below 0.2).
    pub low_items: usize,
    pub seed: u64,
    pub source_lang: String,
    pub target_lang: String,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            train_pairs: 3000,
            high_items: 200,
            low_items: 120,
            seed: 0,
            source_lang: "src".to_string(),
            target_lang: "tgt".to_string(),
        }
    }
}

/// A test sentence with a pre-assigned TM entry and its similarity score.
///
/// For high-similarity items `tm_id` is the parent the item was derived
/// from, and index retrieval provably returns it: entries of a different
/// track or term pair differ from the query in strictly more positions,
/// and entries of the same class tie both the score and the index overlap,
/// so the smallest id — the parent, chosen as its class minimum — wins.
/// For low-similarity items no entry reaches 0.2, and `tm_id` is an
/// arbitrary entry standing in for "the best we have".
#[derive(Debug, Clone, PartialEq)]
pub struct SynthTestItem {
    pub source: Vec<String>,
    pub reference: Vec<String>,
    pub tm_id: u32,
    pub fms: f64,
}

#[derive(Debug)]
pub struct SynthCorpus {
    pub store: TmStore,
    pub high_items: Vec<SynthTestItem>,
    pub low_items: Vec<SynthTestItem>,
}

struct TermWords {
    source: String,
    u: String,
    v: String,
}

struct Group {
    det: (String, String),
    terms: Vec<TermWords>,
    coll_a: Vec<String>,
    coll_b: Vec<String>,
    fillers: Vec<String>,
    link_target: String,
}

struct Lexicon {
    /// tracks[t][i] = (source word, target word) at track position i.
    tracks: Vec<Vec<(String, String)>>,
    groups: Vec<Group>,
    /// Words reserved for test items; never emitted into training pairs.
    query_fillers: Vec<String>,
}

/// Deterministic pseudo-word: syllables indexed by a counter, so every
/// generated word is unique per alphabet.
fn pseudo_word(syllables: &[&str], index: usize, tag: &str) -> String {
    let base = syllables.len();
    let mut i = index;
    let mut w = String::new();
    loop {
        w.push_str(syllables[i % base]);
        i /= base;
        if i == 0 {
            break;
        }
    }
    format!("{w}{tag}")
}

fn build_lexicon() -> Lexicon {
    const SRC_SYL: [&str; 12] = [
        "ba", "do", "ki", "lu", "mo", "ra", "se", "tu", "ve", "za", "pi", "no",
    ];
    const TGT_SYL: [&str; 12] = [
        "ar", "en", "it", "ol", "un", "es", "ik", "om", "ut", "el", "av", "ur",
    ];
    let mut next_src = 0usize;
    let mut next_tgt = 0usize;
    let mut src_word = |tag: &str| {
        next_src += 1;
        pseudo_word(&SRC_SYL, next_src, tag)
    };
    let mut tgt_word = |tag: &str| {
        next_tgt += 1;
        pseudo_word(&TGT_SYL, next_tgt, tag)
    };

    let tracks = (0..TRACKS)
        .map(|t| {
            (0..TRACK_LEN)
                .map(|_| {
                    let tag = format!("w{t}");
                    (src_word(&tag), tgt_word(&tag))
                })
                .collect()
        })
        .collect();
    let groups = (0..LINK_GROUPS)
        .map(|g| {
            let det = (src_word(&format!("d{g}")), tgt_word(&format!("d{g}")));
            let terms = (0..TERMS_PER_GROUP)
                .map(|_| {
                    let tag = format!("t{g}");
                    TermWords {
                        source: src_word(&tag),
                        u: tgt_word(&tag),
                        v: tgt_word(&tag),
                    }
                })
                .collect();
            let coll_a = (0..TERMS_PER_GROUP)
                .map(|_| src_word(&format!("a{g}")))
                .collect();
            let coll_b = (0..TERMS_PER_GROUP)
                .map(|_| src_word(&format!("b{g}")))
                .collect();
            let fillers = (0..FILLERS_PER_GROUP)
                .map(|_| src_word(&format!("f{g}")))
                .collect();
            let link_target = tgt_word(&format!("l{g}"));
            Group {
                det,
                terms,
                coll_a,
                coll_b,
                fillers,
                link_target,
            }
        })
        .collect();
    let query_fillers = (0..QUERY_FILLERS).map(|_| src_word("q")).collect();
    Lexicon {
        tracks,
        groups,
        query_fillers,
    }
}

/// What occupies a link slot.
#[derive(Debug, Clone, Copy, PartialEq)]
enum LinkKind {
    CollA,
    CollB,
    Filler(usize),
}

struct Clause {
    source: Vec<String>,
    target: Vec<String>,
    track: usize,
    terms: [usize; LINK_GROUPS],
    links: [LinkKind; LINK_GROUPS],
}

type Cycles = [[usize; TERMS_PER_GROUP]; LINK_GROUPS];

/// One track rotation per clause context (sentence start, after each
/// connector, inside and after a parenthetical). Each context's bigram row
/// then sees every track head equally often, so no row drifts toward a
/// particular track and drowns out the input's lexical evidence at the
/// first word of a clause.
#[derive(Default)]
struct TrackCycles {
    bos: usize,
    comma: usize,
    semi: usize,
    period: usize,
    open: usize,
    close: usize,
}

fn next_track(counter: &mut usize) -> usize {
    let t = *counter % TRACKS;
    *counter += 1;
    t
}

fn gen_clause(lex: &Lexicon, rng: &mut ChaCha8Rng, cycles: &mut Cycles, track: usize) -> Clause {
    let mut source: Vec<String> = lex.tracks[track].iter().map(|(s, _)| s.clone()).collect();
    let mut target: Vec<String> = lex.tracks[track].iter().map(|(_, t)| t.clone()).collect();
    let mut terms = [0usize; LINK_GROUPS];
    let mut links = [LinkKind::CollA; LINK_GROUPS];
    for g in 0..LINK_GROUPS {
        let term = rng.gen_range(0..TERMS_PER_GROUP);
        terms[g] = term;
        let step = cycles[g][term];
        cycles[g][term] += 1;
        let (link, use_u) = match step % 4 {
            0 => (LinkKind::CollA, true),
            1 => (LinkKind::CollB, false),
            2 => (LinkKind::Filler(rng.gen_range(0..FILLERS_PER_GROUP)), true),
            _ => (LinkKind::Filler(rng.gen_range(0..FILLERS_PER_GROUP)), false),
        };
        links[g] = link;
        let group = &lex.groups[g];
        source.push(group.det.0.clone());
        target.push(group.det.1.clone());
        let t = &group.terms[term];
        source.push(t.source.clone());
        target.push(if use_u { t.u.clone() } else { t.v.clone() });
        let link_src = match link {
            LinkKind::CollA => group.coll_a[term].clone(),
            LinkKind::CollB => group.coll_b[term].clone(),
            LinkKind::Filler(f) => group.fillers[f].clone(),
        };
        source.push(link_src);
        target.push(group.link_target.clone());
    }
    Clause {
        source,
        target,
        track,
        terms,
        links,
    }
}

fn joined(c1: &Clause, c2: &Clause, connector: &str) -> (Vec<String>, Vec<String>) {
    let mut s = c1.source.clone();
    s.push(connector.to_string());
    s.extend(c2.source.iter().cloned());
    let mut t = c1.target.clone();
    t.push(connector.to_string());
    t.extend(c2.target.iter().cloned());
    (s, t)
}

fn parenthetical(c1: &Clause, c2: &Clause) -> (Vec<String>, Vec<String>) {
    let wrap = |inner: &[String], rest: &[String]| {
        let mut out = vec!["(".to_string()];
        out.extend(inner.iter().cloned());
        out.push(")".to_string());
        out.extend(rest.iter().cloned());
        out
    };
    (wrap(&c1.source, &c2.source), wrap(&c1.target, &c2.target))
}

/// Positions a high-similarity item replaces: one mid-track word plus both
/// link words.
fn high_item_slots(rng: &mut ChaCha8Rng) -> [usize; 3] {
    // Never the first track word: it anchors the first decoding step.
    let track_slot = rng.gen_range(1..TRACK_LEN);
    [track_slot, TRACK_LEN + 2, TRACK_LEN + 5]
}

pub fn generate(config: &SynthConfig) -> SynthCorpus {
    let lex = build_lexicon();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut cycles: Cycles = [[0; TERMS_PER_GROUP]; LINK_GROUPS];

    let mut pairs: Vec<(Vec<String>, Vec<String>)> = Vec::with_capacity(config.train_pairs);
    let mut tracks = TrackCycles::default();
    // What each entry is made of, clause by clause: (track, terms).
    let mut entry_meta: Vec<Vec<(usize, [usize; LINK_GROUPS])>> =
        Vec::with_capacity(config.train_pairs);
    // First plain clause per (track, term, term) class. Retrieval breaks
    // exact similarity ties by entry id, so only the smallest id of a class
    // can be a test item's parent.
    let mut class_head: BTreeMap<(usize, usize, usize), (u32, Clause)> = BTreeMap::new();
    for _ in 0..config.train_pairs {
        let roll: f64 = rng.gen();
        let id = pairs.len() as u32;
        if roll < 0.60 {
            let t = next_track(&mut tracks.bos);
            let c = gen_clause(&lex, &mut rng, &mut cycles, t);
            pairs.push((c.source.clone(), c.target.clone()));
            entry_meta.push(vec![(c.track, c.terms)]);
            class_head
                .entry((c.track, c.terms[0], c.terms[1]))
                .or_insert((id, c));
        } else if roll < 0.90 {
            let t1 = next_track(&mut tracks.bos);
            let (connector, counter) = if roll < 0.75 {
                (",", &mut tracks.comma)
            } else if roll < 0.825 {
                (";", &mut tracks.semi)
            } else {
                (".", &mut tracks.period)
            };
            let t2 = next_track(counter);
            let c1 = gen_clause(&lex, &mut rng, &mut cycles, t1);
            let c2 = gen_clause(&lex, &mut rng, &mut cycles, t2);
            pairs.push(joined(&c1, &c2, connector));
            entry_meta.push(vec![(c1.track, c1.terms), (c2.track, c2.terms)]);
        } else {
            let t1 = next_track(&mut tracks.open);
            let t2 = next_track(&mut tracks.close);
            let c1 = gen_clause(&lex, &mut rng, &mut cycles, t1);
            let c2 = gen_clause(&lex, &mut rng, &mut cycles, t2);
            pairs.push(parenthetical(&c1, &c2));
            entry_meta.push(vec![(c1.track, c1.terms), (c2.track, c2.terms)]);
        }
    }
    let store = TmStore::from_pairs(pairs, &config.source_lang, &config.target_lang);

    // Parents must have collocates at both links: those are the entries
    // whose reference variants are fully determined by their own source.
    let eligible: Vec<&(u32, Clause)> = class_head
        .values()
        .filter(|(_, c)| c.links.iter().all(|l| !matches!(l, LinkKind::Filler(_))))
        .collect();
    let mut high_items = Vec::with_capacity(config.high_items);
    for _ in 0..config.high_items {
        let (parent_id, parent) = eligible[rng.gen_range(0..eligible.len())];
        let mut source = parent.source.clone();
        let slots = high_item_slots(&mut rng);
        let picks = rand::seq::index::sample(&mut rng, QUERY_FILLERS, 3);
        for (slot, pick) in slots.iter().zip(picks.iter()) {
            source[*slot] = lex.query_fillers[pick].clone();
        }
        let score = fms(&source, &parent.source).expect("non-empty sentences");
        high_items.push(SynthTestItem {
            source,
            reference: parent.target.clone(),
            tm_id: *parent_id,
            fms: score,
        });
    }

    let mut low_items = Vec::with_capacity(config.low_items);
    for _ in 0..config.low_items {
        // A fresh clause with collocates at both links, so the reference is
        // determined; then blank out everything except the first determiner
        // group with query fillers. At most three trained words survive,
        // putting the best possible match below 0.2.
        let t = rng.gen_range(0..TRACKS);
        let mut clause = gen_clause(&lex, &mut rng, &mut cycles, t);
        while clause.links.iter().any(|l| matches!(l, LinkKind::Filler(_))) {
            let t = rng.gen_range(0..TRACKS);
            clause = gen_clause(&lex, &mut rng, &mut cycles, t);
        }
        let mut source = clause.source.clone();
        let kept = [TRACK_LEN, TRACK_LEN + 1, TRACK_LEN + 2];
        let mut next_q = 0usize;
        for (slot, word) in source.iter_mut().enumerate() {
            if !kept.contains(&slot) {
                *word = lex.query_fillers[next_q % QUERY_FILLERS].clone();
                next_q += 1;
            }
        }
        // Pair it with an arbitrary store entry, the "best we have" when no
        // real match exists. Resample until the pick is both dissimilar and
        // unrelated (no shared track or terms), so a lucky draw cannot leak
        // the right answer into the low bucket. Roughly half the store
        // qualifies, so this terminates quickly.
        let (tm_id, score) = loop {
            let id = rng.gen_range(0..store.len()) as u32;
            let related = entry_meta[id as usize].iter().any(|(track, terms)| {
                *track == clause.track
                    || terms[0] == clause.terms[0]
                    || terms[1] == clause.terms[1]
            });
            if related {
                continue;
            }
            let entry = &store.entries[id as usize];
            let score = fms(&source, &entry.source_tokens).expect("non-empty sentences");
            if score < 0.2 {
                break (id, score);
            }
        };
        low_items.push(SynthTestItem {
            source,
            reference: clause.target,
            tm_id,
            fms: score,
        });
    }

    SynthCorpus {
        store,
        high_items,
        low_items,
    }
}

/// Convenience wrapper used by tests: a reproducible corpus from just a
/// seed with all other parameters at their defaults.
pub fn generate_default(seed: u64) -> SynthCorpus {
    generate(&SynthConfig {
        seed,
        ..SynthConfig::default()
    })
}
