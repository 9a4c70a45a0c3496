//! Beam-search decoding over a pluggable autoregressive model, with an
//! optional forced-prefix phase.
//!
//! During forcing the beam collapses to a single hypothesis: each prefix
//! token is emitted with probability 1 (log-prob contribution 0) and the
//! model is not consulted; the full forced prefix conditions every later
//! query. Free-phase hypotheses are ranked by GNMT-style normalized score
//! `log_prob / ((5 + l) / 6)^alpha`, where `l` counts every free emission
//! including the end-of-sequence token. A hypothesis that emits EOS is
//! frozen and keeps competing for beam slots at its final score; the final
//! answer is the best finished hypothesis, falling back to the best
//! unfinished one at the length limit.

use crate::template::PromptedPair;
use thiserror::Error;

pub const EOS_TOKEN: &str = "</s>";
pub const DEFAULT_ALPHA: f64 = 0.6;
const DISTRIBUTION_TOLERANCE: f64 = 1e-6;

/// An autoregressive translation model. `next_distribution` returns the
/// probability of every vocabulary token plus, in the final slot, EOS;
/// it must be deterministic and normalized within 1e-6.
pub trait TranslationModel: Sync {
    fn vocab(&self) -> &[String];

    fn next_distribution(&self, source: &[String], prefix: &[String]) -> Vec<f64>;

    fn token_id(&self, token: &str) -> Option<usize> {
        self.vocab().iter().position(|t| t == token)
    }
}

#[derive(Debug, Error)]
pub enum DecodeError {
    #[error("beam width must be at least 1")]
    ZeroWidth,
    #[error("max length must be at least 1")]
    ZeroMaxLen,
    #[error("forced prefix must be non-empty")]
    EmptyPrefix,
    #[error("max length {max_len} must exceed the forced prefix length {forced_len}")]
    MaxLenTooShort { max_len: usize, forced_len: usize },
    #[error("forced token {token:?} is not in the model vocabulary")]
    ForcedTokenOov { token: String },
    #[error("model distribution invalid at step {step}: {detail}")]
    BadDistribution { step: usize, detail: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeResult {
    /// Forced prefix followed by the generated suffix (EOS included when
    /// the hypothesis finished).
    pub full_output: Vec<String>,
    /// The generated suffix with EOS removed: the translation proper.
    pub translation: Vec<String>,
    pub forced_len: usize,
    /// Sum of log-probabilities over the free suffix only; forced tokens
    /// contribute exactly 0.
    pub free_log_prob: f64,
}

/// GNMT length penalty ((5 + l) / 6)^alpha.
pub fn length_penalty(l: usize, alpha: f64) -> f64 {
    ((5.0 + l as f64) / 6.0).powf(alpha)
}

#[derive(Debug, Clone)]
struct Hypothesis {
    /// Free-phase emissions as vocabulary ids; `vocab_len` encodes EOS.
    free_ids: Vec<usize>,
    log_prob: f64,
    finished: bool,
}

impl Hypothesis {
    fn score(&self, alpha: f64) -> f64 {
        self.log_prob / length_penalty(self.free_ids.len(), alpha)
    }

    /// Beam ordering: higher score first, then shorter, then lexicographic
    /// ids — a total order, so decoding is deterministic.
    fn rank(&self, other: &Hypothesis, alpha: f64) -> std::cmp::Ordering {
        other
            .score(alpha)
            .total_cmp(&self.score(alpha))
            .then(self.free_ids.len().cmp(&other.free_ids.len()))
            .then_with(|| self.free_ids.cmp(&other.free_ids))
    }
}

fn validate_distribution(
    dist: &[f64],
    vocab_len: usize,
    step: usize,
) -> Result<(), DecodeError> {
    if dist.len() != vocab_len + 1 {
        return Err(DecodeError::BadDistribution {
            step,
            detail: format!("length {} != vocabulary size {} + 1", dist.len(), vocab_len),
        });
    }
    let mut sum = 0.0;
    for &p in dist {
        if !p.is_finite() || p < 0.0 {
            return Err(DecodeError::BadDistribution {
                step,
                detail: format!("probability {p} out of range"),
            });
        }
        sum += p;
    }
    if (sum - 1.0).abs() > DISTRIBUTION_TOLERANCE {
        return Err(DecodeError::BadDistribution {
            step,
            detail: format!("sums to {sum}"),
        });
    }
    Ok(())
}

fn decode<M: TranslationModel + ?Sized>(
    model: &M,
    source: &[String],
    forced_prefix: &[String],
    width: usize,
    max_len: usize,
    alpha: f64,
) -> Result<DecodeResult, DecodeError> {
    if width == 0 {
        return Err(DecodeError::ZeroWidth);
    }
    if max_len == 0 {
        return Err(DecodeError::ZeroMaxLen);
    }
    let forced_len = forced_prefix.len();
    if forced_len > 0 {
        if max_len <= forced_len {
            return Err(DecodeError::MaxLenTooShort {
                max_len,
                forced_len,
            });
        }
        for token in forced_prefix {
            if model.token_id(token).is_none() {
                return Err(DecodeError::ForcedTokenOov {
                    token: token.clone(),
                });
            }
        }
    }
    let vocab = model.vocab();
    let vocab_len = vocab.len();
    let budget = max_len - forced_len;

    let mut beam = vec![Hypothesis {
        free_ids: Vec::new(),
        log_prob: 0.0,
        finished: false,
    }];
    // Completed hypotheses stay in the beam (so width 1 stops at the first
    // EOS, exactly like greedy search), but under length normalization an
    // unfinished hypothesis can outscore a finished one transiently and
    // push it out of a wider beam. Remember the best finished hypothesis
    // ever admitted so pruning can never discard the winner.
    let mut best_finished: Option<Hypothesis> = None;
    let mut prefix_buf: Vec<String> = forced_prefix.to_vec();
    for step in 0..budget {
        let mut candidates: Vec<Hypothesis> = Vec::new();
        let mut any_unfinished = false;
        for hyp in &beam {
            if hyp.finished {
                candidates.push(hyp.clone());
                continue;
            }
            any_unfinished = true;
            prefix_buf.truncate(forced_len);
            prefix_buf.extend(hyp.free_ids.iter().map(|&id| vocab[id].clone()));
            let dist = model.next_distribution(source, &prefix_buf);
            validate_distribution(&dist, vocab_len, step)?;
            for (id, &p) in dist.iter().enumerate() {
                if p <= 0.0 {
                    continue;
                }
                let mut free_ids = hyp.free_ids.clone();
                free_ids.push(id);
                candidates.push(Hypothesis {
                    free_ids,
                    log_prob: hyp.log_prob + p.ln(),
                    finished: id == vocab_len,
                });
            }
        }
        if !any_unfinished {
            break;
        }
        candidates.sort_by(|a, b| a.rank(b, alpha));
        candidates.truncate(width);
        beam = candidates;
        for hyp in beam.iter().filter(|h| h.finished) {
            if best_finished
                .as_ref()
                .is_none_or(|b| hyp.rank(b, alpha).is_lt())
            {
                best_finished = Some(hyp.clone());
            }
        }
    }

    let chosen = best_finished.unwrap_or_else(|| beam[0].clone());
    let mut full_output = forced_prefix.to_vec();
    for &id in &chosen.free_ids {
        full_output.push(if id == vocab_len {
            EOS_TOKEN.to_string()
        } else {
            vocab[id].clone()
        });
    }
    let translation: Vec<String> = full_output[forced_len..]
        .iter()
        .filter(|t| t.as_str() != EOS_TOKEN)
        .cloned()
        .collect();
    Ok(DecodeResult {
        full_output,
        translation,
        forced_len,
        free_log_prob: chosen.log_prob,
    })
}

/// Plain beam search from an empty prefix (`forced_len = 0`).
pub fn beam_search<M: TranslationModel + ?Sized>(
    model: &M,
    source: &[String],
    width: usize,
    max_len: usize,
) -> Result<DecodeResult, DecodeError> {
    beam_search_alpha(model, source, width, max_len, DEFAULT_ALPHA)
}

pub fn beam_search_alpha<M: TranslationModel + ?Sized>(
    model: &M,
    source: &[String],
    width: usize,
    max_len: usize,
    alpha: f64,
) -> Result<DecodeResult, DecodeError> {
    decode(model, source, &[], width, max_len, alpha)
}

/// Force-decode the prompt's prefix, then search freely. `max_len` is the
/// total output budget including the forced prefix.
pub fn forced_beam_search<M: TranslationModel + ?Sized>(
    model: &M,
    prompted: &PromptedPair,
    width: usize,
    max_len: usize,
) -> Result<DecodeResult, DecodeError> {
    forced_beam_search_alpha(model, prompted, width, max_len, DEFAULT_ALPHA)
}

pub fn forced_beam_search_alpha<M: TranslationModel + ?Sized>(
    model: &M,
    prompted: &PromptedPair,
    width: usize,
    max_len: usize,
    alpha: f64,
) -> Result<DecodeResult, DecodeError> {
    if prompted.forced_prefix.is_empty() {
        return Err(DecodeError::EmptyPrefix);
    }
    decode(
        model,
        &prompted.encoder_tokens,
        &prompted.forced_prefix,
        width,
        max_len,
        alpha,
    )
}

/// Tokens after the forced region, with EOS removed.
pub fn strip_prompt(result: &DecodeResult) -> Vec<String> {
    result.full_output[result.forced_len..]
        .iter()
        .filter(|t| t.as_str() != EOS_TOKEN)
        .cloned()
        .collect()
}
