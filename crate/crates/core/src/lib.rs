//! Retrieval-augmented translation via translation-memory prompting.
//!
//! The pipeline: retrieve the most similar TM pair for an input sentence
//! (fuzzy match over an inverted index), join the pair and the input with a
//! fixed template, force-decode the TM target as a prefix, and return the
//! free remainder as the translation.

pub mod align;
pub mod bleu;
pub mod decoder;
pub mod eval;
pub mod fragment;
pub mod retrieval;
pub mod store;
pub mod synth;
pub mod template;
pub mod text;
pub mod toy_model;
