//! Turns generated text into 5 to 7 word candidate passphrases.
//!
//! Pipeline: split at terminators, drop segments under five words, remove
//! `and`/`the`/`a`/`an`, keep 5..=7 words, swap personal pronouns for
//! character names, drop duplicates.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{tokenize_segments, Corpus};
use crate::generator::GeneratedText;
use crate::rng::SplitMix64;

pub const MIN_WORDS: usize = 5;
pub const MAX_WORDS: usize = 7;
pub const REMOVAL_SET: [&str; 4] = ["and", "the", "a", "an"];
pub const PRONOUNS: [&str; 6] = ["i", "me", "she", "he", "them", "it"];

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ExtractError {
    #[error("no character names available for pronoun replacement")]
    NoCharacters,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ReplacedSlot {
    pub position: usize,
    pub original: String,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidatePassphrase {
    /// One entry per slot. A multi-word character name fills a single slot.
    pub words: Vec<String>,
    pub corpus_id: String,
    pub source_segment: String,
    pub replaced_slots: Vec<ReplacedSlot>,
}

impl CandidatePassphrase {
    /// Words joined by single spaces, as a user would type it.
    pub fn text(&self) -> String {
        self.words.join(" ")
    }

    /// Whitespace-split tokens, so multi-word names count as several tokens.
    pub fn tokens(&self) -> Vec<String> {
        self.words
            .iter()
            .flat_map(|w| w.split_whitespace().map(str::to_string))
            .collect()
    }
}

fn is_removable(word: &str) -> bool {
    REMOVAL_SET.iter().any(|r| r.eq_ignore_ascii_case(word))
}

fn is_pronoun(word: &str) -> bool {
    PRONOUNS.iter().any(|p| p.eq_ignore_ascii_case(word))
}

/// Segments of the text with at least five words.
pub fn split_candidates(text: &str) -> Vec<Vec<String>> {
    tokenize_segments(text)
        .into_iter()
        .filter(|s| s.len() >= MIN_WORDS)
        .collect()
}

pub fn remove_function_words(seq: &[String]) -> Vec<String> {
    seq.iter().filter(|w| !is_removable(w)).cloned().collect()
}

/// Replaces each pronoun with a uniformly drawn character name.
pub fn replace_pronouns(
    seq: &[String],
    characters: &[String],
    rng: &mut SplitMix64,
) -> Result<(Vec<String>, Vec<ReplacedSlot>), ExtractError> {
    if characters.is_empty() {
        return Err(ExtractError::NoCharacters);
    }
    let mut slots = Vec::new();
    let words = seq
        .iter()
        .enumerate()
        .map(|(position, w)| {
            if is_pronoun(w) {
                let name = characters[rng.index(characters.len())].clone();
                slots.push(ReplacedSlot {
                    position,
                    original: w.clone(),
                    name: name.clone(),
                });
                name
            } else {
                w.clone()
            }
        })
        .collect();
    Ok((words, slots))
}

/// Seeded convenience wrapper around [`replace_pronouns`].
pub fn replace_pronouns_seeded(
    seq: &[String],
    characters: &[String],
    seed: u64,
) -> Result<(Vec<String>, Vec<ReplacedSlot>), ExtractError> {
    replace_pronouns(seq, characters, &mut SplitMix64::new(seed))
}

pub fn extract_candidates(
    text: &GeneratedText,
    corpus: &Corpus,
    seed: u64,
) -> Result<Vec<CandidatePassphrase>, ExtractError> {
    extract_from_str(&text.text, &corpus.id, &corpus.character_names, seed)
}

/// Extraction over raw text with an explicit character list.
pub fn extract_from_str(
    text: &str,
    corpus_id: &str,
    characters: &[String],
    seed: u64,
) -> Result<Vec<CandidatePassphrase>, ExtractError> {
    if characters.is_empty() {
        return Err(ExtractError::NoCharacters);
    }
    let mut rng = SplitMix64::new(seed);
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for segment in split_candidates(text) {
        let cleaned = remove_function_words(&segment);
        if !(MIN_WORDS..=MAX_WORDS).contains(&cleaned.len()) {
            continue;
        }
        let (words, replaced_slots) = replace_pronouns(&cleaned, characters, &mut rng)?;
        if !seen.insert(words.clone()) {
            continue;
        }
        out.push(CandidatePassphrase {
            words,
            corpus_id: corpus_id.to_string(),
            source_segment: segment.join(" "),
            replaced_slots,
        });
    }
    Ok(out)
}

/// `pos:orig:name` entries joined by `;`.
pub fn encode_slots(slots: &[ReplacedSlot]) -> String {
    slots
        .iter()
        .map(|s| format!("{}:{}:{}", s.position, s.original, s.name))
        .collect::<Vec<_>>()
        .join(";")
}

pub fn decode_slots(field: &str) -> Option<Vec<ReplacedSlot>> {
    if field.is_empty() {
        return Some(Vec::new());
    }
    field
        .split(';')
        .map(|entry| {
            let mut parts = entry.splitn(3, ':');
            let position = parts.next()?.parse().ok()?;
            let original = parts.next()?.to_string();
            let name = parts.next()?.to_string();
            Some(ReplacedSlot {
                position,
                original,
                name,
            })
        })
        .collect()
}

/// One TSV line: words (tab-joined), source segment, encoded slots.
pub fn to_tsv_line(c: &CandidatePassphrase) -> String {
    format!(
        "{}\t{}\t{}",
        c.words.join("\t"),
        c.source_segment,
        encode_slots(&c.replaced_slots)
    )
}

/// Inverse of [`to_tsv_line`]. The last two fields are the segment and slots.
pub fn from_tsv_line(line: &str, corpus_id: &str) -> Option<CandidatePassphrase> {
    let fields: Vec<&str> = line.split('\t').collect();
    if fields.len() < 3 {
        return None;
    }
    let (words, rest) = fields.split_at(fields.len() - 2);
    if words.iter().any(|w| w.is_empty()) {
        return None;
    }
    Some(CandidatePassphrase {
        words: words.iter().map(|w| w.to_string()).collect(),
        corpus_id: corpus_id.to_string(),
        source_segment: rest[0].to_string(),
        replaced_slots: decode_slots(rest[1])?,
    })
}
