//! Ranks candidates by the best of their 2- to 5-gram joint probabilities.
//! Rank 1 is the least probable, hardest to guess candidate.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Corpus;
use crate::extractor::{CandidatePassphrase, MIN_WORDS};
use crate::ngram::{ModelSet, NGramError, NGramModel};

pub const SCORE_ORDERS: [usize; 4] = [2, 3, 4, 5];

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RankError {
    #[error("nothing to rank")]
    EmptyList,
    #[error("candidate has {0} tokens, need at least {MIN_WORDS}")]
    TooShort(usize),
    #[error("no model of order {0}")]
    MissingModel(usize),
    #[error("keep fraction must be in (0, 1], got {0}")]
    BadKeepFraction(String),
    #[error(transparent)]
    Model(#[from] NGramError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredPassphrase {
    pub candidate: CandidatePassphrase,
    /// log2 joint probabilities under the 2-, 3-, 4- and 5-gram models.
    pub log2: [f64; 4],
    pub score_log2: f64,
    /// 0 until ranked.
    pub rank: usize,
}

impl ScoredPassphrase {
    pub fn a(&self) -> f64 {
        self.log2[0].exp2()
    }
    pub fn b(&self) -> f64 {
        self.log2[1].exp2()
    }
    pub fn c(&self) -> f64 {
        self.log2[2].exp2()
    }
    pub fn d(&self) -> f64 {
        self.log2[3].exp2()
    }
    pub fn score(&self) -> f64 {
        self.score_log2.exp2()
    }
}

/// The four models used for scoring.
#[derive(Debug, Clone)]
pub struct ScoringModels {
    set: ModelSet,
}

impl ScoringModels {
    pub fn build(corpus: &Corpus) -> Result<Self, RankError> {
        Ok(Self {
            set: ModelSet::build(corpus, &SCORE_ORDERS)?,
        })
    }

    pub fn from_models(models: Vec<NGramModel>) -> Result<Self, RankError> {
        let set = ModelSet::from_models(models);
        for o in SCORE_ORDERS {
            set.get(o).ok_or(RankError::MissingModel(o))?;
        }
        Ok(Self { set })
    }

    pub fn get(&self, order: usize) -> &NGramModel {
        self.set.get(order).expect("checked at construction")
    }
}

pub fn score_passphrase(models: &ScoringModels, candidate: &CandidatePassphrase) -> Result<ScoredPassphrase, RankError> {
    let tokens = candidate.tokens();
    if tokens.len() < MIN_WORDS {
        return Err(RankError::TooShort(tokens.len()));
    }
    let mut log2 = [0.0; 4];
    for (slot, order) in SCORE_ORDERS.iter().enumerate() {
        log2[slot] = models.get(*order).joint_log2(&tokens)?;
    }
    let score_log2 = log2.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(ScoredPassphrase {
        candidate: candidate.clone(),
        log2,
        score_log2,
        rank: 0,
    })
}

fn rank_order(x: &ScoredPassphrase, y: &ScoredPassphrase) -> Ordering {
    x.score_log2
        .total_cmp(&y.score_log2)
        .then_with(|| x.candidate.text().cmp(&y.candidate.text()))
}

/// Sorts ascending by score (ties by joined words) and numbers ranks from 1.
pub fn rank_passphrases(mut scored: Vec<ScoredPassphrase>) -> Result<Vec<ScoredPassphrase>, RankError> {
    if scored.is_empty() {
        return Err(RankError::EmptyList);
    }
    scored.sort_by(rank_order);
    for (i, s) in scored.iter_mut().enumerate() {
        s.rank = i + 1;
    }
    Ok(scored)
}

pub fn score_and_rank(
    models: &ScoringModels,
    candidates: &[CandidatePassphrase],
) -> Result<Vec<ScoredPassphrase>, RankError> {
    let scored = candidates
        .iter()
        .map(|c| score_passphrase(models, c))
        .collect::<Result<Vec<_>, _>>()?;
    rank_passphrases(scored)
}

/// Keeps the `ceil(keep_fraction * N)` lowest-score entries.
pub fn blacklist_guessable(ranked: &[ScoredPassphrase], keep_fraction: f64) -> Result<Vec<ScoredPassphrase>, RankError> {
    if !(keep_fraction > 0.0 && keep_fraction <= 1.0) {
        return Err(RankError::BadKeepFraction(keep_fraction.to_string()));
    }
    let keep = (keep_fraction * ranked.len() as f64).ceil() as usize;
    let mut sorted = ranked.to_vec();
    sorted.sort_by_key(|s| s.rank);
    sorted.truncate(keep);
    Ok(sorted)
}

/// TSV line: rank, score_log2, a..d log2, words (tab-joined).
pub fn to_tsv_line(s: &ScoredPassphrase) -> String {
    format!(
        "{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{}",
        s.rank,
        s.score_log2,
        s.log2[0],
        s.log2[1],
        s.log2[2],
        s.log2[3],
        s.candidate.words.join("\t")
    )
}

/// Words of a ranked TSV line, i.e. everything after the first six fields.
pub fn words_from_tsv_line(line: &str) -> Option<Vec<String>> {
    let fields: Vec<&str> = line.split('\t').collect();
    if fields.len() < 7 {
        return None;
    }
    Some(fields[6..].iter().map(|s| s.to_string()).collect())
}
