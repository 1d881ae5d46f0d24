//! Sentence embeddings, cosine similarity, the assignment dissimilarity check
//! and typo-similarity buckets.
//!
//! The built-in provider hashes character trigrams and lower-cased word
//! unigrams into 512 dimensions. External encoders can be attached through
//! [`SocketProvider`], which speaks a line protocol over a local stream
//! socket: one text per line in, one line of space-separated floats out.

use std::collections::HashSet;
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::net::TcpStream;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::tokenize_words;

pub const DEFAULT_DIMENSION: usize = 512;
pub const DEFAULT_THETA: f64 = 0.8;
const NORM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum SimilarityError {
    #[error("text has no words to embed")]
    EmptyText,
    #[error("attempt is identical to the assigned passphrase")]
    AttemptMatchesAssigned,
    #[error("threshold must be in (0, 1], got {0}")]
    BadThreshold(f64),
    #[error("provider returned {got} values, expected {expected}")]
    DimensionMismatch { got: usize, expected: usize },
    #[error("provider returned a zero vector")]
    ZeroVector,
    #[error("provider I/O failed: {0}")]
    Provider(String),
}

pub trait EmbeddingProvider: Send + Sync {
    fn name(&self) -> &str;
    fn dimension(&self) -> usize;
    /// Unit-norm embedding of `text`.
    fn embed(&self, text: &str) -> Result<Vec<f64>, SimilarityError>;
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn normalize(mut v: Vec<f64>) -> Result<Vec<f64>, SimilarityError> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return Err(SimilarityError::ZeroVector);
    }
    for x in &mut v {
        *x /= norm;
    }
    Ok(v)
}

/// Hashed character-trigram plus word-unigram term frequencies.
#[derive(Debug, Clone)]
pub struct HashedNgramProvider {
    dimension: usize,
}

impl Default for HashedNgramProvider {
    fn default() -> Self {
        Self {
            dimension: DEFAULT_DIMENSION,
        }
    }
}

impl HashedNgramProvider {
    pub fn with_dimension(dimension: usize) -> Self {
        assert!(dimension > 0);
        Self { dimension }
    }

    fn bucket(&self, kind: u8, feature: &str) -> usize {
        let mut bytes = Vec::with_capacity(feature.len() + 1);
        bytes.push(kind);
        bytes.extend_from_slice(feature.as_bytes());
        (fnv1a(&bytes) % self.dimension as u64) as usize
    }
}

impl EmbeddingProvider for HashedNgramProvider {
    fn name(&self) -> &str {
        "hashed-ngram"
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, SimilarityError> {
        let words = tokenize_words(text);
        if words.is_empty() {
            return Err(SimilarityError::EmptyText);
        }
        let mut v = vec![0.0; self.dimension];
        let joined: Vec<char> = format!(" {} ", words.join(" ")).chars().collect();
        for tri in joined.windows(3) {
            let s: String = tri.iter().collect();
            v[self.bucket(b'c', &s)] += 1.0;
        }
        for w in &words {
            v[self.bucket(b'w', &w.to_lowercase())] += 1.0;
        }
        normalize(v)
    }
}

/// Client for an external embedding service on a local TCP port.
pub struct SocketProvider {
    name: String,
    dimension: usize,
    conn: Mutex<(BufReader<TcpStream>, TcpStream)>,
}

impl fmt::Debug for SocketProvider {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SocketProvider")
            .field("name", &self.name)
            .field("dimension", &self.dimension)
            .finish()
    }
}

impl SocketProvider {
    pub fn connect(addr: &str, dimension: usize) -> Result<Self, SimilarityError> {
        let stream = TcpStream::connect(addr).map_err(|e| SimilarityError::Provider(e.to_string()))?;
        let reader = BufReader::new(
            stream
                .try_clone()
                .map_err(|e| SimilarityError::Provider(e.to_string()))?,
        );
        Ok(Self {
            name: format!("socket:{addr}"),
            dimension,
            conn: Mutex::new((reader, stream)),
        })
    }
}

impl EmbeddingProvider for SocketProvider {
    fn name(&self) -> &str {
        &self.name
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, SimilarityError> {
        let line = text.replace(['\n', '\r'], " ");
        if line.trim().is_empty() {
            return Err(SimilarityError::EmptyText);
        }
        let io = |e: std::io::Error| SimilarityError::Provider(e.to_string());
        let mut guard = self.conn.lock().map_err(|_| SimilarityError::Provider("poisoned".into()))?;
        let (reader, writer) = &mut *guard;
        writeln!(writer, "{line}").map_err(io)?;
        writer.flush().map_err(io)?;
        let mut response = String::new();
        if reader.read_line(&mut response).map_err(io)? == 0 {
            return Err(SimilarityError::Provider("connection closed".into()));
        }
        let values: Vec<f64> = response
            .split_whitespace()
            .map(|s| s.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| SimilarityError::Provider(format!("bad vector: {e}")))?;
        if values.len() != self.dimension {
            return Err(SimilarityError::DimensionMismatch {
                got: values.len(),
                expected: self.dimension,
            });
        }
        normalize(values)
    }
}

/// Dot product of two unit vectors, clamped to [-1, 1].
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    dot.clamp(-1.0, 1.0)
}

pub fn text_cosine(provider: &dyn EmbeddingProvider, a: &str, b: &str) -> Result<f64, SimilarityError> {
    Ok(cosine(&provider.embed(a)?, &provider.embed(b)?))
}

pub fn is_unit(v: &[f64]) -> bool {
    (v.iter().map(|x| x * x).sum::<f64>().sqrt() - 1.0).abs() <= NORM_TOLERANCE
}

pub fn similarity_matrix<S: AsRef<str>>(
    passphrases: &[S],
    provider: &dyn EmbeddingProvider,
) -> Result<Vec<Vec<f64>>, SimilarityError> {
    let vectors = passphrases
        .iter()
        .map(|p| provider.embed(p.as_ref()))
        .collect::<Result<Vec<_>, _>>()?;
    let n = vectors.len();
    let mut m = vec![vec![0.0; n]; n];
    for i in 0..n {
        m[i][i] = 1.0;
        for j in i + 1..n {
            let c = cosine(&vectors[i], &vectors[j]);
            m[i][j] = c;
            m[j][i] = c;
        }
    }
    Ok(m)
}

/// CSV with a header row and a leading label column.
pub fn matrix_to_csv<S: AsRef<str>>(labels: &[S], matrix: &[Vec<f64>]) -> String {
    let quote = |s: &str| format!("\"{}\"", s.replace('"', "\"\""));
    let mut out = String::from("passphrase");
    for l in labels {
        out.push(',');
        out.push_str(&quote(l.as_ref()));
    }
    out.push('\n');
    for (l, row) in labels.iter().zip(matrix) {
        out.push_str(&quote(l.as_ref()));
        for v in row {
            out.push_str(&format!(",{v:.6}"));
        }
        out.push('\n');
    }
    out
}

/// Highest cosine between `candidate` and any of `assigned`.
pub fn max_similarity<S: AsRef<str>>(
    candidate: &str,
    assigned: &[S],
    provider: &dyn EmbeddingProvider,
) -> Result<Option<f64>, SimilarityError> {
    let v = provider.embed(candidate)?;
    let mut best: Option<f64> = None;
    for a in assigned {
        let c = cosine(&v, &provider.embed(a.as_ref())?);
        best = Some(best.map_or(c, |b| b.max(c)));
    }
    Ok(best)
}

/// True iff the candidate is below `theta` against every assigned phrase.
pub fn check_assignable<S: AsRef<str>>(
    candidate: &str,
    assigned: &[S],
    theta: f64,
    provider: &dyn EmbeddingProvider,
) -> Result<bool, SimilarityError> {
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(SimilarityError::BadThreshold(theta));
    }
    Ok(max_similarity(candidate, assigned, provider)?.is_none_or(|m| m < theta))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SimilarityBucket {
    #[serde(rename = ">95")]
    Above95,
    #[serde(rename = "90-95")]
    From90To95,
    #[serde(rename = "85-89")]
    From85To89,
    #[serde(rename = "80-84")]
    From80To84,
    #[serde(rename = "75-79")]
    From75To79,
    #[serde(rename = "70-74")]
    From70To74,
    #[serde(rename = "60-69")]
    From60To69,
    #[serde(rename = "50-59")]
    From50To59,
    #[serde(rename = "40-49")]
    From40To49,
    /// Also holds scores under 20 that still share a word.
    #[serde(rename = "20-39")]
    From20To39,
    #[serde(rename = "completely-dissimilar")]
    CompletelyDissimilar,
}

impl SimilarityBucket {
    pub const ALL: [SimilarityBucket; 11] = [
        SimilarityBucket::Above95,
        SimilarityBucket::From90To95,
        SimilarityBucket::From85To89,
        SimilarityBucket::From80To84,
        SimilarityBucket::From75To79,
        SimilarityBucket::From70To74,
        SimilarityBucket::From60To69,
        SimilarityBucket::From50To59,
        SimilarityBucket::From40To49,
        SimilarityBucket::From20To39,
        SimilarityBucket::CompletelyDissimilar,
    ];

    pub fn label(self) -> &'static str {
        match self {
            SimilarityBucket::Above95 => ">95",
            SimilarityBucket::From90To95 => "90-95",
            SimilarityBucket::From85To89 => "85-89",
            SimilarityBucket::From80To84 => "80-84",
            SimilarityBucket::From75To79 => "75-79",
            SimilarityBucket::From70To74 => "70-74",
            SimilarityBucket::From60To69 => "60-69",
            SimilarityBucket::From50To59 => "50-59",
            SimilarityBucket::From40To49 => "40-49",
            SimilarityBucket::From20To39 => "20-39",
            SimilarityBucket::CompletelyDissimilar => "completely-dissimilar",
        }
    }

    /// Bucket for an integer percentage when at least one word is shared.
    pub fn from_percent(pct: i64) -> Self {
        match pct {
            96.. => SimilarityBucket::Above95,
            90..=95 => SimilarityBucket::From90To95,
            85..=89 => SimilarityBucket::From85To89,
            80..=84 => SimilarityBucket::From80To84,
            75..=79 => SimilarityBucket::From75To79,
            70..=74 => SimilarityBucket::From70To74,
            60..=69 => SimilarityBucket::From60To69,
            50..=59 => SimilarityBucket::From50To59,
            40..=49 => SimilarityBucket::From40To49,
            _ => SimilarityBucket::From20To39,
        }
    }
}

impl fmt::Display for SimilarityBucket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

pub fn shares_word(assigned: &str, attempt: &str) -> bool {
    let a: HashSet<String> = tokenize_words(assigned).iter().map(|w| w.to_lowercase()).collect();
    tokenize_words(attempt).iter().any(|w| a.contains(&w.to_lowercase()))
}

pub fn bucket_attempt(
    assigned: &str,
    attempt: &str,
    provider: &dyn EmbeddingProvider,
) -> Result<(f64, SimilarityBucket), SimilarityError> {
    if assigned == attempt {
        return Err(SimilarityError::AttemptMatchesAssigned);
    }
    let cos = if tokenize_words(attempt).is_empty() {
        0.0
    } else {
        text_cosine(provider, assigned, attempt)?
    };
    if !shares_word(assigned, attempt) {
        return Ok((cos, SimilarityBucket::CompletelyDissimilar));
    }
    Ok((cos, SimilarityBucket::from_percent((cos * 100.0).round() as i64)))
}
