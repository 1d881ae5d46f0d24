//! Story-like text for the extractor: a seeded n-gram sampler with
//! temperature, top-k and nucleus (top-p) filtering, plus import of text
//! produced by an external model.
//!
//! The sampler is a small stand-in for a neural generator. At every step the
//! Laplace-smoothed next-token distribution goes through temperature, then
//! top-k, then top-p before one token is drawn with [`SplitMix64`].

use std::cmp::Ordering;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{normalize_newlines, Corpus};
use crate::ngram::{NGramError, NGramModel};
use crate::rng::SplitMix64;

const DIST_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum GeneratorError {
    #[error("temperature must be positive, got {0}")]
    NonPositiveTemperature(f64),
    #[error("top_k must be at least 1")]
    KZero,
    #[error("top_p must be in (0, 1], got {0}")]
    POutOfRange(f64),
    #[error("min_tokens must be at least 1")]
    ZeroMinTokens,
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("file not found: {0}")]
    FileNotFound(PathBuf),
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0} is not valid UTF-8")]
    InvalidEncoding(PathBuf),
    #[error("{0} contains no text")]
    EmptyGeneratedText(PathBuf),
    #[error(transparent)]
    Model(#[from] NGramError),
}

/// A categorical distribution over tokens.
pub type Distribution = Vec<(String, f64)>;

pub fn validate_distribution(dist: &[(String, f64)]) -> Result<(), GeneratorError> {
    if dist.is_empty() {
        return Err(GeneratorError::InvalidDistribution("empty".into()));
    }
    if let Some((t, p)) = dist.iter().find(|(_, p)| !(p.is_finite() && *p > 0.0)) {
        return Err(GeneratorError::InvalidDistribution(format!(
            "probability of `{t}` is {p}"
        )));
    }
    let total: f64 = dist.iter().map(|(_, p)| p).sum();
    if (total - 1.0).abs() > DIST_TOLERANCE {
        return Err(GeneratorError::InvalidDistribution(format!("sums to {total}")));
    }
    Ok(())
}

fn renormalize(mut dist: Distribution) -> Distribution {
    let total: f64 = dist.iter().map(|(_, p)| p).sum();
    for (_, p) in &mut dist {
        *p /= total;
    }
    dist
}

/// Descending by probability, ties by token.
fn by_rank(a: &(String, f64), b: &(String, f64)) -> Ordering {
    b.1.partial_cmp(&a.1)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.0.cmp(&b.0))
}

/// Raises every probability to `1 / temperature` and renormalizes. Token order
/// is preserved.
pub fn apply_temperature(dist: &[(String, f64)], temperature: f64) -> Result<Distribution, GeneratorError> {
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(GeneratorError::NonPositiveTemperature(temperature));
    }
    validate_distribution(dist)?;
    // work in log space: p^(1/T) underflows quickly for small T
    let inv = 1.0 / temperature;
    let logs: Vec<f64> = dist.iter().map(|(_, p)| p.ln() * inv).collect();
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let scaled = dist
        .iter()
        .zip(&logs)
        .map(|((t, _), l)| (t.clone(), (l - max).exp()))
        .collect();
    Ok(drop_zeros(renormalize(scaled)))
}

// Extreme temperatures can push tail entries to exactly zero.
fn drop_zeros(dist: Distribution) -> Distribution {
    dist.into_iter().filter(|(_, p)| *p > 0.0).collect()
}

/// Keeps the `k` most probable entries (ties broken by token) and
/// renormalizes. Surviving entries keep their input order.
pub fn apply_top_k(dist: &[(String, f64)], k: usize) -> Result<Distribution, GeneratorError> {
    if k == 0 {
        return Err(GeneratorError::KZero);
    }
    validate_distribution(dist)?;
    if k >= dist.len() {
        return Ok(dist.to_vec());
    }
    let mut ranked: Vec<usize> = (0..dist.len()).collect();
    ranked.sort_by(|&a, &b| by_rank(&dist[a], &dist[b]));
    let mut keep = ranked[..k].to_vec();
    keep.sort_unstable();
    Ok(renormalize(keep.into_iter().map(|i| dist[i].clone()).collect()))
}

/// Sorts descending and keeps the shortest prefix whose cumulative mass
/// reaches `p`, renormalized.
pub fn apply_top_p(dist: &[(String, f64)], p: f64) -> Result<Distribution, GeneratorError> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(GeneratorError::POutOfRange(p));
    }
    validate_distribution(dist)?;
    let mut sorted = dist.to_vec();
    sorted.sort_by(by_rank);
    let mut cumulative = 0.0;
    let mut cut = sorted.len();
    for (i, (_, prob)) in sorted.iter().enumerate() {
        cumulative += prob;
        if cumulative >= p - 1e-12 {
            cut = i + 1;
            break;
        }
    }
    sorted.truncate(cut);
    Ok(renormalize(sorted))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingParams {
    pub temperature: f64,
    pub top_k: usize,
    pub top_p: f64,
    pub min_tokens: usize,
    pub seed: u64,
}

impl Default for SamplingParams {
    fn default() -> Self {
        Self {
            temperature: 0.7,
            top_k: 40,
            top_p: 0.9,
            min_tokens: 300,
            seed: 0,
        }
    }
}

impl SamplingParams {
    pub fn validate(&self) -> Result<(), GeneratorError> {
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(GeneratorError::NonPositiveTemperature(self.temperature));
        }
        if self.top_k == 0 {
            return Err(GeneratorError::KZero);
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(GeneratorError::POutOfRange(self.top_p));
        }
        if self.min_tokens == 0 {
            return Err(GeneratorError::ZeroMinTokens);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TextSource {
    BuiltinSampler,
    Imported,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedText {
    pub text: String,
    pub source: TextSource,
    pub params: Option<SamplingParams>,
    pub corpus_id: String,
}

impl GeneratedText {
    pub fn from_text(text: impl Into<String>, corpus_id: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            source: TextSource::Imported,
            params: None,
            corpus_id: corpus_id.into(),
        }
    }
}

/// Applies the per-step filter pipeline: temperature, top-k, top-p.
pub fn filter_distribution(
    dist: &[(String, f64)],
    params: &SamplingParams,
) -> Result<Distribution, GeneratorError> {
    let d = apply_temperature(dist, params.temperature)?;
    let d = apply_top_k(&d, params.top_k)?;
    apply_top_p(&d, params.top_p)
}

fn draw(dist: &[(String, f64)], rng: &mut SplitMix64) -> String {
    let u = rng.next_f64();
    let mut cumulative = 0.0;
    for (token, p) in dist {
        cumulative += p;
        if u < cumulative {
            return token.clone();
        }
    }
    dist.last().map(|(t, _)| t.clone()).unwrap_or_default()
}

/// Samples at least `params.min_tokens` tokens from an order-`order` model of
/// `corpus`. A period follows every token that closed a segment somewhere in
/// the corpus; once the minimum is reached sampling stops at the next such
/// token (or after `2 * min_tokens + 50` tokens).
pub fn sample_text(
    corpus: &Corpus,
    order: usize,
    params: &SamplingParams,
) -> Result<GeneratedText, GeneratorError> {
    params.validate()?;
    let model = NGramModel::build(corpus, order)?;
    let vocab: Vec<&String> = corpus.vocabulary.iter().collect();
    let mut rng = SplitMix64::new(params.seed);
    let hard_cap = params.min_tokens * 2 + 50;

    let mut generated: Vec<String> = Vec::with_capacity(params.min_tokens + 16);
    let mut text = String::new();
    loop {
        let start = generated.len().saturating_sub(order - 1);
        let context = &generated[start..];
        let dist: Distribution = vocab
            .iter()
            .map(|w| {
                let p = conditional_for(&model, context, w);
                ((*w).clone(), p)
            })
            .collect();
        let dist = renormalize(dist);
        let filtered = filter_distribution(&dist, params)?;
        let token = draw(&filtered, &mut rng);

        if !text.is_empty() {
            text.push(' ');
        }
        text.push_str(&token);
        let closes = corpus.segment_final.contains(&token);
        if closes {
            text.push('.');
        }
        generated.push(token);

        let n = generated.len();
        if (n >= params.min_tokens && closes) || n >= hard_cap {
            break;
        }
    }
    if !text.ends_with('.') {
        text.push('.');
    }

    Ok(GeneratedText {
        text,
        source: TextSource::BuiltinSampler,
        params: Some(params.clone()),
        corpus_id: corpus.id.clone(),
    })
}

fn conditional_for(model: &NGramModel, context: &[String], word: &str) -> f64 {
    // joint of (context + word) divided by joint of context, both with the
    // same start backoff, equals the conditional at the available order
    if context.len() == model.order() - 1 {
        return model
            .smoothed_conditional(context, word)
            .expect("context length matches order");
    }
    let mut seq: Vec<&str> = context.iter().map(String::as_str).collect();
    seq.push(word);
    let with = model.joint_log2(&seq).expect("non-empty");
    let without = if context.is_empty() {
        0.0
    } else {
        model.joint_log2(context).expect("non-empty")
    };
    (with - without).exp2()
}

/// Reads externally generated text (e.g. neural model output) verbatim apart
/// from line-ending normalization.
pub fn import_generated(path: &Path, corpus_id: &str) -> Result<GeneratedText, GeneratorError> {
    let bytes = std::fs::read(path).map_err(|source| {
        if source.kind() == std::io::ErrorKind::NotFound {
            GeneratorError::FileNotFound(path.to_path_buf())
        } else {
            GeneratorError::Io {
                path: path.to_path_buf(),
                source,
            }
        }
    })?;
    let text = String::from_utf8(bytes).map_err(|_| GeneratorError::InvalidEncoding(path.to_path_buf()))?;
    if text.trim().is_empty() {
        return Err(GeneratorError::EmptyGeneratedText(path.to_path_buf()));
    }
    Ok(GeneratedText::from_text(normalize_newlines(&text), corpus_id))
}
