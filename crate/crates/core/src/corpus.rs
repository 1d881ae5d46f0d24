//! Plain-text corpus ingestion and tokenization.
//!
//! Tokens are whitespace/hyphen delimited words with every non-alphanumeric
//! character stripped, so `Queen’s` becomes `Queens` and `“DRINK` becomes
//! `DRINK`. Case is preserved.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("corpus `{0}` has no tokens after tokenization")]
    EmptyCorpus(String),
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path} is not valid UTF-8")]
    InvalidEncoding { path: PathBuf },
    #[error("{path}:{line}: malformed metadata line `{content}`")]
    MalformedMeta {
        path: PathBuf,
        line: usize,
        content: String,
    },
    #[error("{path}: missing required key `{key}`")]
    MissingMetaKey { path: PathBuf, key: &'static str },
}

/// Characters that end a candidate segment. A blank line (paragraph break)
/// also ends a segment.
pub const SEGMENT_TERMINATORS: [char; 4] = [',', ':', ';', '.'];

fn is_word_separator(c: char) -> bool {
    c.is_whitespace() || matches!(c, '-' | '\u{2010}'..='\u{2015}' | '\u{2212}')
}

fn clean_token(raw: &str) -> Option<String> {
    let cleaned: String = raw.chars().filter(|c| c.is_alphanumeric()).collect();
    (!cleaned.is_empty()).then_some(cleaned)
}

/// Splits `text` into word tokens.
pub fn tokenize_words(text: &str) -> Vec<String> {
    text.split(is_word_separator).filter_map(clean_token).collect()
}

/// Splits `text` into segments of word tokens. Segments end at
/// [`SEGMENT_TERMINATORS`] and at paragraph breaks; terminators are not tokens
/// and empty segments are dropped.
pub fn tokenize_segments(text: &str) -> Vec<Vec<String>> {
    let mut segments = Vec::new();
    let mut current = String::new();
    let mut newlines = 0usize;

    let flush = |buf: &mut String, out: &mut Vec<Vec<String>>| {
        let words = tokenize_words(buf);
        if !words.is_empty() {
            out.push(words);
        }
        buf.clear();
    };

    for c in text.chars() {
        if c == '\n' {
            newlines += 1;
            if newlines == 2 {
                flush(&mut current, &mut segments);
            }
            current.push(c);
            continue;
        }
        if !c.is_whitespace() {
            newlines = 0;
        }
        if SEGMENT_TERMINATORS.contains(&c) {
            flush(&mut current, &mut segments);
        } else {
            current.push(c);
        }
    }
    flush(&mut current, &mut segments);
    segments
}

/// Tokenization granularity for [`tokenize`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenizeMode {
    Words,
    Segments,
}

/// Output of [`tokenize`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Tokens {
    Words(Vec<String>),
    Segments(Vec<Vec<String>>),
}

pub fn tokenize(text: &str, mode: TokenizeMode) -> Tokens {
    match mode {
        TokenizeMode::Words => Tokens::Words(tokenize_words(text)),
        TokenizeMode::Segments => Tokens::Segments(tokenize_segments(text)),
    }
}

/// Normalizes line endings to `\n`.
pub fn normalize_newlines(text: &str) -> String {
    text.replace("\r\n", "\n").replace('\r', "\n")
}

/// Removes a Project Gutenberg header/licence block when the usual
/// `*** START OF` / `*** END OF` markers are present.
pub fn strip_gutenberg_boilerplate(text: &str) -> &str {
    let mut body = text;
    if let Some(start) = find_marker_line(body, &["*** START OF", "***START OF"]) {
        body = &body[start..];
        body = match body.find('\n') {
            Some(nl) => &body[nl + 1..],
            None => "",
        };
    }
    if let Some(end) = find_marker_line(
        body,
        &["*** END OF", "***END OF", "End of the Project Gutenberg", "End of Project Gutenberg"],
    ) {
        body = &body[..end];
    }
    body
}

fn find_marker_line(text: &str, markers: &[&str]) -> Option<usize> {
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        let trimmed = line.trim_start();
        if markers.iter().any(|m| trimmed.starts_with(m)) {
            return Some(offset);
        }
        offset += line.len();
    }
    None
}

/// A tokenized text with its vocabulary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    pub id: String,
    pub title: String,
    pub tokens: Vec<String>,
    pub vocabulary: BTreeSet<String>,
    pub character_names: Vec<String>,
    /// Tokens that closed at least one segment of the source text.
    pub segment_final: BTreeSet<String>,
}

impl Corpus {
    pub fn build(
        text: &str,
        id: impl Into<String>,
        title: impl Into<String>,
        character_names: Vec<String>,
    ) -> Result<Self, CorpusError> {
        let id = id.into();
        let text = normalize_newlines(text);
        let tokens = tokenize_words(&text);
        if tokens.is_empty() {
            return Err(CorpusError::EmptyCorpus(id));
        }
        let vocabulary = tokens.iter().cloned().collect();
        let segment_final = tokenize_segments(&text)
            .into_iter()
            .filter_map(|mut seg| seg.pop())
            .collect();
        Ok(Self {
            id,
            title: title.into(),
            tokens,
            vocabulary,
            character_names,
            segment_final,
        })
    }

    pub fn vocab_size(&self) -> usize {
        self.vocabulary.len()
    }

    /// Number of distinct tokens after lowercasing.
    pub fn folded_vocab_size(&self) -> usize {
        self.vocabulary
            .iter()
            .map(|t| t.to_lowercase())
            .collect::<BTreeSet<_>>()
            .len()
    }
}

/// Metadata read from a `corpus.meta` file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusMeta {
    pub id: String,
    pub title: String,
    pub characters: Vec<String>,
}

impl CorpusMeta {
    pub fn parse(content: &str, path: &Path) -> Result<Self, CorpusError> {
        let mut id = None;
        let mut title = None;
        let mut characters = Vec::new();
        for (idx, line) in content.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CorpusError::MalformedMeta {
                    path: path.to_path_buf(),
                    line: idx + 1,
                    content: line.to_string(),
                });
            };
            let value = value.trim();
            match key.trim() {
                "id" => id = Some(value.to_string()),
                "title" => title = Some(value.to_string()),
                "characters" => {
                    characters = value
                        .split(',')
                        .map(str::trim)
                        .filter(|s| !s.is_empty())
                        .map(String::from)
                        .collect()
                }
                // unknown keys are ignored so the format can grow
                _ => {}
            }
        }
        let id = id.ok_or(CorpusError::MissingMetaKey {
            path: path.to_path_buf(),
            key: "id",
        })?;
        Ok(Self {
            title: title.unwrap_or_else(|| id.clone()),
            id,
            characters,
        })
    }
}

/// A directory of corpora, one sub-directory per corpus id holding
/// `text.txt` and `corpus.meta`.
#[derive(Debug, Clone)]
pub struct CorpusRegistry {
    root: PathBuf,
}

impl CorpusRegistry {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn corpus_dir(&self, id: &str) -> PathBuf {
        self.root.join(id)
    }

    pub fn text_path(&self, id: &str) -> PathBuf {
        self.corpus_dir(id).join("text.txt")
    }

    pub fn meta(&self, id: &str) -> Result<CorpusMeta, CorpusError> {
        let path = self.corpus_dir(id).join("corpus.meta");
        let content = read_utf8(&path)?;
        CorpusMeta::parse(&content, &path)
    }

    pub fn load(&self, id: &str) -> Result<Corpus, CorpusError> {
        let meta = self.meta(id)?;
        let raw = read_utf8(&self.text_path(id))?;
        let raw = normalize_newlines(&raw);
        Corpus::build(
            strip_gutenberg_boilerplate(&raw),
            meta.id,
            meta.title,
            meta.characters,
        )
    }
}

pub(crate) fn read_utf8(path: &Path) -> Result<String, CorpusError> {
    let bytes = fs::read(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    String::from_utf8(bytes).map_err(|_| CorpusError::InvalidEncoding {
        path: path.to_path_buf(),
    })
}
