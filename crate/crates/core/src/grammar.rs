//! Coarse POS tagging, corpus tag-rules and their search-space sizes, and the
//! candidate filter that drops passphrases with a non-unique tag sequence.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Corpus;
use crate::extractor::CandidatePassphrase;

const DEFAULT_LEXICON: &str = include_str!("../data/lexicon.tsv");

/// Histogram bucket edges in bits.
pub const DEFAULT_BUCKET_EDGES: [f64; 5] = [1.0, 2.0, 2.8, 4.0, 6.0];

#[derive(Debug, Error, PartialEq)]
pub enum GrammarError {
    #[error("cannot tag an empty word sequence")]
    EmptyInput,
    #[error("rule length must be at least 1")]
    InvalidLength,
    #[error("corpus has {tokens} tokens, fewer than rule length {n}")]
    OrderTooLarge { n: usize, tokens: usize },
    #[error("no tag rules to summarize")]
    NoRules,
    #[error("no corpus rules loaded for length {0}")]
    MissingRules(usize),
    #[error("unknown tag `{0}`")]
    UnknownTag(String),
    #[error("line {line}: expected word<TAB>tag")]
    MalformedTagLine { line: usize },
}

/// Universal Dependencies coarse tags without the punctuation and symbol tags.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Tag {
    Adj,
    Adp,
    Adv,
    Aux,
    Cconj,
    Det,
    Intj,
    Noun,
    Num,
    Part,
    Pron,
    Propn,
    Sconj,
    Verb,
    X,
}

impl Tag {
    pub const ALL: [Tag; 15] = [
        Tag::Adj,
        Tag::Adp,
        Tag::Adv,
        Tag::Aux,
        Tag::Cconj,
        Tag::Det,
        Tag::Intj,
        Tag::Noun,
        Tag::Num,
        Tag::Part,
        Tag::Pron,
        Tag::Propn,
        Tag::Sconj,
        Tag::Verb,
        Tag::X,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Tag::Adj => "ADJ",
            Tag::Adp => "ADP",
            Tag::Adv => "ADV",
            Tag::Aux => "AUX",
            Tag::Cconj => "CCONJ",
            Tag::Det => "DET",
            Tag::Intj => "INTJ",
            Tag::Noun => "NOUN",
            Tag::Num => "NUM",
            Tag::Part => "PART",
            Tag::Pron => "PRON",
            Tag::Propn => "PROPN",
            Tag::Sconj => "SCONJ",
            Tag::Verb => "VERB",
            Tag::X => "X",
        }
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Tag {
    type Err = GrammarError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Tag::ALL
            .iter()
            .copied()
            .find(|t| t.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| GrammarError::UnknownTag(s.to_string()))
    }
}

pub fn format_tags(tags: &[Tag]) -> String {
    tags.iter().map(|t| t.as_str()).collect::<Vec<_>>().join(" ")
}

/// Lexicon, then longest suffix, then default.
#[derive(Debug, Clone)]
pub struct Tagger {
    pub tagset: Vec<Tag>,
    pub lexicon: HashMap<String, Tag>,
    pub suffix_rules: Vec<(String, Tag)>,
    pub default_tag: Tag,
}

impl Default for Tagger {
    fn default() -> Self {
        Self::english()
    }
}

impl Tagger {
    /// Tagger with no lexicon or suffix rules.
    pub fn new(default_tag: Tag) -> Self {
        Self {
            tagset: Tag::ALL.to_vec(),
            lexicon: HashMap::new(),
            suffix_rules: Vec::new(),
            default_tag,
        }
    }

    /// The built-in English tagger.
    pub fn english() -> Self {
        let mut t = Self::new(Tag::Noun);
        t.extend_from_tsv(DEFAULT_LEXICON)
            .expect("embedded lexicon is well formed");
        let suffixes: &[(&str, Tag)] = &[
            ("ly", Tag::Adv),
            ("ing", Tag::Verb),
            ("ed", Tag::Verb),
            ("en", Tag::Verb),
            ("ize", Tag::Verb),
            ("ise", Tag::Verb),
            ("ify", Tag::Verb),
            ("ate", Tag::Verb),
            ("tion", Tag::Noun),
            ("sion", Tag::Noun),
            ("ness", Tag::Noun),
            ("ment", Tag::Noun),
            ("ity", Tag::Noun),
            ("ship", Tag::Noun),
            ("hood", Tag::Noun),
            ("er", Tag::Noun),
            ("or", Tag::Noun),
            ("ist", Tag::Noun),
            ("ous", Tag::Adj),
            ("ful", Tag::Adj),
            ("less", Tag::Adj),
            ("able", Tag::Adj),
            ("ible", Tag::Adj),
            ("al", Tag::Adj),
            ("ive", Tag::Adj),
            ("ic", Tag::Adj),
            ("ish", Tag::Adj),
            ("est", Tag::Adj),
            ("y", Tag::Adj),
        ];
        t.suffix_rules = suffixes.iter().map(|(s, tag)| (s.to_string(), *tag)).collect();
        t
    }

    /// Adds `word<TAB>tag` lines to the lexicon, overriding earlier entries.
    /// Blank lines and `#` comments are ignored.
    pub fn extend_from_tsv(&mut self, content: &str) -> Result<(), GrammarError> {
        for (i, line) in content.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (word, tag) = line
                .split_once('\t')
                .ok_or(GrammarError::MalformedTagLine { line: i + 1 })?;
            let tag: Tag = tag.parse()?;
            if !self.tagset.contains(&tag) {
                return Err(GrammarError::UnknownTag(tag.to_string()));
            }
            self.lexicon.insert(word.trim().to_lowercase(), tag);
        }
        Ok(())
    }

    /// Marks every word of every name as a proper noun.
    pub fn add_proper_nouns<S: AsRef<str>>(&mut self, names: &[S]) {
        for name in names {
            for w in name.as_ref().split_whitespace() {
                self.lexicon.insert(w.to_lowercase(), Tag::Propn);
            }
        }
    }

    pub fn tag_word(&self, word: &str) -> Tag {
        let lower = word.to_lowercase();
        if let Some(&t) = self.lexicon.get(&lower) {
            return t;
        }
        self.suffix_rules
            .iter()
            .filter(|(s, _)| lower.len() > s.len() && lower.ends_with(s.as_str()))
            .max_by_key(|(s, _)| s.len())
            .map(|(_, t)| *t)
            .unwrap_or(self.default_tag)
    }

    pub fn tag_sequence<S: AsRef<str>>(&self, words: &[S]) -> Result<Vec<Tag>, GrammarError> {
        if words.is_empty() {
            return Err(GrammarError::EmptyInput);
        }
        Ok(words.iter().map(|w| self.tag_word(w.as_ref())).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TagRule {
    pub tags: Vec<Tag>,
    pub sequences: BTreeSet<Vec<String>>,
    pub corpus_id: String,
}

impl TagRule {
    pub fn search_space_bits(&self) -> f64 {
        (self.sequences.len() as f64).log2()
    }
}

/// Rules for windows of length `n` over pre-tagged tokens.
pub fn tag_rules_from_tagged(
    tokens: &[String],
    tags: &[Tag],
    n: usize,
    corpus_id: &str,
) -> Result<Vec<TagRule>, GrammarError> {
    assert_eq!(tokens.len(), tags.len(), "one tag per token");
    if n == 0 {
        return Err(GrammarError::InvalidLength);
    }
    if tokens.len() < n {
        return Err(GrammarError::OrderTooLarge {
            n,
            tokens: tokens.len(),
        });
    }
    let mut by_tags: BTreeMap<&[Tag], BTreeSet<Vec<String>>> = BTreeMap::new();
    for (i, key) in tags.windows(n).enumerate() {
        by_tags
            .entry(key)
            .or_default()
            .insert(tokens[i..i + n].to_vec());
    }
    Ok(by_tags
        .into_iter()
        .map(|(tags, sequences)| TagRule {
            tags: tags.to_vec(),
            sequences,
            corpus_id: corpus_id.to_string(),
        })
        .collect())
}

/// One rule per distinct tag sequence among the corpus's length-`n` windows.
pub fn extract_tag_rules(corpus: &Corpus, tagger: &Tagger, n: usize) -> Result<Vec<TagRule>, GrammarError> {
    let tags: Vec<Tag> = corpus.tokens.iter().map(|w| tagger.tag_word(w)).collect();
    tag_rules_from_tagged(&corpus.tokens, &tags, n, &corpus.id)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBucket {
    pub lower: f64,
    /// `None` for the open top bucket.
    pub upper: Option<f64>,
    pub count: usize,
    pub percentage: f64,
}

impl HistogramBucket {
    pub fn label(&self) -> String {
        match self.upper {
            Some(u) => format!("[{}, {})", self.lower, u),
            None => format!("[{}, inf)", self.lower),
        }
    }
}

/// Groups rules by search-space bits. Buckets are `[0, e1)`, `[e1, e2)`, ...,
/// `[e_last, inf)`.
pub fn search_space_histogram(rules: &[TagRule], bucket_edges: &[f64]) -> Result<Vec<HistogramBucket>, GrammarError> {
    if rules.is_empty() {
        return Err(GrammarError::NoRules);
    }
    let mut edges: Vec<f64> = bucket_edges.iter().copied().filter(|e| *e > 0.0).collect();
    edges.sort_by(f64::total_cmp);
    edges.dedup();
    let mut lowers = vec![0.0];
    lowers.extend(&edges);
    let mut buckets: Vec<HistogramBucket> = lowers
        .iter()
        .enumerate()
        .map(|(i, &lower)| HistogramBucket {
            lower,
            upper: edges.get(i).copied(),
            count: 0,
            percentage: 0.0,
        })
        .collect();
    for rule in rules {
        let bits = rule.search_space_bits();
        let idx = edges.iter().take_while(|&&e| bits >= e).count();
        buckets[idx].count += 1;
    }
    let total = rules.len() as f64;
    for b in &mut buckets {
        b.percentage = b.count as f64 * 100.0 / total;
    }
    Ok(buckets)
}

/// Percentage of rules with strictly fewer than `bits` bits.
pub fn percent_below(rules: &[TagRule], bits: f64) -> f64 {
    if rules.is_empty() {
        return 0.0;
    }
    let below = rules.iter().filter(|r| r.search_space_bits() < bits).count();
    below as f64 * 100.0 / rules.len() as f64
}

/// Upper bound on the tag-sequence space of a `length`-word phrase.
pub fn tag_space_bits(tagset_size: usize, length: usize) -> f64 {
    length as f64 * (tagset_size as f64).log2()
}

/// Tag sequences of corpus windows, indexed by length.
#[derive(Debug, Clone, Default)]
pub struct CorpusRules {
    by_length: HashMap<usize, HashSet<Vec<Tag>>>,
}

impl CorpusRules {
    pub fn build(corpus: &Corpus, tagger: &Tagger, lengths: &[usize]) -> Result<Self, GrammarError> {
        let tags: Vec<Tag> = corpus.tokens.iter().map(|w| tagger.tag_word(w)).collect();
        let mut by_length = HashMap::new();
        for &n in lengths {
            if n == 0 {
                return Err(GrammarError::InvalidLength);
            }
            if tags.len() < n {
                return Err(GrammarError::OrderTooLarge { n, tokens: tags.len() });
            }
            let set: HashSet<Vec<Tag>> = tags.windows(n).map(<[Tag]>::to_vec).collect();
            by_length.insert(n, set);
        }
        Ok(Self { by_length })
    }

    pub fn from_rules(rules: &[TagRule]) -> Self {
        let mut by_length: HashMap<usize, HashSet<Vec<Tag>>> = HashMap::new();
        for r in rules {
            by_length.entry(r.tags.len()).or_default().insert(r.tags.clone());
        }
        Self { by_length }
    }

    pub fn lengths(&self) -> impl Iterator<Item = usize> + '_ {
        self.by_length.keys().copied()
    }

    pub fn contains(&self, tags: &[Tag]) -> Result<bool, GrammarError> {
        self.by_length
            .get(&tags.len())
            .map(|set| set.contains(tags))
            .ok_or(GrammarError::MissingRules(tags.len()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RemovalReason {
    DuplicateCandidateTags,
    MatchesCorpusRule,
}

impl fmt::Display for RemovalReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RemovalReason::DuplicateCandidateTags => "duplicate-candidate-tags",
            RemovalReason::MatchesCorpusRule => "matches-corpus-rule",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemovedCandidate {
    pub candidate: CandidatePassphrase,
    pub tags: Vec<Tag>,
    pub reasons: Vec<RemovalReason>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FilterOutcome {
    pub kept: Vec<CandidatePassphrase>,
    pub removed: Vec<RemovedCandidate>,
}

/// Removes every candidate whose tag sequence is shared with another
/// candidate or equals a corpus rule of the same length. Candidates are
/// tagged on their whitespace-split tokens.
pub fn filter_by_tag_rules(
    candidates: &[CandidatePassphrase],
    rules: &CorpusRules,
    tagger: &Tagger,
) -> Result<FilterOutcome, GrammarError> {
    let tagged: Vec<Vec<Tag>> = candidates
        .iter()
        .map(|c| tagger.tag_sequence(&c.tokens()))
        .collect::<Result<_, _>>()?;
    let mut freq: HashMap<&[Tag], usize> = HashMap::new();
    for t in &tagged {
        *freq.entry(t.as_slice()).or_insert(0) += 1;
    }
    let mut out = FilterOutcome::default();
    for (candidate, tags) in candidates.iter().zip(&tagged) {
        let mut reasons = Vec::new();
        if freq[tags.as_slice()] > 1 {
            reasons.push(RemovalReason::DuplicateCandidateTags);
        }
        if rules.contains(tags)? {
            reasons.push(RemovalReason::MatchesCorpusRule);
        }
        if reasons.is_empty() {
            out.kept.push(candidate.clone());
        } else {
            out.removed.push(RemovedCandidate {
                candidate: candidate.clone(),
                tags: tags.clone(),
                reasons,
            });
        }
    }
    Ok(out)
}
