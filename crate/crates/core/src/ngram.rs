//! Order-1..5 n-gram frequency models with add-one (Laplace) smoothing.
//!
//! A model of order `n` keeps the window counts of every order `1..=n` so the
//! first tokens of a sequence can be scored with the shorter context that is
//! actually available (no padding symbols).

use std::collections::HashMap;

use thiserror::Error;

use crate::corpus::Corpus;

pub const MAX_ORDER: usize = 5;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum NGramError {
    #[error("order {0} is outside 1..={MAX_ORDER}")]
    InvalidOrder(usize),
    #[error("corpus has {tokens} tokens, fewer than order {order}")]
    OrderTooLarge { order: usize, tokens: usize },
    #[error("context has length {got}, expected {expected}")]
    BadContextLength { got: usize, expected: usize },
    #[error("cannot score an empty sequence")]
    EmptySequence,
}

type Key = Box<[u32]>;

#[derive(Debug, Clone, Default)]
struct WindowTable {
    grams: HashMap<Key, u64>,
    /// Count of windows sharing each length-(k-1) prefix.
    contexts: HashMap<Key, u64>,
}

/// N-gram counts over a corpus.
#[derive(Debug, Clone)]
pub struct NGramModel {
    order: usize,
    ids: HashMap<String, u32>,
    words: Vec<String>,
    /// `tables[k - 1]` holds windows of length `k`.
    tables: Vec<WindowTable>,
    vocab_size: usize,
    token_count: usize,
}

impl NGramModel {
    pub fn build(corpus: &Corpus, order: usize) -> Result<Self, NGramError> {
        Self::from_tokens(&corpus.tokens, corpus.vocab_size(), order)
    }

    /// Builds a model directly from a token list. `vocab_size` is clamped up
    /// to the number of distinct tokens.
    pub fn from_tokens<S: AsRef<str>>(
        tokens: &[S],
        vocab_size: usize,
        order: usize,
    ) -> Result<Self, NGramError> {
        if !(1..=MAX_ORDER).contains(&order) {
            return Err(NGramError::InvalidOrder(order));
        }
        if tokens.len() < order {
            return Err(NGramError::OrderTooLarge {
                order,
                tokens: tokens.len(),
            });
        }
        let mut ids = HashMap::new();
        let mut words = Vec::new();
        let encoded: Vec<u32> = tokens
            .iter()
            .map(|t| {
                let t = t.as_ref();
                *ids.entry(t.to_string()).or_insert_with(|| {
                    words.push(t.to_string());
                    (words.len() - 1) as u32
                })
            })
            .collect();

        let mut tables = Vec::with_capacity(order);
        for k in 1..=order {
            let mut table = WindowTable::default();
            for window in encoded.windows(k) {
                *table.grams.entry(window.into()).or_insert(0) += 1;
                *table.contexts.entry(window[..k - 1].into()).or_insert(0) += 1;
            }
            tables.push(table);
        }

        Ok(Self {
            order,
            vocab_size: vocab_size.max(words.len()),
            ids,
            words,
            tables,
            token_count: tokens.len(),
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn token_count(&self) -> usize {
        self.token_count
    }

    fn encode<S: AsRef<str>>(&self, seq: &[S]) -> Option<Vec<u32>> {
        seq.iter().map(|t| self.ids.get(t.as_ref()).copied()).collect()
    }

    fn decode(&self, key: &[u32]) -> Vec<String> {
        key.iter().map(|&id| self.words[id as usize].clone()).collect()
    }

    /// Count of the exact window `seq` (its length selects the table).
    pub fn count<S: AsRef<str>>(&self, seq: &[S]) -> u64 {
        if seq.is_empty() || seq.len() > self.order {
            return 0;
        }
        self.encode(seq)
            .and_then(|key| self.tables[seq.len() - 1].grams.get(key.as_slice()).copied())
            .unwrap_or(0)
    }

    /// Number of length-(k) windows whose first k-1 tokens equal `context`,
    /// where k = context.len() + 1.
    pub fn context_count<S: AsRef<str>>(&self, context: &[S]) -> u64 {
        if context.len() >= self.order {
            return 0;
        }
        self.encode(context)
            .and_then(|key| self.tables[context.len()].contexts.get(key.as_slice()).copied())
            .unwrap_or(0)
    }

    /// Laplace-smoothed P(word | context) at the model's own order.
    pub fn smoothed_conditional<S: AsRef<str>>(
        &self,
        context: &[S],
        word: &str,
    ) -> Result<f64, NGramError> {
        if context.len() != self.order - 1 {
            return Err(NGramError::BadContextLength {
                got: context.len(),
                expected: self.order - 1,
            });
        }
        Ok(self.conditional(context, word))
    }

    /// Laplace-smoothed conditional for any context shorter than the order.
    fn conditional<S: AsRef<str>>(&self, context: &[S], word: &str) -> f64 {
        debug_assert!(context.len() < self.order);
        let (num, den) = match self.encode(context) {
            Some(mut key) => {
                let table = &self.tables[context.len()];
                let ctx = table.contexts.get(key.as_slice()).copied().unwrap_or(0);
                let c = match self.ids.get(word) {
                    Some(&id) => {
                        key.push(id);
                        table.grams.get(key.as_slice()).copied().unwrap_or(0)
                    }
                    None => 0,
                };
                (c, ctx)
            }
            None => (0, 0),
        };
        (num as f64 + 1.0) / (den as f64 + self.vocab_size as f64)
    }

    /// log2 of the chain-rule joint probability. Token `i` (0-based) is
    /// conditioned on the `min(i, order - 1)` tokens before it.
    pub fn joint_log2<S: AsRef<str>>(&self, sequence: &[S]) -> Result<f64, NGramError> {
        if sequence.is_empty() {
            return Err(NGramError::EmptySequence);
        }
        let mut total = 0.0;
        for i in 0..sequence.len() {
            let start = i.saturating_sub(self.order - 1);
            total += self
                .conditional(&sequence[start..i], sequence[i].as_ref())
                .log2();
        }
        Ok(total)
    }

    pub fn joint_probability<S: AsRef<str>>(&self, sequence: &[S]) -> Result<f64, NGramError> {
        self.joint_log2(sequence).map(f64::exp2)
    }

    /// Observed windows of the model's own order with their counts.
    pub fn counts(&self) -> impl Iterator<Item = (Vec<String>, u64)> + '_ {
        self.tables[self.order - 1]
            .grams
            .iter()
            .map(|(k, &c)| (self.decode(k), c))
    }

    /// Raw counts of the model's own order, without decoding tokens.
    pub fn count_values(&self) -> impl Iterator<Item = u64> + '_ {
        self.tables[self.order - 1].grams.values().copied()
    }

    pub fn distinct_ngrams(&self) -> usize {
        self.tables[self.order - 1].grams.len()
    }

    /// Contexts of the model's own order with their counts.
    pub fn context_counts(&self) -> impl Iterator<Item = (Vec<String>, u64)> + '_ {
        self.tables[self.order - 1]
            .contexts
            .iter()
            .map(|(k, &c)| (self.decode(k), c))
    }

    /// Distinct tokens seen in the corpus, in first-seen order.
    pub fn tokens(&self) -> &[String] {
        &self.words
    }
}

/// Models of several orders built from one corpus.
#[derive(Debug, Clone)]
pub struct ModelSet {
    models: Vec<NGramModel>,
}

impl ModelSet {
    pub fn build(corpus: &Corpus, orders: &[usize]) -> Result<Self, NGramError> {
        let models = orders
            .iter()
            .map(|&o| NGramModel::build(corpus, o))
            .collect::<Result<_, _>>()?;
        Ok(Self { models })
    }

    pub fn from_models(models: Vec<NGramModel>) -> Self {
        Self { models }
    }

    pub fn get(&self, order: usize) -> Option<&NGramModel> {
        self.models.iter().find(|m| m.order() == order)
    }

    pub fn iter(&self) -> impl Iterator<Item = &NGramModel> {
        self.models.iter()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(tokens: &[&str], order: usize) -> NGramModel {
        let vocab = tokens.iter().collect::<std::collections::HashSet<_>>().len();
        NGramModel::from_tokens(tokens, vocab, order).unwrap()
    }

    #[test]
    fn bigram_window_counts() {
        let m = model(&["a", "b", "a", "b"], 2);
        assert_eq!(m.count(&["a", "b"]), 2);
        assert_eq!(m.count(&["b", "a"]), 1);
        assert_eq!(m.distinct_ngrams(), 2);
    }

    #[test]
    fn unigram_single_token() {
        let m = model(&["a"], 1);
        assert_eq!(m.count(&["a"]), 1);
    }

    #[test]
    fn order_too_large_and_invalid() {
        assert_eq!(
            NGramModel::from_tokens(&["a", "b"], 2, 3).unwrap_err(),
            NGramError::OrderTooLarge { order: 3, tokens: 2 }
        );
        assert_eq!(
            NGramModel::from_tokens(&["a"; 10], 1, 6).unwrap_err(),
            NGramError::InvalidOrder(6)
        );
    }

    #[test]
    fn smoothing_examples() {
        let m = model(&["a", "a", "a"], 2);
        assert!((m.smoothed_conditional(&["a"], "a").unwrap() - 1.0).abs() < 1e-15);

        let m = model(&["a", "b", "a", "b"], 2);
        assert!((m.smoothed_conditional(&["a"], "b").unwrap() - 0.75).abs() < 1e-15);
        assert!((m.smoothed_conditional(&["c"], "a").unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(
            m.smoothed_conditional(&["a", "b"], "a").unwrap_err(),
            NGramError::BadContextLength { got: 2, expected: 1 }
        );
    }

    #[test]
    fn joint_examples() {
        let m = model(&["a", "a", "a"], 2);
        assert!((m.joint_probability(&["a", "a"]).unwrap() - 1.0).abs() < 1e-12);

        let m = model(&["a", "b", "a", "b"], 2);
        assert!((m.joint_probability(&["a", "b"]).unwrap() - 0.375).abs() < 1e-12);
        assert_eq!(
            m.joint_probability::<&str>(&[]).unwrap_err(),
            NGramError::EmptySequence
        );
    }

    #[test]
    fn context_counts_sum_their_children() {
        let m = model(&["a", "b", "c", "a", "b", "b", "a"], 3);
        for (ctx, cc) in m.context_counts() {
            let total: u64 = m
                .counts()
                .filter(|(k, _)| k[..2] == ctx[..])
                .map(|(_, c)| c)
                .sum();
            assert_eq!(total, cc);
        }
    }
}
