//! Core library for familiar-vocabulary passphrases: corpus n-gram models, text
//! sampling, candidate extraction, tag-rule filtering, ranking, similarity,
//! guesswork, and the recall-study protocol.

pub mod corpus;
pub mod extractor;
pub mod generator;
pub mod grammar;
pub mod guesswork;
pub mod ngram;
pub mod ranker;
pub mod rng;
pub mod similarity;
pub mod study;
