use std::collections::HashSet;

use super::{RandomDictionaries, StudyError};
use crate::rng::SplitMix64;
use crate::similarity::{check_assignable, EmbeddingProvider};

/// A "noun verb adjective noun" phrase with every slot drawn uniformly.
pub fn generate_random_passphrase(dicts: &RandomDictionaries, seed: u64) -> Result<Vec<String>, StudyError> {
    if dicts.nouns.is_empty() || dicts.verbs.is_empty() || dicts.adjectives.is_empty() {
        return Err(StudyError::EmptyDictionary);
    }
    let mut rng = SplitMix64::new(seed);
    let mut pick = |list: &[String]| list[rng.index(list.len())].clone();
    let noun1 = pick(&dicts.nouns);
    let verb = pick(&dicts.verbs);
    let adjective = pick(&dicts.adjectives);
    let noun2 = pick(&dicts.nouns);
    Ok(vec![noun1, verb, adjective, noun2])
}

/// Index of the best-ranked unconsumed pool entry that is below `theta`
/// against every already assigned phrase.
pub fn assign_familiar_passphrase(
    story: &str,
    pool: &[Vec<String>],
    consumed: &HashSet<usize>,
    already_assigned: &[String],
    theta: f64,
    provider: &dyn EmbeddingProvider,
) -> Result<usize, StudyError> {
    if pool.is_empty() {
        return Err(StudyError::PoolExhausted(story.to_string()));
    }
    for (i, entry) in pool.iter().enumerate() {
        if consumed.contains(&i) {
            continue;
        }
        if check_assignable(&entry.join(" "), already_assigned, theta, provider)? {
            return Ok(i);
        }
    }
    Err(StudyError::PoolExhausted(story.to_string()))
}
