use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::events::{EventKind, StudyEvent};
use crate::similarity::{bucket_attempt, EmbeddingProvider, SimilarityBucket, SimilarityError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypoEntry {
    pub participant: String,
    pub round: u32,
    pub attempt: String,
    pub cosine: f64,
    pub bucket: SimilarityBucket,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StoryTypos {
    pub failed_logins: usize,
    pub buckets: BTreeMap<String, usize>,
    pub entries: Vec<TypoEntry>,
}

impl StoryTypos {
    fn new() -> Self {
        Self {
            failed_logins: 0,
            buckets: SimilarityBucket::ALL.iter().map(|b| (b.label().to_string(), 0)).collect(),
            entries: Vec::new(),
        }
    }

    pub fn attempts(&self) -> usize {
        self.entries.len()
    }
}

/// Incorrect attempts of familiar-condition participants, bucketed by
/// similarity to the assigned passphrase and grouped by story.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TypoReport {
    pub stories: BTreeMap<String, StoryTypos>,
}

pub fn typo_report(events: &[StudyEvent], provider: &dyn EmbeddingProvider) -> Result<TypoReport, SimilarityError> {
    let mut story: BTreeMap<&str, &str> = BTreeMap::new();
    let mut assigned: BTreeMap<&str, String> = BTreeMap::new();
    let mut report = TypoReport::default();
    for ev in events {
        let p = ev.participant.as_str();
        match ev.kind {
            EventKind::StoryChosen => {
                if let Some(s) = ev.str_field("story") {
                    story.insert(p, s);
                }
            }
            EventKind::Assigned => {
                if let Some(w) = ev.words_field("words") {
                    assigned.insert(p, w.join(" "));
                }
            }
            EventKind::RoundFailed => {
                if let Some(s) = story.get(p) {
                    report.stories.entry(s.to_string()).or_insert_with(StoryTypos::new).failed_logins += 1;
                }
            }
            EventKind::Attempt if ev.bool_field("correct") == Some(false) => {
                let (Some(s), Some(phrase)) = (story.get(p), assigned.get(p)) else {
                    continue;
                };
                let text = ev.str_field("text").unwrap_or_default();
                let (cosine, bucket) = bucket_attempt(phrase, text, provider)?;
                let entry = report.stories.entry(s.to_string()).or_insert_with(StoryTypos::new);
                *entry.buckets.entry(bucket.label().to_string()).or_insert(0) += 1;
                entry.entries.push(TypoEntry {
                    participant: p.to_string(),
                    round: ev.round,
                    attempt: text.to_string(),
                    cosine,
                    bucket,
                });
            }
            _ => {}
        }
    }
    Ok(report)
}
