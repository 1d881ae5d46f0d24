use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::StudyError;

const NOUNS: &str = include_str!("../../data/wordlists/nouns.txt");
const VERBS: &str = include_str!("../../data/wordlists/verbs.txt");
const ADJECTIVES: &str = include_str!("../../data/wordlists/adjectives.txt");

/// Durations written like "6h" or "2days".
mod duration {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&humantime::format_duration(*d).to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let s = String::deserialize(d)?;
        humantime::parse_duration(&s).map_err(D::Error::custom)
    }
}

mod duration_list {
    use serde::{de::Error, ser::SerializeSeq, Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(list: &[Duration], s: S) -> Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(list.len()))?;
        for d in list {
            seq.serialize_element(&humantime::format_duration(*d).to_string())?;
        }
        seq.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Duration>, D::Error> {
        Vec::<String>::deserialize(d)?
            .iter()
            .map(|s| humantime::parse_duration(s).map_err(D::Error::custom))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Condition {
    Random,
    Familiar,
}

impl Condition {
    pub fn as_str(self) -> &'static str {
        match self {
            Condition::Random => "random",
            Condition::Familiar => "familiar",
        }
    }
}

impl std::str::FromStr for Condition {
    type Err = StudyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "random" => Ok(Condition::Random),
            "familiar" => Ok(Condition::Familiar),
            other => Err(StudyError::Validation(format!("unknown condition `{other}`"))),
        }
    }
}

/// How familiar-condition pools are consumed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AssignmentPolicy {
    /// Each participant gets a different, sufficiently dissimilar entry.
    #[default]
    Distinct,
    /// Everyone who picks a story gets that story's rank-1 entry.
    FixedPerStory,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RandomDictionaries {
    pub nouns: Vec<String>,
    pub verbs: Vec<String>,
    pub adjectives: Vec<String>,
}

fn lines(s: &str) -> Vec<String> {
    s.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect()
}

impl Default for RandomDictionaries {
    fn default() -> Self {
        Self {
            nouns: lines(NOUNS),
            verbs: lines(VERBS),
            adjectives: lines(ADJECTIVES),
        }
    }
}

impl RandomDictionaries {
    /// Reads three one-word-per-line files.
    pub fn from_files(
        nouns: &std::path::Path,
        verbs: &std::path::Path,
        adjectives: &std::path::Path,
    ) -> std::io::Result<Self> {
        Ok(Self {
            nouns: lines(&std::fs::read_to_string(nouns)?),
            verbs: lines(&std::fs::read_to_string(verbs)?),
            adjectives: lines(&std::fs::read_to_string(adjectives)?),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StudyConfig {
    pub conditions: Vec<Condition>,
    pub stories: Vec<String>,
    /// Offsets of recall rounds 1.. from the end of memorization.
    #[serde(with = "duration_list")]
    pub schedule_offsets: Vec<Duration>,
    pub attempts_per_login: u32,
    #[serde(with = "duration")]
    pub round_window: Duration,
    pub dedup_threshold: f64,
    pub assignment_policy: AssignmentPolicy,
    pub seed: u64,
    #[serde(skip)]
    pub random_dictionaries: RandomDictionaries,
}

impl Default for StudyConfig {
    fn default() -> Self {
        let hour = 3600;
        let day = 24 * hour;
        Self {
            conditions: vec![Condition::Random, Condition::Familiar],
            stories: vec!["alice".into(), "sherlock".into(), "pride".into()],
            schedule_offsets: [6 * hour, day, 2 * day, 3 * day, 4 * day, 5 * day]
                .into_iter()
                .map(Duration::from_secs)
                .collect(),
            attempts_per_login: 3,
            round_window: Duration::from_secs(day),
            dedup_threshold: crate::similarity::DEFAULT_THETA,
            assignment_policy: AssignmentPolicy::default(),
            seed: 0,
            random_dictionaries: RandomDictionaries::default(),
        }
    }
}

impl StudyConfig {
    pub fn validate(&self) -> Result<(), StudyError> {
        let invalid = |m: &str| Err(StudyError::Validation(m.to_string()));
        if self.conditions.is_empty() {
            return invalid("at least one condition is required");
        }
        if self.schedule_offsets.is_empty() {
            return invalid("schedule_offsets must not be empty");
        }
        if self.schedule_offsets.windows(2).any(|w| w[0] >= w[1]) {
            return invalid("schedule_offsets must be strictly increasing");
        }
        if self.attempts_per_login == 0 {
            return invalid("attempts_per_login must be at least 1");
        }
        if self.round_window.is_zero() {
            return invalid("round_window must be positive");
        }
        if !(self.dedup_threshold > 0.0 && self.dedup_threshold <= 1.0) {
            return invalid("dedup_threshold must be in (0, 1]");
        }
        if self.conditions.contains(&Condition::Familiar) && self.stories.is_empty() {
            return invalid("familiar condition needs at least one story");
        }
        Ok(())
    }

    /// Number of recall rounds after memorization.
    pub fn recall_rounds(&self) -> u32 {
        self.schedule_offsets.len() as u32
    }
}
