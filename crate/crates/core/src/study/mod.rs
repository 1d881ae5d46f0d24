//! The recall-study protocol: configuration, passphrase assignment, the
//! three-attempt login state machine over an append-only event log, and the
//! metrics derived from that log.

use thiserror::Error;

use crate::similarity::SimilarityError;

pub mod assign;
pub mod config;
pub mod events;
pub mod metrics;
pub mod protocol;
pub mod typo;

pub use assign::{assign_familiar_passphrase, generate_random_passphrase};
pub use config::{AssignmentPolicy, Condition, RandomDictionaries, StudyConfig};
pub use events::{EventKind, EventLog, LogError, StudyEvent};
pub use metrics::{compute_metrics, metrics_report, MetricsFilter, MetricsReport, MetricsTable, RoundMetrics};
pub use protocol::{schedule, verify_attempt, AttemptOutcome, Familiarity, Participant, RoundWindow, Study};
pub use typo::{typo_report, TypoReport};

#[derive(Debug, Error)]
pub enum StudyError {
    #[error("invalid input: {0}")]
    Validation(String),
    #[error("unknown participant `{0}`")]
    UnknownParticipant(String),
    #[error("participant `{0}` already exists")]
    DuplicateParticipant(String),
    #[error("conflict: {0}")]
    Conflict(String),
    #[error("forbidden: {0}")]
    Forbidden(String),
    #[error("round {round} is not open until {opens_at}")]
    RoundNotOpen {
        round: u32,
        opens_at: chrono::DateTime<chrono::Utc>,
    },
    #[error("round {0} is closed")]
    RoundClosed(u32),
    #[error("round {0} already finished")]
    RoundAlreadyTerminal(u32),
    #[error("round {0} cannot start before the previous round finishes")]
    PreviousRoundIncomplete(u32),
    #[error("no passphrase in the `{0}` pool is dissimilar enough to the ones already assigned")]
    PoolExhausted(String),
    #[error("a random-passphrase dictionary is empty")]
    EmptyDictionary,
    #[error("malformed event log at event {index}: {message}")]
    MalformedLog { index: usize, message: String },
    #[error(transparent)]
    Similarity(#[from] SimilarityError),
}
