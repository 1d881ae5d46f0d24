use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde_json::json;
use thiserror::Error;

use famphrase_core::study::{LogError, StudyError};

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Log(#[from] LogError),
    #[error("replaying the event log: {0}")]
    Replay(StudyError),
    #[error("I/O: {0}")]
    Io(#[from] std::io::Error),
}

/// An error rendered as `{"error": code, "message": ...}`.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
    pub opens_at: Option<chrono::DateTime<chrono::Utc>>,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
            opens_at: None,
        }
    }

    pub fn unauthorized() -> Self {
        Self::new(StatusCode::UNAUTHORIZED, "unauthorized", "missing or invalid bearer token")
    }

    pub fn internal(message: impl std::fmt::Display) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message.to_string())
    }
}

impl From<StudyError> for ApiError {
    fn from(e: StudyError) -> Self {
        let message = e.to_string();
        let (status, code) = match &e {
            StudyError::Validation(_) => (StatusCode::UNPROCESSABLE_ENTITY, "validation"),
            StudyError::UnknownParticipant(_) => (StatusCode::NOT_FOUND, "unknown-participant"),
            StudyError::DuplicateParticipant(_) => (StatusCode::CONFLICT, "duplicate-participant"),
            StudyError::Conflict(_) => (StatusCode::CONFLICT, "conflict"),
            StudyError::Forbidden(_) => (StatusCode::FORBIDDEN, "forbidden"),
            StudyError::RoundNotOpen { .. } => (StatusCode::CONFLICT, "round-not-open"),
            StudyError::RoundClosed(_) => (StatusCode::CONFLICT, "round-closed"),
            StudyError::RoundAlreadyTerminal(_) => (StatusCode::CONFLICT, "round-terminal"),
            StudyError::PreviousRoundIncomplete(_) => (StatusCode::CONFLICT, "previous-round-incomplete"),
            StudyError::PoolExhausted(_) => (StatusCode::CONFLICT, "pool-exhausted"),
            _ => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        let mut err = Self::new(status, code, message);
        if let StudyError::RoundNotOpen { opens_at, .. } = e {
            err.opens_at = Some(opens_at);
        }
        err
    }
}

impl From<LogError> for ApiError {
    fn from(e: LogError) -> Self {
        Self::internal(e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut body = json!({ "error": self.code, "message": self.message });
        if let Some(at) = self.opens_at {
            body["opens_at"] = json!(at);
        }
        (self.status, Json(body)).into_response()
    }
}
