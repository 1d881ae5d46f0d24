use std::fs::{File, OpenOptions};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventKind {
    Enrolled,
    StoryChosen,
    Assigned,
    RoundOpened,
    Attempt,
    RoundPassed,
    RoundFailed,
    Revealed,
    Survey,
    Invited,
}

impl EventKind {
    pub fn is_terminal(self) -> bool {
        matches!(self, EventKind::RoundPassed | EventKind::RoundFailed)
    }
}

/// One line of the study log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyEvent {
    pub at: DateTime<Utc>,
    pub participant: String,
    pub kind: EventKind,
    pub round: u32,
    #[serde(default, skip_serializing_if = "Map::is_empty")]
    pub payload: Map<String, Value>,
}

impl StudyEvent {
    pub fn new(at: DateTime<Utc>, participant: &str, kind: EventKind, round: u32, payload: Value) -> Self {
        let payload = match payload {
            Value::Object(m) => m,
            Value::Null => Map::new(),
            other => {
                let mut m = Map::new();
                m.insert("value".into(), other);
                m
            }
        };
        Self {
            at,
            participant: participant.to_string(),
            kind,
            round,
            payload,
        }
    }

    pub fn str_field(&self, key: &str) -> Option<&str> {
        self.payload.get(key).and_then(Value::as_str)
    }

    pub fn u64_field(&self, key: &str) -> Option<u64> {
        self.payload.get(key).and_then(Value::as_u64)
    }

    pub fn bool_field(&self, key: &str) -> Option<bool> {
        self.payload.get(key).and_then(Value::as_bool)
    }

    pub fn words_field(&self, key: &str) -> Option<Vec<String>> {
        self.payload.get(key)?.as_array().map(|a| {
            a.iter()
                .filter_map(Value::as_str)
                .map(str::to_string)
                .collect()
        })
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("events always serialize")
    }
}

#[derive(Debug, Error)]
pub enum LogError {
    #[error("event log {path} is corrupt at line {line}: {message}")]
    Corrupt {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("event log I/O on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Parses a JSON-lines log. Blank lines are skipped.
pub fn parse_log(content: &str, path: &Path) -> Result<Vec<StudyEvent>, LogError> {
    let mut events = Vec::new();
    for (i, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let ev = serde_json::from_str(line).map_err(|e| LogError::Corrupt {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        events.push(ev);
    }
    if !content.is_empty() && !content.ends_with('\n') {
        // a final line without newline parsed fine but was never acknowledged
        let line = content.lines().count();
        return Err(LogError::Corrupt {
            path: path.to_path_buf(),
            line,
            message: "unterminated final line".into(),
        });
    }
    Ok(events)
}

/// Append-only event log file.
#[derive(Debug)]
pub struct EventLog {
    path: PathBuf,
    file: File,
}

impl EventLog {
    /// Opens (creating if needed) and returns the existing events.
    pub fn open(path: impl Into<PathBuf>) -> Result<(Self, Vec<StudyEvent>), LogError> {
        let path = path.into();
        let io = |source| LogError::Io {
            path: path.clone(),
            source,
        };
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(io)?;
        }
        let file = OpenOptions::new()
            .create(true)
            .read(true)
            .append(true)
            .open(&path)
            .map_err(io)?;
        let mut content = String::new();
        (&file).read_to_string(&mut content).map_err(io)?;
        let events = parse_log(&content, &path)?;
        Ok((Self { path, file }, events))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Writes all events in one write call and syncs.
    pub fn append(&mut self, events: &[StudyEvent]) -> Result<(), LogError> {
        if events.is_empty() {
            return Ok(());
        }
        let mut buf = String::new();
        for e in events {
            buf.push_str(&e.to_line());
            buf.push('\n');
        }
        let io = |source| LogError::Io {
            path: self.path.clone(),
            source,
        };
        self.file.write_all(buf.as_bytes()).map_err(io)?;
        self.file.sync_data().map_err(io)
    }
}
