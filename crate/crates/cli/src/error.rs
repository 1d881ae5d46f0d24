use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Bad arguments or manifest. Exit code 2.
    Validation,
    /// A stage ran and failed. Exit code 3.
    Stage,
}

#[derive(Debug)]
pub struct CliError {
    pub stage: &'static str,
    pub kind: ErrorKind,
    pub message: String,
}

impl CliError {
    pub fn validation(stage: &'static str, message: impl fmt::Display) -> Self {
        Self {
            stage,
            kind: ErrorKind::Validation,
            message: message.to_string(),
        }
    }

    pub fn stage(stage: &'static str, message: impl fmt::Display) -> Self {
        Self {
            stage,
            kind: ErrorKind::Stage,
            message: message.to_string(),
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self.kind {
            ErrorKind::Validation => 2,
            ErrorKind::Stage => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} stage failed: {}", self.stage, self.message)
    }
}

impl std::error::Error for CliError {}

/// `map_err` helper: `.map_err(fail("rank"))`.
pub fn fail<E: fmt::Display>(stage: &'static str) -> impl Fn(E) -> CliError {
    move |e| CliError::stage(stage, e)
}

pub fn invalid<E: fmt::Display>(stage: &'static str) -> impl Fn(E) -> CliError {
    move |e| CliError::validation(stage, e)
}
