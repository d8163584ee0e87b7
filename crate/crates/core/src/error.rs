use std::fmt;
use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Where in a training run a numerical failure happened.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FailureSite {
    pub step: Option<usize>,
    pub epoch: Option<usize>,
    pub example: Option<usize>,
}

impl fmt::Display for FailureSite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        if let Some(s) = self.step {
            parts.push(format!("step {s}"));
        }
        if let Some(e) = self.epoch {
            parts.push(format!("epoch {e}"));
        }
        if let Some(x) = self.example {
            parts.push(format!("example #{x}"));
        }
        if parts.is_empty() {
            f.write_str("unknown location")
        } else {
            f.write_str(&parts.join(", "))
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid example: {0}")]
    InvalidExample(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("model format error: {0}")]
    Format(String),

    #[error("non-finite gradient at {0}")]
    NumericalFailure(FailureSite),

    #[error("not enough blocks: need {needed}, have {available}")]
    InsufficientBlocks { needed: usize, available: usize },

    #[error("degenerate baseline: every example carries the same label")]
    DegenerateBaseline,

    #[error("bootstrap: {skipped} of {resamples} resamples were degenerate (limit is 10%)")]
    TooManyDegenerateResamples { skipped: usize, resamples: usize },

    #[error("plans are misaligned: {0}")]
    Misaligned(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// Adds the example ordinal to a numerical failure; other errors pass through.
    pub fn at_example(self, ordinal: usize) -> Self {
        match self {
            Error::NumericalFailure(mut site) => {
                site.example = Some(ordinal);
                Error::NumericalFailure(site)
            }
            other => other,
        }
    }

    pub fn at_epoch(self, epoch: usize) -> Self {
        match self {
            Error::NumericalFailure(mut site) => {
                site.epoch = Some(epoch);
                Error::NumericalFailure(site)
            }
            other => other,
        }
    }

    pub fn at_step(self, step: usize) -> Self {
        match self {
            Error::NumericalFailure(mut site) => {
                site.step = Some(step);
                Error::NumericalFailure(site)
            }
            other => other,
        }
    }

    /// Process exit code used by the command-line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Misaligned(_) => 2,
            Error::NumericalFailure(_) => 4,
            _ => 3,
        }
    }
}
