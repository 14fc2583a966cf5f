//! Failures tagged with the process exit code they map to.

use std::fmt;

use grdl_core::GrdlError;

/// Exit codes: 1 configuration, 2 data, 3 numerical.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kind {
    Config = 1,
    Data = 2,
    Numeric = 3,
}

#[derive(Debug)]
pub struct CliError {
    pub kind: Kind,
    pub error: anyhow::Error,
}

impl CliError {
    pub fn config(msg: impl fmt::Display) -> Self {
        CliError {
            kind: Kind::Config,
            error: anyhow::anyhow!("{msg}"),
        }
    }

    pub fn data(msg: impl fmt::Display) -> Self {
        CliError {
            kind: Kind::Data,
            error: anyhow::anyhow!("{msg}"),
        }
    }

    pub fn code(&self) -> i32 {
        self.kind as i32
    }

    pub fn context(self, ctx: impl fmt::Display + Send + Sync + 'static) -> Self {
        CliError {
            kind: self.kind,
            error: self.error.context(ctx),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.error)
    }
}

impl From<GrdlError> for CliError {
    fn from(e: GrdlError) -> Self {
        let kind = match e {
            GrdlError::Config(_) | GrdlError::UnsupportedMetric(_) => Kind::Config,
            GrdlError::NumericalAbort { .. } => Kind::Numeric,
            _ => Kind::Data,
        };
        CliError {
            kind,
            error: e.into(),
        }
    }
}

/// Output files that cannot be written count as data errors.
impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError {
            kind: Kind::Data,
            error: e.into(),
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError {
            kind: Kind::Data,
            error: e.into(),
        }
    }
}

pub type CliResult<T = ()> = Result<T, CliError>;
