use std::fmt;

use wolfpack_core::Error;

/// Exit code for invalid configuration, usage or input files.
pub const EXIT_USAGE: i32 = 2;
/// Exit code when training aborts (e.g. non-finite loss).
pub const EXIT_TRAINING: i32 = 3;

/// A command failure with its process exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub kind: &'static str,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_USAGE,
            kind: "usage",
            message: message.into(),
        }
    }

    /// The one-line machine-readable form printed on stderr.
    pub fn to_json_line(&self) -> String {
        serde_json::json!({"error": self.kind, "code": self.code, "message": self.message})
            .to_string()
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.kind, self.message)
    }
}

impl std::error::Error for CliError {}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let (code, kind) = match &e {
            Error::Training(_) => (EXIT_TRAINING, "training"),
            Error::Config(_) => (EXIT_USAGE, "config"),
            Error::Usage(_) => (EXIT_USAGE, "usage"),
            Error::Checkpoint(_) => (EXIT_USAGE, "checkpoint"),
            Error::Io { .. } => (EXIT_USAGE, "io"),
            Error::Csv(_) | Error::Json(_) => (EXIT_USAGE, "format"),
        };
        CliError {
            code,
            kind,
            message: e.message().replace('\n', " "),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
