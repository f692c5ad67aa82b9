//! File formats, reports, the threaded Monte-Carlo runner and the command
//! implementations behind the `hybridtail` binary.

pub mod cli;
pub mod io;
pub mod manifest;
pub mod report;
pub mod runner;

use hybridtail_core::Error as CoreError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("series is empty")]
    EmptySeries,
    #[error("{0}")]
    Io(String),
    #[error(transparent)]
    Core(#[from] CoreError),
}

impl CliError {
    /// 2 usage, 3 data, 4 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Parse { .. } | CliError::EmptySeries | CliError::Io(_) => 3,
            CliError::Core(e) => match e {
                CoreError::InvalidParams(_) | CoreError::InvalidGeometry { .. } => 2,
                CoreError::EmptyData
                | CoreError::InsufficientData { .. }
                | CoreError::DegenerateRange
                | CoreError::Domain(_)
                | CoreError::NonPositiveThresholdStatistic
                | CoreError::NoValidCandidate => 3,
                _ => 4,
            },
        }
    }

    /// Short machine-readable category.
    pub fn kind(&self) -> &'static str {
        match self.exit_code() {
            2 => "usage",
            3 => "data",
            _ => "numerical",
        }
    }

    /// One-line JSON error record.
    pub fn record(&self) -> String {
        serde_json::json!({
            "error": self.kind(),
            "code": self.exit_code(),
            "message": self.to_string(),
        })
        .to_string()
    }
}
