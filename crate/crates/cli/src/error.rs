use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("cannot read config {path}: {source}")]
    ConfigRead {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse config {path}: {source}")]
    ConfigParse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("unknown benchmark '{name}' (valid: {valid})")]
    UnknownBenchmark { name: String, valid: String },
    #[error("dataset: {0}")]
    Dataset(String),
    #[error("output directory {path} is not writable: {source}")]
    Unwritable {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: malformed run artifact: {source}")]
    Artifact {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("no run artifacts found under {0}")]
    NoArtifacts(String),
    #[error("benchmark {benchmark}: budgets differ across strategies ({detail})")]
    BudgetMismatch { benchmark: String, detail: String },
    #[error("baseline strategy '{0}' not present in the runs")]
    MissingBaseline(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl HarnessError {
    /// Errors caused by how the tool was invoked rather than by a failure
    /// while running.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Self::ConfigRead { .. }
                | Self::ConfigParse { .. }
                | Self::InvalidConfig(_)
                | Self::UnknownBenchmark { .. }
                | Self::MissingBaseline(_)
        )
    }
}
