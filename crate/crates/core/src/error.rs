use std::path::PathBuf;

use thiserror::Error;

/// Pipeline stage a fatal error originated from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Config,
    Ingestion,
    AbuseMapping,
    SizeMapping,
    Ranking,
    Aggregation,
    Uptime,
    Sensitivity,
    Report,
    Fixture,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Stage::Config => "config",
            Stage::Ingestion => "ingestion",
            Stage::AbuseMapping => "abuse-mapping",
            Stage::SizeMapping => "size-mapping",
            Stage::Ranking => "ranking",
            Stage::Aggregation => "aggregation",
            Stage::Uptime => "uptime",
            Stage::Sensitivity => "sensitivity",
            Stage::Report => "report",
            Stage::Fixture => "fixture",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("[{stage}] configuration error: {message}")]
    Config { stage: Stage, message: String },

    #[error("[{stage}] data error: {message}")]
    Data { stage: Stage, message: String },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("invalid hostname {host:?}: bad label {label:?}")]
    Hostname { host: String, label: String },

    #[error("no registrable domain in {0:?}")]
    NoRegistrableDomain(String),

    #[error("statistics: {0}")]
    Stats(String),

    #[error("[{stage}] {source}")]
    Staged {
        stage: Stage,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn config(stage: Stage, message: impl Into<String>) -> Self {
        Error::Config {
            stage,
            message: message.into(),
        }
    }

    pub fn data(stage: Stage, message: impl Into<String>) -> Self {
        Error::Data {
            stage,
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Tag an untagged error with the stage it surfaced in.
    pub fn at(self, stage: Stage) -> Self {
        match self {
            e @ (Error::Config { .. } | Error::Data { .. } | Error::Staged { .. }) => e,
            other => Error::Staged {
                stage,
                source: Box::new(other),
            },
        }
    }

    /// Process exit code: 1 for configuration problems, 2 for data problems.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } | Error::Io { .. } => 1,
            Error::Staged { source, .. } => source.exit_code(),
            _ => 2,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
