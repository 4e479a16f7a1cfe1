use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid model, reward, action or solver parameters.
    #[error("configuration error: {0}")]
    Config(String),

    #[error("missing required column {column:?} in CSV header")]
    MissingColumn { column: String },

    #[error("row {row}: {message}")]
    BadRow { row: usize, message: String },

    #[error("data error: {0}")]
    Data(String),

    /// An arc that breaks the root-cycle ordering.
    #[error("type-B structure violation: arc {from} -> {to} goes backwards in the ordering and does not target the root")]
    StructureViolation { from: String, to: String },

    #[error("cycle avoiding the root through {first} and {second}")]
    CycleAvoidsRoot { first: String, second: String },

    #[error("state {state} is absorbing (self-loop probability 1)")]
    Absorbing { state: String },

    #[error("construction bug at state {state}: {message}")]
    Construction { state: String, message: String },

    #[error("no convergence after {iterations} iterations (last span {span:e})")]
    NoConvergence { iterations: usize, span: f64 },

    #[error("singular linear system at pivot {pivot}")]
    Singular { pivot: usize },

    #[error("time limit of {seconds:.1}s exceeded")]
    TimedOut { seconds: f64 },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the command-line tool.
    ///
    /// 2 ingestion, 3 validation/structure, 4 solver, 5 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::MissingColumn { .. } | Error::BadRow { .. } | Error::Data(_) | Error::Csv(_) => 2,
            Error::Config(_)
            | Error::StructureViolation { .. }
            | Error::CycleAvoidsRoot { .. }
            | Error::Absorbing { .. }
            | Error::Construction { .. } => 3,
            Error::NoConvergence { .. } | Error::Singular { .. } | Error::TimedOut { .. } => 4,
            Error::Io { .. } | Error::Json(_) => 5,
        }
    }
}
