use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("config error: {0}")]
    Config(String),

    #[error("missing input for stage `{stage}`: {missing}")]
    StageDependency { stage: String, missing: String },

    #[error("could not place {placed_target} dots within {budget} attempts (placed {placed})")]
    PlacementFailure {
        placed: usize,
        placed_target: usize,
        budget: usize,
    },

    #[error("data error: {0}")]
    Data(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("fit error: {0}")]
    Fit(String),

    #[error("outcome perfectly separated by `{term}`")]
    Separation { term: String },

    #[error("design matrix is rank deficient at term `{term}`")]
    Rank { term: String },

    #[error("no data left: {0}")]
    EmptyData(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("png decode: {0}")]
    PngDecode(#[from] png::DecodingError),

    #[error("png encode: {0}")]
    PngEncode(#[from] png::EncodingError),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the command line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::StageDependency { .. } => 3,
            Error::Fit(_)
            | Error::Separation { .. }
            | Error::Rank { .. }
            | Error::Numerical(_)
            | Error::Domain(_)
            | Error::EmptyData(_) => 4,
            _ => 1,
        }
    }
}
