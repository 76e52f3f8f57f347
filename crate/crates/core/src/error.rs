use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("missing required column `{0}`")]
    MissingColumn(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("graphml error: {0}")]
    GraphMl(String),

    #[error("empty graph")]
    EmptyGraph,

    #[error("graph is disconnected ({components} components)")]
    Disconnected { components: usize },

    #[error("record {index} has no community assigned")]
    UnassignedCommunity { index: usize },

    #[error("year {0} is missing from the major-party map")]
    YearNotInPartyMap(i32),

    #[error("degenerate sample: {0}")]
    DegenerateSample(String),

    #[error("sample size {n} outside supported range {min}..={max}")]
    SampleSize { n: usize, min: usize, max: usize },

    #[error("rank-deficient design; collinear columns: {}", .0.join(", "))]
    RankDeficient(Vec<String>),

    #[error("{0}")]
    InvalidInput(String),

    #[error("optimizer did not converge (best lambda {best_lambda:e})")]
    NoConvergence { best_lambda: f64 },

    #[error("province name mismatch rate {rate:.3} exceeds 0.10; unmatched: {}", .unmatched.join(", "))]
    ProvinceMismatch { rate: f64, unmatched: Vec<String> },

    #[error("infeasible configuration: {0}")]
    InfeasibleConfig(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
