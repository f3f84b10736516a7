use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed row at line {line}: {message}")]
    MalformedRow { line: u64, message: String },

    #[error("unexpected CSV header: expected `{expected}`, found `{found}`")]
    BadHeader { expected: String, found: String },

    #[error("duplicate bank_id `{0}`")]
    DuplicateBank(String),

    #[error("no rows for year {0}")]
    NoRowsForYear(i32),

    #[error("empty market: {0}")]
    EmptyMarket(String),

    #[error("unknown bank `{0}`")]
    UnknownBank(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("target density {requested} unreachable; maximum attainable density is {maximum}")]
    UnreachableDensity { requested: f64, maximum: f64 },

    #[error("non-positive equity for bank `{0}` that is not marked as defaulted")]
    NonPositiveEquity(String),

    #[error("single-bank market: impact is undefined when one bank holds all equity")]
    SingleBankMarket,

    #[error("numerical blow-up at step {step}")]
    NumericalBlowUp { step: usize },

    #[error("internal consistency error: {0}")]
    Consistency(String),

    #[error("plot input error: {0}")]
    Plot(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::NumericalBlowUp { .. } | Error::Consistency(_))
    }
}
