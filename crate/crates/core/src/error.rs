use std::path::PathBuf;

use chrono::NaiveDate;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed CSV {path}: {message}")]
    Csv { path: PathBuf, message: String },
    #[error("unparseable date {value:?} on line {line}")]
    BadDate { value: String, line: usize },
    #[error("duplicate date {0}")]
    DuplicateDate(NaiveDate),
    #[error("non-numeric value {value:?} for {ticker} on {date}")]
    BadNumber {
        value: String,
        ticker: String,
        date: NaiveDate,
    },
    #[error("no ticker qualifies: none reaches the coverage threshold {threshold}")]
    NoTickerQualifies { threshold: f64 },
    #[error("ticker {ticker} has {observed} observations, at least 2 are needed")]
    TooFewObservations { ticker: String, observed: usize },
    #[error("non-positive price {price} for {ticker} on {date}")]
    NonPositivePrice {
        ticker: String,
        date: NaiveDate,
        price: f64,
    },
    #[error("zero local variance for {ticker} in the window ending {date}")]
    ZeroVariance { ticker: String, date: NaiveDate },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("series of length {len} is too short: {needed} points required")]
    SeriesTooShort { len: usize, needed: usize },
    #[error("rank {rank} out of range for {count} configurations")]
    RankOutOfRange { rank: u64, count: String },
    #[error(
        "{count} configurations exceed the enumeration budget of {budget}; \
         thin the series with a larger stride or raise the budget explicitly"
    )]
    BudgetExceeded { count: String, budget: u64 },
    #[error("date {0} is outside the series range")]
    DateOutOfRange(NaiveDate),
    #[error("invalid segment: {0}")]
    InvalidSegment(String),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
