use chrono::NaiveDate;
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{asset}: line {line}: {reason}")]
    MalformedRow {
        asset: String,
        line: usize,
        reason: String,
    },

    #[error("{asset}: line {line}: non-positive price {price} on {date}")]
    NonPositivePrice {
        asset: String,
        line: usize,
        date: NaiveDate,
        price: f64,
    },

    #[error("{asset}: duplicate date {date}")]
    DuplicateDate { asset: String, date: NaiveDate },

    #[error("{asset}: input contains no observations")]
    EmptyInput { asset: String },

    #[error("panel requires at least 2 assets, got {found}")]
    TooFewSeries { found: usize },

    #[error("date intersection across series is empty")]
    EmptyIntersection,

    #[error("insufficient data for {what}: need {needed}, have {found}")]
    InsufficientData {
        what: &'static str,
        needed: usize,
        found: usize,
    },

    #[error("panel kind mismatch: expected {expected}, got {found}")]
    WrongPanelKind {
        expected: &'static str,
        found: &'static str,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("rank-deficient regressor matrix in {what}")]
    RankDeficient { what: &'static str },

    #[error("{what}: matrix numerically singular (smallest pivot {pivot:e}); try a larger smoothing ratio")]
    Singular { what: &'static str, pivot: f64 },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("series {asset} fails the unit-root gate: statistic {statistic:.4} > 1% critical value {critical:.2}")]
    StationarityGate {
        asset: String,
        statistic: f64,
        critical: f64,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

/// Coarse classification used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Numerical,
    Io,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Config(_) | Error::Toml(_) => ErrorClass::Config,
            Error::MalformedRow { .. }
            | Error::NonPositivePrice { .. }
            | Error::DuplicateDate { .. }
            | Error::EmptyInput { .. }
            | Error::TooFewSeries { .. }
            | Error::EmptyIntersection
            | Error::InsufficientData { .. }
            | Error::WrongPanelKind { .. }
            | Error::StationarityGate { .. }
            | Error::Csv(_) => ErrorClass::Data,
            Error::RankDeficient { .. } | Error::Singular { .. } | Error::Degenerate(_) => {
                ErrorClass::Numerical
            }
            Error::Io(_) | Error::Json(_) => ErrorClass::Io,
        }
    }
}
