use thiserror::Error;

use crate::Day;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{source_name}: schema error: {message}")]
    Schema { source_name: String, message: String },

    #[error("{source_name}:{line}: {message}")]
    Row {
        source_name: String,
        line: u64,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("feature gap: {0}")]
    FeatureGap(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("insufficient history: day {day} is before day {needed}")]
    InsufficientHistory { day: Day, needed: Day },

    #[error("window selection failed: {0}")]
    Selection(String),

    #[error("no similarity weights: target falls in an empty estimation leaf in every tree")]
    EmptyWeights,

    #[error("at day {day}: {source}")]
    AtDay {
        day: Day,
        #[source]
        source: Box<Error>,
    },

    #[error("report error: {0}")]
    Report(String),

    #[error("threshold tuning failed: {0}")]
    Tuning(String),
}

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub(crate) fn at_day(self, day: Day) -> Self {
        Error::AtDay {
            day,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
