//! Small-area exponential growth-rate estimation.
//!
//! The crate covers the full path from cumulative case counts to growth-rate
//! estimates and their downstream uses:
//!
//! * [`panel`] ingests cumulative counts and feature sources and assembles the
//!   log-incidence [`ModelingTable`](panel::ModelingTable).
//! * [`baseline`] holds the two-point and fixed-window least-squares estimators.
//! * [`window`] selects fitting windows by rolling cross-validation, nationally,
//!   per county, or per k-means cluster.
//! * [`tlgrf`] is the transfer-learning honest forest over two-day blocks.
//! * [`forecast`] turns rates into seven-day forecasts and benchmarks methods.
//! * [`detection`] covers outbreak thresholds and investigation allocation.

pub mod baseline;
pub mod detection;
pub mod error;
pub mod forecast;
pub mod panel;
pub mod plot;
mod stats;
pub mod tlgrf;
pub mod window;

pub use error::{Error, Result};

/// One-based day index; day 1 is the earliest date in the cases file.
pub type Day = u32;

/// Identifies the estimator that produced a [`RateEstimate`](baseline::RateEstimate).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MethodTag {
    TwoPoint,
    Ols,
    Tcv,
    Ctcv,
    KMeans,
    Tlgrf,
    TlgrfDelta,
    TlgrfTimeOnly,
    Other(String),
}

impl std::fmt::Display for MethodTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MethodTag::TwoPoint => f.write_str("two-point"),
            MethodTag::Ols => f.write_str("ols"),
            MethodTag::Tcv => f.write_str("tcv"),
            MethodTag::Ctcv => f.write_str("ctcv"),
            MethodTag::KMeans => f.write_str("kmeans"),
            MethodTag::Tlgrf => f.write_str("tlgrf"),
            MethodTag::TlgrfDelta => f.write_str("tlgrf-delta"),
            MethodTag::TlgrfTimeOnly => f.write_str("tlgrf-time-only"),
            MethodTag::Other(name) => f.write_str(name),
        }
    }
}
