//! Case-count ingestion, incidence construction, feature encoding and the
//! joined modeling table.
//!
//! Input files are comma-separated with a header row:
//!
//! * cases: `date,county,cases` with ISO dates and cumulative counts;
//! * features: keyed by `county` (or `region`, resolved through the schema's
//!   region map), with an optional `date` column for dated series.
//!
//! Column kinds come from a TOML [`FeatureSchema`].

mod cases;
mod features;
mod table;

pub use cases::{load_cumulative_cases, read_cumulative_cases, CountyPanel, CountySeries, PanelPipeline};
pub use features::{
    load_features, policy_days_elapsed, read_features, ColumnKind, FeatureColumn, FeatureFrame,
    FeatureSchema,
};
pub use table::{build_modeling_table, AccessLog, ModelingTable, TableRow, TableSeries, TableView};
