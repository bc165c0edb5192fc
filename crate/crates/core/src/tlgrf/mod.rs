//! Transfer-learning honest forest over two-day data blocks.
//!
//! Every pair of consecutive observed days of every county becomes a
//! [`DataBlock`] whose slope is the two-point log-difference. For a target
//! `(county, t)` an honest regression forest is grown on the same-parity
//! blocks up to `t`; the target's estimate is the similarity-weighted mean of
//! block slopes. The forest therefore borrows strength across both counties
//! and days while each weight stays a convex combination.

mod blocks;
mod estimate;
mod forest;
mod importance;
mod weights;

pub use blocks::{block_feature_names, make_blocks, parity_pool, target_features, DataBlock};
pub use estimate::{
    day_seed, estimate_time_only, estimate_tlgrf, estimate_tlgrf_delta, forest_for_day, tlgrf_rate, ForestBank,
};
pub use forest::{train_forest, BlockKey, Forest, ForestParams, Node, Tree};
pub use importance::{feature_importance, forest_diagnostics, ForestDiagnostics, ImportanceReport};
pub use weights::{similarity_weights, SimilarityWeights};
