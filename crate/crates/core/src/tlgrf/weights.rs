use std::collections::BTreeMap;

use super::Forest;
use crate::{Error, Result};

/// Convex weights over a forest's training blocks for one target.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityWeights {
    entries: BTreeMap<usize, f64>,
    contributing_trees: usize,
}

impl SimilarityWeights {
    /// Block id (index into [`Forest::blocks`]) → weight; zero weights are absent.
    pub fn entries(&self) -> &BTreeMap<usize, f64> {
        &self.entries
    }

    pub fn get(&self, block: usize) -> f64 {
        self.entries.get(&block).copied().unwrap_or(0.0)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.entries.values().sum()
    }

    /// Trees whose target leaf had a non-empty estimation set.
    pub fn contributing_trees(&self) -> usize {
        self.contributing_trees
    }

    /// `Σ γ_j · value(j)`.
    pub fn weighted_sum(&self, value: impl Fn(usize) -> f64) -> f64 {
        self.entries.iter().map(|(&j, &w)| w * value(j)).sum()
    }
}

/// Averages, over trees, `1 / |leaf|` for every estimation block sharing the
/// target's leaf. Trees whose target leaf is empty are left out of the average.
pub fn similarity_weights(forest: &Forest, x: &[f64]) -> Result<SimilarityWeights> {
    if x.len() != forest.n_features() {
        return Err(Error::Domain(format!(
            "target has {} features, forest expects {}",
            x.len(),
            forest.n_features()
        )));
    }
    let mut entries = BTreeMap::new();
    let mut contributing_trees = 0;
    for tree in forest.trees() {
        let members = tree.leaf_members(x);
        if members.is_empty() {
            continue;
        }
        contributing_trees += 1;
        let share = 1.0 / members.len() as f64;
        for &j in members {
            *entries.entry(j).or_insert(0.0) += share;
        }
    }
    if contributing_trees == 0 {
        return Err(Error::EmptyWeights);
    }
    let norm = contributing_trees as f64;
    entries.values_mut().for_each(|w| *w /= norm);
    Ok(SimilarityWeights {
        entries,
        contributing_trees,
    })
}
