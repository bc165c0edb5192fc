use super::{Forest, Node};
use crate::stats::{mean, median};

/// Split-frequency importance with each level down counting half as much.
#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceReport {
    /// Normalized scores per feature; all zero when `degenerate`.
    pub scores: Vec<f64>,
    /// `Σ 2^(-level)` per feature before normalization.
    pub raw: Vec<f64>,
    /// `split_counts[level][feature]`.
    pub split_counts: Vec<Vec<usize>>,
    /// No tree in the forest splits at all.
    pub degenerate: bool,
}

impl ImportanceReport {
    /// Feature indices by descending score, ties by index.
    pub fn ranked(&self) -> Vec<(usize, f64)> {
        let mut out: Vec<(usize, f64)> = self.scores.iter().copied().enumerate().collect();
        out.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        out
    }
}

pub fn feature_importance(forest: &Forest) -> ImportanceReport {
    let p = forest.n_features();
    let mut raw = vec![0.0; p];
    let mut split_counts: Vec<Vec<usize>> = Vec::new();
    for tree in forest.trees() {
        let depths = tree.node_depths();
        for (node, level) in tree.nodes().iter().zip(depths) {
            if let Node::Split { feature, .. } = *node {
                raw[feature] += 0.5f64.powi(level as i32);
                if split_counts.len() <= level {
                    split_counts.resize(level + 1, vec![0; p]);
                }
                split_counts[level][feature] += 1;
            }
        }
    }
    let total: f64 = raw.iter().sum();
    let degenerate = total == 0.0;
    let scores = if degenerate {
        vec![0.0; p]
    } else {
        raw.iter().map(|r| r / total).collect()
    };
    ImportanceReport {
        scores,
        raw,
        split_counts,
        degenerate,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForestDiagnostics {
    pub tree_depths: Vec<usize>,
    pub mean_depth: f64,
    pub median_depth: f64,
    /// Estimation-set size of every leaf across the forest.
    pub leaf_sizes: Vec<usize>,
    pub mean_leaf_size: f64,
    pub median_leaf_size: f64,
}

pub fn forest_diagnostics(forest: &Forest) -> ForestDiagnostics {
    let tree_depths: Vec<usize> = forest.trees().iter().map(|t| t.depth()).collect();
    let leaf_sizes: Vec<usize> = forest
        .trees()
        .iter()
        .flat_map(|t| t.leaves().into_iter().map(|(_, size)| size))
        .collect();
    let as_f64 = |v: &[usize]| v.iter().map(|&x| x as f64).collect::<Vec<_>>();
    let depths = as_f64(&tree_depths);
    let sizes = as_f64(&leaf_sizes);
    ForestDiagnostics {
        mean_depth: mean(&depths).unwrap_or(0.0),
        median_depth: median(&depths).unwrap_or(0.0),
        mean_leaf_size: mean(&sizes).unwrap_or(0.0),
        median_leaf_size: median(&sizes).unwrap_or(0.0),
        tree_depths,
        leaf_sizes,
    }
}
