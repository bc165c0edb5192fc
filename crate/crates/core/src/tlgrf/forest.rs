use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::DataBlock;
use crate::{Day, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForestParams {
    pub num_trees: usize,
    /// Smallest number of structure-half blocks a child may hold.
    pub min_node_size: usize,
    /// Features tried per split; `None` means `ceil(sqrt(p))`.
    pub mtry: Option<usize>,
    /// Fraction of blocks drawn (without replacement) per tree.
    pub subsample_fraction: f64,
    pub honesty: bool,
    /// Fraction of each subsample used to choose splits when `honesty` is on.
    pub honesty_fraction: f64,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            num_trees: 200,
            min_node_size: 5,
            mtry: None,
            subsample_fraction: 0.5,
            honesty: true,
            honesty_fraction: 0.5,
            seed: 0,
        }
    }
}

impl ForestParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Domain(m.to_string()));
        if self.num_trees == 0 {
            return bad("num_trees must be positive");
        }
        if self.min_node_size == 0 {
            return bad("min_node_size must be positive");
        }
        if !(self.subsample_fraction > 0.0 && self.subsample_fraction <= 1.0) {
            return bad("subsample_fraction must lie in (0, 1]");
        }
        if !(self.honesty_fraction > 0.0 && self.honesty_fraction < 1.0) {
            return bad("honesty_fraction must lie in (0, 1)");
        }
        if self.mtry == Some(0) {
            return bad("mtry must be positive");
        }
        Ok(())
    }

    pub fn mtry_for(&self, n_features: usize) -> usize {
        let default = (n_features as f64).sqrt().ceil() as usize;
        self.mtry.unwrap_or(default).clamp(1, n_features.max(1))
    }

    /// Same parameters with the seed replaced.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    /// `x[feature] <= threshold` goes left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        /// Estimation-half block ids, ascending.
        estimation: Vec<usize>,
        structure_size: usize,
    },
}

/// Nodes in creation order; `nodes[0]` is the root and children always
/// follow their parent.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    pub fn from_nodes(nodes: Vec<Node>) -> Result<Tree> {
        if nodes.is_empty() {
            return Err(Error::Domain("tree without nodes".into()));
        }
        let mut parents = vec![0usize; nodes.len()];
        for (i, node) in nodes.iter().enumerate() {
            if let Node::Split { left, right, .. } = *node {
                for child in [left, right] {
                    if child <= i || child >= nodes.len() {
                        return Err(Error::Domain(format!("node {i}: bad child {child}")));
                    }
                    parents[child] += 1;
                }
            }
        }
        if parents[0] != 0 || parents[1..].iter().any(|&p| p != 1) {
            return Err(Error::Domain("nodes do not form a tree".into()));
        }
        Ok(Tree { nodes })
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    /// Index of the leaf reached by `x`.
    pub fn leaf_index(&self, x: &[f64]) -> usize {
        let mut i = 0;
        while let Node::Split {
            feature,
            threshold,
            left,
            right,
        } = self.nodes[i]
        {
            i = if x[feature] <= threshold { left } else { right };
        }
        i
    }

    /// Estimation blocks sharing `x`'s leaf.
    pub fn leaf_members(&self, x: &[f64]) -> &[usize] {
        match &self.nodes[self.leaf_index(x)] {
            Node::Leaf { estimation, .. } => estimation,
            Node::Split { .. } => unreachable!("leaf_index ends on a leaf"),
        }
    }

    /// Depth of every node (root 0).
    pub fn node_depths(&self) -> Vec<usize> {
        let mut depth = vec![0; self.nodes.len()];
        for (i, node) in self.nodes.iter().enumerate() {
            if let Node::Split { left, right, .. } = *node {
                depth[left] = depth[i] + 1;
                depth[right] = depth[i] + 1;
            }
        }
        depth
    }

    pub fn depth(&self) -> usize {
        self.node_depths().into_iter().max().unwrap_or(0)
    }

    /// `(depth, estimation-set size)` of each leaf.
    pub fn leaves(&self) -> Vec<(usize, usize)> {
        let depths = self.node_depths();
        self.nodes
            .iter()
            .zip(depths)
            .filter_map(|(n, d)| match n {
                Node::Leaf { estimation, .. } => Some((d, estimation.len())),
                Node::Split { .. } => None,
            })
            .collect()
    }
}

/// The training-block facts a forest needs at estimation time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockKey {
    pub county: usize,
    pub day: Day,
    pub slope: f64,
}

impl From<&DataBlock> for BlockKey {
    fn from(b: &DataBlock) -> Self {
        BlockKey {
            county: b.county,
            day: b.day,
            slope: b.slope,
        }
    }
}

/// An honest tree ensemble over data blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct Forest {
    trees: Vec<Tree>,
    params: ForestParams,
    blocks: Vec<BlockKey>,
    n_features: usize,
}

impl Forest {
    /// Assembles a forest from prebuilt trees; leaf members index `blocks`.
    pub fn from_parts(
        trees: Vec<Tree>,
        blocks: Vec<BlockKey>,
        n_features: usize,
        params: ForestParams,
    ) -> Result<Forest> {
        for tree in &trees {
            for node in tree.nodes() {
                match node {
                    Node::Leaf { estimation, .. } if estimation.iter().any(|&j| j >= blocks.len()) => {
                        return Err(Error::Domain("leaf member outside the block list".into()))
                    }
                    Node::Split { feature, .. } if *feature >= n_features => {
                        return Err(Error::Domain(format!("split on feature {feature}")))
                    }
                    _ => {}
                }
            }
        }
        Ok(Forest {
            trees,
            params,
            blocks,
            n_features,
        })
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn params(&self) -> &ForestParams {
        &self.params
    }

    /// Training blocks; leaf member ids index this list.
    pub fn blocks(&self) -> &[BlockKey] {
        &self.blocks
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }
}

/// Grows `params.num_trees` honest trees on the block slopes.
///
/// Tree `b` draws from its own ChaCha stream `b` under `params.seed`, so the
/// result does not depend on how trees are scheduled across threads.
pub fn train_forest(blocks: &[DataBlock], params: &ForestParams) -> Result<Forest> {
    params.validate()?;
    if blocks.is_empty() {
        return Err(Error::Domain("no blocks to train on".into()));
    }
    if blocks.len() < 2 {
        return Err(Error::InsufficientData("a forest needs at least 2 blocks".into()));
    }
    let n_features = blocks[0].features.len();
    if blocks.iter().any(|b| b.features.len() != n_features) {
        return Err(Error::Domain("blocks have different feature widths".into()));
    }
    let trees = (0..params.num_trees)
        .into_par_iter()
        .map(|b| grow_tree(blocks, params, n_features, b as u64))
        .collect();
    Ok(Forest {
        trees,
        params: *params,
        blocks: blocks.iter().map(BlockKey::from).collect(),
        n_features,
    })
}

struct Candidate {
    feature: usize,
    threshold: f64,
    gain: f64,
}

fn grow_tree(blocks: &[DataBlock], params: &ForestParams, n_features: usize, stream: u64) -> Tree {
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    rng.set_stream(stream);
    let n = blocks.len();
    let m = ((n as f64 * params.subsample_fraction).round() as usize).clamp(2, n);
    let drawn = sample(&mut rng, n, m).into_vec();
    let (structure, estimation) = if params.honesty {
        let s = ((m as f64 * params.honesty_fraction).floor() as usize).clamp(1, m - 1);
        (drawn[..s].to_vec(), drawn[s..].to_vec())
    } else {
        (drawn.clone(), drawn)
    };

    let mtry = params.mtry_for(n_features);
    let mut nodes = vec![Node::Leaf {
        estimation: Vec::new(),
        structure_size: 0,
    }];
    let mut stack = vec![(0usize, structure)];
    while let Some((id, members)) = stack.pop() {
        match best_split(blocks, &members, params.min_node_size, n_features, mtry, &mut rng) {
            Some(c) => {
                let (l, r): (Vec<usize>, Vec<usize>) = members
                    .iter()
                    .partition(|&&j| blocks[j].features[c.feature] <= c.threshold);
                let left = nodes.len();
                let right = left + 1;
                for _ in 0..2 {
                    nodes.push(Node::Leaf {
                        estimation: Vec::new(),
                        structure_size: 0,
                    });
                }
                nodes[id] = Node::Split {
                    feature: c.feature,
                    threshold: c.threshold,
                    left,
                    right,
                };
                stack.push((right, r));
                stack.push((left, l));
            }
            None => {
                nodes[id] = Node::Leaf {
                    estimation: Vec::new(),
                    structure_size: members.len(),
                };
            }
        }
    }
    let mut tree = Tree { nodes };
    for j in estimation {
        let leaf = tree.leaf_index(&blocks[j].features);
        if let Node::Leaf { estimation, .. } = &mut tree.nodes[leaf] {
            estimation.push(j);
        }
    }
    for node in &mut tree.nodes {
        if let Node::Leaf { estimation, .. } = node {
            estimation.sort_unstable();
        }
    }
    prune_empty(&tree)
}

/// Collapses every split with an empty-estimation side into its other side,
/// so each remaining leaf holds at least one estimation block.
fn prune_empty(tree: &Tree) -> Tree {
    fn filled(nodes: &[Node], id: usize, memo: &mut [Option<usize>]) -> usize {
        if let Some(n) = memo[id] {
            return n;
        }
        let n = match &nodes[id] {
            Node::Leaf { estimation, .. } => estimation.len(),
            Node::Split { left, right, .. } => filled(nodes, *left, memo) + filled(nodes, *right, memo),
        };
        memo[id] = Some(n);
        n
    }
    fn copy(nodes: &[Node], id: usize, memo: &mut [Option<usize>], out: &mut Vec<Node>) -> usize {
        match &nodes[id] {
            Node::Leaf { .. } => {
                out.push(nodes[id].clone());
                out.len() - 1
            }
            &Node::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                if filled(nodes, left, memo) == 0 {
                    return copy(nodes, right, memo, out);
                }
                if filled(nodes, right, memo) == 0 {
                    return copy(nodes, left, memo, out);
                }
                let at = out.len();
                out.push(nodes[id].clone());
                let left = copy(nodes, left, memo, out);
                let right = copy(nodes, right, memo, out);
                out[at] = Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                };
                at
            }
        }
    }
    let mut memo = vec![None; tree.nodes.len()];
    let mut out = Vec::with_capacity(tree.nodes.len());
    copy(&tree.nodes, 0, &mut memo, &mut out);
    Tree { nodes: out }
}

/// Largest variance reduction of the block slopes over `mtry` sampled
/// features, keeping at least `min_node` members on each side.
fn best_split(
    blocks: &[DataBlock],
    members: &[usize],
    min_node: usize,
    n_features: usize,
    mtry: usize,
    rng: &mut ChaCha8Rng,
) -> Option<Candidate> {
    let n = members.len();
    if n_features == 0 || n < 2 * min_node {
        return None;
    }
    let total: f64 = members.iter().map(|&j| blocks[j].slope).sum();
    let total_sq: f64 = members.iter().map(|&j| blocks[j].slope.powi(2)).sum();
    let sst = total_sq - total * total / n as f64;
    if sst <= 1e-14 * total_sq.max(1e-300) {
        return None;
    }
    let floor = 1e-12 * sst;
    let base = total * total / n as f64;

    let mut best: Option<Candidate> = None;
    let mut order = members.to_vec();
    for feature in sample(rng, n_features, mtry.min(n_features)).into_iter() {
        let x = |j: usize| blocks[j].features[feature];
        order.sort_by(|&a, &b| x(a).total_cmp(&x(b)).then(a.cmp(&b)));
        let mut left_sum = 0.0;
        for i in 1..n {
            left_sum += blocks[order[i - 1]].slope;
            if i < min_node || n - i < min_node {
                continue;
            }
            let (lo, hi) = (x(order[i - 1]), x(order[i]));
            if lo >= hi {
                continue;
            }
            let threshold = lo + (hi - lo) / 2.0;
            if !(lo <= threshold && threshold < hi) {
                continue;
            }
            let right_sum = total - left_sum;
            let gain = left_sum * left_sum / i as f64 + right_sum * right_sum / (n - i) as f64 - base;
            if gain > floor && best.as_ref().is_none_or(|b| gain > b.gain) {
                best = Some(Candidate {
                    feature,
                    threshold,
                    gain,
                });
            }
        }
    }
    best
}
