//! Lloyd's k-means with k-means++ seeding over standardized static features.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::panel::ModelingTable;
use crate::{Error, Result};

pub const MAX_LLOYD_ITERATIONS: usize = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterAssignment {
    k: usize,
    assignment: Vec<usize>,
    centroids: Vec<Vec<f64>>,
    sse_trace: Vec<f64>,
}

impl ClusterAssignment {
    pub fn k(&self) -> usize {
        self.k
    }

    /// Cluster id per point (county index order).
    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn cluster_of(&self, point: usize) -> usize {
        self.assignment[point]
    }

    pub fn members(&self, cluster: usize) -> Vec<usize> {
        (0..self.assignment.len())
            .filter(|&i| self.assignment[i] == cluster)
            .collect()
    }

    pub fn centroids(&self) -> &[Vec<f64>] {
        &self.centroids
    }

    /// Within-cluster sum of squares after each assignment step.
    pub fn sse_trace(&self) -> &[f64] {
        &self.sse_trace
    }

    pub fn sse(&self) -> f64 {
        self.sse_trace.last().copied().unwrap_or(0.0)
    }

    pub fn iterations(&self) -> usize {
        self.sse_trace.len()
    }
}

/// Z-scores each column; constant columns become zero.
pub fn standardize(points: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let Some(width) = points.first().map(Vec::len) else {
        return Vec::new();
    };
    let n = points.len() as f64;
    let mut out = points.to_vec();
    for j in 0..width {
        let mean = points.iter().map(|p| p[j]).sum::<f64>() / n;
        let var = points.iter().map(|p| (p[j] - mean).powi(2)).sum::<f64>() / n;
        let sd = var.sqrt();
        for p in &mut out {
            p[j] = if sd > 0.0 { (p[j] - mean) / sd } else { 0.0 };
        }
    }
    out
}

/// Clusters the table's counties on their standardized static features.
pub fn kmeans_clusters(table: &ModelingTable, k: usize, seed: u64) -> Result<ClusterAssignment> {
    let points = (0..table.counties().len())
        .map(|c| {
            table.static_features(c).ok_or_else(|| {
                Error::InsufficientData(format!("county {} has no feature rows", table.counties()[c]))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    kmeans_points(&standardize(&points), k, seed)
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

fn nearest(p: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centroids.iter().enumerate() {
        let d = sq_dist(p, c);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

fn seed_plus_plus(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut chosen = vec![false; n];
    let first = rng.random_range(0..n);
    chosen[first] = true;
    let mut centroids = vec![points[first].clone()];
    let mut dist: Vec<f64> = points.iter().map(|p| sq_dist(p, &points[first])).collect();
    while centroids.len() < k {
        let total: f64 = dist.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut pick = None;
            for (i, &d) in dist.iter().enumerate() {
                if d > 0.0 {
                    pick = Some(i);
                    if u < d {
                        break;
                    }
                    u -= d;
                }
            }
            pick.expect("positive total has a positive entry")
        } else {
            let open: Vec<usize> = (0..n).filter(|&i| !chosen[i]).collect();
            open[rng.random_range(0..open.len())]
        };
        chosen[pick] = true;
        centroids.push(points[pick].clone());
        for (d, p) in dist.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &points[pick]));
        }
    }
    centroids
}

/// k-means++ seeding followed by Lloyd iterations until the assignment stops
/// changing or [`MAX_LLOYD_ITERATIONS`] is reached.
pub fn kmeans_points(points: &[Vec<f64>], k: usize, seed: u64) -> Result<ClusterAssignment> {
    let n = points.len();
    if k == 0 || k > n {
        return Err(Error::Domain(format!("k = {k} with {n} points")));
    }
    if k == n {
        return Ok(ClusterAssignment {
            k,
            assignment: (0..n).collect(),
            centroids: points.to_vec(),
            sse_trace: vec![0.0],
        });
    }
    let mut distinct = points.to_vec();
    distinct.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    distinct.dedup();
    if k > distinct.len() {
        return Err(Error::Domain(format!(
            "k = {k} exceeds the {} distinct feature vectors",
            distinct.len()
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = seed_plus_plus(points, k, &mut rng);
    let mut assignment = vec![usize::MAX; n];
    let mut sse_trace = Vec::new();
    for _ in 0..MAX_LLOYD_ITERATIONS {
        let mut next = Vec::with_capacity(n);
        let mut dists = Vec::with_capacity(n);
        for p in points {
            let (c, d) = nearest(p, &centroids);
            next.push(c);
            dists.push(d);
        }
        // an empty cluster takes the point farthest from its own centroid
        for cluster in 0..k {
            if next.contains(&cluster) {
                continue;
            }
            let far = (0..n)
                .filter(|&i| next.iter().filter(|&&c| c == next[i]).count() > 1)
                .max_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(b.cmp(&a)))
                .expect("k < n leaves a shared cluster");
            next[far] = cluster;
            dists[far] = 0.0;
            centroids[cluster] = points[far].clone();
        }
        let sse: f64 = dists.iter().sum();
        sse_trace.push(sse);
        let converged = next == assignment;
        assignment = next;
        if converged {
            break;
        }
        let mut sums = vec![vec![0.0; points[0].len()]; k];
        let mut counts = vec![0usize; k];
        for (p, &c) in points.iter().zip(&assignment) {
            counts[c] += 1;
            for (s, v) in sums[c].iter_mut().zip(p) {
                *s += v;
            }
        }
        for ((c, s), &m) in centroids.iter_mut().zip(sums).zip(&counts) {
            *c = s.into_iter().map(|v| v / m as f64).collect();
        }
    }
    Ok(ClusterAssignment {
        k,
        assignment,
        centroids,
        sse_trace,
    })
}
