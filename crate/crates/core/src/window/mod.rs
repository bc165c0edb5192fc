//! Fitting-window selection by rolling time-series cross-validation.
//!
//! Fold `n` trains on days `n..=n+13` and validates on day `n+20`, i.e. a
//! seven-day-ahead forecast from the last training day. On day `t` there are
//! `t - 20` folds, the last one validating on `t` itself. The same selector
//! runs over all counties (tcv), one county (ctcv), or one k-means cluster.

mod kmeans;

use std::ops::RangeInclusive;
use std::str::FromStr;

pub use kmeans::{kmeans_clusters, kmeans_points, standardize, ClusterAssignment, MAX_LLOYD_ITERATIONS};

use crate::baseline::{ols_weights, OlsWeights, MAX_DELTA};
use crate::panel::TableView;
use crate::{Day, Error, Result};

pub const TRAIN_DAYS: Day = 14;
pub const VALIDATION_OFFSET: Day = 20;
pub const CV_HORIZON: Day = VALIDATION_OFFSET - (TRAIN_DAYS - 1);

// Errors within this distance of the minimum count as ties.
const TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fold {
    pub train: RangeInclusive<Day>,
    pub validation_day: Day,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldSchedule {
    folds: Vec<Fold>,
}

impl FoldSchedule {
    pub fn folds(&self) -> &[Fold] {
        &self.folds
    }

    pub fn len(&self) -> usize {
        self.folds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.folds.is_empty()
    }
}

pub fn fold_schedule(t: Day) -> Result<FoldSchedule> {
    if t <= VALIDATION_OFFSET {
        return Err(Error::InsufficientHistory {
            day: t,
            needed: VALIDATION_OFFSET + 1,
        });
    }
    let folds = (1..=t - VALIDATION_OFFSET)
        .map(|n| Fold {
            train: n..=n + TRAIN_DAYS - 1,
            validation_day: n + VALIDATION_OFFSET,
        })
        .collect();
    Ok(FoldSchedule { folds })
}

/// Candidate fitting windows, sorted ascending, each in `2..=14`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeltaGrid(Vec<u32>);

impl DeltaGrid {
    pub fn new(mut deltas: Vec<u32>) -> Result<Self> {
        deltas.sort_unstable();
        deltas.dedup();
        if deltas.is_empty() {
            return Err(Error::Domain("empty window grid".into()));
        }
        if let Some(bad) = deltas.iter().find(|&&d| !(2..=MAX_DELTA).contains(&d)) {
            return Err(Error::Domain(format!("window {bad} outside 2..={MAX_DELTA}")));
        }
        Ok(DeltaGrid(deltas))
    }

    pub fn deltas(&self) -> &[u32] {
        &self.0
    }
}

impl Default for DeltaGrid {
    fn default() -> Self {
        DeltaGrid((2..=MAX_DELTA).collect())
    }
}

impl FromStr for DeltaGrid {
    type Err = Error;

    /// Accepts `lo..hi` (inclusive) or a comma-separated list.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Domain(format!("invalid window grid {s:?}"));
        let parse = |v: &str| v.trim().parse::<u32>().map_err(|_| bad());
        if let Some((lo, hi)) = s.split_once("..") {
            let hi = hi.trim_start_matches('=');
            return DeltaGrid::new((parse(lo)?..=parse(hi)?).collect());
        }
        DeltaGrid::new(s.split(',').map(parse).collect::<Result<_>>()?)
    }
}

/// Validation error used inside cross-validation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum CvMetric {
    /// `|ln Î - ln I|`.
    #[default]
    LnAbs,
    /// `|Î - I|` on the case-count scale.
    CountAbs,
}

impl CvMetric {
    fn error(self, predicted_ln: f64, actual_ln: f64) -> f64 {
        match self {
            CvMetric::LnAbs => (predicted_ln - actual_ln).abs(),
            CvMetric::CountAbs => (predicted_ln.exp() - actual_ln.exp()).abs(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WindowScope {
    National,
    County,
    Cluster,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowChoice {
    pub scope: WindowScope,
    pub day: Day,
    /// County index or cluster id; `None` for national choices.
    pub key: Option<usize>,
    pub delta: u32,
    /// Mean validation error per candidate, in grid order.
    pub cv_errors: Vec<(u32, f64)>,
}

pub fn select_tcv(
    view: &TableView<'_>,
    t: Day,
    grid: &DeltaGrid,
    metric: CvMetric,
) -> Result<WindowChoice> {
    let counties: Vec<usize> = (0..view.n_counties()).collect();
    let (delta, cv_errors) = select_for(view, t, &counties, grid, metric)?;
    Ok(WindowChoice {
        scope: WindowScope::National,
        day: t,
        key: None,
        delta,
        cv_errors,
    })
}

pub fn select_ctcv(
    view: &TableView<'_>,
    t: Day,
    county: usize,
    grid: &DeltaGrid,
    metric: CvMetric,
) -> Result<WindowChoice> {
    let (delta, cv_errors) = select_for(view, t, &[county], grid, metric)?;
    Ok(WindowChoice {
        scope: WindowScope::County,
        day: t,
        key: Some(county),
        delta,
        cv_errors,
    })
}

pub fn select_cluster_window(
    view: &TableView<'_>,
    clusters: &ClusterAssignment,
    t: Day,
    cluster_id: usize,
    grid: &DeltaGrid,
    metric: CvMetric,
) -> Result<WindowChoice> {
    if cluster_id >= clusters.k() {
        return Err(Error::Domain(format!("cluster {cluster_id} >= k = {}", clusters.k())));
    }
    let members = clusters.members(cluster_id);
    let (delta, cv_errors) = select_for(view, t, &members, grid, metric)?;
    Ok(WindowChoice {
        scope: WindowScope::Cluster,
        day: t,
        key: Some(cluster_id),
        delta,
        cv_errors,
    })
}

/// Mean-over-folds (of mean-over-counties) validation error for each
/// candidate, and the smallest candidate within tolerance of the minimum.
fn select_for(
    view: &TableView<'_>,
    t: Day,
    counties: &[usize],
    grid: &DeltaGrid,
    metric: CvMetric,
) -> Result<(u32, Vec<(u32, f64)>)> {
    let schedule = fold_schedule(t)?;
    let view = view.restrict(t);
    let weights: Vec<OlsWeights> = grid
        .deltas()
        .iter()
        .map(|&d| ols_weights(d))
        .collect::<Result<_>>()?;

    let mut totals = vec![0.0; weights.len()];
    let mut used_folds = 0usize;
    let mut fold_sums = vec![0.0; weights.len()];
    for fold in schedule.folds() {
        fold_sums.iter_mut().for_each(|s| *s = 0.0);
        let mut n = 0usize;
        for &county in counties {
            // a county enters a fold only with all training days and the validation day
            let Some(train) = fold
                .train
                .clone()
                .map(|d| view.ln(county, d))
                .collect::<Option<Vec<f64>>>()
            else {
                continue;
            };
            let Some(actual) = view.ln(county, fold.validation_day) else {
                continue;
            };
            let last = *train.last().expect("non-empty training window");
            for (sum, w) in fold_sums.iter_mut().zip(&weights) {
                let window = &train[train.len() - w.delta() as usize..];
                let predicted = last + f64::from(CV_HORIZON) * w.slope(window);
                *sum += metric.error(predicted, actual);
            }
            n += 1;
        }
        if n == 0 {
            continue;
        }
        used_folds += 1;
        for (total, sum) in totals.iter_mut().zip(&fold_sums) {
            *total += sum / n as f64;
        }
    }
    if used_folds == 0 {
        return Err(Error::Selection(format!(
            "day {t}: no county has complete data in any fold"
        )));
    }
    let errors: Vec<(u32, f64)> = grid
        .deltas()
        .iter()
        .zip(&totals)
        .map(|(&d, total)| (d, total / used_folds as f64))
        .collect();
    let best = errors.iter().map(|e| e.1).fold(f64::INFINITY, f64::min);
    let cutoff = best + TIE_TOLERANCE * best.abs().max(1.0);
    let delta = errors
        .iter()
        .find(|(_, e)| *e <= cutoff)
        .map(|e| e.0)
        .expect("grid is non-empty");
    Ok((delta, errors))
}
