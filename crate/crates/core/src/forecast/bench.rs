use std::fmt;
use std::io::Write;
use std::ops::RangeInclusive;
use std::str::FromStr;

use rayon::prelude::*;

use super::{metric_table, ErrorScale, EvalReport, Prediction, DEFAULT_HORIZON};
use crate::baseline::{ols_fixed_rate, ols_weights, OlsWeights};
use crate::panel::{AccessLog, ModelingTable, TableView};
use crate::tlgrf::{estimate_time_only, estimate_tlgrf, estimate_tlgrf_delta, ForestBank, ForestParams};
use crate::window::{
    kmeans_clusters, select_cluster_window, select_ctcv, select_tcv, ClusterAssignment, CvMetric, DeltaGrid,
};
use crate::{Day, Error, Result};

/// A rate estimator evaluated once per benchmark day.
pub trait DayEstimator: Sync {
    fn label(&self) -> String;

    /// Rates for the counties in `counties` from data up to `view.cutoff()`.
    fn estimate_day(&self, view: &TableView<'_>, t: Day, counties: &[usize]) -> Vec<(usize, Result<f64>)>;
}

/// Estimator selector as written on the command line: `ols:7`, `two-point`,
/// `tcv`, `ctcv`, `kmeans:4`, `tlgrf`, `tlgrf-delta:3`, `tlgrf-time-only`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MethodSpec {
    Ols(u32),
    Tcv,
    Ctcv,
    KMeans(usize),
    Tlgrf,
    TlgrfDelta(u32),
    TlgrfTimeOnly,
}

impl MethodSpec {
    pub fn needs_seed(&self) -> bool {
        matches!(
            self,
            MethodSpec::KMeans(_) | MethodSpec::Tlgrf | MethodSpec::TlgrfDelta(_) | MethodSpec::TlgrfTimeOnly
        )
    }
}

impl fmt::Display for MethodSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MethodSpec::Ols(d) => write!(f, "ols:{d}"),
            MethodSpec::Tcv => f.write_str("tcv"),
            MethodSpec::Ctcv => f.write_str("ctcv"),
            MethodSpec::KMeans(k) => write!(f, "kmeans:{k}"),
            MethodSpec::Tlgrf => f.write_str("tlgrf"),
            MethodSpec::TlgrfDelta(d) => write!(f, "tlgrf-delta:{d}"),
            MethodSpec::TlgrfTimeOnly => f.write_str("tlgrf-time-only"),
        }
    }
}

impl FromStr for MethodSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Domain(format!("unknown method {s:?}"));
        let (name, arg) = match s.trim().split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (s.trim(), None),
        };
        let num = |a: Option<&str>| -> Result<u64> {
            a.ok_or_else(bad)?.trim().parse().map_err(|_| bad())
        };
        let spec = match name {
            "two-point" if arg.is_none() => MethodSpec::Ols(2),
            "ols" => MethodSpec::Ols(num(arg)? as u32),
            "tcv" if arg.is_none() => MethodSpec::Tcv,
            "ctcv" if arg.is_none() => MethodSpec::Ctcv,
            "kmeans" => MethodSpec::KMeans(num(arg)? as usize),
            "tlgrf" if arg.is_none() => MethodSpec::Tlgrf,
            "tlgrf-delta" => MethodSpec::TlgrfDelta(num(arg)? as u32),
            "tlgrf-time-only" if arg.is_none() => MethodSpec::TlgrfTimeOnly,
            _ => return Err(bad()),
        };
        match spec {
            MethodSpec::Ols(d) | MethodSpec::TlgrfDelta(d) => {
                DeltaGrid::new(vec![d])?;
            }
            MethodSpec::KMeans(0) => return Err(Error::Domain("kmeans needs k >= 1".into())),
            _ => {}
        }
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkConfig {
    pub methods: Vec<MethodSpec>,
    /// First and last base day (inclusive).
    pub from: Day,
    pub to: Day,
    pub horizon: Day,
    pub grid: DeltaGrid,
    pub cv_metric: CvMetric,
    pub forest: ForestParams,
    /// Seeds k-means; the forest seed lives in `forest`.
    pub seed: u64,
    pub scale: ErrorScale,
}

impl BenchmarkConfig {
    pub fn new(methods: Vec<MethodSpec>, from: Day, to: Day, seed: u64) -> Self {
        BenchmarkConfig {
            methods,
            from,
            to,
            horizon: DEFAULT_HORIZON,
            grid: DeltaGrid::default(),
            cv_metric: CvMetric::default(),
            forest: ForestParams {
                seed,
                ..ForestParams::default()
            },
            seed,
            scale: ErrorScale::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateRow {
    pub method: String,
    pub county: usize,
    pub day: Day,
    pub rate: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AccessStats {
    pub reads: u64,
    pub future_reads: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkRun {
    pub report: EvalReport,
    pub estimates: Vec<EstimateRow>,
    pub access: AccessStats,
}

impl BenchmarkRun {
    pub fn write_estimates_csv<W: Write>(&self, out: W, table: &ModelingTable) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["method", "county", "day", "date", "rate"])?;
        for e in &self.estimates {
            w.write_record([
                e.method.clone(),
                table.counties()[e.county].clone(),
                e.day.to_string(),
                table.date_of(e.day).to_string(),
                e.rate.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("estimates", e))?;
        Ok(())
    }
}

/// Forward-chained benchmark of the configured methods over `from..=to`.
pub fn run_benchmark(table: &ModelingTable, config: &BenchmarkConfig) -> Result<BenchmarkRun> {
    let log = AccessLog::default();
    let shared = table.view_logged(config.to, &log);
    let estimators = config
        .methods
        .iter()
        .map(|m| build_estimator(*m, table, shared, config))
        .collect::<Result<Vec<_>>>()?;
    run_estimators(table, &estimators, config.from, config.to, config.horizon, config.scale, &log)
}

/// Scores `estimators` on every base day in `from..=to`.
///
/// On day `t` each estimator sees a view cut at `t` that reports into `log`;
/// truth at `t + horizon` is read by the harness alone. A county is
/// evaluable on `t` when it has `ln I` on `t` and on `t + horizon`; estimator
/// failures on evaluable cells are counted as skipped.
pub fn run_estimators(
    table: &ModelingTable,
    estimators: &[Box<dyn DayEstimator + '_>],
    from: Day,
    to: Day,
    horizon: Day,
    scale: ErrorScale,
    log: &AccessLog,
) -> Result<BenchmarkRun> {
    if from > to || from < 2 {
        return Err(Error::Domain(format!("day range {from}..={to}")));
    }
    if to + horizon > table.max_day() {
        return Err(Error::Domain(format!(
            "day {to} + {horizon} is past the last day {} of the table",
            table.max_day()
        )));
    }
    let days: Vec<Day> = (from..=to).collect();
    let per_day: Vec<(Vec<Prediction>, Vec<EstimateRow>, Vec<usize>)> = days
        .par_iter()
        .map(|&t| {
            let view = table.view_logged(t, log);
            let counties: Vec<usize> = (0..table.counties().len())
                .filter(|&c| view.ln(c, t).is_some() && table.ln_incident(c, t + horizon).is_some())
                .collect();
            let mut preds = Vec::new();
            let mut rows = Vec::new();
            let mut skipped = vec![0; estimators.len()];
            for (i, est) in estimators.iter().enumerate() {
                let label = est.label();
                for (c, rate) in est.estimate_day(&view, t, &counties) {
                    match rate {
                        Ok(r) if r.is_finite() => {
                            let ln_now = view.ln(c, t).expect("evaluable county");
                            preds.push(Prediction {
                                method: label.clone(),
                                county: c,
                                day: t,
                                predicted_ln: ln_now + f64::from(horizon) * r,
                            });
                            rows.push(EstimateRow {
                                method: label.clone(),
                                county: c,
                                day: t,
                                rate: r,
                            });
                        }
                        Ok(_) => skipped[i] += 1,
                        Err(e) => {
                            log::debug!("{label} county {c} day {t}: {e}");
                            skipped[i] += 1;
                        }
                    }
                }
            }
            (preds, rows, skipped)
        })
        .collect();

    let mut predictions = Vec::new();
    let mut estimates = Vec::new();
    let mut skipped = vec![0; estimators.len()];
    for (p, r, s) in per_day {
        predictions.extend(p);
        estimates.extend(r);
        skipped.iter_mut().zip(s).for_each(|(a, b)| *a += b);
    }
    // report methods in estimator order rather than first-scored order
    let labels: Vec<String> = estimators.iter().map(|e| e.label()).collect();
    let pos = |m: &str| labels.iter().position(|l| l == m);
    predictions.sort_by_key(|p| pos(&p.method));
    let mut report = metric_table(&predictions, |c, t| table.ln_incident(c, t + horizon), scale)?;
    for (label, n) in labels.iter().zip(skipped) {
        report.add_skipped(label, n);
    }
    estimates.sort_by(|a, b| {
        pos(&a.method)
            .cmp(&pos(&b.method))
            .then(a.day.cmp(&b.day))
            .then(a.county.cmp(&b.county))
    });
    Ok(BenchmarkRun {
        report,
        estimates,
        access: AccessStats {
            reads: log.reads(),
            future_reads: log.future_reads(),
        },
    })
}

/// Forward-chained rates of one method for every county with `ln I` on each
/// day of `days`; failed cells are left out.
pub fn forward_rates(
    table: &ModelingTable,
    method: MethodSpec,
    days: RangeInclusive<Day>,
    config: &BenchmarkConfig,
    log: &AccessLog,
) -> Result<Vec<EstimateRow>> {
    let (from, to) = days.into_inner();
    if from < 2 || from > to || to > table.max_day() {
        return Err(Error::Domain(format!("day range {from}..={to}")));
    }
    let est = build_estimator(method, table, table.view_logged(to, log), config)?;
    let label = est.label();
    let days: Vec<Day> = (from..=to).collect();
    let rows: Vec<Vec<EstimateRow>> = days
        .par_iter()
        .map(|&t| {
            let view = table.view_logged(t, log);
            let counties: Vec<usize> = (0..table.counties().len()).filter(|&c| view.ln(c, t).is_some()).collect();
            est.estimate_day(&view, t, &counties)
                .into_iter()
                .filter_map(|(county, r)| match r {
                    Ok(rate) if rate.is_finite() => Some(EstimateRow {
                        method: label.clone(),
                        county,
                        day: t,
                        rate,
                    }),
                    Ok(_) => None,
                    Err(e) => {
                        log::debug!("{label} county {county} day {t}: {e}");
                        None
                    }
                })
                .collect()
        })
        .collect();
    Ok(rows.into_iter().flatten().collect())
}

fn build_estimator<'a>(
    method: MethodSpec,
    table: &ModelingTable,
    shared: TableView<'a>,
    config: &BenchmarkConfig,
) -> Result<Box<dyn DayEstimator + 'a>> {
    let label = method.to_string();
    Ok(match method {
        MethodSpec::Ols(delta) => Box::new(Windowed {
            label,
            choose: WindowRule::Fixed(ols_weights(delta)?),
        }),
        MethodSpec::Tcv => Box::new(Windowed {
            label,
            choose: WindowRule::Tcv(config.grid.clone(), config.cv_metric),
        }),
        MethodSpec::Ctcv => Box::new(Windowed {
            label,
            choose: WindowRule::Ctcv(config.grid.clone(), config.cv_metric),
        }),
        MethodSpec::KMeans(k) => Box::new(Windowed {
            label,
            choose: WindowRule::Cluster(kmeans_clusters(table, k, config.seed)?, config.grid.clone(), config.cv_metric),
        }),
        MethodSpec::Tlgrf => Box::new(Forested {
            label,
            bank: ForestBank::new(shared, config.forest),
            delta: None,
        }),
        MethodSpec::TlgrfDelta(delta) => Box::new(Forested {
            label,
            bank: ForestBank::new(shared, config.forest),
            delta: Some(delta),
        }),
        MethodSpec::TlgrfTimeOnly => Box::new(TimeOnly {
            label,
            params: config.forest,
        }),
    })
}

enum WindowRule {
    Fixed(OlsWeights),
    Tcv(DeltaGrid, CvMetric),
    Ctcv(DeltaGrid, CvMetric),
    Cluster(ClusterAssignment, DeltaGrid, CvMetric),
}

/// Least-squares estimators whose window is fixed or chosen by cross-validation.
struct Windowed {
    label: String,
    choose: WindowRule,
}

impl DayEstimator for Windowed {
    fn label(&self) -> String {
        self.label.clone()
    }

    fn estimate_day(&self, view: &TableView<'_>, t: Day, counties: &[usize]) -> Vec<(usize, Result<f64>)> {
        let rate = |c: usize, delta: Result<u32>| delta.and_then(|d| ols_fixed_rate(view, c, t, d)).map(|e| e.rate);
        match &self.choose {
            WindowRule::Fixed(w) => counties
                .iter()
                .map(|&c| (c, crate::baseline::ols_rate_with(view, c, t, w).map(|e| e.rate)))
                .collect(),
            WindowRule::Tcv(grid, metric) => {
                let delta = select_tcv(view, t, grid, *metric).map(|c| c.delta);
                counties
                    .iter()
                    .map(|&c| (c, rate(c, delta.as_ref().copied().map_err(clone_err))))
                    .collect()
            }
            WindowRule::Ctcv(grid, metric) => counties
                .iter()
                .map(|&c| (c, rate(c, select_ctcv(view, t, c, grid, *metric).map(|ch| ch.delta))))
                .collect(),
            WindowRule::Cluster(clusters, grid, metric) => {
                let deltas: Vec<Result<u32>> = (0..clusters.k())
                    .map(|k| select_cluster_window(view, clusters, t, k, grid, *metric).map(|c| c.delta))
                    .collect();
                counties
                    .iter()
                    .map(|&c| {
                        let d = deltas[clusters.cluster_of(c)].as_ref().copied().map_err(clone_err);
                        (c, rate(c, d))
                    })
                    .collect()
            }
        }
    }
}

fn clone_err(e: &Error) -> Error {
    Error::Selection(e.to_string())
}

struct Forested<'a> {
    label: String,
    bank: ForestBank<'a>,
    delta: Option<u32>,
}

impl DayEstimator for Forested<'_> {
    fn label(&self) -> String {
        self.label.clone()
    }

    fn estimate_day(&self, view: &TableView<'_>, t: Day, counties: &[usize]) -> Vec<(usize, Result<f64>)> {
        match self.delta {
            Some(delta) => counties
                .iter()
                .map(|&c| (c, estimate_tlgrf_delta(&self.bank, c, t, delta).map(|e| e.rate)))
                .collect(),
            None => match self.bank.forest(t) {
                Ok(forest) => counties
                    .iter()
                    .map(|&c| (c, estimate_tlgrf(&forest, view, c, t).map(|e| e.rate)))
                    .collect(),
                Err(e) => counties.iter().map(|&c| (c, Err(clone_err(&e)))).collect(),
            },
        }
    }
}

struct TimeOnly {
    label: String,
    params: ForestParams,
}

impl DayEstimator for TimeOnly {
    fn label(&self) -> String {
        self.label.clone()
    }

    fn estimate_day(&self, view: &TableView<'_>, t: Day, counties: &[usize]) -> Vec<(usize, Result<f64>)> {
        counties
            .iter()
            .map(|&c| (c, estimate_time_only(view, c, t, &self.params).map(|e| e.rate)))
            .collect()
    }
}
