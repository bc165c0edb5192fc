//! Seven-day-ahead forecasts, their error metrics and the forward-chained
//! benchmark harness.

mod bench;
pub mod synth;

use std::collections::BTreeMap;
use std::io::Write;

use serde::Deserialize;

pub use bench::{
    forward_rates, run_benchmark, run_estimators, AccessStats, BenchmarkConfig, BenchmarkRun, DayEstimator, EstimateRow, MethodSpec,
};

use crate::stats::median;
use crate::{Day, Error, Result};

pub const DEFAULT_HORIZON: Day = 7;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Forecast {
    pub county: usize,
    pub base_day: Day,
    pub horizon: Day,
    pub predicted_incident: f64,
}

impl Forecast {
    pub fn new(county: usize, base_day: Day, ln_now: f64, rate: f64, horizon: Day) -> Self {
        Forecast {
            county,
            base_day,
            horizon,
            predicted_incident: forecast(ln_now, rate, horizon),
        }
    }
}

/// `exp(ln_now + h · rate)`.
pub fn forecast(ln_now: f64, rate: f64, h: Day) -> f64 {
    (ln_now + f64::from(h) * rate).exp()
}

/// Scale on which MAE and RMSE are computed. MAPE is always relative to
/// case counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ErrorScale {
    /// `|ln Î - ln I|`.
    #[default]
    Ln,
    /// `|Î - I|`.
    Count,
}

impl std::str::FromStr for ErrorScale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ln" => Ok(ErrorScale::Ln),
            "count" => Ok(ErrorScale::Count),
            _ => Err(Error::Domain(format!("unknown error scale {s:?}"))),
        }
    }
}

/// A method's forecast of `ln I_{day + h}` for one county.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub method: String,
    pub county: usize,
    pub day: Day,
    pub predicted_ln: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DayMetrics {
    pub method: String,
    pub day: Day,
    pub n: usize,
    pub mae: f64,
    pub rmse: f64,
    /// Mean absolute percentage error of the case-count forecast.
    pub mape: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodSummary {
    pub method: String,
    /// Days with at least one scored county.
    pub days: usize,
    pub cells: usize,
    /// Cells the method could not estimate or that lacked truth.
    pub skipped: usize,
    pub median_mae: f64,
    pub median_rmse: f64,
    pub median_mape: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub scale: ErrorScale,
    /// Per (method, day), methods in first-seen order and days ascending.
    pub rows: Vec<DayMetrics>,
    pub summary: Vec<MethodSummary>,
}

impl EvalReport {
    pub fn summary_for(&self, method: &str) -> Option<&MethodSummary> {
        self.summary.iter().find(|s| s.method == method)
    }

    pub fn rows_for<'a>(&'a self, method: &'a str) -> impl Iterator<Item = &'a DayMetrics> + 'a {
        self.rows.iter().filter(move |r| r.method == method)
    }

    pub(crate) fn add_skipped(&mut self, method: &str, n: usize) {
        if let Some(s) = self.summary.iter_mut().find(|s| s.method == method) {
            s.skipped += n;
        }
    }

    /// `method,day,n,mae,rmse,mape`; `date_of` labels days when given.
    pub fn write_rows_csv<W: Write>(&self, out: W, date_of: Option<&dyn Fn(Day) -> String>) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["method", "day"];
        if date_of.is_some() {
            header.push("date");
        }
        header.extend(["n", "mae", "rmse", "mape"]);
        w.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![r.method.clone(), r.day.to_string()];
            if let Some(f) = date_of {
                rec.push(f(r.day));
            }
            rec.extend([r.n.to_string(), r.mae.to_string(), r.rmse.to_string(), r.mape.to_string()]);
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("report", e))?;
        Ok(())
    }

    pub fn write_summary_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["method", "days", "cells", "skipped", "median_mae", "median_rmse", "median_mape"])?;
        for s in &self.summary {
            w.write_record([
                s.method.clone(),
                s.days.to_string(),
                s.cells.to_string(),
                s.skipped.to_string(),
                s.median_mae.to_string(),
                s.median_rmse.to_string(),
                s.median_mape.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("summary", e))?;
        Ok(())
    }
}

/// Scores predictions against `truth(county, day)`, the realized `ln I` at the
/// forecast target of base day `day`. Day metrics are means over counties;
/// summaries are medians over days.
pub fn metric_table(
    predictions: &[Prediction],
    truth: impl Fn(usize, Day) -> Option<f64>,
    scale: ErrorScale,
) -> Result<EvalReport> {
    let mut order: Vec<&str> = Vec::new();
    // method -> day -> signed errors on `scale`
    let mut groups: BTreeMap<&str, BTreeMap<Day, Vec<f64>>> = BTreeMap::new();
    let mut pct: BTreeMap<(&str, Day), Vec<f64>> = BTreeMap::new();
    let mut skipped: BTreeMap<&str, usize> = BTreeMap::new();
    for p in predictions {
        let m = p.method.as_str();
        if !order.contains(&m) {
            order.push(m);
        }
        let Some(actual) = truth(p.county, p.day) else {
            *skipped.entry(m).or_default() += 1;
            continue;
        };
        let err = match scale {
            ErrorScale::Ln => p.predicted_ln - actual,
            ErrorScale::Count => p.predicted_ln.exp() - actual.exp(),
        };
        groups.entry(m).or_default().entry(p.day).or_default().push(err);
        pct.entry((m, p.day))
            .or_default()
            .push(100.0 * ((p.predicted_ln - actual).exp() - 1.0).abs());
    }
    if groups.is_empty() {
        return Err(Error::Report("no prediction has a matching truth value".into()));
    }

    let mut rows = Vec::new();
    let mut summary = Vec::new();
    for m in order {
        let days = groups.remove(m).unwrap_or_default();
        let mut maes = Vec::new();
        let mut rmses = Vec::new();
        let mut mapes = Vec::new();
        let mut cells = 0;
        for (day, errs) in days {
            let n = errs.len();
            let nf = n as f64;
            let mae = errs.iter().map(|e| e.abs()).sum::<f64>() / nf;
            let rmse = (errs.iter().map(|e| e * e).sum::<f64>() / nf).sqrt();
            let mape = pct[&(m, day)].iter().sum::<f64>() / nf;
            maes.push(mae);
            rmses.push(rmse);
            mapes.push(mape);
            cells += n;
            rows.push(DayMetrics {
                method: m.to_string(),
                day,
                n,
                mae,
                rmse,
                mape,
            });
        }
        summary.push(MethodSummary {
            method: m.to_string(),
            days: maes.len(),
            cells,
            skipped: skipped.get(m).copied().unwrap_or(0),
            median_mae: median(&maes).unwrap_or(f64::NAN),
            median_rmse: median(&rmses).unwrap_or(f64::NAN),
            median_mape: median(&mapes).unwrap_or(f64::NAN),
        });
    }
    Ok(EvalReport { scale, rows, summary })
}
