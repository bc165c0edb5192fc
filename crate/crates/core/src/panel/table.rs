use std::io::Write;
use std::ops::RangeInclusive;
use std::sync::atomic::{AtomicU64, Ordering};

use chrono::NaiveDate;
use log::warn;

use super::{CountyPanel, FeatureFrame};
use crate::{Day, Error, Result};

/// Log-incidence and features for one county over a gapless day range.
#[derive(Debug, Clone, PartialEq)]
pub struct TableSeries {
    pub first_day: Day,
    pub ln_incident: Vec<Option<f64>>,
    /// Feature vector per day; present wherever `ln_incident` is.
    pub features: Vec<Option<Vec<f64>>>,
}

impl TableSeries {
    pub fn last_day(&self) -> Day {
        self.first_day + self.ln_incident.len() as Day - 1
    }

    fn offset(&self, day: Day) -> Option<usize> {
        let off = day.checked_sub(self.first_day)? as usize;
        (off < self.ln_incident.len()).then_some(off)
    }
}

/// One row of the modeling table.
#[derive(Debug, Clone, PartialEq)]
pub struct TableRow<'a> {
    pub county: usize,
    pub day: Day,
    pub ln_incident: f64,
    pub features: &'a [f64],
}

/// `ln I` joined with encoded features, indexed by (county, day).
///
/// County indices follow the source panel's (sorted) county order, including
/// counties that end up with no rows.
#[derive(Debug)]
pub struct ModelingTable {
    epoch: NaiveDate,
    counties: Vec<String>,
    feature_names: Vec<String>,
    static_mask: Vec<bool>,
    series: Vec<TableSeries>,
    unlogged: AccessLog,
}

impl Clone for ModelingTable {
    fn clone(&self) -> Self {
        ModelingTable {
            epoch: self.epoch,
            counties: self.counties.clone(),
            feature_names: self.feature_names.clone(),
            static_mask: self.static_mask.clone(),
            series: self.series.clone(),
            unlogged: AccessLog::default(),
        }
    }
}

impl ModelingTable {
    pub fn new(
        epoch: NaiveDate,
        counties: Vec<String>,
        feature_names: Vec<String>,
        static_mask: Vec<bool>,
        series: Vec<TableSeries>,
    ) -> Result<Self> {
        if counties.len() != series.len() {
            return Err(Error::Domain("one series per county required".into()));
        }
        if static_mask.len() != feature_names.len() {
            return Err(Error::Domain("static mask must match feature columns".into()));
        }
        for (name, s) in counties.iter().zip(&series) {
            if s.first_day == 0 || s.features.len() != s.ln_incident.len() {
                return Err(Error::Domain(format!("county {name}: malformed series")));
            }
            for (i, (ln, x)) in s.ln_incident.iter().zip(&s.features).enumerate() {
                if ln.is_some_and(|v| !v.is_finite()) {
                    return Err(Error::Domain(format!("county {name}: non-finite ln I")));
                }
                match x {
                    Some(x) if x.len() != feature_names.len() => {
                        return Err(Error::Domain(format!(
                            "county {name} day {}: feature width {} != {}",
                            s.first_day + i as Day,
                            x.len(),
                            feature_names.len()
                        )))
                    }
                    None if ln.is_some() => {
                        return Err(Error::FeatureGap(format!(
                            "county {name} day {}",
                            s.first_day + i as Day
                        )))
                    }
                    _ => {}
                }
            }
        }
        let mut order: Vec<usize> = (0..counties.len()).collect();
        order.sort_by(|&a, &b| counties[a].cmp(&counties[b]));
        if order.windows(2).any(|w| counties[w[0]] == counties[w[1]]) {
            return Err(Error::Domain("duplicate county id".into()));
        }
        if order.iter().enumerate().any(|(i, &o)| i != o) {
            return Err(Error::Domain("counties must be sorted".into()));
        }
        Ok(ModelingTable {
            epoch,
            counties,
            feature_names,
            static_mask,
            series,
            unlogged: AccessLog::default(),
        })
    }

    /// Convenience constructor for featureless tables of log-incidence series
    /// that all start on day 1.
    pub fn from_ln_series(series: Vec<(String, Vec<Option<f64>>)>) -> Result<Self> {
        let mut series = series;
        series.sort_by(|a, b| a.0.cmp(&b.0));
        let epoch = NaiveDate::from_ymd_opt(2020, 1, 1).expect("valid date");
        let (counties, rows): (Vec<_>, Vec<_>) = series
            .into_iter()
            .map(|(c, ln)| {
                let features = ln.iter().map(|v| v.map(|_| Vec::new())).collect();
                (
                    c,
                    TableSeries {
                        first_day: 1,
                        ln_incident: ln,
                        features,
                    },
                )
            })
            .unzip();
        ModelingTable::new(epoch, counties, Vec::new(), Vec::new(), rows)
    }

    pub fn epoch(&self) -> NaiveDate {
        self.epoch
    }

    pub fn counties(&self) -> &[String] {
        &self.counties
    }

    pub fn county_index(&self, county: &str) -> Option<usize> {
        self.counties.binary_search_by(|c| c.as_str().cmp(county)).ok()
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn static_mask(&self) -> &[bool] {
        &self.static_mask
    }

    pub fn series(&self) -> &[TableSeries] {
        &self.series
    }

    pub fn date_of(&self, day: Day) -> NaiveDate {
        self.epoch + chrono::Days::new(u64::from(day.saturating_sub(1)))
    }

    pub fn max_day(&self) -> Day {
        self.series
            .iter()
            .filter(|s| !s.ln_incident.is_empty())
            .map(TableSeries::last_day)
            .max()
            .unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.series
            .iter()
            .map(|s| s.ln_incident.iter().flatten().count())
            .sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Rows in (county, day) order.
    pub fn rows(&self) -> impl Iterator<Item = TableRow<'_>> {
        self.series.iter().enumerate().flat_map(|(county, s)| {
            s.ln_incident
                .iter()
                .zip(&s.features)
                .enumerate()
                .filter_map(move |(i, (ln, x))| {
                    Some(TableRow {
                        county,
                        day: s.first_day + i as Day,
                        ln_incident: (*ln)?,
                        features: x.as_deref()?,
                    })
                })
        })
    }

    /// Unrestricted lookup, for scoring against realized values.
    pub fn ln_incident(&self, county: usize, day: Day) -> Option<f64> {
        let s = self.series.get(county)?;
        s.ln_incident[s.offset(day)?]
    }

    /// Static feature vector of a county, taken from its first featured day.
    pub fn static_features(&self, county: usize) -> Option<Vec<f64>> {
        let s = self.series.get(county)?;
        let x = s.features.iter().flatten().next()?;
        Some(
            x.iter()
                .zip(&self.static_mask)
                .filter(|(_, &m)| m)
                .map(|(v, _)| *v)
                .collect(),
        )
    }

    /// A view that hides every day after `cutoff`.
    pub fn view(&self, cutoff: Day) -> TableView<'_> {
        self.view_logged(cutoff, &self.unlogged)
    }

    /// A view over every day.
    pub fn full_view(&self) -> TableView<'_> {
        self.view(Day::MAX)
    }

    /// A view that records its reads, including refused future-day reads, in `log`.
    pub fn view_logged<'a>(&'a self, cutoff: Day, log: &'a AccessLog) -> TableView<'a> {
        TableView {
            table: self,
            cutoff,
            log,
        }
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["county".to_string(), "day".into(), "date".into(), "ln_incident".into()];
        header.extend(self.feature_names.iter().cloned());
        w.write_record(&header)?;
        for row in self.rows() {
            let mut rec = vec![
                self.counties[row.county].clone(),
                row.day.to_string(),
                self.date_of(row.day).to_string(),
                row.ln_incident.to_string(),
            ];
            rec.extend(row.features.iter().map(f64::to_string));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("modeling table", e))?;
        Ok(())
    }
}

/// Joins filtered incidence with features: one row per non-missing incident entry.
pub fn build_modeling_table(panel: &CountyPanel, features: &FeatureFrame) -> Result<ModelingTable> {
    if features.counties() != panel.counties() {
        return Err(Error::Domain("feature frame built for a different panel".into()));
    }
    let mut gaps = Vec::new();
    let mut series = Vec::with_capacity(panel.series().len());
    for (county, s) in panel.series().iter().enumerate() {
        let mut ln_incident = Vec::with_capacity(s.incident.len());
        let mut feats = Vec::with_capacity(s.incident.len());
        for (i, inc) in s.incident.iter().enumerate() {
            let day = s.first_day + i as Day;
            let x = features.get(county, day);
            match inc {
                Some(v) if *v > 0.0 => {
                    if x.is_none() {
                        gaps.push(format!(
                            "{} {} [{}]",
                            panel.counties()[county],
                            panel.date_of(day),
                            features.gaps(county, day).join(",")
                        ));
                    }
                    ln_incident.push(Some(v.ln()));
                }
                _ => ln_incident.push(None),
            }
            feats.push(x);
        }
        series.push(TableSeries {
            first_day: s.first_day,
            ln_incident,
            features: feats,
        });
    }
    if !gaps.is_empty() {
        let shown: Vec<_> = gaps.iter().take(10).cloned().collect();
        let more = gaps.len().saturating_sub(shown.len());
        let mut msg = shown.join("; ");
        if more > 0 {
            msg.push_str(&format!("; and {more} more"));
        }
        return Err(Error::FeatureGap(msg));
    }
    let feature_names = features.columns().iter().map(|c| c.name.clone()).collect();
    let table = ModelingTable::new(
        panel.epoch(),
        panel.counties().to_vec(),
        feature_names,
        features.static_mask(),
        series,
    )?;
    if table.is_empty() {
        warn!("modeling table is empty: no incident entry survived the minimum-count filter");
    }
    Ok(table)
}

/// Read counters shared by the views handed to estimators.
#[derive(Debug, Default)]
pub struct AccessLog {
    reads: AtomicU64,
    future_reads: AtomicU64,
}

impl AccessLog {
    pub fn reads(&self) -> u64 {
        self.reads.load(Ordering::Relaxed)
    }

    /// Reads of a day after the view's cutoff; each was refused.
    pub fn future_reads(&self) -> u64 {
        self.future_reads.load(Ordering::Relaxed)
    }

    /// Records one read of `day` by a consumer limited to `cutoff`; returns
    /// whether the read is allowed.
    pub fn check(&self, day: Day, cutoff: Day) -> bool {
        self.reads.fetch_add(1, Ordering::Relaxed);
        if day > cutoff {
            self.future_reads.fetch_add(1, Ordering::Relaxed);
            false
        } else {
            true
        }
    }
}

/// Read-only window onto a [`ModelingTable`] that refuses days after `cutoff`.
#[derive(Debug, Clone, Copy)]
pub struct TableView<'a> {
    table: &'a ModelingTable,
    cutoff: Day,
    log: &'a AccessLog,
}

impl<'a> TableView<'a> {
    pub fn cutoff(&self) -> Day {
        self.cutoff
    }

    pub fn table(&self) -> &'a ModelingTable {
        self.table
    }

    pub fn n_counties(&self) -> usize {
        self.table.counties.len()
    }

    pub fn n_features(&self) -> usize {
        self.table.feature_names.len()
    }

    /// Narrows the cutoff; never widens it.
    pub fn restrict(&self, cutoff: Day) -> TableView<'a> {
        TableView {
            cutoff: cutoff.min(self.cutoff),
            ..*self
        }
    }

    pub fn ln(&self, county: usize, day: Day) -> Option<f64> {
        if !self.log.check(day, self.cutoff) {
            return None;
        }
        self.table.ln_incident(county, day)
    }

    pub fn features(&self, county: usize, day: Day) -> Option<&'a [f64]> {
        if !self.log.check(day, self.cutoff) {
            return None;
        }
        let s = self.table.series.get(county)?;
        s.features[s.offset(day)?].as_deref()
    }

    /// The county's observed day range, clipped to the cutoff.
    pub fn days(&self, county: usize) -> Option<RangeInclusive<Day>> {
        let s = self.table.series.get(county)?;
        if s.ln_incident.is_empty() || s.first_day > self.cutoff {
            return None;
        }
        Some(s.first_day..=s.last_day().min(self.cutoff))
    }
}
