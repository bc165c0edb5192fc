use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use chrono::NaiveDate;
use log::warn;

use crate::{Day, Error, Result};

/// One county's daily series over a gapless day range starting at `first_day`.
#[derive(Debug, Clone, PartialEq)]
pub struct CountySeries {
    pub first_day: Day,
    pub cumulative: Vec<u64>,
    /// Incident counts; `None` marks an entry removed by the minimum-count filter.
    pub incident: Vec<Option<f64>>,
}

impl CountySeries {
    pub fn last_day(&self) -> Day {
        self.first_day + self.cumulative.len() as Day - 1
    }

    fn offset(&self, day: Day) -> Option<usize> {
        if day < self.first_day {
            return None;
        }
        let off = (day - self.first_day) as usize;
        (off < self.cumulative.len()).then_some(off)
    }

    pub fn cumulative_at(&self, day: Day) -> Option<u64> {
        self.offset(day).map(|i| self.cumulative[i])
    }

    pub fn incident_at(&self, day: Day) -> Option<f64> {
        self.offset(day).and_then(|i| self.incident[i])
    }
}

/// Per-county cumulative and incident case counts on a shared day index.
#[derive(Debug, Clone, PartialEq)]
pub struct CountyPanel {
    epoch: NaiveDate,
    counties: Vec<String>,
    pub(crate) series: Vec<CountySeries>,
    clamped: usize,
    filled: usize,
}

impl CountyPanel {
    /// Builds a panel from per-county cumulative series. Incident counts start
    /// out equal to the cumulative counts until [`incident_series`](Self::incident_series) runs.
    pub fn from_cumulative(
        epoch: NaiveDate,
        series: Vec<(String, Day, Vec<u64>)>,
    ) -> Result<Self> {
        let mut sorted: BTreeMap<String, (Day, Vec<u64>)> = BTreeMap::new();
        for (county, first_day, cumulative) in series {
            if first_day == 0 {
                return Err(Error::Domain(format!("county {county}: day index starts at 1")));
            }
            if cumulative.is_empty() {
                return Err(Error::Domain(format!("county {county}: empty series")));
            }
            if sorted.insert(county.clone(), (first_day, cumulative)).is_some() {
                return Err(Error::Domain(format!("county {county} listed twice")));
            }
        }
        let mut clamped = 0;
        let mut counties = Vec::with_capacity(sorted.len());
        let mut out = Vec::with_capacity(sorted.len());
        for (county, (first_day, mut cumulative)) in sorted {
            clamped += clamp_running_max(&county, first_day, &mut cumulative);
            let incident = cumulative.iter().map(|&c| Some(c as f64)).collect();
            counties.push(county);
            out.push(CountySeries {
                first_day,
                cumulative,
                incident,
            });
        }
        Ok(CountyPanel {
            epoch,
            counties,
            series: out,
            clamped,
            filled: 0,
        })
    }

    pub fn epoch(&self) -> NaiveDate {
        self.epoch
    }

    pub fn counties(&self) -> &[String] {
        &self.counties
    }

    pub fn series(&self) -> &[CountySeries] {
        &self.series
    }

    pub fn county_index(&self, county: &str) -> Option<usize> {
        self.counties.binary_search_by(|c| c.as_str().cmp(county)).ok()
    }

    /// Number of cumulative values raised to the running maximum during ingestion.
    pub fn clamp_count(&self) -> usize {
        self.clamped
    }

    /// Number of interior days with no row, carried forward from the previous day.
    pub fn filled_count(&self) -> usize {
        self.filled
    }

    pub fn max_day(&self) -> Day {
        self.series.iter().map(CountySeries::last_day).max().unwrap_or(0)
    }

    pub fn date_of(&self, day: Day) -> NaiveDate {
        self.epoch + chrono::Days::new(u64::from(day.saturating_sub(1)))
    }

    pub fn day_of(&self, date: NaiveDate) -> Option<Day> {
        let diff = (date - self.epoch).num_days();
        (diff >= 0).then(|| diff as Day + 1)
    }

    pub fn incident(&self, county: usize, day: Day) -> Option<f64> {
        self.series.get(county).and_then(|s| s.incident_at(day))
    }

    /// Trailing-window incidence: `C_t - C_{t-window}`, or `C_t` while the
    /// window reaches before the county's first observation.
    pub fn incident_series(&self, window: Day) -> CountyPanel {
        let mut out = self.clone();
        for s in &mut out.series {
            let w = window as usize;
            s.incident = (0..s.cumulative.len())
                .map(|i| {
                    let now = s.cumulative[i];
                    let past = if i >= w { s.cumulative[i - w] } else { 0 };
                    Some((now - past) as f64)
                })
                .collect();
        }
        out
    }

    /// Trailing `k`-day mean of incidence; the first `k - 1` days average
    /// whatever is available.
    pub fn smooth_moving_average(&self, k: usize) -> CountyPanel {
        let k = k.max(1);
        let mut out = self.clone();
        for s in &mut out.series {
            let raw = &s.incident;
            s.incident = (0..raw.len())
                .map(|i| {
                    let lo = (i + 1).saturating_sub(k);
                    let (sum, n) = raw[lo..=i]
                        .iter()
                        .flatten()
                        .fold((0.0, 0usize), |(a, n), v| (a + v, n + 1));
                    (n > 0).then(|| sum / n as f64)
                })
                .collect();
        }
        out
    }

    /// Marks incident entries strictly below `floor` as missing.
    pub fn apply_min_count_filter(&self, floor: f64) -> CountyPanel {
        let mut out = self.clone();
        let mut kept = 0usize;
        for s in &mut out.series {
            for v in &mut s.incident {
                match *v {
                    Some(x) if x >= floor => kept += 1,
                    _ => *v = None,
                }
            }
        }
        if kept == 0 {
            warn!("every incident entry is below the minimum count {floor}");
        }
        out
    }
}

fn clamp_running_max(county: &str, first_day: Day, cumulative: &mut [u64]) -> usize {
    let mut clamps = 0;
    let mut running = 0u64;
    for (i, c) in cumulative.iter_mut().enumerate() {
        if *c < running {
            warn!(
                "county {county} day {}: cumulative {} below previous maximum {running}; clamped",
                first_day + i as Day,
                *c
            );
            *c = running;
            clamps += 1;
        }
        running = *c;
    }
    clamps
}

/// Ingestion and smoothing settings applied between raw cumulative counts and
/// the modeling table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PanelPipeline {
    pub incidence_window: Day,
    pub smooth_window: usize,
    pub min_count: f64,
}

impl Default for PanelPipeline {
    fn default() -> Self {
        PanelPipeline {
            incidence_window: 22,
            smooth_window: 7,
            min_count: 20.0,
        }
    }
}

impl PanelPipeline {
    /// Incidence, then smoothing, then the minimum-count filter.
    pub fn apply(&self, panel: &CountyPanel) -> CountyPanel {
        panel
            .incident_series(self.incidence_window)
            .smooth_moving_average(self.smooth_window)
            .apply_min_count_filter(self.min_count)
    }
}

pub fn load_cumulative_cases(path: impl AsRef<Path>) -> Result<CountyPanel> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_cumulative_cases(file, &path.display().to_string())
}

/// Reads `date,county,cases` rows (`fips` is accepted for `county`,
/// `cumulative` for `cases`; other columns are ignored).
pub fn read_cumulative_cases<R: Read>(reader: R, source_name: &str) -> Result<CountyPanel> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let find = |names: &[&str]| {
        headers
            .iter()
            .position(|h| names.iter().any(|n| h.eq_ignore_ascii_case(n)))
    };
    let schema_err = |what: &str| Error::Schema {
        source_name: source_name.to_string(),
        message: format!("missing column {what}"),
    };
    let date_col = find(&["date"]).ok_or_else(|| schema_err("date"))?;
    let county_col = find(&["county", "fips"]).ok_or_else(|| schema_err("county"))?;
    let cases_col = find(&["cases", "cumulative"]).ok_or_else(|| schema_err("cases"))?;

    let mut rows: BTreeMap<String, BTreeMap<NaiveDate, u64>> = BTreeMap::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let row_err = |message: String| Error::Row {
            source_name: source_name.to_string(),
            line,
            message,
        };
        let date_raw = record.get(date_col).unwrap_or("");
        let date = NaiveDate::parse_from_str(date_raw, "%Y-%m-%d")
            .map_err(|e| row_err(format!("unparseable date {date_raw:?}: {e}")))?;
        let county = record.get(county_col).unwrap_or("");
        if county.is_empty() {
            return Err(row_err("empty county id".into()));
        }
        let cases_raw = record.get(cases_col).unwrap_or("");
        let cases = parse_count(cases_raw)
            .ok_or_else(|| row_err(format!("invalid cumulative count {cases_raw:?}")))?;
        if rows
            .entry(county.to_string())
            .or_default()
            .insert(date, cases)
            .is_some()
        {
            return Err(row_err(format!("duplicate row for county {county} on {date}")));
        }
    }
    let epoch = rows
        .values()
        .filter_map(|m| m.keys().next().copied())
        .min()
        .ok_or_else(|| Error::Schema {
            source_name: source_name.to_string(),
            message: "no data rows".into(),
        })?;

    let mut filled = 0;
    let series = rows
        .into_iter()
        .map(|(county, by_date)| {
            let day = |d: &NaiveDate| (*d - epoch).num_days() as Day + 1;
            let first = by_date.keys().next().map(day).unwrap_or(1);
            let last = by_date.keys().next_back().map(day).unwrap_or(first);
            let mut cumulative = vec![None; (last - first + 1) as usize];
            for (d, c) in &by_date {
                cumulative[(day(d) - first) as usize] = Some(*c);
            }
            let mut prev = 0;
            let cumulative = cumulative
                .into_iter()
                .map(|c| match c {
                    Some(v) => {
                        prev = v;
                        v
                    }
                    None => {
                        filled += 1;
                        prev
                    }
                })
                .collect();
            (county, first, cumulative)
        })
        .collect();
    let mut panel = CountyPanel::from_cumulative(epoch, series)?;
    if filled > 0 {
        warn!("{source_name}: {filled} interior day(s) without a row carried forward");
    }
    if panel.clamped > 0 {
        warn!("{source_name}: {} non-monotone cumulative value(s) clamped", panel.clamped);
    }
    panel.filled = filled;
    Ok(panel)
}

fn parse_count(raw: &str) -> Option<u64> {
    if let Ok(v) = raw.parse::<u64>() {
        return Some(v);
    }
    let f: f64 = raw.parse().ok()?;
    (f >= 0.0 && f.fract() == 0.0 && f < u64::MAX as f64).then_some(f as u64)
}
