use std::collections::BTreeMap;
use std::io::Read;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use log::warn;
use serde::Deserialize;

use super::CountyPanel;
use crate::{Day, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ColumnKind {
    /// Time-invariant county attribute, broadcast across days.
    Static,
    /// Dated numeric series, forward-filled between reports and back-filled
    /// before the first one.
    TimeVarying,
    /// Date a policy took effect, encoded as days elapsed (1 on the date).
    PolicyDate,
    /// Dated share (e.g. variant proportion); filled like `time-varying`, then
    /// normalized to sum to one across all `variant-share` columns.
    VariantShare,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct FeatureColumn {
    pub name: String,
    pub kind: ColumnKind,
}

/// Column-kind map read from a TOML file:
///
/// ```toml
/// [[column]]
/// name = "population"
/// kind = "static"
///
/// [regions]          # optional, county id -> region id for region-keyed sources
/// "08001" = "8"
/// ```
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
pub struct FeatureSchema {
    #[serde(default, rename = "column")]
    pub columns: Vec<FeatureColumn>,
    #[serde(default)]
    pub regions: BTreeMap<String, String>,
}

impl FeatureSchema {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn parse(text: &str, source_name: &str) -> Result<Self> {
        let schema: FeatureSchema = toml::from_str(text).map_err(|e| Error::Schema {
            source_name: source_name.to_string(),
            message: e.to_string(),
        })?;
        let mut seen = std::collections::BTreeSet::new();
        for c in &schema.columns {
            if !seen.insert(c.name.as_str()) {
                return Err(Error::Schema {
                    source_name: source_name.to_string(),
                    message: format!("column {} declared twice", c.name),
                });
            }
        }
        Ok(schema)
    }

    fn index_of(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }
}

/// Dense per-(county, day) feature vectors over a panel's day ranges.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureFrame {
    columns: Vec<FeatureColumn>,
    counties: Vec<String>,
    first_day: Vec<Day>,
    n_days: Vec<usize>,
    // county -> row-major days x columns; NaN marks a gap
    values: Vec<Vec<f64>>,
    skipped_rows: usize,
}

impl FeatureFrame {
    /// A frame with no columns over the panel's domain.
    pub fn empty(panel: &CountyPanel) -> Self {
        Accumulator::new(&FeatureSchema::default(), panel).finish(panel)
    }

    pub fn columns(&self) -> &[FeatureColumn] {
        &self.columns
    }

    pub fn counties(&self) -> &[String] {
        &self.counties
    }

    pub fn static_mask(&self) -> Vec<bool> {
        self.columns
            .iter()
            .map(|c| c.kind == ColumnKind::Static)
            .collect()
    }

    /// Rows skipped because their county or region key was unknown.
    pub fn skipped_rows(&self) -> usize {
        self.skipped_rows
    }

    fn row(&self, county: usize, day: Day) -> Option<&[f64]> {
        let first = *self.first_day.get(county)?;
        if day < first || (day - first) as usize >= self.n_days[county] {
            return None;
        }
        let w = self.columns.len();
        let off = (day - first) as usize * w;
        Some(&self.values[county][off..off + w])
    }

    /// The complete feature vector, or `None` outside the domain or on any gap.
    pub fn get(&self, county: usize, day: Day) -> Option<Vec<f64>> {
        let row = self.row(county, day)?;
        row.iter().all(|v| !v.is_nan()).then(|| row.to_vec())
    }

    /// Names of the columns without a value at `(county, day)`.
    pub fn gaps(&self, county: usize, day: Day) -> Vec<&str> {
        match self.row(county, day) {
            None => self.columns.iter().map(|c| c.name.as_str()).collect(),
            Some(row) => row
                .iter()
                .zip(&self.columns)
                .filter(|(v, _)| v.is_nan())
                .map(|(_, c)| c.name.as_str())
                .collect(),
        }
    }
}

pub fn load_features(
    sources: &[PathBuf],
    schema: &FeatureSchema,
    panel: &CountyPanel,
) -> Result<FeatureFrame> {
    let mut readers = Vec::with_capacity(sources.len());
    for path in sources {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        readers.push((path.display().to_string(), file));
    }
    read_features(readers, schema, panel)
}

/// Reads feature sources keyed by `county` (or `fips`) or by `region`, with an
/// optional `date` column for dated series.
pub fn read_features<R: Read>(
    sources: Vec<(String, R)>,
    schema: &FeatureSchema,
    panel: &CountyPanel,
) -> Result<FeatureFrame> {
    let mut acc = Accumulator::new(schema, panel);
    for (name, reader) in sources {
        acc.read_source(&name, reader, schema, panel)?;
    }
    Ok(acc.finish(panel))
}

enum Observed {
    Scalar(Option<f64>),
    // None = the policy was never enacted
    Policy(Option<Option<i64>>),
    Dated(BTreeMap<i64, f64>),
}

struct Accumulator {
    columns: Vec<FeatureColumn>,
    // column -> county -> observations
    obs: Vec<Vec<Observed>>,
    skipped: usize,
}

impl Accumulator {
    fn new(schema: &FeatureSchema, panel: &CountyPanel) -> Self {
        let n = panel.counties().len();
        let obs = schema
            .columns
            .iter()
            .map(|c| {
                (0..n)
                    .map(|_| match c.kind {
                        ColumnKind::Static => Observed::Scalar(None),
                        ColumnKind::PolicyDate => Observed::Policy(None),
                        ColumnKind::TimeVarying | ColumnKind::VariantShare => {
                            Observed::Dated(BTreeMap::new())
                        }
                    })
                    .collect()
            })
            .collect();
        Accumulator {
            columns: schema.columns.clone(),
            obs,
            skipped: 0,
        }
    }

    fn read_source<R: Read>(
        &mut self,
        name: &str,
        reader: R,
        schema: &FeatureSchema,
        panel: &CountyPanel,
    ) -> Result<()> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        let schema_err = |message: String| Error::Schema {
            source_name: name.to_string(),
            message,
        };
        let pos = |n: &str| headers.iter().position(|h| h.eq_ignore_ascii_case(n));
        let (key_col, by_region) = match (pos("county").or_else(|| pos("fips")), pos("region")) {
            (Some(c), _) => (c, false),
            (None, Some(r)) => (r, true),
            (None, None) => return Err(schema_err("no county, fips or region key column".into())),
        };
        let date_col = pos("date");
        let mut value_cols = Vec::new();
        for (i, h) in headers.iter().enumerate() {
            if i == key_col || Some(i) == date_col {
                continue;
            }
            let col = schema
                .index_of(h)
                .ok_or_else(|| schema_err(format!("column {h} missing from schema")))?;
            let kind = schema.columns[col].kind;
            let dated_kind = matches!(kind, ColumnKind::TimeVarying | ColumnKind::VariantShare);
            if date_col.is_some() && !dated_kind {
                return Err(schema_err(format!("{kind:?} column {h} in a dated source")));
            }
            if date_col.is_none() && dated_kind {
                return Err(schema_err(format!("{kind:?} column {h} needs a date column")));
            }
            value_cols.push((i, col));
        }

        for record in rdr.records() {
            let record = record?;
            let line = record.position().map_or(0, |p| p.line());
            let row_err = |message: String| Error::Row {
                source_name: name.to_string(),
                line,
                message,
            };
            let key = record.get(key_col).unwrap_or("");
            let targets: Vec<usize> = if by_region {
                schema
                    .regions
                    .iter()
                    .filter(|(_, r)| r.as_str() == key)
                    .filter_map(|(c, _)| panel.county_index(c))
                    .collect()
            } else {
                panel.county_index(key).into_iter().collect()
            };
            if targets.is_empty() {
                warn!("{name}:{line}: unknown key {key:?}; row skipped");
                self.skipped += 1;
                continue;
            }
            let day = match date_col {
                Some(dc) => Some(parse_day(record.get(dc).unwrap_or(""), panel).map_err(row_err)?),
                None => None,
            };
            for &(ci, col) in &value_cols {
                let raw = record.get(ci).unwrap_or("");
                for &county in &targets {
                    match &mut self.obs[col][county] {
                        Observed::Scalar(slot) => {
                            if raw.is_empty() {
                                continue;
                            }
                            let v = parse_num(raw).map_err(&row_err)?;
                            *slot = Some(v);
                        }
                        Observed::Policy(slot) => {
                            let p = if raw.is_empty() {
                                None
                            } else {
                                Some(parse_day(raw, panel).map_err(&row_err)?)
                            };
                            *slot = Some(p);
                        }
                        Observed::Dated(series) => {
                            if raw.is_empty() {
                                continue;
                            }
                            let v = parse_num(raw).map_err(&row_err)?;
                            series.insert(day.expect("dated column checked above"), v);
                        }
                    }
                }
            }
        }
        Ok(())
    }

    fn finish(self, panel: &CountyPanel) -> FeatureFrame {
        let w = self.columns.len();
        let shares: Vec<usize> = (0..w)
            .filter(|&c| self.columns[c].kind == ColumnKind::VariantShare)
            .collect();
        let mut values = Vec::with_capacity(panel.counties().len());
        let mut first_day = Vec::new();
        let mut n_days = Vec::new();
        for (county, s) in panel.series().iter().enumerate() {
            let n = s.cumulative.len();
            let mut rows = vec![f64::NAN; n * w];
            for d in 0..n {
                let day = i64::from(s.first_day) + d as i64;
                let row = &mut rows[d * w..(d + 1) * w];
                for (col, cell) in row.iter_mut().enumerate() {
                    *cell = match &self.obs[col][county] {
                        Observed::Scalar(v) => v.unwrap_or(f64::NAN),
                        Observed::Policy(None) => f64::NAN,
                        Observed::Policy(Some(p)) => policy_days_elapsed(*p, day),
                        Observed::Dated(series) => series
                            .range(..=day)
                            .next_back()
                            .or_else(|| series.iter().next())
                            .map_or(f64::NAN, |(_, v)| *v),
                    };
                }
                if !shares.is_empty() {
                    let total: f64 = shares.iter().map(|&c| row[c]).sum();
                    if total > 0.0 {
                        for &c in &shares {
                            row[c] /= total;
                        }
                    }
                }
            }
            values.push(rows);
            first_day.push(s.first_day);
            n_days.push(n);
        }
        FeatureFrame {
            columns: self.columns,
            counties: panel.counties().to_vec(),
            first_day,
            n_days,
            values,
            skipped_rows: self.skipped,
        }
    }
}

/// Days elapsed since a policy took effect: 0 before `policy_day`, 1 on it,
/// then one more per day. `None` means never enacted.
pub fn policy_days_elapsed(policy_day: Option<i64>, day: i64) -> f64 {
    match policy_day {
        Some(p) if day >= p => (day - p + 1) as f64,
        _ => 0.0,
    }
}

fn parse_day(raw: &str, panel: &CountyPanel) -> std::result::Result<i64, String> {
    let date = NaiveDate::parse_from_str(raw, "%Y-%m-%d")
        .map_err(|e| format!("unparseable date {raw:?}: {e}"))?;
    Ok((date - panel.epoch()).num_days() + 1)
}

fn parse_num(raw: &str) -> std::result::Result<f64, String> {
    raw.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| format!("invalid number {raw:?}"))
}
