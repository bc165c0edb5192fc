//! Piecewise-exponential synthetic county panels with aligned rate breaks.
//!
//! Each county's latent daily new cases grow at a segment rate shared by all
//! counties plus a county offset. Every break day is announced by a policy
//! column that all counties enact on that day. Daily counts carry
//! log-normal noise and are accumulated into the cumulative-cases format the
//! loaders read, alongside a matching feature file and schema.

use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{Duration, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Deserialize;

use crate::panel::{build_modeling_table, read_features, CountyPanel, FeatureSchema, ModelingTable, PanelPipeline};
use crate::{Day, Error, Result};

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub counties: usize,
    pub days: Day,
    /// Days on which the shared rate changes, ascending.
    pub break_days: Vec<Day>,
    /// Shared daily growth rate of each segment; one more than `break_days`.
    pub segment_rates: Vec<f64>,
    /// County offsets are `rate_spread · u` with `u` uniform on `[-1, 1]`.
    pub rate_spread: f64,
    /// Standard deviation of the log-normal noise on daily counts.
    pub noise_sd: f64,
    /// Range of the log of initial daily new cases.
    pub log_size_range: (f64, f64),
    pub start: NaiveDate,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            counties: 20,
            days: 120,
            break_days: vec![60],
            segment_rates: vec![0.08, -0.08],
            rate_spread: 0.01,
            noise_sd: 0.3,
            log_size_range: (4.0, 6.0),
            start: NaiveDate::from_ymd_opt(2020, 3, 1).expect("valid date"),
            seed: 0,
        }
    }
}

impl SynthConfig {
    /// Breaks at `break_day` only, with the default rates.
    pub fn with_break(counties: usize, days: Day, break_day: Day, seed: u64) -> Self {
        SynthConfig {
            counties,
            days,
            break_days: vec![break_day],
            seed,
            ..Default::default()
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Domain(m));
        if self.counties == 0 || self.days < 2 {
            return bad(format!("{} counties over {} days", self.counties, self.days));
        }
        if self.segment_rates.len() != self.break_days.len() + 1 {
            return bad(format!(
                "{} segment rates for {} breaks",
                self.segment_rates.len(),
                self.break_days.len()
            ));
        }
        if self.break_days.windows(2).any(|w| w[0] >= w[1])
            || self.break_days.iter().any(|&b| b < 2 || b > self.days)
        {
            return bad("break days must be ascending and inside the panel".into());
        }
        if !(self.noise_sd >= 0.0 && self.rate_spread >= 0.0) || self.log_size_range.0 > self.log_size_range.1 {
            return bad("negative noise, spread or size range".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticPanel {
    pub config: SynthConfig,
    pub counties: Vec<String>,
    pub log_size: Vec<f64>,
    pub rate_index: Vec<f64>,
    /// `rates[c][d - 1]`: latent growth rate of daily cases into day `d`.
    pub rates: Vec<Vec<f64>>,
    /// `cumulative[c][d - 1]`.
    pub cumulative: Vec<Vec<u64>>,
}

pub fn generate(config: &SynthConfig) -> Result<SyntheticPanel> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let noise = Normal::new(0.0, config.noise_sd).map_err(|e| Error::Domain(e.to_string()))?;
    let (lo, hi) = config.log_size_range;
    let n_days = config.days as usize;

    let mut panel = SyntheticPanel {
        config: config.clone(),
        counties: (0..config.counties).map(|i| format!("{:05}", 8001 + 2 * i)).collect(),
        log_size: Vec::new(),
        rate_index: Vec::new(),
        rates: Vec::new(),
        cumulative: Vec::new(),
    };
    for _ in 0..config.counties {
        let log_size = if hi > lo { rng.random_range(lo..=hi) } else { lo };
        let index: f64 = rng.random_range(-1.0..=1.0);
        let offset = config.rate_spread * index;
        let mut level = log_size;
        let mut total = 0u64;
        let mut rates = Vec::with_capacity(n_days);
        let mut cumulative = Vec::with_capacity(n_days);
        for d in 1..=config.days {
            let segment = config.break_days.iter().filter(|&&b| d >= b).count();
            let r = config.segment_rates[segment] + offset;
            if d > 1 {
                level += r;
            }
            rates.push(r);
            let eps: f64 = noise.sample(&mut rng);
            total += (level + eps).exp().round() as u64;
            cumulative.push(total);
        }
        panel.log_size.push(log_size);
        panel.rate_index.push(index);
        panel.rates.push(rates);
        panel.cumulative.push(cumulative);
    }
    Ok(panel)
}

impl SyntheticPanel {
    pub fn date_of(&self, day: Day) -> NaiveDate {
        self.config.start + Duration::days(i64::from(day) - 1)
    }

    fn policy_names(&self) -> Vec<String> {
        (1..=self.config.break_days.len()).map(|i| format!("policy_{i}")).collect()
    }

    /// `date,county,cases`, county-major.
    pub fn write_cases<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["date", "county", "cases"])?;
        for (county, cum) in self.counties.iter().zip(&self.cumulative) {
            for (d, c) in cum.iter().enumerate() {
                w.write_record([self.date_of(d as Day + 1).to_string(), county.clone(), c.to_string()])?;
            }
        }
        w.flush().map_err(|e| Error::io("cases", e))?;
        Ok(())
    }

    /// `county,log_size,rate_index,policy_1,...` with policy enactment dates.
    pub fn write_features<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["county".to_string(), "log_size".into(), "rate_index".into()];
        header.extend(self.policy_names());
        w.write_record(&header)?;
        for (i, county) in self.counties.iter().enumerate() {
            let mut rec = vec![county.clone(), self.log_size[i].to_string(), self.rate_index[i].to_string()];
            rec.extend(self.config.break_days.iter().map(|&b| self.date_of(b).to_string()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("features", e))?;
        Ok(())
    }

    pub fn schema_toml(&self) -> String {
        let mut s = String::new();
        for name in ["log_size", "rate_index"] {
            s.push_str(&format!("[[column]]\nname = \"{name}\"\nkind = \"static\"\n\n"));
        }
        for name in self.policy_names() {
            s.push_str(&format!("[[column]]\nname = \"{name}\"\nkind = \"policy-date\"\n\n"));
        }
        s
    }

    /// Writes `cases.csv`, `features.csv` and `schema.toml` into `dir`.
    pub fn write_to_dir(&self, dir: &Path) -> Result<[PathBuf; 3]> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let paths = [dir.join("cases.csv"), dir.join("features.csv"), dir.join("schema.toml")];
        let create = |p: &Path| std::fs::File::create(p).map_err(|e| Error::io(p, e));
        self.write_cases(std::io::BufWriter::new(create(&paths[0])?))?;
        self.write_features(std::io::BufWriter::new(create(&paths[1])?))?;
        std::fs::write(&paths[2], self.schema_toml()).map_err(|e| Error::io(&paths[2], e))?;
        Ok(paths)
    }

    /// Raw cumulative panel, before any incidence processing.
    pub fn to_panel(&self) -> Result<CountyPanel> {
        CountyPanel::from_cumulative(
            self.config.start,
            self.counties
                .iter()
                .cloned()
                .zip(self.cumulative.iter().cloned())
                .map(|(c, cum)| (c, 1, cum))
                .collect(),
        )
    }

    /// The modeling table the loaders would build from the written files.
    pub fn modeling_table(&self, pipeline: &PanelPipeline) -> Result<ModelingTable> {
        let panel = pipeline.apply(&self.to_panel()?);
        let schema = FeatureSchema::parse(&self.schema_toml(), "synthetic schema")?;
        let mut buf = Vec::new();
        self.write_features(&mut buf)?;
        let features = read_features(vec![("synthetic features".to_string(), buf.as_slice())], &schema, &panel)?;
        build_modeling_table(&panel, &features)
    }
}
