//! Outbreak thresholds, doubling times and investigation allocation.
//!
//! Two uses of growth-rate estimates live here. Threshold detection flags a
//! `(county, day)` cell as an upcoming outbreak when its rate exceeds `r*`,
//! with `r*` tuned on a forward-chained validation range. Allocation ranks
//! counties on each decision point by projected new cases `r̂ · I` and is
//! scored against the counties whose incidence actually grew most.

use std::collections::BTreeSet;
use std::io::Read;
use std::ops::RangeInclusive;

use log::warn;
use serde::Deserialize;

use crate::panel::{AccessLog, ModelingTable, TableView};
use crate::{Day, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Doubling {
    /// `ln 2 / r`; negative values are halving times.
    Days(f64),
    /// Zero growth never doubles.
    Never,
}

pub fn doubling_time(rate: f64) -> Doubling {
    if rate == 0.0 {
        Doubling::Never
    } else {
        Doubling::Days(std::f64::consts::LN_2 / rate)
    }
}

/// Which F1 formula threshold tuning maximizes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum F1Variant {
    /// Harmonic mean of precision and recall.
    #[default]
    Standard,
    /// Harmonic mean of the true- and false-positive rates. Kept only to
    /// reproduce tuning runs that used this form; it rewards false positives.
    RateHarmonic,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

impl ConfusionMatrix {
    pub fn new(tp: u64, fp: u64, fn_: u64, tn: u64) -> Self {
        ConfusionMatrix { tp, fp, fn_, tn }
    }

    pub fn record(&mut self, predicted: bool, actual: bool) {
        match (predicted, actual) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, true) => self.fn_ += 1,
            (false, false) => self.tn += 1,
        }
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
        self.tn += other.tn;
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn precision(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fp)
    }

    /// Same as [`precision`](Self::precision).
    pub fn ppv(&self) -> Option<f64> {
        self.precision()
    }

    pub fn recall(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn tnr(&self) -> Option<f64> {
        ratio(self.tn, self.tn + self.fp)
    }

    pub fn fpr(&self) -> Option<f64> {
        ratio(self.fp, self.fp + self.tn)
    }

    /// `None` when the variant's denominators are all empty. The standard
    /// form is `2tp / (2tp + fp + fn)`, which is 0 when nothing is flagged.
    pub fn f1(&self, variant: F1Variant) -> Option<f64> {
        match variant {
            F1Variant::Standard => ratio(2 * self.tp, 2 * self.tp + self.fp + self.fn_),
            F1Variant::RateHarmonic => {
                let (tpr, fpr) = (self.recall()?, self.fpr()?);
                Some(if tpr + fpr > 0.0 { 2.0 * tpr * fpr / (tpr + fpr) } else { 0.0 })
            }
        }
    }
}

/// `tp / (tp + fp)`.
pub fn ppv(tp: u64, fp: u64) -> Option<f64> {
    ConfusionMatrix::new(tp, fp, 0, 0).ppv()
}

/// A rate estimate for one `(county, day)` cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellRate {
    pub county: usize,
    pub day: Day,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    /// `(county, day, flagged)` for every cell with a label.
    pub flags: Vec<(usize, Day, bool)>,
    pub matrix: ConfusionMatrix,
    pub missing_labels: usize,
}

/// Flags cells with `rate > threshold` and tallies them against `label`.
pub fn classify_outbreaks(
    estimates: &[CellRate],
    label: impl Fn(usize, Day) -> Option<bool>,
    threshold: f64,
) -> Classification {
    let mut out = Classification {
        flags: Vec::with_capacity(estimates.len()),
        matrix: ConfusionMatrix::default(),
        missing_labels: 0,
    };
    for e in estimates {
        let Some(actual) = label(e.county, e.day) else {
            out.missing_labels += 1;
            continue;
        };
        let flagged = e.rate > threshold;
        out.matrix.record(flagged, actual);
        out.flags.push((e.county, e.day, flagged));
    }
    out
}

/// Ground-truth outbreak on `(county, t)`: `ln I` grows by more than
/// `min_log_growth` over the next `lookahead` days.
pub fn growth_label(view: &TableView<'_>, county: usize, t: Day, lookahead: Day, min_log_growth: f64) -> Option<bool> {
    let now = view.ln(county, t)?;
    let later = view.ln(county, t + lookahead)?;
    Some(later - now > min_log_growth)
}

/// Train, validation and test ranges in time order. A cell belongs to the
/// range holding its label day `t + lookahead`, so no label is read from a
/// later range than the cell's own.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ForwardSplit {
    pub train: RangeInclusive<Day>,
    pub validation: RangeInclusive<Day>,
    pub test: RangeInclusive<Day>,
}

impl ForwardSplit {
    pub fn new(train: RangeInclusive<Day>, validation: RangeInclusive<Day>, test: RangeInclusive<Day>) -> Result<Self> {
        let ok = |r: &RangeInclusive<Day>| r.start() <= r.end();
        if !(ok(&train) && ok(&validation) && ok(&test))
            || train.end() >= validation.start()
            || validation.end() >= test.start()
        {
            return Err(Error::Domain(format!(
                "split ranges must be ordered and disjoint: {train:?}, {validation:?}, {test:?}"
            )));
        }
        Ok(ForwardSplit { train, validation, test })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionConfig {
    pub threshold: f64,
    pub lookahead: Day,
    pub split: ForwardSplit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuningSpec {
    pub split: ForwardSplit,
    pub lookahead: Day,
    pub min_log_growth: f64,
    /// Candidate thresholds; ties go to the earliest.
    pub grid: Vec<f64>,
    pub variant: F1Variant,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuningResult {
    pub config: DetectionConfig,
    pub validation_f1: f64,
    /// F1 on validation for every candidate, in grid order.
    pub grid_scores: Vec<(f64, f64)>,
    pub train: ConfusionMatrix,
    pub validation: ConfusionMatrix,
    pub test: ConfusionMatrix,
}

/// Picks the grid threshold with the best validation F1, then scores it on
/// train and test.
///
/// Selection only reads the table through a view cut at the end of the
/// validation range and logged to `log`; test labels are read afterwards.
pub fn tune_threshold(
    table: &ModelingTable,
    estimates: &[CellRate],
    spec: &TuningSpec,
    log: &AccessLog,
) -> Result<TuningResult> {
    if spec.grid.is_empty() {
        return Err(Error::Tuning("empty threshold grid".into()));
    }
    let label_day = |e: &CellRate| e.day + spec.lookahead;
    let in_range = |r: &RangeInclusive<Day>| {
        let r = r.clone();
        move |e: &&CellRate| r.contains(&label_day(e))
    };
    let select = |r: &RangeInclusive<Day>| -> Vec<CellRate> { estimates.iter().filter(in_range(r)).copied().collect() };

    let guarded = table.view_logged(*spec.split.validation.end(), log);
    let guarded_label = |c: usize, t: Day| growth_label(&guarded, c, t, spec.lookahead, spec.min_log_growth);

    let validation = select(&spec.split.validation);
    let base = classify_outbreaks(&validation, &guarded_label, f64::INFINITY).matrix;
    if base.fn_ == 0 {
        return Err(Error::Tuning("validation range has no positive labels".into()));
    }
    let mut grid_scores = Vec::with_capacity(spec.grid.len());
    let mut best: Option<(f64, f64, ConfusionMatrix)> = None;
    for &r in &spec.grid {
        let m = classify_outbreaks(&validation, &guarded_label, r).matrix;
        let f1 = m.f1(spec.variant).unwrap_or(0.0);
        grid_scores.push((r, f1));
        if best.as_ref().is_none_or(|b| f1 > b.1) {
            best = Some((r, f1, m));
        }
    }
    let (threshold, validation_f1, validation_matrix) = best.expect("grid is non-empty");

    let full = table.full_view();
    let full_label = |c: usize, t: Day| growth_label(&full, c, t, spec.lookahead, spec.min_log_growth);
    let train = classify_outbreaks(&select(&spec.split.train), &guarded_label, threshold).matrix;
    let test = classify_outbreaks(&select(&spec.split.test), full_label, threshold).matrix;
    Ok(TuningResult {
        config: DetectionConfig {
            threshold,
            lookahead: spec.lookahead,
            split: spec.split.clone(),
        },
        validation_f1,
        grid_scores,
        train,
        validation: validation_matrix,
        test,
    })
}

/// A day on which `capacity` new investigations start.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecisionPoint {
    pub day: Day,
    pub capacity: usize,
    /// Counties already under investigation, by index.
    pub excluded: BTreeSet<usize>,
}

/// Reads `date,capacity[,excluded]` rows; `excluded` lists county ids
/// separated by `;`. Unknown excluded counties are warned about and dropped.
pub fn read_decision_points<R: Read>(reader: R, source_name: &str, table: &ModelingTable) -> Result<Vec<DecisionPoint>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).flexible(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let pos = |n: &str| headers.iter().position(|h| h.eq_ignore_ascii_case(n));
    let schema = |m: &str| Error::Schema {
        source_name: source_name.to_string(),
        message: m.to_string(),
    };
    let date_col = pos("date").ok_or_else(|| schema("missing column date"))?;
    let cap_col = pos("capacity").ok_or_else(|| schema("missing column capacity"))?;
    let excl_col = pos("excluded");
    let mut points = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let row_err = |message: String| Error::Row {
            source_name: source_name.to_string(),
            line,
            message,
        };
        let raw_date = record.get(date_col).unwrap_or("");
        let date = chrono::NaiveDate::parse_from_str(raw_date, "%Y-%m-%d")
            .map_err(|e| row_err(format!("unparseable date {raw_date:?}: {e}")))?;
        let offset = (date - table.epoch()).num_days() + 1;
        let day = Day::try_from(offset).map_err(|_| row_err(format!("{date} precedes the data")))?;
        let capacity: usize = record
            .get(cap_col)
            .unwrap_or("")
            .parse()
            .ok()
            .filter(|&c| c >= 1)
            .ok_or_else(|| row_err("capacity must be a positive integer".into()))?;
        let mut excluded = BTreeSet::new();
        for id in excl_col.and_then(|c| record.get(c)).unwrap_or("").split(';') {
            let id = id.trim();
            if id.is_empty() {
                continue;
            }
            match table.county_index(id) {
                Some(i) => {
                    excluded.insert(i);
                }
                None => warn!("{source_name}:{line}: unknown excluded county {id:?}"),
            }
        }
        points.push(DecisionPoint { day, capacity, excluded });
    }
    Ok(points)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Recommendation {
    pub day: Day,
    pub capacity: usize,
    /// Chosen county indices, best first.
    pub counties: Vec<usize>,
    pub scores: Vec<f64>,
    /// `capacity` minus the number of counties that could be scored.
    pub shortfall: usize,
}

/// Orders counties by descending score, then larger incidence, then id.
fn rank(mut cands: Vec<(usize, f64, f64)>, ids: &[String]) -> Vec<(usize, f64, f64)> {
    cands.sort_by(|a, b| {
        b.1.total_cmp(&a.1)
            .then(b.2.total_cmp(&a.2))
            .then_with(|| ids[a.0].cmp(&ids[b.0]))
    });
    cands
}

/// Top-`capacity` non-excluded counties by `rate · incident` on each point.
///
/// `rate(c, t)` and `incident(c, t)` return `None` for counties without an
/// estimate or count; such counties are not candidates.
pub fn allocate_investigations(
    rate: impl Fn(usize, Day) -> Option<f64>,
    incident: impl Fn(usize, Day) -> Option<f64>,
    counties: &[String],
    points: &[DecisionPoint],
) -> Vec<Recommendation> {
    points
        .iter()
        .map(|p| {
            let cands: Vec<(usize, f64, f64)> = (0..counties.len())
                .filter(|c| !p.excluded.contains(c))
                .filter_map(|c| {
                    let i = incident(c, p.day)?;
                    Some((c, rate(c, p.day)? * i, i))
                })
                .collect();
            let ranked = rank(cands, counties);
            let take = p.capacity.min(ranked.len());
            if take < p.capacity {
                warn!(
                    "day {}: {} candidates for {} investigations",
                    p.day,
                    ranked.len(),
                    p.capacity
                );
            }
            Recommendation {
                day: p.day,
                capacity: p.capacity,
                counties: ranked[..take].iter().map(|c| c.0).collect(),
                scores: ranked[..take].iter().map(|c| c.1).collect(),
                shortfall: p.capacity - take,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointOutcome {
    pub day: Day,
    /// Counties with the largest realized increase, best first.
    pub truth: Vec<usize>,
    pub matrix: ConfusionMatrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AllocationEval {
    pub matrix: ConfusionMatrix,
    pub points: Vec<PointOutcome>,
    /// Points whose truth window ran past the data.
    pub skipped_points: usize,
}

impl AllocationEval {
    pub fn ppv(&self) -> Option<f64> {
        self.matrix.ppv()
    }
}

/// Scores recommendations against the counties whose incidence rose most
/// over the following `lookahead` days.
///
/// Candidates are the non-excluded counties with incidence on both `t` and
/// `t + lookahead`. Each missed true county is paired with one wrong pick, so
/// `fn = fp` per point and `tn = candidates - picks - fn`.
pub fn evaluate_allocation(
    recommendations: &[Recommendation],
    incident: impl Fn(usize, Day) -> Option<f64>,
    counties: &[String],
    points: &[DecisionPoint],
    lookahead: Day,
) -> AllocationEval {
    let mut eval = AllocationEval {
        matrix: ConfusionMatrix::default(),
        points: Vec::new(),
        skipped_points: 0,
    };
    for (rec, p) in recommendations.iter().zip(points) {
        let cands: Vec<(usize, f64, f64)> = (0..counties.len())
            .filter(|c| !p.excluded.contains(c))
            .filter_map(|c| {
                let now = incident(c, p.day)?;
                let later = incident(c, p.day + lookahead)?;
                Some((c, later - now, now))
            })
            .collect();
        if cands.is_empty() {
            eval.skipped_points += 1;
            continue;
        }
        let n = cands.len() as u64;
        let truth: Vec<usize> = rank(cands, counties)
            .into_iter()
            .take(p.capacity)
            .map(|c| c.0)
            .collect();
        let picks = rec.counties.len() as u64;
        let tp = rec.counties.iter().filter(|c| truth.contains(c)).count() as u64;
        let fp = picks - tp;
        let m = ConfusionMatrix::new(tp, fp, fp, n.saturating_sub(picks + fp));
        eval.matrix.merge(&m);
        eval.points.push(PointOutcome {
            day: p.day,
            truth,
            matrix: m,
        });
    }
    eval
}

/// Per day, how many counties have projected new cases `rate · I` above
/// `threshold`.
pub fn absolute_threshold_counts(
    rate: impl Fn(usize, Day) -> Option<f64>,
    incident: impl Fn(usize, Day) -> Option<f64>,
    n_counties: usize,
    days: RangeInclusive<Day>,
    threshold: f64,
) -> Vec<(Day, usize)> {
    days.map(|t| {
        let n = (0..n_counties)
            .filter(|&c| matches!((rate(c, t), incident(c, t)), (Some(r), Some(i)) if r * i > threshold))
            .count();
        (t, n)
    })
    .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn doubling_examples() {
        assert_eq!(doubling_time(std::f64::consts::LN_2), Doubling::Days(1.0));
        let Doubling::Days(d) = doubling_time(0.05) else { panic!() };
        assert!((d - 13.8629).abs() < 1e-4);
        assert_eq!(doubling_time(0.0), Doubling::Never);
        assert!(matches!(doubling_time(-0.1), Doubling::Days(d) if d < 0.0));
    }

    #[test]
    fn four_cell_scenario() {
        let est = [
            CellRate { county: 0, day: 1, rate: 0.3 },
            CellRate { county: 1, day: 1, rate: 0.3 },
            CellRate { county: 2, day: 1, rate: 0.1 },
            CellRate { county: 3, day: 1, rate: 0.1 },
            CellRate { county: 4, day: 1, rate: 0.9 },
        ];
        let labels = [Some(true), Some(false), Some(true), Some(false), None];
        let c = classify_outbreaks(&est, |c, _| labels[c], 0.2);
        assert_eq!(c.matrix, ConfusionMatrix::new(1, 1, 1, 1));
        assert_eq!(c.missing_labels, 1);
    }

    #[test]
    fn f1_forms() {
        let m = ConfusionMatrix::new(2, 2, 0, 6);
        assert!((m.f1(F1Variant::Standard).unwrap() - 2.0 / 3.0).abs() < 1e-12);
        // tpr = 1, fpr = 0.25
        assert!((m.f1(F1Variant::RateHarmonic).unwrap() - 0.4).abs() < 1e-12);
        assert_eq!(ConfusionMatrix::new(0, 0, 3, 5).f1(F1Variant::Standard), Some(0.0));
        assert_eq!(ConfusionMatrix::default().f1(F1Variant::Standard), None);
    }

    #[test]
    fn ppv_arithmetic() {
        assert!((ppv(107, 75).unwrap() - 0.5879).abs() < 1e-4);
        assert_eq!(ppv(0, 0), None);
    }

    #[test]
    fn split_validation() {
        assert!(ForwardSplit::new(1..=10, 11..=20, 21..=30).is_ok());
        assert!(ForwardSplit::new(1..=10, 10..=20, 21..=30).is_err());
        assert!(ForwardSplit::new(1..=10, 21..=30, 11..=20).is_err());
    }

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("c{i}")).collect()
    }

    fn point(day: Day, capacity: usize) -> DecisionPoint {
        DecisionPoint {
            day,
            capacity,
            excluded: BTreeSet::new(),
        }
    }

    #[test]
    fn allocation_ranking() {
        let rates = [0.1, 0.1, 0.3];
        let inc = [100.0, 50.0, 10.0];
        let recs = allocate_investigations(|c, _| Some(rates[c]), |c, _| Some(inc[c]), &ids(3), &[point(5, 1)]);
        assert_eq!(recs[0].counties, vec![0]);

        let mut p = point(5, 5);
        p.excluded.insert(0);
        let recs = allocate_investigations(|c, _| Some(rates[c]), |c, _| Some(inc[c]), &ids(3), &[p]);
        assert_eq!(recs[0].counties, vec![1, 2]);
        assert_eq!(recs[0].shortfall, 3);
    }

    #[test]
    fn wrong_pick_among_four() {
        let inc_now = [10.0, 10.0, 10.0, 10.0];
        let inc_later = [50.0, 20.0, 20.0, 20.0];
        let incident = |c: usize, d: Day| Some(if d == 1 { inc_now[c] } else { inc_later[c] });
        let rec = Recommendation {
            day: 1,
            capacity: 1,
            counties: vec![2],
            scores: vec![1.0],
            shortfall: 0,
        };
        let e = evaluate_allocation(&[rec], incident, &ids(4), &[point(1, 1)], 7);
        assert_eq!(e.matrix, ConfusionMatrix::new(0, 1, 1, 2));
        assert_eq!(e.points[0].truth, vec![0]);
    }

    #[test]
    fn threshold_counts() {
        let rates = [0.1, 0.2, -0.1];
        let inc = [100.0, 100.0, 100.0];
        let counts = absolute_threshold_counts(|c, _| Some(rates[c]), |c, _| Some(inc[c]), 3, 1..=2, 10.0);
        assert_eq!(counts, vec![(1, 1), (2, 1)]);
        let none = absolute_threshold_counts(|c, _| Some(rates[c]), |c, _| Some(inc[c]), 3, 1..=1, f64::INFINITY);
        assert_eq!(none, vec![(1, 0)]);
    }

    fn grid_table() -> ModelingTable {
        // county c grows at 0.05 * c; labels on a 7-day lookahead
        let series = (0..6)
            .map(|c| {
                let s = (0..60).map(|d| Some(3.0 + 0.05 * c as f64 * d as f64)).collect();
                (format!("c{c}"), s)
            })
            .collect();
        ModelingTable::from_ln_series(series).unwrap()
    }

    #[test]
    fn tuning_picks_separating_threshold_without_peeking() {
        let table = grid_table();
        let estimates: Vec<CellRate> = (0..6)
            .flat_map(|c| (1..=50).map(move |d| CellRate { county: c, day: d, rate: 0.05 * c as f64 }))
            .collect();
        let spec = TuningSpec {
            split: ForwardSplit::new(8..=20, 21..=35, 36..=57).unwrap(),
            lookahead: 7,
            min_log_growth: 0.5,
            grid: vec![0.01, 0.08, 0.3],
            variant: F1Variant::Standard,
        };
        let log = AccessLog::default();
        let r = tune_threshold(&table, &estimates, &spec, &log).unwrap();
        assert_eq!(r.config.threshold, 0.08);
        assert_eq!(r.validation_f1, 1.0);
        assert_eq!(log.future_reads(), 0);
        assert!(log.reads() > 0);
        assert_eq!(r.test.f1(F1Variant::Standard), Some(1.0));

        let no_pos = TuningSpec { min_log_growth: 100.0, ..spec };
        assert!(matches!(tune_threshold(&table, &estimates, &no_pos, &log), Err(Error::Tuning(_))));
    }
}
