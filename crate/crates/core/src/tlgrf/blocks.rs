use crate::baseline::two_point_rate;
use crate::panel::TableView;
use crate::{Day, Error, Result};

/// A normalized two-day training unit.
///
/// Over days `t' - 1` and `t'` the block's outcome is `y1 = ln I_{t'} -
/// ln I_{t'-1}` under treatment and `y0 = 0` without it, so the two-point
/// least-squares fit of the block has slope `y1` and intercept
/// `ln I_{t'-1}`. The feature vector is the day's encoded features followed by
/// that slope, the intercept and `t'`.
#[derive(Debug, Clone, PartialEq)]
pub struct DataBlock {
    pub county: usize,
    pub day: Day,
    pub y1: f64,
    pub y0: f64,
    pub slope: f64,
    pub intercept: f64,
    pub features: Vec<f64>,
}

/// Names of the block feature columns for a table with `names` features.
pub fn block_feature_names(names: &[String]) -> Vec<String> {
    let mut out = names.to_vec();
    out.extend(["block_slope", "block_intercept", "block_day"].map(String::from));
    out
}

fn augment(x: &[f64], slope: f64, intercept: f64, day: Day) -> Vec<f64> {
    let mut out = Vec::with_capacity(x.len() + 3);
    out.extend_from_slice(x);
    out.extend([slope, intercept, f64::from(day)]);
    out
}

/// One block per (county, t') whose days `t'` and `t' - 1` both have `ln I`,
/// in (county, day) order.
pub fn make_blocks(view: &TableView<'_>) -> Vec<DataBlock> {
    let mut blocks = Vec::new();
    for county in 0..view.n_counties() {
        let Some(days) = view.days(county) else { continue };
        let (start, end) = days.into_inner();
        let mut prev = view.ln(county, start);
        for day in start + 1..=end {
            let now = view.ln(county, day);
            if let (Some(p), Some(n)) = (prev, now) {
                if let Some(x) = view.features(county, day) {
                    let slope = two_point_rate(n, p);
                    blocks.push(DataBlock {
                        county,
                        day,
                        y1: slope,
                        y0: 0.0,
                        slope,
                        intercept: p,
                        features: augment(x, slope, p, day),
                    });
                }
            }
            prev = now;
        }
    }
    blocks
}

/// Blocks with `t' <= t` and `t' ≡ t (mod 2)`.
pub fn parity_pool(blocks: &[DataBlock], t: Day) -> Vec<DataBlock> {
    blocks
        .iter()
        .filter(|b| b.day <= t && b.day % 2 == t % 2)
        .cloned()
        .collect()
}

/// Feature vector of the target block at `(county, t)`, laid out like
/// [`DataBlock::features`].
pub fn target_features(view: &TableView<'_>, county: usize, t: Day) -> Result<Vec<f64>> {
    let missing = |what: &str| Error::InsufficientData(format!("county {county} day {t}: no {what}"));
    let now = view.ln(county, t).ok_or_else(|| missing("ln I"))?;
    let prev = t
        .checked_sub(1)
        .and_then(|d| view.ln(county, d))
        .ok_or_else(|| missing("ln I on the previous day"))?;
    let x = view.features(county, t).ok_or_else(|| missing("features"))?;
    Ok(augment(x, two_point_rate(now, prev), prev, t))
}
