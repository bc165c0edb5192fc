//! Two-point and fixed-window least-squares growth-rate estimators.
//!
//! A least-squares slope of `ln I` on day over a `delta`-day window equals a
//! convex combination of the `delta - 1` consecutive log-differences inside
//! the window. [`OlsWeights`] holds those combination weights; every
//! window-based estimator in the crate evaluates the slope through them.

use crate::panel::TableView;
use crate::{Day, Error, MethodTag, Result};

/// Largest fitting window accepted anywhere in the crate.
pub const MAX_DELTA: u32 = 14;

#[derive(Debug, Clone, PartialEq)]
pub struct RateEstimate {
    /// County index in the modeling table.
    pub county: usize,
    pub day: Day,
    pub rate: f64,
    pub method: MethodTag,
    pub window: Option<u32>,
}

/// `ln I_t - ln I_{t-1}`.
pub fn two_point_rate(ln_now: f64, ln_prev: f64) -> f64 {
    ln_now - ln_prev
}

/// Convex weights of a `delta`-day least-squares slope over the window's
/// log-differences, stored newest first: `weights()[k]` multiplies
/// `ln I_{t-k} - ln I_{t-k-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct OlsWeights {
    delta: u32,
    weights: Vec<f64>,
}

impl OlsWeights {
    pub fn delta(&self) -> u32 {
        self.delta
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `(t⁻, weight)` pairs for a window ending on day `t`, newest first.
    pub fn by_day(&self, t: Day) -> impl Iterator<Item = (Day, f64)> + '_ {
        self.weights
            .iter()
            .enumerate()
            .map(move |(k, &w)| (t - k as Day, w))
    }

    /// Slope from the `delta` log values of a window, oldest first.
    pub fn slope(&self, window: &[f64]) -> f64 {
        debug_assert_eq!(window.len(), self.delta as usize);
        let newest = window.len() - 1;
        self.weights
            .iter()
            .enumerate()
            .map(|(k, w)| w * (window[newest - k] - window[newest - k - 1]))
            .sum()
    }
}

/// Weights for a `delta`-day window; the numerator for offset `k` is
/// `Σ_{j=delta-1-k}^{delta-1} (j - (delta-1)/2)` and the denominator is
/// `Σ_j j (j - (delta-1)/2)`, both evaluated in integers at twice their value.
pub fn ols_weights(delta: u32) -> Result<OlsWeights> {
    if delta < 2 {
        return Err(Error::Domain(format!("fitting window {delta} < 2")));
    }
    let d = i64::from(delta);
    let centered = |j: i64| 2 * j - (d - 1);
    let denom: i64 = (0..d).map(|j| j * centered(j)).sum();
    let weights = (0..d - 1)
        .map(|k| {
            let num: i64 = (d - 1 - k..d).map(centered).sum();
            num as f64 / denom as f64
        })
        .collect();
    Ok(OlsWeights { delta, weights })
}

/// Fixed-window least-squares rate for `county` on day `t`.
///
/// Every day `t - delta + 1 ..= t` must have `ln I`; a window never shrinks
/// around a missing day.
pub fn ols_fixed_rate(view: &TableView<'_>, county: usize, t: Day, delta: u32) -> Result<RateEstimate> {
    let weights = ols_weights(delta)?;
    ols_rate_with(view, county, t, &weights)
}

pub(crate) fn ols_rate_with(
    view: &TableView<'_>,
    county: usize,
    t: Day,
    weights: &OlsWeights,
) -> Result<RateEstimate> {
    let delta = weights.delta();
    if t < delta {
        return Err(Error::InsufficientData(format!(
            "day {t} is too early for a {delta}-day window"
        )));
    }
    let window = (t + 1 - delta..=t)
        .map(|d| {
            view.ln(county, d).ok_or_else(|| {
                Error::InsufficientData(format!("county {county}: no ln I on day {d}"))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RateEstimate {
        county,
        day: t,
        rate: weights.slope(&window),
        method: if delta == 2 { MethodTag::TwoPoint } else { MethodTag::Ols },
        window: Some(delta),
    })
}
