use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use super::{make_blocks, parity_pool, similarity_weights, target_features, train_forest, DataBlock, Forest, ForestParams};
use crate::baseline::{ols_weights, RateEstimate};
use crate::panel::TableView;
use crate::{Day, Error, MethodTag, Result};

/// Seed of the forest trained for target day `t`.
///
/// Every estimator that needs "the forest for day t" derives it the same way,
/// which is what makes TLGRF-δ at δ = 2 coincide with plain TLGRF.
pub fn day_seed(seed: u64, t: Day) -> u64 {
    // splitmix64 finalizer over (seed, t)
    let mut z = seed ^ u64::from(t).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Forest over the parity pool of `blocks` for target day `t`.
pub fn forest_for_day(blocks: &[DataBlock], t: Day, params: &ForestParams) -> Result<Forest> {
    let pool = parity_pool(blocks, t);
    train_forest(&pool, &params.with_seed(day_seed(params.seed, t)))
}

/// `Σ γ(X_{t,c}) · slope` over the forest's blocks.
pub fn estimate_tlgrf(forest: &Forest, view: &TableView<'_>, county: usize, t: Day) -> Result<RateEstimate> {
    let x = target_features(view, county, t)?;
    let weights = similarity_weights(forest, &x)?;
    let blocks = forest.blocks();
    Ok(RateEstimate {
        county,
        day: t,
        rate: weights.weighted_sum(|j| blocks[j].slope),
        method: MethodTag::Tlgrf,
        window: None,
    })
}

/// Trains the day-`t` forest on `view` (cut at `t`) and estimates one county.
pub fn tlgrf_rate(view: &TableView<'_>, county: usize, t: Day, params: &ForestParams) -> Result<RateEstimate> {
    let view = view.restrict(t);
    let forest = forest_for_day(&make_blocks(&view), t, params)?;
    estimate_tlgrf(&forest, &view, county, t)
}

/// Lazily trained per-day forests over one table view.
///
/// The forest for day `d` only ever sees the view cut at `d`, so a bank can be
/// shared by estimates on different days without widening what each reads.
pub struct ForestBank<'a> {
    view: TableView<'a>,
    params: ForestParams,
    forests: Mutex<HashMap<Day, Arc<Forest>>>,
}

impl<'a> ForestBank<'a> {
    pub fn new(view: TableView<'a>, params: ForestParams) -> Self {
        ForestBank {
            view,
            params,
            forests: Mutex::new(HashMap::new()),
        }
    }

    pub fn view(&self) -> &TableView<'a> {
        &self.view
    }

    pub fn params(&self) -> &ForestParams {
        &self.params
    }

    pub fn forest(&self, day: Day) -> Result<Arc<Forest>> {
        if day > self.view.cutoff() {
            return Err(Error::Domain(format!(
                "forest for day {day} requested past the view cutoff {}",
                self.view.cutoff()
            )));
        }
        if let Some(f) = self.forests.lock().expect("bank lock").get(&day) {
            return Ok(Arc::clone(f));
        }
        let forest = Arc::new(forest_for_day(&make_blocks(&self.view.restrict(day)), day, &self.params)?);
        // a concurrent trainer may have won; both forests are identical
        let mut map = self.forests.lock().expect("bank lock");
        Ok(Arc::clone(map.entry(day).or_insert(forest)))
    }

    pub fn cached_days(&self) -> Vec<Day> {
        let mut days: Vec<Day> = self.forests.lock().expect("bank lock").keys().copied().collect();
        days.sort_unstable();
        days
    }
}

/// Least-squares-weighted combination of TLGRF estimates on days
/// `t - delta + 2 ..= t`.
pub fn estimate_tlgrf_delta(bank: &ForestBank<'_>, county: usize, t: Day, delta: u32) -> Result<RateEstimate> {
    let weights = ols_weights(delta)?;
    if t < delta {
        return Err(Error::InsufficientHistory { day: t, needed: delta });
    }
    let mut rate = 0.0;
    for (day, w) in weights.by_day(t) {
        let inner = bank
            .forest(day)
            .and_then(|f| estimate_tlgrf(&f, &bank.view().restrict(day), county, day))
            .map_err(|e| e.at_day(day))?;
        rate += w * inner.rate;
    }
    Ok(RateEstimate {
        county,
        day: t,
        rate,
        method: MethodTag::TlgrfDelta,
        window: Some(delta),
    })
}

/// TLGRF pooling only the target county's own history.
pub fn estimate_time_only(view: &TableView<'_>, county: usize, t: Day, params: &ForestParams) -> Result<RateEstimate> {
    let view = view.restrict(t);
    let own: Vec<DataBlock> = make_blocks(&view).into_iter().filter(|b| b.county == county).collect();
    if parity_pool(&own, t).len() < 2 {
        return Err(Error::InsufficientData(format!(
            "county {county} has fewer than 2 same-parity blocks up to day {t}"
        )));
    }
    let forest = forest_for_day(&own, t, params)?;
    let est = estimate_tlgrf(&forest, &view, county, t)?;
    Ok(RateEstimate {
        method: MethodTag::TlgrfTimeOnly,
        ..est
    })
}
