use proptest::prelude::*;

use tlgrf_core::baseline::{ols_fixed_rate, ols_weights};
use tlgrf_core::forecast::synth::{generate, SynthConfig};
use tlgrf_core::panel::{
    build_modeling_table, load_cumulative_cases, load_features, FeatureSchema, ModelingTable, PanelPipeline,
};
use tlgrf_core::tlgrf::{
    estimate_tlgrf, forest_for_day, make_blocks, parity_pool, similarity_weights, target_features, tlgrf_rate,
    ForestParams,
};

/// Up to five counties of random-walk `ln I`, all covering days 1..=len.
fn panels() -> impl Strategy<Value = ModelingTable> {
    (2usize..=5, 12usize..=24).prop_flat_map(|(n, len)| {
        proptest::collection::vec((0.0f64..6.0, proptest::collection::vec(-0.4f64..0.4, len)), n).prop_map(
            |walks| {
                let series = walks
                    .into_iter()
                    .enumerate()
                    .map(|(i, (start, steps))| {
                        let ln = steps
                            .iter()
                            .scan(start, |level, s| {
                                *level += s;
                                Some(Some(*level))
                            })
                            .collect();
                        (format!("{:05}", 1000 + i), ln)
                    })
                    .collect();
                ModelingTable::from_ln_series(series).unwrap()
            },
        )
    })
}

fn params(seed: u64) -> ForestParams {
    ForestParams {
        num_trees: 12,
        min_node_size: 2,
        seed,
        ..ForestParams::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn estimates_stay_inside_the_pooled_slopes(table in panels(), seed in 0u64..1000, pick in 0usize..100) {
        let view = table.full_view();
        let t = table.max_day();
        let county = pick % table.counties().len();
        let pool = parity_pool(&make_blocks(&view), t);
        let lo = pool.iter().map(|b| b.slope).fold(f64::INFINITY, f64::min);
        let hi = pool.iter().map(|b| b.slope).fold(f64::NEG_INFINITY, f64::max);
        let est = tlgrf_rate(&view, county, t, &params(seed)).unwrap();
        prop_assert!(est.rate >= lo - 1e-12 && est.rate <= hi + 1e-12, "{} outside [{lo}, {hi}]", est.rate);
    }

    #[test]
    fn weights_only_touch_same_parity_past_blocks(table in panels(), seed in 0u64..1000, back in 0u32..4) {
        let view = table.full_view();
        let t = table.max_day() - back;
        let forest = forest_for_day(&make_blocks(&view), t, &params(seed)).unwrap();
        let x = target_features(&view, 0, t).unwrap();
        let w = similarity_weights(&forest, &x).unwrap();
        prop_assert!((w.total() - 1.0).abs() <= 1e-9);
        for (&j, &g) in w.entries() {
            let key = &forest.blocks()[j];
            prop_assert!(g > 0.0);
            prop_assert!(key.day <= t && key.day % 2 == t % 2, "block day {} for target day {t}", key.day);
        }
    }

    #[test]
    fn a_fixed_seed_fixes_the_estimate(table in panels(), seed in 0u64..1000) {
        let view = table.full_view();
        let t = table.max_day();
        let a = forest_for_day(&make_blocks(&view), t, &params(seed)).unwrap();
        let b = forest_for_day(&make_blocks(&view), t, &params(seed)).unwrap();
        for c in 0..table.counties().len() {
            prop_assert_eq!(
                estimate_tlgrf(&a, &view, c, t).unwrap().rate,
                estimate_tlgrf(&b, &view, c, t).unwrap().rate
            );
        }
    }

    #[test]
    fn ols_recovers_linear_growth(level in -2.0f64..8.0, rate in -0.5f64..0.5, delta in 2u32..=14) {
        let ln = (0..20).map(|d| Some(level + rate * f64::from(d))).collect();
        let table = ModelingTable::from_ln_series(vec![("00001".into(), ln)]).unwrap();
        let est = ols_fixed_rate(&table.full_view(), 0, 20, delta).unwrap();
        prop_assert!((est.rate - rate).abs() <= 1e-12);
        let w = ols_weights(delta).unwrap();
        prop_assert!((w.weights().iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    }
}

#[test]
fn written_synthetic_files_load_back_to_the_same_table() {
    let synth = generate(&SynthConfig::with_break(6, 50, 25, 3)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let [cases, features, schema] = synth.write_to_dir(dir.path()).unwrap();

    let pipeline = PanelPipeline::default();
    let panel = pipeline.apply(&load_cumulative_cases(&cases).unwrap());
    let schema = FeatureSchema::load(&schema).unwrap();
    let frame = load_features(&[features], &schema, &panel).unwrap();
    let loaded = build_modeling_table(&panel, &frame).unwrap();
    let direct = synth.modeling_table(&pipeline).unwrap();

    assert_eq!(loaded.counties(), direct.counties());
    assert_eq!(loaded.feature_names(), direct.feature_names());
    assert_eq!(loaded.series(), direct.series());
}
