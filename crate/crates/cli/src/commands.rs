use std::collections::{BTreeSet, HashMap};
use std::fmt::Debug;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use chrono::NaiveDate;
use log::{info, warn};
use tlgrf_core::detection::{
    absolute_threshold_counts, allocate_investigations, classify_outbreaks, doubling_time, evaluate_allocation,
    growth_label, read_decision_points, tune_threshold, CellRate, Doubling, F1Variant,
    ForwardSplit, TuningSpec,
};
use tlgrf_core::forecast::synth::{generate, SynthConfig};
use tlgrf_core::forecast::{forward_rates, run_benchmark, BenchmarkConfig, ErrorScale, MethodSpec, DEFAULT_HORIZON};
use tlgrf_core::panel::{
    build_modeling_table, load_cumulative_cases, load_features, AccessLog, CountyPanel, FeatureFrame, FeatureSchema,
    ModelingTable, PanelPipeline,
};
use tlgrf_core::plot::{LineChart, Series};
use tlgrf_core::tlgrf::{
    block_feature_names, feature_importance, forest_diagnostics, forest_for_day, make_blocks, Forest, ForestParams,
};
use tlgrf_core::window::DeltaGrid;
use tlgrf_core::Day;

use crate::args::{Command, DataArgs, DayArgs, ForestArgs, MethodArgs, MethodName, Metric};
use crate::config::RunConfig;
use crate::usage;

pub fn run(command: Command, cfg: &RunConfig) -> Result<()> {
    match command {
        Command::Ingest { data, out } => {
            let loaded = load(&data, cfg)?;
            loaded.table.write_csv(output(out.as_deref(), cfg)?)?;
            Ok(())
        }
        Command::Estimate {
            data,
            method,
            forest,
            days,
            out,
        } => estimate(&data, &method, &forest, &days, out.as_deref(), cfg),
        Command::Benchmark {
            data,
            forest,
            methods,
            from,
            to,
            horizon,
            grid,
            scale,
            out,
            summary,
            estimates,
        } => {
            let loaded = load(&data, cfg)?;
            let table = &loaded.table;
            let methods = if !methods.is_empty() {
                methods
            } else if let Some(names) = &cfg.evaluation.methods {
                names
                    .iter()
                    .map(|m| m.parse::<MethodSpec>())
                    .collect::<Result<_, _>>()
                    .context("evaluation.methods")?
            } else {
                ["ols:2", "ols:7", "ols:14", "tcv", "ctcv"]
                    .iter()
                    .map(|m| m.parse().expect("valid default method"))
                    .collect()
            };
            info!("methods = {}", methods.iter().map(|m| m.to_string()).collect::<Vec<_>>().join(","));
            let seed = resolve_seed(&forest, cfg, methods.iter().any(MethodSpec::needs_seed));
            let horizon = pick("evaluation.horizon", horizon, cfg.evaluation.horizon, DEFAULT_HORIZON);
            if horizon == 0 || horizon >= table.max_day() {
                bail!("horizon {horizon} does not fit {} days of data", table.max_day());
            }
            let from = match pick_opt("evaluation.from", from, cfg.evaluation.from.clone()) {
                Some(s) => parse_day(&s, table)?,
                None => 2,
            };
            let to = match pick_opt("evaluation.to", to, cfg.evaluation.to.clone()) {
                Some(s) => parse_day(&s, table)?,
                None => table.max_day() - horizon,
            };
            let scale = match (scale, &cfg.evaluation.scale) {
                (Some(s), _) => s,
                (None, Some(s)) => s.parse().context("evaluation.scale")?,
                (None, None) => ErrorScale::default(),
            };
            info!("scale = {scale:?}");
            let mut config = bench_config(methods, from.max(2), to, seed, &forest, cfg, grid)?;
            config.horizon = horizon;
            config.scale = scale;

            let run = run_benchmark(table, &config)?;
            info!(
                "benchmark read {} table cells, {} beyond their cutoff",
                run.access.reads, run.access.future_reads
            );
            if run.access.future_reads > 0 {
                bail!("{} reads beyond the forecast origin", run.access.future_reads);
            }
            if let Some(path) = out {
                let date_of = |d: Day| table.date_of(d).to_string();
                run.report.write_rows_csv(output(Some(&path), cfg)?, Some(&date_of))?;
            }
            if let Some(path) = estimates {
                run.write_estimates_csv(output(Some(&path), cfg)?, table)?;
            }
            run.report.write_summary_csv(output(summary.as_deref(), cfg)?)?;
            Ok(())
        }
        Command::Detect {
            data,
            method,
            forest,
            threshold,
            lookahead,
            split,
            min_log_growth,
            grid,
            f1,
            out,
            grid_out,
        } => {
            let loaded = load(&data, cfg)?;
            let table = &loaded.table;
            let split = parse_split(&split, table)?;
            let spec = method_spec(&method, cfg);
            let seed = resolve_seed(&forest, cfg, spec.needs_seed());
            let first = split.train.start().saturating_sub(lookahead).max(2);
            let last = split
                .test
                .end()
                .checked_sub(lookahead)
                .filter(|&l| l >= first)
                .ok_or_else(|| anyhow!("test range ends before any cell has a {lookahead}-day label"))?;
            if *split.test.end() > table.max_day() {
                bail!("test range ends after day {}", table.max_day());
            }
            let config = bench_config(vec![spec], first, last, seed, &forest, cfg, None)?;
            let rows = forward_rates(table, spec, first..=last, &config, &AccessLog::default())?;
            let cells: Vec<CellRate> = rows
                .iter()
                .map(|r| CellRate {
                    county: r.county,
                    day: r.day,
                    rate: r.rate,
                })
                .collect();
            info!("{} rate estimates for days {first}..={last}", cells.len());
            let variant = F1Variant::from(f1);

            let mut results = Vec::new();
            if threshold.trim().eq_ignore_ascii_case("auto") {
                let tspec = TuningSpec {
                    split: split.clone(),
                    lookahead,
                    min_log_growth,
                    grid: parse_thresholds(&grid)?,
                    variant,
                };
                let log = AccessLog::default();
                let res = tune_threshold(table, &cells, &tspec, &log)?;
                info!(
                    "tuning read {} cells, {} past the validation end; threshold {} (validation F1 {})",
                    log.reads(),
                    log.future_reads(),
                    res.config.threshold,
                    res.validation_f1
                );
                if let Some(path) = grid_out {
                    let mut w = output(Some(&path), cfg)?;
                    writeln!(w, "threshold,validation_f1")?;
                    for (r, f) in &res.grid_scores {
                        writeln!(w, "{r},{f}")?;
                    }
                    w.flush()?;
                }
                let thr = res.config.threshold;
                results.push(("train", split.train.clone(), thr, res.train));
                results.push(("validation", split.validation.clone(), thr, res.validation));
                results.push(("test", split.test.clone(), thr, res.test));
            } else {
                let thr: f64 = threshold
                    .trim()
                    .parse()
                    .with_context(|| format!("threshold {threshold:?} is neither a number nor `auto`"))?;
                let full = table.full_view();
                let label = |c: usize, t: Day| growth_label(&full, c, t, lookahead, min_log_growth);
                for (name, range) in [
                    ("train", &split.train),
                    ("validation", &split.validation),
                    ("test", &split.test),
                ] {
                    let sel: Vec<CellRate> = cells
                        .iter()
                        .filter(|c| range.contains(&(c.day + lookahead)))
                        .copied()
                        .collect();
                    let m = classify_outbreaks(&sel, label, thr).matrix;
                    results.push((name, range.clone(), thr, m));
                }
            }

            let mut w = output(out.as_deref(), cfg)?;
            writeln!(w, "range,first_label_day,last_label_day,threshold,tp,fp,fn,tn,precision,recall,f1")?;
            for (name, range, thr, m) in results {
                writeln!(
                    w,
                    "{name},{},{},{thr},{},{},{},{},{},{},{}",
                    range.start(),
                    range.end(),
                    m.tp,
                    m.fp,
                    m.fn_,
                    m.tn,
                    opt(m.precision()),
                    opt(m.recall()),
                    opt(m.f1(variant)),
                )?;
            }
            w.flush()?;
            Ok(())
        }
        Command::Allocate {
            data,
            method,
            forest,
            points,
            lookahead,
            absolute_threshold,
            out,
        } => {
            let loaded = load(&data, cfg)?;
            let table = &loaded.table;
            let file = File::open(&points).with_context(|| format!("opening {}", points.display()))?;
            let points_list = read_decision_points(file, &points.display().to_string(), table)?;
            if points_list.is_empty() {
                bail!("{}: no decision points", points.display());
            }
            let spec = method_spec(&method, cfg);
            let seed = resolve_seed(&forest, cfg, spec.needs_seed());
            let days: BTreeSet<Day> = points_list.iter().map(|p| p.day).collect();
            let mut rates: HashMap<(usize, Day), f64> = HashMap::new();
            for &d in &days {
                if d < 2 || d > table.max_day() {
                    bail!("decision day {} ({}) is outside the data", d, table.date_of(d));
                }
                let config = bench_config(vec![spec], d, d, seed, &forest, cfg, None)?;
                for r in forward_rates(table, spec, d..=d, &config, &AccessLog::default())? {
                    rates.insert((r.county, r.day), r.rate);
                }
            }
            let rate = |c: usize, d: Day| rates.get(&(c, d)).copied();
            let incident = |c: usize, d: Day| loaded.panel.incident(c, d);
            let counties = table.counties();
            let recs = allocate_investigations(rate, incident, counties, &points_list);

            let mut w = output(out.as_deref(), cfg)?;
            writeln!(w, "date,day,rank,county,score,capacity")?;
            for rec in &recs {
                for (i, (c, s)) in rec.counties.iter().zip(&rec.scores).enumerate() {
                    writeln!(
                        w,
                        "{},{},{},{},{s},{}",
                        table.date_of(rec.day),
                        rec.day,
                        i + 1,
                        counties[*c],
                        rec.capacity
                    )?;
                }
            }
            w.flush()?;

            let eval = evaluate_allocation(&recs, incident, counties, &points_list, lookahead);
            let m = eval.matrix;
            eprintln!(
                "allocation over {} points ({} without {lookahead}-day outcome): tp={} fp={} fn={} tn={} ppv={}",
                eval.points.len(),
                eval.skipped_points,
                m.tp,
                m.fp,
                m.fn_,
                m.tn,
                opt(eval.ppv())
            );
            if let Some(thr) = absolute_threshold {
                for &d in &days {
                    for (t, n) in absolute_threshold_counts(rate, incident, counties.len(), d..=d, thr) {
                        eprintln!("{}: {n} counties project more than {thr} new cases", table.date_of(t));
                    }
                }
            }
            Ok(())
        }
        Command::Importance { data, forest, day, out } => {
            let loaded = load(&data, cfg)?;
            let (day, f) = day_forest(&loaded.table, &forest, day, cfg)?;
            let rep = feature_importance(&f);
            if rep.degenerate {
                warn!("no tree in the day-{day} forest splits; all importances are zero");
            }
            let names = block_feature_names(loaded.table.feature_names());
            let mut w = output(out.as_deref(), cfg)?;
            writeln!(w, "rank,feature,score,raw")?;
            for (rank, (i, score)) in rep.ranked().into_iter().enumerate() {
                writeln!(w, "{},{},{score},{}", rank + 1, names[i], rep.raw[i])?;
            }
            w.flush()?;
            Ok(())
        }
        Command::Diagnostics {
            data,
            forest,
            day,
            out,
            per_tree,
        } => {
            let loaded = load(&data, cfg)?;
            let (_, f) = day_forest(&loaded.table, &forest, day, cfg)?;
            let d = forest_diagnostics(&f);
            let mut w = output(out.as_deref(), cfg)?;
            writeln!(w, "statistic,value")?;
            writeln!(w, "trees,{}", f.trees().len())?;
            writeln!(w, "blocks,{}", f.blocks().len())?;
            writeln!(w, "mean_depth,{}", d.mean_depth)?;
            writeln!(w, "median_depth,{}", d.median_depth)?;
            writeln!(w, "leaves,{}", d.leaf_sizes.len())?;
            writeln!(w, "mean_leaf_size,{}", d.mean_leaf_size)?;
            writeln!(w, "median_leaf_size,{}", d.median_leaf_size)?;
            w.flush()?;
            if let Some(path) = per_tree {
                let mut w = output(Some(&path), cfg)?;
                writeln!(w, "tree,depth,leaves,estimation_blocks")?;
                for (i, t) in f.trees().iter().enumerate() {
                    let leaves = t.leaves();
                    let blocks: usize = leaves.iter().map(|l| l.1).sum();
                    writeln!(w, "{i},{},{},{blocks}", t.depth(), leaves.len())?;
                }
                w.flush()?;
            }
            Ok(())
        }
        Command::Plot {
            report,
            metric,
            out,
            data_out,
            title,
        } => plot(&report, metric, &out, data_out, title, cfg),
        Command::Synth {
            counties,
            days,
            break_days,
            rates,
            noise,
            spread,
            seed,
            out_dir,
        } => {
            let d = SynthConfig::default();
            let Some(seed) = pick_opt("seed", seed, cfg.seed) else {
                usage("synth needs --seed (or `seed` in the config)");
            };
            let sc = SynthConfig {
                counties: counties.unwrap_or(d.counties),
                days: days.unwrap_or(d.days),
                break_days: if break_days.is_empty() { d.break_days } else { break_days },
                segment_rates: if rates.is_empty() { d.segment_rates } else { rates },
                rate_spread: spread.unwrap_or(d.rate_spread),
                noise_sd: noise.unwrap_or(d.noise_sd),
                seed,
                ..d
            };
            info!("synthetic panel: {sc:?}");
            let panel = generate(&sc)?;
            let dir = cfg.output_path(&out_dir);
            let stdout = io::stdout();
            let mut w = stdout.lock();
            for p in panel.write_to_dir(&dir)? {
                writeln!(w, "{}", p.display())?;
            }
            Ok(())
        }
    }
}

fn estimate(
    data: &DataArgs,
    method: &MethodArgs,
    forest: &ForestArgs,
    days: &DayArgs,
    out: Option<&Path>,
    cfg: &RunConfig,
) -> Result<()> {
    let loaded = load(data, cfg)?;
    let table = &loaded.table;
    let spec = method_spec(method, cfg);
    let seed = resolve_seed(forest, cfg, spec.needs_seed());
    let (from, to) = match (&days.day, &days.from, &days.to) {
        (Some(d), _, _) => {
            let d = parse_day(d, table)?;
            (d, d)
        }
        (None, from, to) => {
            let to = to.as_deref().map(|s| parse_day(s, table)).transpose()?.unwrap_or(table.max_day());
            let from = from.as_deref().map(|s| parse_day(s, table)).transpose()?.unwrap_or(to);
            (from, to)
        }
    };
    if from < 2 || from > to {
        bail!("estimation days {from}..={to}: need 2 <= from <= to");
    }
    let config = bench_config(vec![spec], from, to, seed, forest, cfg, None)?;
    let mut rows = forward_rates(table, spec, from..=to, &config, &AccessLog::default())?;
    rows.sort_by(|a, b| a.day.cmp(&b.day).then_with(|| table.counties()[a.county].cmp(&table.counties()[b.county])));

    let mut w = output(out, cfg)?;
    writeln!(w, "county,date,day,method,rate,doubling_days")?;
    for r in &rows {
        let doubling = match doubling_time(r.rate) {
            Doubling::Days(d) => d.to_string(),
            Doubling::Never => "never".into(),
        };
        writeln!(
            w,
            "{},{},{},{},{},{doubling}",
            table.counties()[r.county],
            table.date_of(r.day),
            r.day,
            r.method,
            r.rate
        )?;
    }
    w.flush()?;
    Ok(())
}

fn plot(
    report: &Path,
    metric: Metric,
    out: &Path,
    data_out: Option<PathBuf>,
    title: Option<String>,
    cfg: &RunConfig,
) -> Result<()> {
    let mut rdr = csv::Reader::from_path(report).with_context(|| format!("opening {}", report.display()))?;
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| anyhow!("{}: missing column {name}", report.display()))
    };
    let (mc, dc, vc) = (col("method")?, col("day")?, col(metric.column())?);
    let mut series: Vec<Series> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let num = |c: usize| -> Result<f64> {
            let raw = rec.get(c).unwrap_or("");
            raw.parse()
                .with_context(|| format!("{} row {}: bad number {raw:?}", report.display(), i + 2))
        };
        let (day, value) = (num(dc)?, num(vc)?);
        let method = rec.get(mc).unwrap_or("");
        match series.iter_mut().find(|s| s.name == method) {
            Some(s) => s.points.push((day, value)),
            None => series.push(Series {
                name: method.to_string(),
                points: vec![(day, value)],
            }),
        }
    }
    if series.is_empty() {
        bail!("{}: no rows to plot", report.display());
    }
    let y_label = metric.column().to_uppercase();
    let chart = LineChart {
        title: title.unwrap_or_else(|| format!("{y_label} by forecast origin")),
        x_label: "day".into(),
        y_label,
        series,
    };
    let mut w = output(Some(out), cfg)?;
    w.write_all(chart.render_svg().as_bytes())?;
    w.flush()?;

    let data_out = data_out.unwrap_or_else(|| out.with_extension("csv"));
    let mut w = output(Some(&data_out), cfg)?;
    writeln!(w, "method,day,{}", metric.column())?;
    for s in &chart.series {
        for (d, v) in &s.points {
            writeln!(w, "{},{d},{v}", s.name)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Logs where a setting came from: flag, config file or built-in default.
fn pick<T: Debug>(name: &str, flag: Option<T>, config: Option<T>, default: T) -> T {
    let (v, src) = match (flag, config) {
        (Some(v), _) => (v, "flag"),
        (None, Some(v)) => (v, "config"),
        (None, None) => (default, "default"),
    };
    info!("{name} = {v:?} ({src})");
    v
}

fn pick_opt<T: Debug>(name: &str, flag: Option<T>, config: Option<T>) -> Option<T> {
    let (v, src) = match (flag, config) {
        (Some(v), _) => (Some(v), "flag"),
        (None, Some(v)) => (Some(v), "config"),
        (None, None) => (None, "unset"),
    };
    info!("{name} = {v:?} ({src})");
    v
}

struct Loaded {
    /// Incidence after smoothing and the minimum-count filter.
    panel: CountyPanel,
    table: ModelingTable,
}

fn load(data: &DataArgs, cfg: &RunConfig) -> Result<Loaded> {
    let d = PanelPipeline::default();
    let pipeline = PanelPipeline {
        incidence_window: pick(
            "pipeline.incidence_window",
            data.incidence_window,
            cfg.pipeline.incidence_window,
            d.incidence_window,
        ),
        smooth_window: pick("pipeline.smooth_window", data.smooth_window, cfg.pipeline.smooth_window, d.smooth_window),
        min_count: pick("pipeline.min_count", data.min_count, cfg.pipeline.min_count, d.min_count),
    };
    if pipeline.incidence_window == 0 || pipeline.smooth_window == 0 {
        usage("incidence and smoothing windows must be positive");
    }
    let Some(cases) = pick_opt("data.cases", data.cases.clone(), cfg.data.cases.clone()) else {
        usage("no cases file: pass --cases or set data.cases in the config");
    };
    let features = if data.features.is_empty() {
        cfg.data.features.clone()
    } else {
        data.features.clone()
    };
    let schema = pick_opt("data.schema", data.schema.clone(), cfg.data.schema.clone());

    let raw = load_cumulative_cases(&cases)?;
    if raw.clamp_count() > 0 || raw.filled_count() > 0 {
        info!(
            "{}: {} decreasing counts clamped, {} missing days filled",
            cases.display(),
            raw.clamp_count(),
            raw.filled_count()
        );
    }
    let panel = pipeline.apply(&raw);
    let frame = match (features.is_empty(), schema) {
        (true, None) => FeatureFrame::empty(&panel),
        (true, Some(s)) => {
            warn!("schema {} given without feature files; ignoring it", s.display());
            FeatureFrame::empty(&panel)
        }
        (false, Some(s)) => load_features(&features, &FeatureSchema::load(&s)?, &panel)?,
        (false, None) => usage("--features needs --schema"),
    };
    let table = build_modeling_table(&panel, &frame)?;
    info!(
        "modeling table: {} counties, {} rows, {} features, days 1..={}",
        table.counties().len(),
        table.len(),
        table.feature_names().len(),
        table.max_day()
    );
    Ok(Loaded { panel, table })
}

fn output(path: Option<&Path>, cfg: &RunConfig) -> Result<Box<dyn Write>> {
    let Some(path) = path else {
        return Ok(Box::new(BufWriter::new(io::stdout())));
    };
    let path = cfg.output_path(path);
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    Ok(Box::new(BufWriter::new(file)))
}

/// A day number or an ISO date inside the data.
fn parse_day(s: &str, table: &ModelingTable) -> Result<Day> {
    let s = s.trim();
    let day = match s.parse::<i64>() {
        Ok(d) => d,
        Err(_) => {
            let date = NaiveDate::parse_from_str(s, "%Y-%m-%d")
                .with_context(|| format!("{s:?} is neither a day number nor a YYYY-MM-DD date"))?;
            (date - table.epoch()).num_days() + 1
        }
    };
    match Day::try_from(day) {
        Ok(d) if (1..=table.max_day()).contains(&d) => Ok(d),
        _ => bail!("day {s} is outside the data (days 1..={})", table.max_day()),
    }
}

fn parse_split(s: &str, table: &ModelingTable) -> Result<ForwardSplit> {
    let ranges: Vec<(Day, Day)> = s
        .split(',')
        .map(|r| {
            let (a, b) = r
                .split_once("..")
                .ok_or_else(|| anyhow!("split range {r:?} is not `a..b`"))?;
            Ok((parse_day(a, table)?, parse_day(b.trim_start_matches('='), table)?))
        })
        .collect::<Result<_>>()?;
    let [train, val, test] = ranges[..] else {
        bail!("--split needs three ranges (train,validation,test), got {}", ranges.len());
    };
    Ok(ForwardSplit::new(train.0..=train.1, val.0..=val.1, test.0..=test.1)?)
}

/// `lo:hi:step` or a comma list.
fn parse_thresholds(s: &str) -> Result<Vec<f64>> {
    let num = |v: &str| v.trim().parse::<f64>().with_context(|| format!("bad threshold {v:?}"));
    let parts: Vec<&str> = s.split(':').collect();
    if let [lo, hi, step] = parts[..] {
        let (lo, hi, step) = (num(lo)?, num(hi)?, num(step)?);
        if !(step > 0.0) || hi < lo {
            bail!("threshold grid {s:?} needs lo <= hi and step > 0");
        }
        let n = ((hi - lo) / step + 1e-9).floor() as usize;
        return Ok((0..=n).map(|i| lo + i as f64 * step).collect());
    }
    s.split(',').map(num).collect()
}

fn method_spec(m: &MethodArgs, cfg: &RunConfig) -> MethodSpec {
    let delta = |name: &str| {
        m.delta
            .unwrap_or_else(|| usage(&format!("--method {name} needs --delta (2..=14)")))
    };
    let spec = match m.method {
        MethodName::TwoPoint => MethodSpec::Ols(2),
        MethodName::Ols => MethodSpec::Ols(delta("ols")),
        MethodName::Tcv => MethodSpec::Tcv,
        MethodName::Ctcv => MethodSpec::Ctcv,
        MethodName::Kmeans => {
            let k = pick_opt("window.k", m.k.map(|k| k as usize), cfg.window.k)
                .unwrap_or_else(|| usage("--method kmeans needs --k"));
            if k == 0 {
                usage("k must be at least 1");
            }
            MethodSpec::KMeans(k)
        }
        MethodName::Tlgrf => MethodSpec::Tlgrf,
        MethodName::TlgrfDelta => MethodSpec::TlgrfDelta(delta("tlgrf-delta")),
        MethodName::TlgrfTimeOnly => MethodSpec::TlgrfTimeOnly,
    };
    info!("method = {spec}");
    spec
}

fn resolve_seed(f: &ForestArgs, cfg: &RunConfig, required: bool) -> u64 {
    match pick_opt("seed", f.seed, cfg.seed) {
        Some(s) => s,
        None if required => usage("forest and k-means methods need --seed (or `seed` in the config)"),
        None => 0,
    }
}

fn forest_params(f: &ForestArgs, cfg: &RunConfig, seed: u64) -> Result<ForestParams> {
    let d = ForestParams::default();
    let c = &cfg.forest;
    let params = ForestParams {
        num_trees: pick("forest.trees", f.trees, c.trees, d.num_trees),
        min_node_size: pick("forest.min_node", f.min_node, c.min_node, d.min_node_size),
        mtry: pick_opt("forest.mtry", f.mtry, c.mtry),
        subsample_fraction: pick("forest.subsample", f.subsample, c.subsample, d.subsample_fraction),
        honesty: pick("forest.honesty", f.no_honesty.then_some(false), c.honesty, d.honesty),
        honesty_fraction: pick("forest.honesty_fraction", f.honesty_fraction, c.honesty_fraction, d.honesty_fraction),
        seed,
    };
    params.validate()?;
    Ok(params)
}

fn bench_config(
    methods: Vec<MethodSpec>,
    from: Day,
    to: Day,
    seed: u64,
    forest: &ForestArgs,
    cfg: &RunConfig,
    grid: Option<String>,
) -> Result<BenchmarkConfig> {
    let mut config = BenchmarkConfig::new(methods, from, to, seed);
    config.forest = forest_params(forest, cfg, seed)?;
    if let Some(g) = pick_opt("window.grid", grid, cfg.window.grid.clone()) {
        config.grid = g.parse::<DeltaGrid>()?;
    }
    Ok(config)
}

fn day_forest(table: &ModelingTable, forest: &ForestArgs, day: Option<String>, cfg: &RunConfig) -> Result<(Day, Forest)> {
    let day = match day {
        Some(s) => parse_day(&s, table)?,
        None => table.max_day(),
    };
    let seed = resolve_seed(forest, cfg, true);
    let params = forest_params(forest, cfg, seed)?;
    let view = table.view(day);
    let f = forest_for_day(&make_blocks(&view), day, &params)?;
    info!("day {day} forest: {} trees over {} blocks", f.trees().len(), f.blocks().len());
    Ok((day, f))
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".into(), |x| x.to_string())
}
