use std::path::Path;

use anyhow::{Context, Result};
use trendscan::cpcore::{analyze, Analysis, AnalysisRequest, Enumeration, DEFAULT_BAND_MULTIPLIER, DEFAULT_BUDGET};
use trendscan::ingest::{filter_coverage, interpolate_missing, load_price_csv, DEFAULT_MIN_COVERAGE};
use trendscan::io::{
    format_date, load_correlation, render_fit_csv, render_marginals_csv, render_report, render_summary,
    render_trace_csv, save_correlation, sidecar_path, PosteriorSummary, SensitivityReport, SeriesMetadata,
};
use trendscan::online::{
    sensitivity_horizon, series_grid, HorizonSearch, SegmentSpec, SensitivityScan, DEFAULT_ONLINE_CPS,
    DEFAULT_SEGMENT_STRIDE, DEFAULT_TOLERANCE_DAYS,
};
use trendscan::preprocess::{
    correlation_pipeline, thin, CorrelationOptions, PipelineOptions, DEFAULT_NORM_WINDOW, DEFAULT_STRIDE,
    DEFAULT_TAU,
};
use trendscan::CorrelationSeries;

use crate::manifest::Run;
use crate::svg;

const DEFAULT_TOP_K: usize = 10;
const DEFAULT_ANALYZE_CPS: usize = 2;
const DEFAULT_EVIDENCE_MAX_CPS: usize = 4;

/// Zero-based window position of the date stamp; 20 for the usual 42.
fn center_offset(tau: usize) -> usize {
    (tau / 2).saturating_sub(1)
}

fn enumeration(run: &Run) -> Result<Enumeration> {
    Ok(Enumeration {
        workers: run.workers,
        budget: run.settings.u64("budget-override", DEFAULT_BUDGET)?,
    })
}

fn file_name(path: &Path) -> String {
    path.file_name().map_or_else(String::new, |n| n.to_string_lossy().into_owned())
}

pub fn preprocess(run: &mut Run) -> Result<()> {
    let s = &run.settings;
    let input = s.input()?;
    let tau = s.usize("tau", DEFAULT_TAU)?;
    let norm_window = s.usize("norm-window", DEFAULT_NORM_WINDOW)?;
    let stride = s.usize("stride", DEFAULT_STRIDE)?;
    let coverage = s.f64("coverage", DEFAULT_MIN_COVERAGE)?;
    anyhow::ensure!(stride >= 1, "--stride must be at least 1");

    let hash = run.register_input("input", &input)?;
    let raw = load_price_csv(&input)?;
    let kept = filter_coverage(&raw, coverage)?;
    let clean = interpolate_missing(&kept)?;
    let opts = PipelineOptions {
        norm_window,
        correlation: CorrelationOptions {
            tau,
            center_offset: center_offset(tau),
            include_diagonal: false,
        },
    };
    let series = correlation_pipeline(&clean, &opts)?;
    let thinned = thin(&series, stride);

    for (name, s) in [("correlation.csv", &series), ("correlation_thinned.csv", &thinned)] {
        let meta = SeriesMetadata {
            coverage_threshold: Some(coverage),
            input_hash: Some(hash.clone()),
            ..SeriesMetadata::of(s)
        };
        save_correlation(&run.path(name), s, &meta)?;
        run.track(name)?;
        run.track(&file_name(&sidecar_path(Path::new(name))))?;
    }
    println!(
        "retained {} of {} tickers over {} trading days",
        clean.tickers().len(),
        raw.tickers().len(),
        clean.len()
    );
    println!(
        "mean correlation: {} points from {} to {}; thinned with stride {stride}: {} points",
        series.len(),
        series.dates.first().map_or_else(String::new, |d| format_date(*d)),
        series.dates.last().map_or_else(String::new, |d| format_date(*d)),
        thinned.len()
    );
    Ok(())
}

/// Reads a correlation series and its sidecar, hashing both.
fn load_series(run: &mut Run) -> Result<(CorrelationSeries, String)> {
    let input = run.settings.input()?;
    let hash = run.register_input("input", &input)?;
    let sidecar = sidecar_path(&input);
    if sidecar.exists() {
        run.register_input("sidecar", &sidecar)?;
    }
    let (series, _) = load_correlation(&input)?;
    Ok((series, hash))
}

fn print_summary(analysis: &Analysis, series: &CorrelationSeries, top: bool) {
    println!(
        "N = {}, m = {}: {} configurations evaluated, log Z = {:.6}",
        analysis.n_points, analysis.m, analysis.count, analysis.log_z
    );
    let Some(map) = analysis.map_configuration() else { return };
    let stamps = |idx: &[usize]| -> String {
        idx.iter()
            .map(|&i| format!("{} (#{i})", format_date(series.dates[i])))
            .collect::<Vec<_>>()
            .join(", ")
    };
    if analysis.m == 0 {
        println!("MAP: no change point");
    } else {
        println!("MAP: {}", stamps(map.configuration.indices()));
    }
    if top && analysis.m > 0 {
        println!("{:>5}  {:>12}  {:>10}  change points", "pos", "probability", "percentile");
        for (k, r) in analysis.top.iter().enumerate() {
            println!(
                "{:>5}  {:>12.5e}  {:>10.3e}  {}",
                k + 1,
                r.probability,
                r.percentile,
                stamps(r.configuration.indices())
            );
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
pub enum Retro {
    Analyze,
    Marginals,
    Fit,
}

pub fn retrospective(run: &mut Run, what: Retro) -> Result<()> {
    let (series, _) = load_series(run)?;
    let s = &run.settings;
    let stride = s.usize("stride", 1)?;
    anyhow::ensure!(stride >= 1, "--stride must be at least 1");
    let m = s.usize("num-cps", DEFAULT_ANALYZE_CPS)?;
    let top_k = if what == Retro::Analyze { s.usize("top-k", DEFAULT_TOP_K)? } else { 1 };
    let band = if what == Retro::Marginals {
        DEFAULT_BAND_MULTIPLIER
    } else {
        s.f64("band-multiplier", DEFAULT_BAND_MULTIPLIER)?
    };
    let svg = s.flag("svg")?;
    let opts = enumeration(run)?;

    let series = thin(&series, stride);
    let grid = series_grid(&series)?;
    let req = AnalysisRequest {
        m,
        top_k: top_k.max(1),
        marginals: what != Retro::Fit,
        fit_times: (what != Retro::Marginals).then(|| grid.times().to_vec()),
        band_multiplier: band,
    };
    let analysis = analyze(&grid, &req, &opts)?;
    print_summary(&analysis, &series, what == Retro::Analyze);

    if what == Retro::Analyze {
        run.write("posterior.json", &render_summary(&PosteriorSummary::new(&analysis, &series)?)?)?;
    }
    if what != Retro::Fit {
        run.write("marginals.csv", &render_marginals_csv(&series.dates, &analysis.marginals))?;
    }
    if let Some(fit) = &analysis.fit {
        run.write("fit.csv", &render_fit_csv(&series.dates, fit)?)?;
    }
    if svg {
        let title = format!("m = {m}, N = {}", series.len());
        let plot = svg::plot(&title, &series.dates, &series.values, analysis.fit.as_ref(), &analysis.marginals);
        run.write("plot.svg", &plot)?;
    }
    Ok(())
}

pub fn evidence(run: &mut Run) -> Result<()> {
    let (series, _) = load_series(run)?;
    let s = &run.settings;
    let stride = s.usize("stride", 1)?;
    anyhow::ensure!(stride >= 1, "--stride must be at least 1");
    let max_m = s.usize("num-cps", DEFAULT_EVIDENCE_MAX_CPS)?;
    let opts = enumeration(run)?;
    let series = thin(&series, stride);
    let grid = series_grid(&series)?;

    let mut rows = Vec::new();
    for m in 0..=max_m {
        let req = AnalysisRequest {
            top_k: 1,
            marginals: false,
            ..AnalysisRequest::new(m)
        };
        let a = analyze(&grid, &req, &opts).with_context(|| format!("model with {m} change points"))?;
        rows.push((m, a.count, a.log_z));
    }
    // Posterior over m under a uniform prior on 0..=max_m.
    let peak = rows.iter().map(|r| r.2).fold(f64::NEG_INFINITY, f64::max);
    let norm: f64 = rows.iter().map(|r| (r.2 - peak).exp()).sum();
    let mut csv = String::from("m,configurations,log_evidence,model_probability\n");
    println!("{:>3}  {:>12}  {:>14}  {:>12}", "m", "Z_m", "log evidence", "probability");
    for &(m, count, log_z) in &rows {
        let p = (log_z - peak).exp() / norm;
        csv.push_str(&format!(
            "{m},{count},{},{}\n",
            trendscan::numeric::fmt_f64(log_z),
            trendscan::numeric::fmt_f64(p)
        ));
        println!("{m:>3}  {count:>12}  {log_z:>14.6}  {p:>12.5e}");
    }
    let best = rows.iter().max_by(|a, b| a.2.total_cmp(&b.2)).map_or(0, |r| r.0);
    println!("highest evidence: m = {best}");
    run.write("evidence.csv", &csv)
}

struct HorizonArgs {
    search: HorizonSearch,
    start: chrono::NaiveDate,
    onset: chrono::NaiveDate,
}

/// Source restricted to `--end`, plus the shared horizon parameters.
fn horizon_setup(run: &Run, series: &CorrelationSeries) -> Result<(CorrelationSeries, HorizonArgs)> {
    let s = &run.settings;
    let first = *series.dates.first().context("empty series")?;
    let start = s.date("start")?.unwrap_or(first);
    let end = s.date("end")?;
    let onset = s.required_date("onset")?;
    let search = HorizonSearch {
        m: s.usize("num-cps", DEFAULT_ONLINE_CPS)?,
        tolerance_days: s.usize("tolerance-days", DEFAULT_TOLERANCE_DAYS)?,
        stride: s.usize("stride", DEFAULT_SEGMENT_STRIDE)?,
    };
    let source = match end {
        Some(end) => {
            let last = series
                .position_at_or_before(end)
                .ok_or(trendscan::Error::DateOutOfRange(end))?;
            series.slice(0..last + 1)
        }
        None => series.clone(),
    };
    Ok((source, HorizonArgs { search, start, onset }))
}

fn write_horizon(run: &mut Run, scan: &SensitivityScan, args: &HorizonArgs, hash: String) -> Result<()> {
    let report = SensitivityReport::new(
        &scan.result,
        args.search.m,
        args.search.stride,
        args.search.tolerance_days,
        hash,
    );
    run.write("sensitivity.json", &render_report(&report)?)?;
    run.write("trace.csv", &render_trace_csv(&scan.trace))?;
    match (&scan.result.detection_cut, scan.result.horizon_days, &scan.result.map_location) {
        (Some(cut), Some(h), Some(map)) => println!(
            "onset {}: detected at {} after {h} trading days, density peak at {}",
            args.onset, cut, map
        ),
        _ => println!(
            "onset {}: density peak never came within {} trading days ({} cuts scanned)",
            args.onset,
            args.search.tolerance_days,
            scan.trace.len()
        ),
    }
    Ok(())
}

pub fn sensitivity(run: &mut Run) -> Result<()> {
    let (series, hash) = load_series(run)?;
    let (source, args) = horizon_setup(run, &series)?;
    let opts = enumeration(run)?;
    let scan = sensitivity_horizon(&source, args.start, args.onset, &args.search, &opts)?;
    write_horizon(run, &scan, &args, hash)
}

pub fn online(run: &mut Run) -> Result<()> {
    let (series, hash) = load_series(run)?;
    let (source, args) = horizon_setup(run, &series)?;
    let top_k = run.settings.usize("top-k", DEFAULT_TOP_K)?;
    let band = run.settings.f64("band-multiplier", DEFAULT_BAND_MULTIPLIER)?;
    let svg = run.settings.flag("svg")?;
    let opts = enumeration(run)?;
    let scan = sensitivity_horizon(&source, args.start, args.onset, &args.search, &opts)?;

    // Retrospective view of the whole segment next to the horizon scan.
    let last = *source.dates.last().context("empty series")?;
    let spec = SegmentSpec::new(&source, args.start, last, args.search.stride)?;
    let segment = spec.series();
    let grid = spec.grid()?;
    let req = AnalysisRequest {
        top_k: top_k.max(1),
        fit_times: Some(grid.times().to_vec()),
        band_multiplier: band,
        ..AnalysisRequest::new(args.search.m)
    };
    let analysis = analyze(&grid, &req, &opts)?;
    print_summary(&analysis, &segment, false);
    run.write("segment_posterior.json", &render_summary(&PosteriorSummary::new(&analysis, &segment)?)?)?;
    run.write("segment_marginals.csv", &render_marginals_csv(&segment.dates, &analysis.marginals))?;
    if let Some(fit) = &analysis.fit {
        run.write("segment_fit.csv", &render_fit_csv(&segment.dates, fit)?)?;
    }
    if svg {
        let title = format!("segment {} to {}, m = {}", args.start, last, args.search.m);
        let plot = svg::plot(&title, &segment.dates, &segment.values, analysis.fit.as_ref(), &analysis.marginals);
        run.write("plot.svg", &plot)?;
    }
    write_horizon(run, &scan, &args, hash)
}
