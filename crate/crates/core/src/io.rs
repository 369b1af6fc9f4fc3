//! File formats: correlation series with a JSON sidecar, posterior summaries,
//! marginal and fit tables, sensitivity reports and their traces.
//!
//! Every CSV float is written with 17 significant digits so values survive a
//! round trip exactly. Renderers return the file contents; the `save_*`
//! helpers write them to disk.

use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cpcore::{Analysis, MarginalPdf, SegmentFit};
use crate::error::{Error, Result};
use crate::ingest::DATE_FORMAT;
use crate::numeric::fmt_f64;
use crate::online::{SensitivityResult, TraceRow};
use crate::preprocess::CorrelationSeries;

/// Lower-case hex SHA-256 of a byte string.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// SHA-256 of a file's contents.
pub fn hash_file(path: impl AsRef<Path>) -> Result<String> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

pub fn format_date(date: NaiveDate) -> String {
    date.format(DATE_FORMAT).to_string()
}

fn csv_string(header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    // Writing into a Vec cannot fail.
    w.write_record(header).expect("in-memory csv");
    for row in rows {
        w.write_record(&row).expect("in-memory csv");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8 csv")
}

fn save(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Construction parameters stored next to a correlation CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesMetadata {
    pub tau: usize,
    pub norm_window: Option<usize>,
    /// Zero-based offset of the stamp inside its window.
    pub center_offset: usize,
    pub stride: usize,
    /// Trading-day position of the first point on the unthinned series.
    pub first_index: usize,
    pub n_points: usize,
    pub coverage_threshold: Option<f64>,
    pub input_hash: Option<String>,
}

impl SeriesMetadata {
    pub fn of(series: &CorrelationSeries) -> Self {
        SeriesMetadata {
            tau: series.window_length,
            norm_window: series.norm_window,
            center_offset: series.center_offset,
            stride: series.stride,
            first_index: series.index.first().copied().unwrap_or(0),
            n_points: series.len(),
            coverage_threshold: None,
            input_hash: None,
        }
    }
}

/// Sidecar path of a correlation CSV: `name.csv` becomes `name.meta.json`.
pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("meta.json")
}

pub fn render_correlation_csv(series: &CorrelationSeries) -> String {
    csv_string(
        &["date".into(), "mean_correlation".into()],
        series
            .dates
            .iter()
            .zip(&series.values)
            .map(|(d, v)| vec![format_date(*d), fmt_f64(*v)]),
    )
}

/// Writes the CSV and its sidecar. The series must be evenly spaced on the
/// unthinned grid, which every series built by this crate is.
pub fn save_correlation(path: &Path, series: &CorrelationSeries, meta: &SeriesMetadata) -> Result<()> {
    let regular = series
        .index
        .iter()
        .enumerate()
        .all(|(k, &i)| i == meta.first_index + k * meta.stride);
    if !regular || meta.n_points != series.len() {
        return Err(Error::InvalidParameter(
            "series positions do not match the metadata stride".into(),
        ));
    }
    save(path, &render_correlation_csv(series))?;
    save(&sidecar_path(path), &(serde_json::to_string_pretty(meta)? + "\n"))
}

/// Reads a correlation CSV and, when present, its sidecar. Without a
/// sidecar the series is taken as unthinned with default parameters.
pub fn load_correlation(path: &Path) -> Result<(CorrelationSeries, Option<SeriesMetadata>)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let csv_err = |message: String| Error::Csv {
        path: path.to_path_buf(),
        message,
    };
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| csv_err(e.to_string()))?.clone();
    if header.len() != 2 || &header[0] != "date" {
        return Err(csv_err("expected header `date,mean_correlation`".into()));
    }
    let mut dates = Vec::new();
    let mut values = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_err(e.to_string()))?;
        let line = i + 2;
        let date = NaiveDate::parse_from_str(&record[0], DATE_FORMAT).map_err(|_| Error::BadDate {
            value: record[0].to_string(),
            line,
        })?;
        let value: f64 = record[1]
            .trim()
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite())
            .ok_or_else(|| csv_err(format!("line {line}: bad value `{}`", &record[1])))?;
        dates.push(date);
        values.push(value);
    }
    let mut series = CorrelationSeries::from_values(dates, values).map_err(|e| csv_err(e.to_string()))?;
    let sidecar = sidecar_path(path);
    let meta = if sidecar.exists() {
        let text = fs::read_to_string(&sidecar).map_err(|e| Error::io(&sidecar, e))?;
        let meta: SeriesMetadata = serde_json::from_str(&text)?;
        if meta.n_points != series.len() || meta.stride == 0 {
            return Err(csv_err(format!(
                "sidecar {} does not describe this series",
                sidecar.display()
            )));
        }
        series.window_length = meta.tau;
        series.norm_window = meta.norm_window;
        series.center_offset = meta.center_offset;
        series.stride = meta.stride;
        series.index = (0..series.len()).map(|k| meta.first_index + k * meta.stride).collect();
        Some(meta)
    } else {
        None
    };
    Ok((series, meta))
}

/// One configuration in a posterior summary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfigurationEntry {
    pub indices: Vec<usize>,
    pub dates: Vec<NaiveDate>,
    pub probability: f64,
    /// Position in the posterior ordering divided by the configuration count.
    pub percentile: f64,
    /// Lexicographic rank.
    pub rank: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub m: usize,
    #[serde(rename = "N")]
    pub n_points: usize,
    /// Configuration count as a decimal string.
    #[serde(rename = "Z_m")]
    pub z_m: String,
    #[serde(rename = "log_Z")]
    pub log_z: f64,
    pub map: ConfigurationEntry,
    pub top_k: Vec<ConfigurationEntry>,
}

impl PosteriorSummary {
    /// Summary of an analysis on `series`; `series` supplies the dates.
    pub fn new(analysis: &Analysis, series: &CorrelationSeries) -> Result<Self> {
        let top_k: Vec<ConfigurationEntry> = analysis
            .top
            .iter()
            .map(|r| ConfigurationEntry {
                indices: r.configuration.indices().to_vec(),
                dates: r.configuration.indices().iter().map(|&i| series.dates[i]).collect(),
                probability: r.probability,
                percentile: r.percentile,
                rank: r.rank,
            })
            .collect();
        let map = top_k
            .first()
            .cloned()
            .ok_or_else(|| Error::InvalidParameter("summary needs at least one configuration".into()))?;
        Ok(PosteriorSummary {
            m: analysis.m,
            n_points: analysis.n_points,
            z_m: analysis.count_exact().to_string(),
            log_z: analysis.log_z,
            map,
            top_k,
        })
    }
}

pub fn render_summary(summary: &PosteriorSummary) -> Result<String> {
    Ok(serde_json::to_string_pretty(summary)? + "\n")
}

/// `date,ordinal_1,...,ordinal_m`, one row per grid stamp.
pub fn render_marginals_csv(dates: &[NaiveDate], marginals: &[MarginalPdf]) -> String {
    let mut header = vec!["date".to_string()];
    header.extend(marginals.iter().map(|m| format!("ordinal_{}", m.ordinal)));
    csv_string(
        &header,
        dates.iter().enumerate().map(|(i, d)| {
            let mut row = vec![format_date(*d)];
            row.extend(marginals.iter().map(|m| fmt_f64(m.mass[i])));
            row
        }),
    )
}

/// `date,mean,sigma,lower,upper`, one row per evaluation stamp.
pub fn render_fit_csv(dates: &[NaiveDate], fit: &SegmentFit) -> Result<String> {
    if dates.len() != fit.mean.len() {
        return Err(Error::InvalidParameter("one date per fit stamp required".into()));
    }
    let lower = fit.lower();
    let upper = fit.upper();
    Ok(csv_string(
        &["date", "mean", "sigma", "lower", "upper"].map(String::from),
        (0..dates.len()).map(|i| {
            vec![
                format_date(dates[i]),
                fmt_f64(fit.mean[i]),
                fmt_f64(fit.sigma[i]),
                fmt_f64(lower[i]),
                fmt_f64(upper[i]),
            ]
        }),
    ))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensitivityReport {
    pub onset: NaiveDate,
    pub detection_cut: Option<NaiveDate>,
    pub horizon_trading_days: Option<usize>,
    pub map_location: Option<NaiveDate>,
    pub m: usize,
    pub stride: usize,
    pub tolerance_days: usize,
    pub series_hash: String,
}

impl SensitivityReport {
    pub fn new(
        result: &SensitivityResult,
        m: usize,
        stride: usize,
        tolerance_days: usize,
        series_hash: String,
    ) -> Self {
        SensitivityReport {
            onset: result.onset,
            detection_cut: result.detection_cut,
            horizon_trading_days: result.horizon_days,
            map_location: result.map_location,
            m,
            stride,
            tolerance_days,
            series_hash,
        }
    }
}

pub fn render_report(report: &SensitivityReport) -> Result<String> {
    Ok(serde_json::to_string_pretty(report)? + "\n")
}

/// `cut_date,map_date,map_mass`.
pub fn render_trace_csv(trace: &[TraceRow]) -> String {
    csv_string(
        &["cut_date", "map_date", "map_mass"].map(String::from),
        trace
            .iter()
            .map(|r| vec![format_date(r.cut_date), format_date(r.map_date), fmt_f64(r.map_mass)]),
    )
}

/// Writes rendered contents to `path`.
pub fn save_text(path: &Path, contents: &str) -> Result<()> {
    save(path, contents)
}
