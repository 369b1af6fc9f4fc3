//! From clean prices to the mean market correlation series.
//!
//! Length bookkeeping for `D` trading days of prices: `D - 1` forward returns,
//! `D - n` locally normalized returns (the first `n - 1` stamps lack a full
//! trailing window), and `D - n - tau + 2` correlation windows. Each window is
//! dated by its stamp at `center_offset`.

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::PricePanel;

pub const DEFAULT_TAU: usize = 42;
pub const DEFAULT_NORM_WINDOW: usize = 13;
/// Zero-based offset of the 21st stamp of a window.
pub const DEFAULT_CENTER_OFFSET: usize = 20;
pub const DEFAULT_STRIDE: usize = 40;

// Variances below this fraction of the mean square are treated as zero.
const RELATIVE_VARIANCE_FLOOR: f64 = 1e-14;

/// Per-ticker return columns.
#[derive(Clone, Debug, PartialEq)]
pub struct ReturnPanel {
    dates: Vec<NaiveDate>,
    tickers: Vec<String>,
    columns: Vec<Vec<f64>>,
    norm_window: Option<usize>,
}

impl ReturnPanel {
    pub fn new(dates: Vec<NaiveDate>, tickers: Vec<String>, columns: Vec<Vec<f64>>) -> Result<Self> {
        if tickers.len() != columns.len() || columns.iter().any(|c| c.len() != dates.len()) {
            return Err(Error::InvalidParameter(
                "return columns do not match dates and tickers".into(),
            ));
        }
        if dates.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter("dates must be strictly increasing".into()));
        }
        Ok(ReturnPanel {
            dates,
            tickers,
            columns,
            norm_window: None,
        })
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn tickers(&self) -> &[String] {
        &self.tickers
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn is_normalized(&self) -> bool {
        self.norm_window.is_some()
    }

    /// Trailing window length used by [`locally_normalize`], if applied.
    pub fn norm_window(&self) -> Option<usize> {
        self.norm_window
    }
}

/// Forward simple returns `(P[t+1] - P[t]) / P[t]`, dated at `t`.
pub fn compute_returns(panel: &PricePanel) -> Result<ReturnPanel> {
    let columns = panel.dense_columns().ok_or_else(|| {
        Error::InvalidParameter("price panel still has missing entries".into())
    })?;
    if panel.len() < 2 {
        return Err(Error::SeriesTooShort {
            len: panel.len(),
            needed: 2,
        });
    }
    let dates = panel.dates();
    let mut returns = Vec::with_capacity(columns.len());
    for (prices, ticker) in columns.iter().zip(panel.tickers()) {
        if let Some(i) = prices.iter().position(|&p| p <= 0.0) {
            return Err(Error::NonPositivePrice {
                ticker: ticker.clone(),
                date: dates[i],
                price: prices[i],
            });
        }
        returns.push(prices.windows(2).map(|w| (w[1] - w[0]) / w[0]).collect());
    }
    ReturnPanel::new(dates[..dates.len() - 1].to_vec(), panel.tickers().to_vec(), returns)
}

/// Standardizes every return by the mean and standard deviation of the
/// trailing `n` returns up to and including it. The first `n - 1` stamps
/// are dropped.
pub fn locally_normalize(panel: &ReturnPanel, n: usize) -> Result<ReturnPanel> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!(
            "normalization window {n} must be at least 2"
        )));
    }
    if panel.is_normalized() {
        return Err(Error::InvalidParameter("returns are already normalized".into()));
    }
    if panel.len() < n {
        return Err(Error::SeriesTooShort {
            len: panel.len(),
            needed: n,
        });
    }
    let mut columns = Vec::with_capacity(panel.columns.len());
    for (col, ticker) in panel.columns.iter().zip(&panel.tickers) {
        let mut out = Vec::with_capacity(col.len() + 1 - n);
        for t in n - 1..col.len() {
            let window = &col[t + 1 - n..=t];
            let mean = window.iter().sum::<f64>() / n as f64;
            let var = window.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n as f64;
            let mean_sq = window.iter().map(|r| r * r).sum::<f64>() / n as f64;
            if var <= RELATIVE_VARIANCE_FLOOR * mean_sq || var == 0.0 {
                return Err(Error::ZeroVariance {
                    ticker: ticker.clone(),
                    date: panel.dates[t],
                });
            }
            out.push((col[t] - mean) / var.sqrt());
        }
        columns.push(out);
    }
    Ok(ReturnPanel {
        dates: panel.dates[n - 1..].to_vec(),
        tickers: panel.tickers.clone(),
        columns,
        norm_window: Some(n),
    })
}

/// Mean pairwise correlation series with its time grid and construction parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationSeries {
    pub dates: Vec<NaiveDate>,
    pub values: Vec<f64>,
    /// Position of each point on the unthinned series, i.e. in trading days.
    pub index: Vec<usize>,
    pub window_length: usize,
    pub center_offset: usize,
    pub norm_window: Option<usize>,
    /// Cumulative thinning stride; 1 for an unthinned series.
    pub stride: usize,
}

impl CorrelationSeries {
    /// Unthinned series built from raw values, e.g. read back from disk.
    pub fn from_values(dates: Vec<NaiveDate>, values: Vec<f64>) -> Result<Self> {
        if dates.len() != values.len() {
            return Err(Error::InvalidParameter("dates and values differ in length".into()));
        }
        if dates.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter("dates must be strictly increasing".into()));
        }
        Ok(CorrelationSeries {
            index: (0..dates.len()).collect(),
            dates,
            values,
            window_length: DEFAULT_TAU,
            center_offset: DEFAULT_CENTER_OFFSET,
            norm_window: Some(DEFAULT_NORM_WINDOW),
            stride: 1,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Position of `date` in this series, if present.
    pub fn position(&self, date: NaiveDate) -> Option<usize> {
        self.dates.binary_search(&date).ok()
    }

    /// First position whose date is on or after `date`.
    pub fn position_at_or_after(&self, date: NaiveDate) -> Option<usize> {
        let p = self.dates.partition_point(|d| *d < date);
        (p < self.dates.len()).then_some(p)
    }

    /// Last position whose date is on or before `date`.
    pub fn position_at_or_before(&self, date: NaiveDate) -> Option<usize> {
        let p = self.dates.partition_point(|d| *d <= date);
        p.checked_sub(1)
    }

    /// Positions `range` as a new series with the same metadata.
    pub fn slice(&self, range: std::ops::Range<usize>) -> CorrelationSeries {
        CorrelationSeries {
            dates: self.dates[range.clone()].to_vec(),
            values: self.values[range.clone()].to_vec(),
            index: self.index[range].to_vec(),
            ..self.clone()
        }
    }
}

/// Options of [`mean_correlation`].
#[derive(Clone, Copy, Debug)]
pub struct CorrelationOptions {
    pub tau: usize,
    pub center_offset: usize,
    /// Averages over all `K^2` entries instead of the `K(K-1)` off-diagonal ones.
    pub include_diagonal: bool,
}

impl Default for CorrelationOptions {
    fn default() -> Self {
        CorrelationOptions {
            tau: DEFAULT_TAU,
            center_offset: DEFAULT_CENTER_OFFSET,
            include_diagonal: false,
        }
    }
}

/// Rolling mean correlation over windows of `tau` stamps shifted by one day.
pub fn mean_correlation(panel: &ReturnPanel, opts: &CorrelationOptions) -> Result<CorrelationSeries> {
    let tau = opts.tau;
    if tau < 2 {
        return Err(Error::InvalidParameter(format!("window length {tau} must be at least 2")));
    }
    if opts.center_offset >= tau {
        return Err(Error::InvalidParameter(format!(
            "center offset {} outside a window of {tau}",
            opts.center_offset
        )));
    }
    let k = panel.columns.len();
    if k < 2 && !opts.include_diagonal {
        return Err(Error::InvalidParameter(
            "mean pairwise correlation needs at least two tickers".into(),
        ));
    }
    if panel.len() < tau {
        return Err(Error::SeriesTooShort {
            len: panel.len(),
            needed: tau,
        });
    }
    let n_windows = panel.len() - tau + 1;
    let results: Vec<Result<f64>> = (0..n_windows)
        .into_par_iter()
        .map(|start| window_mean_correlation(panel, start, tau, opts.include_diagonal))
        .collect();
    let values = results.into_iter().collect::<Result<Vec<f64>>>()?;
    Ok(CorrelationSeries {
        dates: (0..n_windows)
            .map(|s| panel.dates[s + opts.center_offset])
            .collect(),
        values,
        index: (0..n_windows).collect(),
        window_length: tau,
        center_offset: opts.center_offset,
        norm_window: panel.norm_window,
        stride: 1,
    })
}

fn window_mean_correlation(
    panel: &ReturnPanel,
    start: usize,
    tau: usize,
    include_diagonal: bool,
) -> Result<f64> {
    // With z-scored columns C_ij = <z_i z_j>, so the sum over all pairs is
    // sum_t (sum_i z_it)^2 / tau and the diagonal contributes sum_i <z_i^2>.
    let k = panel.columns.len();
    let mut row_sums = vec![0.0; tau];
    let mut diagonal = 0.0;
    for (col, ticker) in panel.columns.iter().zip(&panel.tickers) {
        let w = &col[start..start + tau];
        let (mean, sd) = moments(w);
        if sd == 0.0 {
            return Err(Error::ZeroVariance {
                ticker: ticker.clone(),
                date: panel.dates[start + tau - 1],
            });
        }
        let mut sq = 0.0;
        for (acc, &r) in row_sums.iter_mut().zip(w) {
            let z = (r - mean) / sd;
            *acc += z;
            sq += z * z;
        }
        diagonal += sq / tau as f64;
    }
    let all: f64 = row_sums.iter().map(|s| s * s).sum::<f64>() / tau as f64;
    let kf = k as f64;
    let value = if include_diagonal {
        all / (kf * kf)
    } else {
        (all - diagonal) / (kf * (kf - 1.0))
    };
    Ok(value.clamp(-1.0, 1.0))
}

// Population mean and standard deviation; sd is 0 for numerically constant input.
fn moments(w: &[f64]) -> (f64, f64) {
    let n = w.len() as f64;
    let mean = w.iter().sum::<f64>() / n;
    let var = w.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n;
    let mean_sq = w.iter().map(|r| r * r).sum::<f64>() / n;
    if var <= RELATIVE_VARIANCE_FLOOR * mean_sq {
        (mean, 0.0)
    } else {
        (mean, var.sqrt())
    }
}

/// Pearson correlation matrix of one window, entry by entry.
pub fn window_correlation_matrix(panel: &ReturnPanel, start: usize, tau: usize) -> Result<Vec<Vec<f64>>> {
    if start + tau > panel.len() {
        return Err(Error::SeriesTooShort {
            len: panel.len(),
            needed: start + tau,
        });
    }
    let stats: Vec<(f64, f64)> = panel
        .columns
        .iter()
        .map(|c| moments(&c[start..start + tau]))
        .collect();
    let k = panel.columns.len();
    let mut out = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in 0..k {
            let (mi, si) = stats[i];
            let (mj, sj) = stats[j];
            if si == 0.0 || sj == 0.0 {
                return Err(Error::ZeroVariance {
                    ticker: panel.tickers[if si == 0.0 { i } else { j }].clone(),
                    date: panel.dates[start + tau - 1],
                });
            }
            let wi = &panel.columns[i][start..start + tau];
            let wj = &panel.columns[j][start..start + tau];
            let cross = wi.iter().zip(wj).map(|(a, b)| a * b).sum::<f64>() / tau as f64;
            out[i][j] = (cross - mi * mj) / (si * sj);
        }
    }
    Ok(out)
}

/// Keeps every `stride`-th point starting with the first.
///
/// # Panics
///
/// If `stride` is zero.
pub fn thin(series: &CorrelationSeries, stride: usize) -> CorrelationSeries {
    assert!(stride >= 1, "thinning stride must be positive");
    let pick = |v: &Vec<_>| v.iter().step_by(stride).cloned().collect();
    CorrelationSeries {
        dates: pick(&series.dates),
        values: series.values.iter().step_by(stride).copied().collect(),
        index: series.index.iter().step_by(stride).copied().collect(),
        stride: series.stride * stride,
        ..series.clone()
    }
}

/// Parameters of the full price-to-correlation pipeline.
#[derive(Clone, Copy, Debug)]
pub struct PipelineOptions {
    pub norm_window: usize,
    pub correlation: CorrelationOptions,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions {
            norm_window: DEFAULT_NORM_WINDOW,
            correlation: CorrelationOptions::default(),
        }
    }
}

/// Returns, local normalization and rolling mean correlation of a clean panel.
pub fn correlation_pipeline(panel: &PricePanel, opts: &PipelineOptions) -> Result<CorrelationSeries> {
    let returns = compute_returns(panel)?;
    let normalized = locally_normalize(&returns, opts.norm_window)?;
    mean_correlation(&normalized, &opts.correlation)
}
