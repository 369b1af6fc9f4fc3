//! Daily price panels: loading, coverage filtering and gap interpolation.

use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDate;

use crate::error::{Error, Result};

/// Default minimum fraction of trading days a ticker must be quoted on.
pub const DEFAULT_MIN_COVERAGE: f64 = 0.995;

pub(crate) const DATE_FORMAT: &str = "%Y-%m-%d";

/// Dated per-ticker daily prices. Entries are `None` where the raw data has a gap.
#[derive(Clone, Debug, PartialEq)]
pub struct PricePanel {
    dates: Vec<NaiveDate>,
    tickers: Vec<String>,
    // One column per ticker, indexed by date.
    columns: Vec<Vec<Option<f64>>>,
}

impl PricePanel {
    /// Builds a panel from per-ticker columns. Rows are sorted by date.
    pub fn from_columns(
        dates: Vec<NaiveDate>,
        tickers: Vec<String>,
        columns: Vec<Vec<Option<f64>>>,
    ) -> Result<Self> {
        if tickers.len() != columns.len() {
            return Err(Error::InvalidParameter(format!(
                "{} tickers but {} columns",
                tickers.len(),
                columns.len()
            )));
        }
        if let Some(bad) = columns.iter().position(|c| c.len() != dates.len()) {
            return Err(Error::InvalidParameter(format!(
                "column {} has {} entries for {} dates",
                tickers[bad],
                columns[bad].len(),
                dates.len()
            )));
        }
        let mut order: Vec<usize> = (0..dates.len()).collect();
        order.sort_by_key(|&i| dates[i]);
        if let Some(w) = order.windows(2).find(|w| dates[w[0]] == dates[w[1]]) {
            return Err(Error::DuplicateDate(dates[w[0]]));
        }
        let sorted_dates = order.iter().map(|&i| dates[i]).collect();
        let columns = columns
            .into_iter()
            .map(|c| order.iter().map(|&i| c[i]).collect())
            .collect();
        Ok(PricePanel {
            dates: sorted_dates,
            tickers,
            columns,
        })
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn tickers(&self) -> &[String] {
        &self.tickers
    }

    pub fn column(&self, ticker: usize) -> &[Option<f64>] {
        &self.columns[ticker]
    }

    pub fn columns(&self) -> &[Vec<Option<f64>>] {
        &self.columns
    }

    pub fn get(&self, date: usize, ticker: usize) -> Option<f64> {
        self.columns[ticker][date]
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn missing_count(&self) -> usize {
        self.columns.iter().flatten().filter(|v| v.is_none()).count()
    }

    pub fn is_complete(&self) -> bool {
        self.missing_count() == 0
    }

    /// Fraction of dates on which the ticker has a price.
    pub fn coverage(&self, ticker: usize) -> f64 {
        if self.dates.is_empty() {
            return 0.0;
        }
        let present = self.columns[ticker].iter().filter(|v| v.is_some()).count();
        present as f64 / self.dates.len() as f64
    }

    /// Keeps only the rows with `start <= date <= end`.
    pub fn restrict(&self, start: Option<NaiveDate>, end: Option<NaiveDate>) -> PricePanel {
        let keep: Vec<usize> = (0..self.dates.len())
            .filter(|&i| {
                let d = self.dates[i];
                start.map_or(true, |s| d >= s) && end.map_or(true, |e| d <= e)
            })
            .collect();
        PricePanel {
            dates: keep.iter().map(|&i| self.dates[i]).collect(),
            tickers: self.tickers.clone(),
            columns: self
                .columns
                .iter()
                .map(|c| keep.iter().map(|&i| c[i]).collect())
                .collect(),
        }
    }

    /// Complete columns as plain prices; `None` if any entry is missing.
    pub fn dense_columns(&self) -> Option<Vec<Vec<f64>>> {
        self.columns
            .iter()
            .map(|c| c.iter().copied().collect::<Option<Vec<f64>>>())
            .collect()
    }
}

/// Reads a `date,<ticker>...` CSV; empty cells are missing prices.
pub fn load_price_csv(path: impl AsRef<Path>) -> Result<PricePanel> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_price_csv(file, path)
}

pub fn read_price_csv<R: Read>(reader: R, path: &Path) -> Result<PricePanel> {
    let csv_err = |e: csv::Error| Error::Csv {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr.headers().map_err(csv_err)?.clone();
    if header.len() < 2 {
        return Err(Error::Csv {
            path: path.to_path_buf(),
            message: "expected a date column and at least one ticker".into(),
        });
    }
    let tickers: Vec<String> = header.iter().skip(1).map(str::to_owned).collect();
    let mut dates = Vec::new();
    let mut columns: Vec<Vec<Option<f64>>> = vec![Vec::new(); tickers.len()];
    for (line, record) in rdr.records().enumerate() {
        let record = record.map_err(csv_err)?;
        let raw_date = record.get(0).unwrap_or_default();
        let date = NaiveDate::parse_from_str(raw_date, DATE_FORMAT).map_err(|_| Error::BadDate {
            value: raw_date.to_owned(),
            line: line + 2,
        })?;
        for (k, column) in columns.iter_mut().enumerate() {
            let cell = record.get(k + 1).unwrap_or_default();
            let value = if cell.is_empty() {
                None
            } else {
                let v: f64 = cell.parse().map_err(|_| Error::BadNumber {
                    value: cell.to_owned(),
                    ticker: tickers[k].clone(),
                    date,
                })?;
                if !v.is_finite() {
                    return Err(Error::BadNumber {
                        value: cell.to_owned(),
                        ticker: tickers[k].clone(),
                        date,
                    });
                }
                Some(v)
            };
            column.push(value);
        }
        dates.push(date);
    }
    PricePanel::from_columns(dates, tickers, columns)
}

/// Writes the panel in the same layout `load_price_csv` reads.
pub fn write_price_csv<W: Write>(panel: &PricePanel, writer: W) -> std::io::Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = vec!["date".to_owned()];
    header.extend(panel.tickers.iter().cloned());
    wtr.write_record(&header)?;
    for (i, date) in panel.dates.iter().enumerate() {
        let mut row = vec![date.format(DATE_FORMAT).to_string()];
        row.extend(
            panel
                .columns
                .iter()
                .map(|c| c[i].map(|v| format!("{v}")).unwrap_or_default()),
        );
        wtr.write_record(&row)?;
    }
    wtr.flush()
}

/// Keeps the tickers whose share of quoted days reaches `min_fraction`.
pub fn filter_coverage(panel: &PricePanel, min_fraction: f64) -> Result<PricePanel> {
    if !(0.0..=1.0).contains(&min_fraction) {
        return Err(Error::InvalidParameter(format!(
            "coverage threshold {min_fraction} outside [0, 1]"
        )));
    }
    let keep: Vec<usize> = (0..panel.tickers.len())
        .filter(|&k| panel.coverage(k) >= min_fraction)
        .collect();
    if keep.is_empty() {
        return Err(Error::NoTickerQualifies {
            threshold: min_fraction,
        });
    }
    Ok(PricePanel {
        dates: panel.dates.clone(),
        tickers: keep.iter().map(|&k| panel.tickers[k].clone()).collect(),
        columns: keep.iter().map(|&k| panel.columns[k].clone()).collect(),
    })
}

/// Fills gaps by linear interpolation over the trading-day index. Leading
/// and trailing gaps take the nearest observed price.
pub fn interpolate_missing(panel: &PricePanel) -> Result<PricePanel> {
    let columns = panel
        .columns
        .iter()
        .zip(&panel.tickers)
        .map(|(col, ticker)| interpolate_column(col, ticker))
        .collect::<Result<Vec<_>>>()?;
    Ok(PricePanel {
        dates: panel.dates.clone(),
        tickers: panel.tickers.clone(),
        columns,
    })
}

fn interpolate_column(col: &[Option<f64>], ticker: &str) -> Result<Vec<Option<f64>>> {
    let observed: Vec<usize> = (0..col.len()).filter(|&i| col[i].is_some()).collect();
    if observed.len() < 2 {
        return Err(Error::TooFewObservations {
            ticker: ticker.to_owned(),
            observed: observed.len(),
        });
    }
    let mut out = col.to_vec();
    let first = observed[0];
    let last = *observed.last().expect("two observations");
    for v in &mut out[..first] {
        *v = col[first];
    }
    for v in &mut out[last + 1..] {
        *v = col[last];
    }
    for pair in observed.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        if b == a + 1 {
            continue;
        }
        let (pa, pb) = (col[a].expect("observed"), col[b].expect("observed"));
        let span = (b - a) as f64;
        for (i, v) in out.iter_mut().enumerate().take(b).skip(a + 1) {
            let frac = (i - a) as f64 / span;
            *v = Some(pa + (pb - pa) * frac);
        }
    }
    Ok(out)
}
