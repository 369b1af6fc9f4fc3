//! Adaptive re-analysis of growing segments and the sensitivity horizon:
//! how many trading days after an onset the change-point density needs
//! before its global maximum settles near that onset.

use chrono::NaiveDate;
use serde::Serialize;

use crate::cpcore::{
    marginal_pdfs, posterior, segment_fit, AnalysisGrid, CpPosterior, Enumeration, MarginalPdf,
    SegmentFit,
};
use crate::error::{Error, Result};
use crate::preprocess::CorrelationSeries;

pub const DEFAULT_SEGMENT_STRIDE: usize = 10;
pub const DEFAULT_TOLERANCE_DAYS: usize = 100;
pub const DEFAULT_ONLINE_CPS: usize = 1;

/// A date range of a source series, thinned with a stride anchored at its start.
#[derive(Clone, Copy, Debug)]
pub struct SegmentSpec<'a> {
    source: &'a CorrelationSeries,
    start: NaiveDate,
    end: NaiveDate,
    stride: usize,
}

impl<'a> SegmentSpec<'a> {
    pub fn new(
        source: &'a CorrelationSeries,
        start: NaiveDate,
        end: NaiveDate,
        stride: usize,
    ) -> Result<Self> {
        if stride == 0 {
            return Err(Error::InvalidParameter("segment stride must be positive".into()));
        }
        if start >= end {
            return Err(Error::InvalidSegment(format!("start {start} is not before end {end}")));
        }
        let (first, last) = match (source.dates.first(), source.dates.last()) {
            (Some(f), Some(l)) => (*f, *l),
            _ => return Err(Error::InvalidSegment("empty source series".into())),
        };
        for d in [start, end] {
            if d < first || d > last {
                return Err(Error::DateOutOfRange(d));
            }
        }
        Ok(SegmentSpec {
            source,
            start,
            end,
            stride,
        })
    }

    pub fn source(&self) -> &'a CorrelationSeries {
        self.source
    }

    pub fn start(&self) -> NaiveDate {
        self.start
    }

    pub fn end(&self) -> NaiveDate {
        self.end
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    /// Source positions of the thinned segment stamps.
    pub fn positions(&self) -> Vec<usize> {
        let (Some(first), Some(last)) = (
            self.source.position_at_or_after(self.start),
            self.source.position_at_or_before(self.end),
        ) else {
            return Vec::new();
        };
        if first > last {
            return Vec::new();
        }
        (first..=last).step_by(self.stride).collect()
    }

    /// The thinned segment as a series.
    pub fn series(&self) -> CorrelationSeries {
        let pos = self.positions();
        CorrelationSeries {
            dates: pos.iter().map(|&p| self.source.dates[p]).collect(),
            values: pos.iter().map(|&p| self.source.values[p]).collect(),
            index: pos.iter().map(|&p| self.source.index[p]).collect(),
            stride: self.source.stride * self.stride,
            ..self.source.clone()
        }
    }

    /// Analysis grid timed in trading days of the unthinned source.
    pub fn grid(&self) -> Result<AnalysisGrid> {
        series_grid(&self.series())
    }
}

/// Analysis grid of a series, with its trading-day positions as times.
pub fn series_grid(series: &CorrelationSeries) -> Result<AnalysisGrid> {
    AnalysisGrid::new(
        series.index.iter().map(|&i| i as f64).collect(),
        series.values.clone(),
    )
}

/// Posterior, marginals and fit of one segment.
#[derive(Clone, Debug)]
pub struct SegmentAnalysis {
    pub series: CorrelationSeries,
    pub posterior: CpPosterior,
    pub marginals: Vec<MarginalPdf>,
    pub fit: SegmentFit,
}

pub fn analyze_segment(
    spec: &SegmentSpec<'_>,
    m: usize,
    band_multiplier: f64,
    opts: &Enumeration,
) -> Result<SegmentAnalysis> {
    let series = spec.series();
    if series.len() < m + 5 {
        return Err(Error::SeriesTooShort {
            len: series.len(),
            needed: m + 5,
        });
    }
    let grid = series_grid(&series)?;
    let post = posterior(&grid, m, opts)?;
    let marginals = marginal_pdfs(&post, opts);
    let fit = segment_fit(&post, grid.times(), band_multiplier, opts)?;
    Ok(SegmentAnalysis {
        series,
        posterior: post,
        marginals,
        fit,
    })
}

/// Extends the segment to `new_end`, keeping the thinning anchored at its start.
pub fn update_series<'a>(spec: &SegmentSpec<'a>, new_end: NaiveDate) -> Result<SegmentSpec<'a>> {
    if new_end <= spec.end {
        return Err(Error::InvalidSegment(format!(
            "new end {new_end} is not later than {}",
            spec.end
        )));
    }
    SegmentSpec::new(spec.source, spec.start, new_end, spec.stride)
}

/// Global maximum of the first change point's marginal after one cut.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TraceRow {
    pub cut_date: NaiveDate,
    pub map_date: NaiveDate,
    pub map_mass: f64,
    /// Trading days between the maximum and the onset (signed).
    pub offset_days: i64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SensitivityResult {
    pub onset: NaiveDate,
    /// Earliest segment end whose density peak lies within tolerance.
    pub detection_cut: Option<NaiveDate>,
    /// Trading days from onset to the detection cut.
    pub horizon_days: Option<usize>,
    pub map_location: Option<NaiveDate>,
}

impl SensitivityResult {
    pub fn detected(&self) -> bool {
        self.detection_cut.is_some()
    }
}

#[derive(Clone, Debug)]
pub struct SensitivityScan {
    pub result: SensitivityResult,
    pub trace: Vec<TraceRow>,
}

/// Parameters of [`sensitivity_horizon`].
#[derive(Clone, Copy, Debug)]
pub struct HorizonSearch {
    pub m: usize,
    pub tolerance_days: usize,
    pub stride: usize,
}

impl Default for HorizonSearch {
    fn default() -> Self {
        HorizonSearch {
            m: DEFAULT_ONLINE_CPS,
            tolerance_days: DEFAULT_TOLERANCE_DAYS,
            stride: DEFAULT_SEGMENT_STRIDE,
        }
    }
}

/// Scans segment ends from the onset forward along the thinned grid and
/// stops at the first whose first-CP density peaks within the tolerance of
/// the onset. Not meeting the criterion is a result, not an error.
pub fn sensitivity_horizon(
    source: &CorrelationSeries,
    start: NaiveDate,
    onset: NaiveDate,
    search: &HorizonSearch,
    opts: &Enumeration,
) -> Result<SensitivityScan> {
    if search.m == 0 {
        return Err(Error::InvalidParameter(
            "the horizon search needs at least one change point".into(),
        ));
    }
    let last = *source
        .dates
        .last()
        .ok_or_else(|| Error::InvalidSegment("empty source series".into()))?;
    if !(start < onset && onset < last) {
        return Err(Error::InvalidSegment(format!(
            "need start < onset < series end, got {start}, {onset}, {last}"
        )));
    }
    let full = SegmentSpec::new(source, start, last, search.stride)?;
    let positions = full.positions();
    let onset_pos = source
        .position_at_or_after(onset)
        .ok_or(Error::DateOutOfRange(onset))?;
    let onset_day = source.index[onset_pos] as i64;

    let mut trace = Vec::new();
    for cut in 0..positions.len() {
        if positions[cut] < onset_pos || cut + 1 < search.m + 3 {
            continue;
        }
        let kept = &positions[..=cut];
        let grid = AnalysisGrid::new(
            kept.iter().map(|&p| source.index[p] as f64).collect(),
            kept.iter().map(|&p| source.values[p]).collect(),
        )?;
        let post = posterior(&grid, search.m, opts)?;
        let first = marginal_pdfs(&post, opts).swap_remove(0);
        let peak = first.argmax();
        let peak_pos = kept[peak];
        let offset = source.index[peak_pos] as i64 - onset_day;
        let row = TraceRow {
            cut_date: source.dates[positions[cut]],
            map_date: source.dates[peak_pos],
            map_mass: first.mass[peak],
            offset_days: offset,
        };
        let hit = offset.unsigned_abs() as usize <= search.tolerance_days;
        trace.push(row);
        if hit {
            let cut_pos = positions[cut];
            return Ok(SensitivityScan {
                result: SensitivityResult {
                    onset,
                    detection_cut: Some(source.dates[cut_pos]),
                    horizon_days: Some((source.index[cut_pos] as i64 - onset_day) as usize),
                    map_location: Some(source.dates[peak_pos]),
                },
                trace,
            });
        }
    }
    Ok(SensitivityScan {
        result: SensitivityResult {
            onset,
            detection_cut: None,
            horizon_days: None,
            map_location: None,
        },
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::Days;

    fn series(values: Vec<f64>) -> CorrelationSeries {
        let start = NaiveDate::from_ymd_opt(1999, 1, 1).unwrap();
        let dates = (0..values.len()).map(|i| start + Days::new(i as u64)).collect();
        CorrelationSeries::from_values(dates, values).unwrap()
    }

    fn day(s: &CorrelationSeries, i: usize) -> NaiveDate {
        s.dates[i]
    }

    #[test]
    fn spec_validation() {
        let s = series(vec![0.0; 30]);
        assert!(SegmentSpec::new(&s, day(&s, 5), day(&s, 5), 1).is_err());
        assert!(SegmentSpec::new(&s, day(&s, 0), day(&s, 29) + Days::new(1), 1).is_err());
        assert!(SegmentSpec::new(&s, day(&s, 0), day(&s, 10), 0).is_err());
        let spec = SegmentSpec::new(&s, day(&s, 2), day(&s, 10), 3).unwrap();
        assert_eq!(spec.positions(), vec![2, 5, 8]);
    }

    #[test]
    fn update_keeps_anchor() {
        let s = series((0..60).map(|i| i as f64).collect());
        let spec = SegmentSpec::new(&s, day(&s, 3), day(&s, 20), 4).unwrap();
        assert!(update_series(&spec, day(&s, 20)).is_err());
        assert!(update_series(&spec, day(&s, 59) + Days::new(3)).is_err());
        let longer = update_series(&spec, day(&s, 41)).unwrap();
        let old = spec.positions();
        let new = longer.positions();
        assert_eq!(&new[..old.len()], &old[..]);
        assert!(new.len() > old.len());
    }

    #[test]
    fn segment_too_short() {
        let s = series((0..30).map(|i| (i as f64).sin()).collect());
        let spec = SegmentSpec::new(&s, day(&s, 0), day(&s, 4), 1).unwrap();
        assert!(matches!(
            analyze_segment(&spec, 1, 3.0, &Enumeration::default()),
            Err(Error::SeriesTooShort { .. })
        ));
    }

    #[test]
    fn horizon_argument_checks() {
        let s = series((0..30).map(|i| (i as f64).sin()).collect());
        let search = HorizonSearch::default();
        let opts = Enumeration::default();
        assert!(sensitivity_horizon(&s, day(&s, 10), day(&s, 5), &search, &opts).is_err());
        assert!(sensitivity_horizon(&s, day(&s, 0), day(&s, 29), &search, &opts).is_err());
        let zero = HorizonSearch { m: 0, ..search };
        assert!(sensitivity_horizon(&s, day(&s, 0), day(&s, 10), &zero, &opts).is_err());
    }
}
