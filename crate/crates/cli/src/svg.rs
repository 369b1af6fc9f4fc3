//! Minimal self-contained SVG: series with fit band on top, change-point
//! densities below, both over the grid position.

use std::fmt::Write as _;

use chrono::NaiveDate;
use trendscan::{MarginalPdf, SegmentFit};

const WIDTH: f64 = 900.0;
const PANEL: f64 = 260.0;
const MARGIN: f64 = 50.0;
const COLORS: [&str; 6] = ["#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf"];

struct Axis {
    lo: f64,
    hi: f64,
    top: f64,
}

impl Axis {
    fn new(values: impl Iterator<Item = f64>, top: f64) -> Axis {
        let (mut lo, mut hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        if !lo.is_finite() || !hi.is_finite() {
            (lo, hi) = (0.0, 1.0);
        }
        if hi - lo < 1e-12 {
            lo -= 0.5;
            hi += 0.5;
        }
        Axis { lo, hi, top }
    }

    fn y(&self, v: f64) -> f64 {
        self.top + PANEL * (1.0 - (v - self.lo) / (self.hi - self.lo))
    }
}

fn x(i: usize, n: usize) -> f64 {
    MARGIN + (WIDTH - 2.0 * MARGIN) * i as f64 / (n.max(2) - 1) as f64
}

fn polyline(out: &mut String, points: impl Iterator<Item = (f64, f64)>, style: &str) {
    let pts: Vec<String> = points.map(|(a, b)| format!("{a:.2},{b:.2}")).collect();
    let _ = writeln!(out, r#"<polyline fill="none" {style} points="{}"/>"#, pts.join(" "));
}

fn frame(out: &mut String, axis: &Axis, label: &str) {
    let _ = writeln!(
        out,
        r##"<rect x="{MARGIN}" y="{}" width="{}" height="{PANEL}" fill="none" stroke="#999"/>"##,
        axis.top,
        WIDTH - 2.0 * MARGIN
    );
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" font-size="11">{label}  [{:.4}, {:.4}]</text>"#,
        MARGIN,
        axis.top - 6.0,
        axis.lo,
        axis.hi
    );
}

pub fn plot(title: &str, dates: &[NaiveDate], values: &[f64], fit: Option<&SegmentFit>, marginals: &[MarginalPdf]) -> String {
    let n = values.len();
    let height = 2.0 * PANEL + 3.0 * MARGIN;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}" font-family="sans-serif">"#
    );
    let _ = writeln!(out, r#"<text x="{MARGIN}" y="20" font-size="14">{title}</text>"#);

    let (lower, upper) = fit.map_or((Vec::new(), Vec::new()), |f| (f.lower(), f.upper()));
    let top = Axis::new(values.iter().chain(&lower).chain(&upper).copied(), MARGIN);
    frame(&mut out, &top, "series");
    if fit.is_some() {
        let mut band: Vec<String> = (0..n).map(|i| format!("{:.2},{:.2}", x(i, n), top.y(upper[i]))).collect();
        band.extend((0..n).rev().map(|i| format!("{:.2},{:.2}", x(i, n), top.y(lower[i]))));
        let _ = writeln!(out, r##"<polygon fill="#1f77b4" fill-opacity="0.2" stroke="none" points="{}"/>"##, band.join(" "));
    }
    polyline(&mut out, (0..n).map(|i| (x(i, n), top.y(values[i]))), r##"stroke="#333" stroke-width="1""##);
    if let Some(f) = fit {
        polyline(&mut out, (0..n).map(|i| (x(i, n), top.y(f.mean[i]))), r##"stroke="#1f77b4" stroke-width="2""##);
    }

    let bottom = Axis::new(marginals.iter().flat_map(|m| m.mass.iter().copied()).chain([0.0]), 2.0 * MARGIN + PANEL);
    frame(&mut out, &bottom, "change-point densities");
    for (k, m) in marginals.iter().enumerate() {
        let style = format!(r#"stroke="{}" stroke-width="1.5""#, COLORS[k % COLORS.len()]);
        polyline(&mut out, (0..n).map(|i| (x(i, n), bottom.y(m.mass[i]))), &style);
    }

    if let (Some(first), Some(last)) = (dates.first(), dates.last()) {
        let y = height - MARGIN / 2.0;
        let _ = writeln!(out, r#"<text x="{MARGIN}" y="{y}" font-size="11">{first}</text>"#);
        let _ = writeln!(out, r#"<text x="{}" y="{y}" font-size="11" text-anchor="end">{last}</text>"#, WIDTH - MARGIN);
    }
    out.push_str("</svg>\n");
    out
}
