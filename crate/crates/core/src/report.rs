//! Report renderers.
//!
//! Rounding for display happens here and nowhere else; JSON outputs carry
//! full double precision.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::burst::BurstInterval;
use crate::series::SeriesSet;
use crate::trend::{MannKendallResult, TrendReportRow};

pub const TREND_HEADER: [&str; 10] = [
    "topic",
    "n",
    "S",
    "var_s",
    "correction_factor",
    "z",
    "p",
    "slope",
    "trend",
    "hot",
];

pub const BURST_HEADER: [&str; 4] = ["topic", "start_year", "end_year", "weight"];

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("row {row}: {message}")]
    BadRow { row: usize, message: String },
}

fn csv_bytes<F>(header: &[&str], fill: F) -> Vec<u8>
where
    F: FnOnce(&mut csv::Writer<&mut Vec<u8>>) -> csv::Result<()>,
{
    let mut buf = Vec::new();
    {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(&mut buf);
        w.write_record(header).expect("writing to memory");
        fill(&mut w).expect("writing to memory");
        w.flush().expect("writing to memory");
    }
    buf
}

/// Ranked trend table: slope and z to three decimals, p with two
/// significant digits in scientific notation.
pub fn render_trend_table(rows: &[TrendReportRow]) -> Vec<u8> {
    csv_bytes(&TREND_HEADER, |w| {
        for row in rows {
            let r = &row.result;
            w.write_record([
                row.topic.clone(),
                r.n.to_string(),
                r.s.to_string(),
                format!("{:.4}", r.var_s),
                format!("{:.4}", r.correction_factor),
                format!("{:.3}", r.z),
                format!("{:.1e}", r.p),
                format!("{:.3}", r.slope),
                r.trend_class.to_string(),
                row.hot.to_string(),
            ])?;
        }
        Ok(())
    })
}

/// Read back a table written by [`render_trend_table`]. Values carry the
/// displayed precision only.
pub fn parse_trend_table(bytes: &[u8]) -> Result<Vec<TrendReportRow>, ReportError> {
    let mut rdr = csv::Reader::from_reader(bytes);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != TREND_HEADER {
        return Err(ReportError::BadRow {
            row: 0,
            message: format!("unexpected header {header:?}"),
        });
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        let bad = |field: &str| ReportError::BadRow {
            row,
            message: format!("bad {field} value"),
        };
        let num = |idx: usize, field: &str| rec[idx].parse::<f64>().map_err(|_| bad(field));
        out.push(TrendReportRow {
            topic: rec[0].to_string(),
            result: MannKendallResult {
                n: rec[1].parse().map_err(|_| bad("n"))?,
                s: rec[2].parse().map_err(|_| bad("S"))?,
                var_s: num(3, "var_s")?,
                correction_factor: num(4, "correction_factor")?,
                z: num(5, "z")?,
                p: num(6, "p")?,
                slope: num(7, "slope")?,
                trend_class: rec[8].parse().map_err(|_| bad("trend"))?,
            },
            hot: rec[9].parse().map_err(|_| bad("hot"))?,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendReport {
    pub rows: Vec<TrendReportRow>,
    /// Topics whose series were too short to test.
    pub untestable: Vec<String>,
}

pub fn render_trend_json(report: &TrendReport) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(report).expect("trend report serializes");
    out.push(b'\n');
    out
}

/// A burst interval annotated with the topic's mention count inside it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BurstReportRow {
    #[serde(flatten)]
    pub interval: BurstInterval,
    pub occurrences: u64,
}

/// Attach mention totals from `set` to each interval.
pub fn burst_rows(bursts: &[BurstInterval], set: &SeriesSet) -> Vec<BurstReportRow> {
    bursts
        .iter()
        .map(|b| {
            let occurrences = set
                .get(&b.topic)
                .map(|s| {
                    let lo = (b.start_year - set.totals.year_min) as usize;
                    let hi = (b.end_year - set.totals.year_min) as usize;
                    s.occurrences[lo..=hi].iter().sum()
                })
                .unwrap_or(0);
            BurstReportRow {
                interval: b.clone(),
                occurrences,
            }
        })
        .collect()
}

pub fn render_burst_csv(bursts: &[BurstInterval]) -> Vec<u8> {
    csv_bytes(&BURST_HEADER, |w| {
        for b in bursts {
            w.write_record([
                b.topic.clone(),
                b.start_year.to_string(),
                b.end_year.to_string(),
                format!("{:.4}", b.weight),
            ])?;
        }
        Ok(())
    })
}

pub fn render_burst_json(rows: &[BurstReportRow]) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(rows).expect("burst rows serialize");
    out.push(b'\n');
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowOrder {
    /// Earliest burst first, then topic name.
    #[default]
    StartYear,
    /// Heaviest burst first, then topic name.
    Weight,
}

/// Geometry of the burst timeline, in pixels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TimelineLayout {
    pub width: f64,
    /// Minimum canvas height; the canvas grows to fit every row.
    pub height: f64,
    pub margin_left: f64,
    pub margin_right: f64,
    pub margin_top: f64,
    pub margin_bottom: f64,
    pub row_height: f64,
    pub min_thickness: f64,
    pub max_thickness: f64,
    /// Axis bounds; widened when an interval falls outside them.
    pub year_min: Option<i32>,
    pub year_max: Option<i32>,
    pub order: RowOrder,
}

impl Default for TimelineLayout {
    fn default() -> Self {
        TimelineLayout {
            width: 960.0,
            height: 200.0,
            margin_left: 240.0,
            margin_right: 20.0,
            margin_top: 20.0,
            margin_bottom: 40.0,
            row_height: 18.0,
            min_thickness: 2.0,
            max_thickness: 14.0,
            year_min: None,
            year_max: None,
            order: RowOrder::StartYear,
        }
    }
}

impl TimelineLayout {
    pub fn plot_width(&self) -> f64 {
        (self.width - self.margin_left - self.margin_right).max(1.0)
    }

    /// Bar thickness for `weight`, linear between the configured bounds.
    pub fn thickness(&self, weight: f64, max_weight: f64) -> f64 {
        let (lo, hi) = if self.min_thickness <= self.max_thickness {
            (self.min_thickness, self.max_thickness)
        } else {
            (self.max_thickness, self.min_thickness)
        };
        let frac = if max_weight > 0.0 {
            (weight / max_weight).clamp(0.0, 1.0)
        } else {
            1.0
        };
        lo + (hi - lo) * frac
    }
}

/// Linear year axis covering `[year_min, year_max + 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct YearAxis {
    pub year_min: i32,
    pub year_max: i32,
    pub x0: f64,
    pub width: f64,
}

impl YearAxis {
    pub fn x(&self, year: f64) -> f64 {
        let span = (self.year_max + 1 - self.year_min) as f64;
        self.x0 + (year - self.year_min as f64) / span * self.width
    }

    /// Inverse of [`YearAxis::x`].
    pub fn year(&self, x: f64) -> f64 {
        let span = (self.year_max + 1 - self.year_min) as f64;
        self.year_min as f64 + (x - self.x0) / self.width * span
    }
}

fn escape_xml(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

fn timeline_axis(bursts: &[BurstInterval], layout: &TimelineLayout) -> Option<YearAxis> {
    let lo = bursts.iter().map(|b| b.start_year).chain(layout.year_min).min()?;
    let hi = bursts
        .iter()
        .map(|b| b.end_year)
        .chain(layout.year_max)
        .chain(layout.year_min)
        .max()?;
    Some(YearAxis {
        year_min: lo,
        year_max: hi.max(lo),
        x0: layout.margin_left,
        width: layout.plot_width(),
    })
}

fn tick_step(years: i32, width: f64) -> i32 {
    let per_year = width / years.max(1) as f64;
    let mut step = 1;
    for candidate in [1, 2, 5, 10, 20, 50] {
        step = candidate;
        if per_year * candidate as f64 >= 36.0 {
            break;
        }
    }
    step
}

fn write_year_axis(svg: &mut String, axis: &YearAxis, y: f64) {
    let x_end = axis.x0 + axis.width;
    let _ = writeln!(
        svg,
        r##"<line x1="{:.2}" y1="{y:.2}" x2="{x_end:.2}" y2="{y:.2}" stroke="#333" stroke-width="1"/>"##,
        axis.x0
    );
    let step = tick_step(axis.year_max + 1 - axis.year_min, axis.width);
    let mut year = axis.year_min;
    while year <= axis.year_max {
        let x = axis.x(year as f64);
        let _ = writeln!(
            svg,
            r##"<line x1="{x:.2}" y1="{y:.2}" x2="{x:.2}" y2="{:.2}" stroke="#333" stroke-width="1"/>"##,
            y + 5.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{x:.2}" y="{:.2}" font-size="11" text-anchor="start">{year}</text>"#,
            y + 17.0
        );
        year += step;
    }
}

/// Horizontal-bar burst timeline.
///
/// One row per topic; each interval is drawn as exactly one `<rect>`
/// spanning `[start_year, end_year + 1)` on the axis, with thickness
/// proportional to its weight relative to the heaviest interval.
pub fn render_timeline_svg(bursts: &[BurstInterval], layout: &TimelineLayout) -> String {
    let mut rows: BTreeMap<&str, Vec<&BurstInterval>> = BTreeMap::new();
    for b in bursts {
        rows.entry(b.topic.as_str()).or_default().push(b);
    }
    let mut rows: Vec<(&str, Vec<&BurstInterval>)> = rows.into_iter().collect();
    match layout.order {
        RowOrder::StartYear => rows.sort_by(|a, b| {
            let sa = a.1.iter().map(|i| i.start_year).min();
            let sb = b.1.iter().map(|i| i.start_year).min();
            sa.cmp(&sb).then(a.0.cmp(b.0))
        }),
        RowOrder::Weight => rows.sort_by(|a, b| {
            let wa = a.1.iter().map(|i| i.weight).fold(f64::MIN, f64::max);
            let wb = b.1.iter().map(|i| i.weight).fold(f64::MIN, f64::max);
            wb.total_cmp(&wa).then(a.0.cmp(b.0))
        }),
    }
    let max_weight = bursts.iter().map(|b| b.weight).fold(0.0, f64::max);
    let plot_height = rows.len() as f64 * layout.row_height;
    let height = (layout.margin_top + plot_height + layout.margin_bottom).max(layout.height);
    let axis_y = layout.margin_top + plot_height;

    let mut svg = String::new();
    let _ = writeln!(svg, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{w:.0}" height="{height:.0}" viewBox="0 0 {w:.0} {height:.0}" font-family="sans-serif">"#,
        w = layout.width
    );
    if let Some(axis) = timeline_axis(bursts, layout) {
        for (i, (topic, intervals)) in rows.iter().enumerate() {
            let row_top = layout.margin_top + i as f64 * layout.row_height;
            let mid = row_top + layout.row_height / 2.0;
            let _ = writeln!(
                svg,
                r#"<text x="{:.2}" y="{:.2}" font-size="11" text-anchor="end">{}</text>"#,
                layout.margin_left - 6.0,
                mid + 4.0,
                escape_xml(topic)
            );
            for b in intervals {
                let x = axis.x(b.start_year as f64);
                let w = axis.x((b.end_year + 1) as f64) - x;
                let t = layout.thickness(b.weight, max_weight);
                let _ = writeln!(
                    svg,
                    r##"<rect x="{x:.2}" y="{:.2}" width="{w:.2}" height="{t:.2}" fill="#c0392b"><title>{} {}-{} weight {:.2}</title></rect>"##,
                    mid - t / 2.0,
                    escape_xml(topic),
                    b.start_year,
                    b.end_year,
                    b.weight
                );
            }
        }
        write_year_axis(&mut svg, &axis, axis_y);
    } else {
        let _ = writeln!(
            svg,
            r##"<line x1="{:.2}" y1="{axis_y:.2}" x2="{:.2}" y2="{axis_y:.2}" stroke="#333" stroke-width="1"/>"##,
            layout.margin_left,
            layout.margin_left + layout.plot_width()
        );
    }
    svg.push_str("</svg>\n");
    svg
}

const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf",
];

/// Line chart of yearly document counts for the named topics (annual or
/// cumulative). Unknown topic names are skipped.
pub fn render_series_svg(set: &SeriesSet, topics: &[&str], cumulative: bool, width: f64, height: f64) -> String {
    let (ml, mr, mt, mb) = (50.0, 220.0, 20.0, 40.0);
    let plot_w = (width - ml - mr).max(1.0);
    let plot_h = (height - mt - mb).max(1.0);
    let lines: Vec<(&str, Vec<u64>)> = topics
        .iter()
        .filter_map(|t| set.get(t))
        .map(|s| {
            let values = if cumulative {
                s.cumulative_counts()
            } else {
                s.counts.clone()
            };
            (s.topic.as_str(), values)
        })
        .collect();
    let y_max = lines.iter().flat_map(|(_, v)| v.iter().copied()).max().unwrap_or(0).max(1) as f64;
    let n = set.totals.len();
    let x = |i: usize| {
        if n <= 1 {
            ml + plot_w / 2.0
        } else {
            ml + i as f64 / (n - 1) as f64 * plot_w
        }
    };
    let y = |v: u64| mt + plot_h - v as f64 / y_max * plot_h;

    let mut svg = String::new();
    let _ = writeln!(svg, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}" font-family="sans-serif">"#
    );
    let _ = writeln!(
        svg,
        r##"<line x1="{ml:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#333"/>"##,
        mt + plot_h,
        ml + plot_w,
        mt + plot_h
    );
    let _ = writeln!(
        svg,
        r##"<line x1="{ml:.2}" y1="{mt:.2}" x2="{ml:.2}" y2="{:.2}" stroke="#333"/>"##,
        mt + plot_h
    );
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" font-size="11" text-anchor="end">{}</text>"#,
        ml - 6.0,
        mt + 4.0,
        y_max as u64
    );
    let step = tick_step(n as i32, plot_w).max(1) as usize;
    for i in (0..n).step_by(step) {
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" font-size="11" text-anchor="middle">{}</text>"#,
            x(i),
            mt + plot_h + 16.0,
            set.totals.year_at(i)
        );
    }
    for (k, (topic, values)) in lines.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let points: Vec<String> = values
            .iter()
            .enumerate()
            .map(|(i, &v)| format!("{:.2},{:.2}", x(i), y(v)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            points.join(" ")
        );
        let ly = mt + 12.0 + k as f64 * 16.0;
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{ly:.2}" font-size="11" fill="{color}">{}</text>"#,
            ml + plot_w + 10.0,
            escape_xml(topic)
        );
    }
    svg.push_str("</svg>\n");
    svg
}
