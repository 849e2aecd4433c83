//! Markdown and CSV renderings of evaluation tables.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use super::eval::{CurveTable, ErrorTable, ANGLE_BINS};
use super::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Markdown,
    Csv,
}

impl FromStr for ReportFormat {
    type Err = HarnessError;
    fn from_str(s: &str) -> Result<Self, HarnessError> {
        match s {
            "markdown" | "md" => Ok(Self::Markdown),
            "csv" => Ok(Self::Csv),
            other => Err(HarnessError::InvalidConfig(format!("unknown report format {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Report {
    pub points: Option<ErrorTable>,
    pub curves: Option<CurveTable>,
}

fn mm(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |v| format!("{v:.2}"))
}

fn bin_label(edge: f64) -> String {
    format!("≤{edge}°")
}

pub fn render_markdown(report: &Report) -> String {
    let mut s = String::new();
    if let Some(t) = &report.points {
        s.push_str("## Point correspondence error (mm, mean / median)\n\n| Query | Method |");
        for e in ANGLE_BINS {
            let _ = write!(s, " {} |", bin_label(e));
        }
        s.push_str("\n|---|---|");
        s.push_str(&"---|".repeat(ANGLE_BINS.len()));
        s.push('\n');
        for row in &t.rows {
            let _ = write!(s, "| {} | {} |", row.kind.as_str(), row.method.label());
            for c in &row.cells {
                let _ = write!(s, " {} / {} |", mm(c.mean), mm(c.median));
            }
            s.push('\n');
        }
        let _ = writeln!(s, "\nQueries: {}. Refined queries answered by P2P for lack of waypoint context: {}.\n", t.queries, t.fallbacks);
    }
    if let Some(t) = &report.curves {
        s.push_str("## Waypoint size (mm)\n\n| Metric |");
        for c in &t.columns {
            let _ = write!(s, " {} points |", c.n);
        }
        s.push_str("\n|---|");
        s.push_str(&"---|".repeat(t.columns.len()));
        s.push('\n');
        for (ri, name) in CurveTable::ROWS.iter().enumerate() {
            let _ = write!(s, "| {name} |");
            for ci in 0..t.columns.len() {
                let _ = write!(s, " {} |", mm(t.value(ri, ci)));
            }
            s.push('\n');
        }
        let _ = write!(s, "| Folded curves |");
        for c in &t.columns {
            let _ = write!(s, " {} of {} |", c.folded, c.waypoints);
        }
        s.push('\n');
    }
    s
}

/// One record per table cell: `section,row,column,count,mean,median`.
pub fn render_csv(report: &Report) -> Result<String, HarnessError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["section", "row", "column", "count", "mean", "median"])?;
    let opt = |v: Option<f64>| v.map_or_else(String::new, |v| format!("{v:.2}"));
    if let Some(t) = &report.points {
        for row in &t.rows {
            for (c, e) in row.cells.iter().zip(ANGLE_BINS) {
                w.write_record([
                    "points".to_string(),
                    format!("{}/{}", row.kind.as_str(), row.method.label()),
                    format!("<={e}"),
                    c.count.to_string(),
                    opt(c.mean),
                    opt(c.median),
                ])?;
            }
        }
    }
    if let Some(t) = &report.curves {
        for (ri, name) in CurveTable::ROWS.iter().enumerate() {
            for (ci, c) in t.columns.iter().enumerate() {
                w.write_record([
                    "curves".to_string(),
                    name.to_string(),
                    c.n.to_string(),
                    c.waypoints.to_string(),
                    opt(t.value(ri, ci)),
                    String::new(),
                ])?;
            }
        }
    }
    let bytes = w.into_inner().map_err(|e| HarnessError::InvalidConfig(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is built from UTF-8 strings"))
}

pub fn emit_report(report: &Report, path: &Path, format: ReportFormat) -> Result<(), HarnessError> {
    let text = match format {
        ReportFormat::Markdown => render_markdown(report),
        ReportFormat::Csv => render_csv(report)?,
    };
    fs::write(path, text).map_err(|e| HarnessError::Io { path: path.to_path_buf(), source: e })
}
