//! CSV emission. Every file has a header row, `,` separators, `.` decimals
//! and LF line endings. Optional values are written as empty fields.

use std::io::Write;

use serde::Serialize;

use crate::analysis::{geometric_pmf, uniform_pmf, CurveRow, IntervalRecord};
use crate::sim::RunOutput;

pub const QUEUE_TRACE_COLUMNS: &[&str] = &["time", "q_bytes", "avg_if_red", "rate_estimate_if_fn"];
pub const DECISION_COLUMNS: &[&str] = &[
    "time",
    "flow",
    "seq",
    "verdict",
    "reason",
    "probability_used",
    "q_bytes",
];
pub const FLOW_COLUMNS: &[&str] = &[
    "flow_id",
    "kind",
    "generated",
    "delivered",
    "dropped",
    "marked",
    "residual",
    "delivered_bytes",
];
pub const INTERVAL_COLUMNS: &[&str] = &["index", "interval"];
pub const SUMMARY_COLUMNS: &[&str] = &[
    "policy",
    "duration_s",
    "utilization",
    "mean_delay_s",
    "mean_queue_bytes",
    "sync_index",
    "generated",
    "delivered",
    "dropped",
    "marked",
    "overflow_drops",
    "early_drops",
    "residual",
];
pub const CURVE_COLUMNS: &[&str] = &["p", "e_geometric", "e_uniform", "difference"];
pub const HISTOGRAM_COLUMNS: &[&str] = &[
    "n",
    "direct_count",
    "direct_freq",
    "geometric_pmf",
    "uniformized_count",
    "uniformized_freq",
    "uniform_pmf",
];

fn writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w)
}

fn write_rows<W: Write, R: Serialize>(
    w: W,
    rows: impl IntoIterator<Item = R>,
) -> Result<(), csv::Error> {
    let mut wtr = writer(w);
    for r in rows {
        wtr.serialize(r)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Writes the header explicitly so empty tables still carry their schema.
fn write_table<W: Write, R: Serialize>(
    w: W,
    columns: &[&str],
    rows: impl IntoIterator<Item = R>,
) -> Result<(), csv::Error> {
    let mut wtr = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .has_headers(false)
        .from_writer(w);
    wtr.write_record(columns)?;
    for r in rows {
        wtr.serialize(r)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_queue_trace<W: Write>(w: W, run: &RunOutput) -> Result<(), csv::Error> {
    write_table(w, QUEUE_TRACE_COLUMNS, &run.queue_trace)
}

pub fn write_decisions<W: Write>(w: W, run: &RunOutput) -> Result<(), csv::Error> {
    write_table(w, DECISION_COLUMNS, &run.decisions)
}

pub fn write_flows<W: Write>(w: W, run: &RunOutput) -> Result<(), csv::Error> {
    write_table(w, FLOW_COLUMNS, &run.flows)
}

pub fn write_intervals<W: Write>(w: W, rec: &IntervalRecord) -> Result<(), csv::Error> {
    write_table(w, INTERVAL_COLUMNS, rec.intervals.iter().enumerate())
}

pub fn write_summary<W: Write>(w: W, run: &RunOutput) -> Result<(), csv::Error> {
    write_rows(w, [&run.summary])
}

#[derive(Serialize)]
struct CurveCsvRow {
    p: f64,
    e_geometric: f64,
    e_uniform: f64,
    difference: f64,
}

pub fn write_curve<W: Write>(w: W, rows: &[CurveRow<f64>]) -> Result<(), csv::Error> {
    write_table(
        w,
        CURVE_COLUMNS,
        rows.iter().map(|r| CurveCsvRow {
            p: r.p,
            e_geometric: r.e_geometric,
            e_uniform: r.e_uniform,
            difference: r.difference(),
        }),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HistogramRow {
    pub n: u64,
    pub direct_count: u64,
    pub direct_freq: f64,
    pub geometric_pmf: f64,
    pub uniformized_count: u64,
    pub uniformized_freq: f64,
    pub uniform_pmf: f64,
}

/// Empirical vs theoretical interval frequencies for both modes, one row per
/// interval value up to the largest observed or supported value.
pub fn histogram_rows(
    p: f64,
    direct: &IntervalRecord,
    uniformized: &IntervalRecord,
) -> Vec<HistogramRow> {
    let hd = direct.histogram();
    let hu = uniformized.histogram();
    let upper = [
        direct.max().unwrap_or(0),
        uniformized.max().unwrap_or(0),
        crate::analysis::uniform_support_len(p),
    ]
    .into_iter()
    .max()
    .unwrap_or(0);
    let freq = |c: u64, rec: &IntervalRecord| {
        if rec.is_empty() {
            0.0
        } else {
            c as f64 / rec.len() as f64
        }
    };
    (1..=upper)
        .map(|n| {
            let dc = hd.get(&n).copied().unwrap_or(0);
            let uc = hu.get(&n).copied().unwrap_or(0);
            HistogramRow {
                n,
                direct_count: dc,
                direct_freq: freq(dc, direct),
                geometric_pmf: geometric_pmf(p, n),
                uniformized_count: uc,
                uniformized_freq: freq(uc, uniformized),
                uniform_pmf: uniform_pmf(p, n),
            }
        })
        .collect()
}

pub fn write_histogram<W: Write>(w: W, rows: &[HistogramRow]) -> Result<(), csv::Error> {
    write_table(w, HISTOGRAM_COLUMNS, rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::expected_time_curve;

    #[test]
    fn curve_csv_layout() {
        let rows = expected_time_curve(&[0.1, 1.0]).unwrap();
        let mut buf = Vec::new();
        write_curve(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "p,e_geometric,e_uniform,difference\n0.1,10.0,10.5,0.5\n1.0,1.0,1.5,0.5\n"
        );
    }

    #[test]
    fn empty_table_keeps_header() {
        let mut buf = Vec::new();
        write_intervals(&mut buf, &IntervalRecord::default()).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "index,interval\n");
    }

    #[test]
    fn histogram_covers_support() {
        let d = IntervalRecord::new(vec![1, 3]).unwrap();
        let u = IntervalRecord::new(vec![2, 2]).unwrap();
        let rows = histogram_rows(0.5, &d, &u);
        assert_eq!(rows.len(), 4);
        assert_eq!(rows[1].uniformized_freq, 1.0);
        assert_eq!(rows[2].direct_count, 1);
        assert_eq!(rows[3].uniform_pmf, 0.25);
        let mut buf = Vec::new();
        write_histogram(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with(&(HISTOGRAM_COLUMNS.join(",") + "\n")));
        assert_eq!(text.lines().count(), 5);
    }
}
