//! Artifact emitters: fixed-precision CSV tables, atomic file writes and the
//! merged JSON summary.
//!
//! Throughput columns are Mbit/s, RTT columns milliseconds, variance columns
//! (Mbit/s)^2. Absent values are empty cells.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use serde_json::{json, Map, Value};

use crate::aggregate::{AggregateSeries, DiurnalProfile, VarianceSeries};
use crate::cohort::{CohortRanking, RecoveryTable};
use crate::detect::ContextRow;

/// Writes through a sibling temp file and renames it into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> io::Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "path has no file name"))?;
    let tmp = path.with_file_name(format!(".{}.tmp", name.to_string_lossy()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}

fn fixed(v: Option<f64>, places: usize) -> String {
    match v {
        Some(x) if x.is_finite() => format!("{x:.places$}"),
        _ => String::new(),
    }
}

fn mbps(v: Option<f64>) -> String {
    fixed(v.map(|x| x / 1e6), 6)
}

fn ratio(v: Option<f64>) -> String {
    fixed(v, 6)
}

fn pct(v: Option<f64>) -> String {
    fixed(v, 2)
}

/// The serialized name of a unit enum variant.
pub fn label<S: serde::Serialize>(v: &S) -> String {
    match serde_json::to_value(v) {
        Ok(Value::String(s)) => s,
        _ => String::new(),
    }
}

fn to_csv(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for row in rows {
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 cells")
}

pub const DAILY_HEADER: [&str; 9] = [
    "key",
    "date",
    "throughput_mbps",
    "avg_rtt_ms",
    "min_rtt_ms",
    "loss_congestion",
    "loss_retrans",
    "net_limited",
    "client_count",
];

fn point_cells(key: String, p: &crate::aggregate::SeriesPoint<f64>) -> Vec<String> {
    vec![
        key,
        p.date.to_string(),
        mbps(Some(p.throughput)),
        fixed(p.avg_rtt, 3),
        fixed(p.min_rtt, 3),
        ratio(p.loss_congestion),
        ratio(p.loss_retrans),
        ratio(p.net_limited),
        p.client_count.to_string(),
    ]
}

pub fn series_csv(series: &[AggregateSeries<f64>]) -> String {
    to_csv(
        &DAILY_HEADER,
        series.iter().flat_map(|s| s.points.iter().map(|p| point_cells(s.key.to_string(), p))),
    )
}

pub fn weekly_csv(series: &[AggregateSeries<f64>]) -> String {
    let mut header = DAILY_HEADER.to_vec();
    header[1] = "week_start";
    header.extend(["week_min_mbps", "week_min_date", "week_mean_mbps", "days_reporting"]);
    to_csv(
        &header,
        series.iter().flat_map(|s| {
            s.points.iter().map(|p| {
                let mut cells = point_cells(s.key.to_string(), p);
                match &p.weekly {
                    Some(w) => cells.extend([
                        mbps(Some(w.min_throughput)),
                        w.min_date.to_string(),
                        mbps(Some(w.mean_throughput)),
                        w.days_reporting.to_string(),
                    ]),
                    None => cells.extend(std::iter::repeat_n(String::new(), 4)),
                }
                cells
            })
        }),
    )
}

pub fn variance_csv(series: &[VarianceSeries<f64>]) -> String {
    to_csv(
        &["scope", "cadence", "period_start", "variance_mbps2", "relative_variance", "mean_mbps", "n"],
        series.iter().flat_map(|s| {
            let (sc, ca) = (label(&s.scope), label(&s.cadence));
            s.points.iter().map(move |p| {
                vec![
                    sc.clone(),
                    ca.clone(),
                    p.period_start.to_string(),
                    fixed(Some(p.variance / 1e12), 6),
                    ratio(Some(p.relative_variance)),
                    mbps(Some(p.mean)),
                    p.n.to_string(),
                ]
            })
        }),
    )
}

pub fn diurnal_csv(profile: &DiurnalProfile<f64>) -> String {
    to_csv(
        &["local_hour", "median_throughput_mbps", "tests"],
        profile
            .buckets
            .iter()
            .map(|b| vec![b.hour.to_string(), mbps(b.median_throughput), b.tests.to_string()]),
    )
}

/// The five-column event table, Mbit/s to two places.
pub fn correlation_csv(rows: &[ContextRow]) -> String {
    let m2 = |v: Option<f64>| fixed(v.map(|x| x / 1e6), 2);
    to_csv(
        &[
            "date",
            "label",
            "status",
            "day_of_mbps",
            "week_min_mbps",
            "week_min_date",
            "week_min_deviation_pct",
            "week_mean_mbps",
            "two_month_mean_mbps",
        ],
        rows.iter().map(|r| {
            vec![
                r.event.date.to_string(),
                r.event.label.clone().unwrap_or_default(),
                label(&r.status),
                m2(r.day_of),
                m2(r.week_min),
                r.week_min_date.map(|d| d.to_string()).unwrap_or_default(),
                fixed(r.week_min_deviation_pct, 1),
                m2(r.week_mean),
                m2(r.two_month_mean),
            ]
        }),
    )
}

pub fn cohort_csv(ranking: &CohortRanking<f64>) -> String {
    to_csv(
        &["rank", "group", "owner", "clients_above_cutoff"],
        ranking
            .members
            .iter()
            .enumerate()
            .map(|(i, m)| vec![(i + 1).to_string(), m.group.to_string(), m.owner.clone(), m.clients.to_string()]),
    )
}

pub fn recovery_csv(table: &RecoveryTable<f64>) -> String {
    to_csv(
        &["group", "owner", "baseline_mbps", "delta_after_pct", "delta_plus2_pct", "delta_plus10_pct", "delta_event2_pct"],
        table.rows.iter().map(|r| {
            vec![
                r.group.to_string(),
                r.owner.clone(),
                mbps(Some(r.baseline_mean)),
                pct(r.delta_after),
                pct(r.delta_plus2),
                pct(r.delta_plus10),
                pct(r.delta_event2),
            ]
        }),
    )
}

pub fn excluded_csv(table: &RecoveryTable<f64>) -> String {
    to_csv(
        &["group", "owner", "failed_criterion"],
        table.excluded.iter().map(|e| vec![e.group.to_string(), e.owner.clone(), e.failed.clone()]),
    )
}

pub fn comparative_csv(cohort: &AggregateSeries<f64>, national: &AggregateSeries<f64>) -> String {
    let mut dates: Vec<_> = cohort.points.iter().chain(&national.points).map(|p| p.date).collect();
    dates.sort_unstable();
    dates.dedup();
    to_csv(
        &["date", "cohort_mbps", "cohort_clients", "national_mbps", "national_clients"],
        dates.into_iter().map(|d| {
            let c = cohort.get(d);
            let n = national.get(d);
            vec![
                d.to_string(),
                mbps(c.map(|p| p.throughput)),
                c.map(|p| p.client_count.to_string()).unwrap_or_default(),
                mbps(n.map(|p| p.throughput)),
                n.map(|p| p.client_count.to_string()).unwrap_or_default(),
            ]
        }),
    )
}

fn cell_value(cell: &str) -> Value {
    if cell.is_empty() {
        return Value::Null;
    }
    match cell.parse::<f64>() {
        Ok(x) if x.is_finite() => json!(x),
        _ => Value::String(cell.to_string()),
    }
}

/// A CSV table as `{"columns": [...], "rows": [[...], ...]}` with numeric
/// cells as numbers and empty cells as null.
pub fn csv_to_json(text: &str) -> Result<Value, csv::Error> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let columns: Vec<Value> = r.headers()?.iter().map(|h| Value::String(h.to_string())).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        rows.push(Value::Array(rec?.iter().map(cell_value).collect()));
    }
    Ok(json!({ "columns": columns, "rows": rows }))
}

/// Rounds every non-integer number in `v` to `places` decimals.
pub fn round_floats(v: &mut Value, places: i32) {
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = n.as_f64().expect("f64 number");
            let scale = 10f64.powi(places);
            if let Some(r) = serde_json::Number::from_f64((x * scale).round() / scale) {
                *n = r;
            }
        }
        Value::Array(items) => items.iter_mut().for_each(|x| round_floats(x, places)),
        Value::Object(map) => map.values_mut().for_each(|x| round_floats(x, places)),
        _ => {}
    }
}

pub const SUMMARY_FILE: &str = "summary.json";

/// Merges every `*.csv` and `*.json` artifact in `dir` (except a previous
/// summary) into one document keyed by file name.
pub fn summarize(dir: &Path) -> io::Result<Value> {
    let mut names: Vec<String> = fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .filter(|e| e.file_type().map(|t| t.is_file()).unwrap_or(false))
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| !n.starts_with('.') && n != SUMMARY_FILE && (n.ends_with(".csv") || n.ends_with(".json")))
        .collect();
    names.sort();
    let mut artifacts = Map::new();
    for name in names {
        let text = fs::read_to_string(dir.join(&name))?;
        let value = if name.ends_with(".csv") {
            csv_to_json(&text).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, format!("{name}: {e}")))?
        } else {
            serde_json::from_str(&text).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, format!("{name}: {e}")))?
        };
        artifacts.insert(name, value);
    }
    Ok(json!({ "artifacts": artifacts }))
}
