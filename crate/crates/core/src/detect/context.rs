use std::io::BufRead;

use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};

use super::DetectError;
use crate::aggregate::AggregateSeries;
use crate::num::Scalar;

/// Days on each side of the labeled date forming its week.
const WEEK_HALF_SPAN: i64 = 3;
/// Days on each side of the labeled date forming the two-month baseline.
const TWO_MONTH_HALF_SPAN: i64 = 30;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledDate {
    pub date: NaiveDate,
    pub label: Option<String>,
}

/// Reads `YYYY-MM-DD[,label]` lines; blank lines and `#` comments are skipped.
pub fn parse_labeled_dates<R: BufRead>(reader: R) -> Result<Vec<LabeledDate>, DetectError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| DetectError::BadLabeledDate { line: i + 1, message: e.to_string() })?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (date, label) = match line.split_once(',') {
            Some((d, l)) => (d.trim(), Some(l.trim().to_string()).filter(|l| !l.is_empty())),
            None => (line, None),
        };
        let date = NaiveDate::parse_from_str(date, "%Y-%m-%d")
            .map_err(|e| DetectError::BadLabeledDate { line: i + 1, message: format!("{date:?}: {e}") })?;
        out.push(LabeledDate { date, label });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ContextStatus {
    Ok,
    NoData,
}

/// Day-of, week and two-month context around one labeled date.
/// Throughput values are bits per second.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextRow {
    pub event: LabeledDate,
    pub status: ContextStatus,
    pub day_of: Option<f64>,
    pub week_min: Option<f64>,
    pub week_min_date: Option<NaiveDate>,
    /// `(week_min - two_month) / two_month * 100`
    pub week_min_deviation_pct: Option<f64>,
    pub week_mean: Option<f64>,
    pub two_month_mean: Option<f64>,
}

impl ContextRow {
    fn no_data(event: LabeledDate) -> Self {
        Self {
            event,
            status: ContextStatus::NoData,
            day_of: None,
            week_min: None,
            week_min_date: None,
            week_min_deviation_pct: None,
            week_mean: None,
            two_month_mean: None,
        }
    }
}

/// One correlation row per labeled date against a national daily series.
///
/// The week is the labeled date ±3 days and the two-month baseline ±30
/// days. Dates outside the series or whose week has no data are `NO_DATA`.
pub fn event_context<T: Scalar>(series: &AggregateSeries<T>, dates: &[LabeledDate]) -> Vec<ContextRow> {
    let values: Vec<(NaiveDate, f64)> = series.points.iter().map(|p| (p.date, p.throughput.as_f64())).collect();
    let (first, last) = match (values.first(), values.last()) {
        (Some(f), Some(l)) => (f.0, l.0),
        _ => return dates.iter().cloned().map(ContextRow::no_data).collect(),
    };
    let window = |d: NaiveDate, half: i64| -> Vec<(NaiveDate, f64)> {
        let (lo, hi) = (d - Duration::days(half), d + Duration::days(half));
        values.iter().copied().filter(|(x, _)| *x >= lo && *x <= hi).collect()
    };
    let mean = |v: &[(NaiveDate, f64)]| v.iter().map(|x| x.1).sum::<f64>() / v.len() as f64;

    dates
        .iter()
        .cloned()
        .map(|event| {
            let d = event.date;
            if d < first || d > last {
                return ContextRow::no_data(event);
            }
            let week = window(d, WEEK_HALF_SPAN);
            if week.is_empty() {
                return ContextRow::no_data(event);
            }
            let (min_date, week_min) = week
                .iter()
                .copied()
                .fold(None::<(NaiveDate, f64)>, |acc, (x, v)| match acc {
                    Some((_, best)) if best <= v => acc,
                    _ => Some((x, v)),
                })
                .expect("non-empty week");
            let two_month = window(d, TWO_MONTH_HALF_SPAN);
            let two_month_mean = mean(&two_month);
            let deviation = (two_month_mean > 0.0).then(|| (week_min - two_month_mean) / two_month_mean * 100.0);
            ContextRow {
                day_of: values.iter().find(|(x, _)| *x == d).map(|x| x.1),
                week_min: Some(week_min),
                week_min_date: Some(min_date),
                week_min_deviation_pct: deviation,
                week_mean: Some(mean(&week)),
                two_month_mean: Some(two_month_mean),
                status: ContextStatus::Ok,
                event,
            }
        })
        .collect()
}
