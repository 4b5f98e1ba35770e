use std::collections::{BTreeMap, BTreeSet};
use std::net::Ipv4Addr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{ClientDay, GroupKey, Grouping};
use crate::dates::iso_week_start;
use crate::num::Scalar;
use crate::stats::{mean, median};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Cadence {
    Daily,
    Weekly,
}

impl Cadence {
    pub fn days(&self) -> i64 {
        match self {
            Cadence::Daily => 1,
            Cadence::Weekly => 7,
        }
    }

    /// Period start containing `d`.
    pub fn period_of(&self, d: NaiveDate) -> NaiveDate {
        match self {
            Cadence::Daily => d,
            Cadence::Weekly => iso_week_start(d),
        }
    }
}

/// Minimum and mean of one ISO week's daily throughput medians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeeklyStats<T> {
    pub min_throughput: T,
    pub min_date: NaiveDate,
    pub mean_throughput: T,
    pub days_reporting: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint<T> {
    pub date: NaiveDate,
    /// bits per second
    pub throughput: T,
    pub avg_rtt: Option<T>,
    pub min_rtt: Option<T>,
    pub loss_congestion: Option<T>,
    pub loss_retrans: Option<T>,
    pub net_limited: Option<T>,
    /// Distinct clients for daily points; client-days for weekly points.
    pub client_count: usize,
    pub weekly: Option<WeeklyStats<T>>,
}

/// Dated medians for one grouping key. Dates strictly increase; days without
/// data are absent rather than zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateSeries<T> {
    pub key: GroupKey,
    pub cadence: Cadence,
    pub points: Vec<SeriesPoint<T>>,
}

impl<T: Scalar> AggregateSeries<T> {
    pub fn throughput(&self) -> Vec<(NaiveDate, T)> {
        self.points.iter().map(|p| (p.date, p.throughput)).collect()
    }

    pub fn get(&self, date: NaiveDate) -> Option<&SeriesPoint<T>> {
        self.points
            .binary_search_by_key(&date, |p| p.date)
            .ok()
            .map(|i| &self.points[i])
    }
}

fn median_of<T: Scalar>(vals: impl Iterator<Item = Option<T>>) -> Option<T> {
    let v: Vec<T> = vals.flatten().collect();
    median(&v)
}

fn point_from_days<T: Scalar>(date: NaiveDate, days: &[&ClientDay<T>]) -> SeriesPoint<T> {
    let clients: BTreeSet<Ipv4Addr> = days.iter().map(|d| d.client_addr).collect();
    let tput: Vec<T> = days.iter().map(|d| d.throughput()).collect();
    SeriesPoint {
        date,
        throughput: median(&tput).expect("non-empty day"),
        avg_rtt: median_of(days.iter().map(|d| d.chosen.avg_rtt)),
        min_rtt: median_of(days.iter().map(|d| d.chosen.min_rtt)),
        loss_congestion: median_of(days.iter().map(|d| d.chosen.loss_congestion)),
        loss_retrans: median_of(days.iter().map(|d| d.chosen.loss_retrans)),
        net_limited: median_of(days.iter().map(|d| d.chosen.net_limited_ratio)),
        client_count: clients.len(),
        weekly: None,
    }
}

/// Daily medians over an arbitrary selection of ClientDays, labeled `key`.
pub fn median_series_of<'a, T, I>(days: I, key: GroupKey) -> AggregateSeries<T>
where
    T: Scalar,
    I: IntoIterator<Item = &'a ClientDay<T>>,
{
    let mut by_date: BTreeMap<NaiveDate, Vec<&ClientDay<T>>> = BTreeMap::new();
    for d in days {
        by_date.entry(d.date).or_default().push(d);
    }
    let points = by_date.iter().map(|(date, ds)| point_from_days(*date, ds)).collect();
    AggregateSeries { key, cadence: Cadence::Daily, points }
}

/// Per-date median over the ClientDays attributed to `key`, each metric
/// independently, skipping absent values.
pub fn daily_median<T: Scalar>(days: &[ClientDay<T>], key: &GroupKey) -> AggregateSeries<T> {
    median_series_of(days.iter().filter(|d| key.matches(&d.attribution)), key.clone())
}

/// One daily series per group present in `days`, ordered by key.
pub fn daily_medians_by<T: Scalar>(days: &[ClientDay<T>], grouping: Grouping) -> Vec<AggregateSeries<T>> {
    let mut groups: BTreeMap<GroupKey, Vec<&ClientDay<T>>> = BTreeMap::new();
    for d in days {
        groups.entry(grouping.key_of(&d.attribution)).or_default().push(d);
    }
    groups
        .into_iter()
        .map(|(k, ds)| median_series_of(ds, k))
        .collect()
}

/// Rolls a daily series up to ISO weeks (Monday start). Each metric becomes
/// the median of the week's daily medians; throughput minimum and mean are
/// kept in [`WeeklyStats`]. Weeks without data emit no point.
pub fn weekly_rollup<T: Scalar>(series: &AggregateSeries<T>) -> AggregateSeries<T> {
    let mut weeks: BTreeMap<NaiveDate, Vec<&SeriesPoint<T>>> = BTreeMap::new();
    for p in &series.points {
        weeks.entry(iso_week_start(p.date)).or_default().push(p);
    }
    let points = weeks
        .into_iter()
        .map(|(monday, ps)| {
            let tput: Vec<T> = ps.iter().map(|p| p.throughput).collect();
            let (min_date, min_throughput) = ps
                .iter()
                .map(|p| (p.date, p.throughput))
                .fold(None::<(NaiveDate, T)>, |acc, (d, v)| match acc {
                    Some((_, best)) if best <= v => acc,
                    _ => Some((d, v)),
                })
                .expect("non-empty week");
            SeriesPoint {
                date: monday,
                throughput: median(&tput).expect("non-empty week"),
                avg_rtt: median_of(ps.iter().map(|p| p.avg_rtt)),
                min_rtt: median_of(ps.iter().map(|p| p.min_rtt)),
                loss_congestion: median_of(ps.iter().map(|p| p.loss_congestion)),
                loss_retrans: median_of(ps.iter().map(|p| p.loss_retrans)),
                net_limited: median_of(ps.iter().map(|p| p.net_limited)),
                client_count: ps.iter().map(|p| p.client_count).sum(),
                weekly: Some(WeeklyStats {
                    min_throughput,
                    min_date,
                    mean_throughput: mean(&tput).expect("non-empty week"),
                    days_reporting: ps.len(),
                }),
            }
        })
        .collect();
    AggregateSeries { key: series.key.clone(), cadence: Cadence::Weekly, points }
}
