//! Per-client-per-day deduplication and the comparative series built on it:
//! daily and weekly medians per grouping, cross-group variance and diurnal
//! profiles.

mod diurnal;
mod series;
mod variance;

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::net::Ipv4Addr;

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};

use crate::attribution::{Attribution, Ipv4Cidr};
use crate::metrics::DerivedMetrics;
use crate::num::Scalar;

pub use diurnal::{diurnal_profile, DiurnalProfile, HourBucket};
pub use series::{daily_median, daily_medians_by, median_series_of, weekly_rollup, AggregateSeries, Cadence, SeriesPoint, WeeklyStats};
pub use variance::{cross_group_variance, within_group_variance, VariancePoint, VarianceScope, VarianceSeries};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AggregateError {
    #[error("UTC offset {0} minutes outside [-720, 840]")]
    OffsetOutOfRange(i32),
}

/// How ClientDays are grouped into a series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Grouping {
    Country,
    Asn,
    Prefix,
}

impl Grouping {
    pub fn key_of(&self, a: &Attribution) -> GroupKey {
        match self {
            Grouping::Country => GroupKey::Country(a.country.clone()),
            Grouping::Asn => GroupKey::Asn(a.asn),
            Grouping::Prefix => GroupKey::Prefix(a.prefix),
        }
    }
}

/// Identifier of one aggregate series.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum GroupKey {
    Country(String),
    Asn(u32),
    Prefix(Ipv4Cidr),
    /// A named set of groups, e.g. a high-percentile control cohort.
    Cohort(String),
}

impl GroupKey {
    pub fn matches(&self, a: &Attribution) -> bool {
        match self {
            GroupKey::Country(c) => &a.country == c,
            GroupKey::Asn(n) => a.asn == *n,
            GroupKey::Prefix(p) => a.prefix == *p,
            GroupKey::Cohort(_) => false,
        }
    }
}

impl fmt::Display for GroupKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GroupKey::Country(c) => write!(f, "{c}"),
            GroupKey::Asn(n) => write!(f, "AS{n}"),
            GroupKey::Prefix(p) => write!(f, "{p}"),
            GroupKey::Cohort(name) => write!(f, "cohort:{name}"),
        }
    }
}

/// One valid test with its derived metrics and attribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributedTest<T> {
    pub client_addr: Ipv4Addr,
    pub timestamp: DateTime<Utc>,
    pub metrics: DerivedMetrics<T>,
    pub attribution: Attribution,
}

/// The most performant test of one client on one UTC date.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientDay<T> {
    pub client_addr: Ipv4Addr,
    pub date: NaiveDate,
    pub chosen: DerivedMetrics<T>,
    pub chosen_timestamp: DateTime<Utc>,
    pub attribution: Attribution,
    pub n_tests: usize,
}

impl<T: Scalar> ClientDay<T> {
    /// Throughput of the chosen test; always present by construction.
    pub fn throughput(&self) -> T {
        self.chosen.throughput.unwrap_or_else(T::zero)
    }
}

fn cmp_opt<T: Scalar>(a: Option<T>, b: Option<T>) -> Ordering {
    // present values first, ascending
    match (a, b) {
        (Some(x), Some(y)) => x.partial_cmp(&y).unwrap_or(Ordering::Equal),
        (Some(_), None) => Ordering::Less,
        (None, Some(_)) => Ordering::Greater,
        (None, None) => Ordering::Equal,
    }
}

/// Preference order: higher throughput, then earlier timestamp, then lower
/// average RTT. Remaining fields only make the order total so the choice
/// never depends on input order.
fn preferred<T: Scalar>(a: &AttributedTest<T>, b: &AttributedTest<T>) -> Ordering {
    cmp_opt(b.metrics.throughput, a.metrics.throughput)
        .then(a.timestamp.cmp(&b.timestamp))
        .then(cmp_opt(a.metrics.avg_rtt, b.metrics.avg_rtt))
        .then(cmp_opt(a.metrics.min_rtt, b.metrics.min_rtt))
        .then(cmp_opt(a.metrics.max_rtt, b.metrics.max_rtt))
        .then(cmp_opt(a.metrics.loss_congestion, b.metrics.loss_congestion))
        .then(cmp_opt(a.metrics.loss_retrans, b.metrics.loss_retrans))
        .then(cmp_opt(a.metrics.net_limited_ratio, b.metrics.net_limited_ratio))
        .then(cmp_opt(a.metrics.duration, b.metrics.duration))
}

/// Keeps one test per (client, UTC date): the one with maximal throughput.
///
/// Tests without a throughput value are ignored. Output is sorted by
/// `(date, client_addr)`.
pub fn best_per_client_day<'a, T, I>(tests: I) -> Vec<ClientDay<T>>
where
    T: Scalar,
    I: IntoIterator<Item = &'a AttributedTest<T>>,
{
    let mut best: BTreeMap<(NaiveDate, Ipv4Addr), (&AttributedTest<T>, usize)> = BTreeMap::new();
    for t in tests {
        if t.metrics.throughput.is_none() {
            continue;
        }
        let key = (t.timestamp.date_naive(), t.client_addr);
        best.entry(key)
            .and_modify(|(cur, n)| {
                *n += 1;
                if preferred(t, cur) == Ordering::Less {
                    *cur = t;
                }
            })
            .or_insert((t, 1));
    }
    best.into_iter()
        .map(|((date, client_addr), (t, n))| ClientDay {
            client_addr,
            date,
            chosen: t.metrics,
            chosen_timestamp: t.timestamp,
            attribution: t.attribution.clone(),
            n_tests: n,
        })
        .collect()
}
