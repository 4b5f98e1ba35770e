use std::collections::BTreeMap;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{Cadence, ClientDay, GroupKey, Grouping};
use crate::dates::{iso_week_start, DateRange};
use crate::num::Scalar;
use crate::stats::{mean, median, population_variance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum VarianceScope {
    /// Variance across group medians within one period.
    AcrossGroups,
    /// Variance across one group's daily medians within one period.
    WithinGroup,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VariancePoint<T> {
    pub period_start: NaiveDate,
    pub variance: T,
    /// variance / mean², zero when the mean is zero
    pub relative_variance: T,
    pub mean: T,
    /// Groups (across) or reporting days (within) that contributed.
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceSeries<T> {
    pub scope: VarianceScope,
    pub cadence: Cadence,
    pub points: Vec<VariancePoint<T>>,
}

impl<T: Scalar> VarianceSeries<T> {
    pub fn values(&self) -> Vec<(NaiveDate, T)> {
        self.points.iter().map(|p| (p.period_start, p.variance)).collect()
    }
}

fn variance_point<T: Scalar>(period_start: NaiveDate, values: &[T]) -> VariancePoint<T> {
    let m = mean(values).expect("non-empty");
    let variance = population_variance(values).expect("non-empty");
    let relative_variance = if m > T::zero() { variance / (m * m) } else { T::zero() };
    VariancePoint { period_start, variance, relative_variance, mean: m, n: values.len() }
}

/// Population variance of per-group median throughput, one point per period.
/// Periods with fewer than two reporting groups are gaps.
pub fn cross_group_variance<T: Scalar>(
    days: &[ClientDay<T>],
    period: DateRange,
    cadence: Cadence,
    grouping: Grouping,
) -> VarianceSeries<T> {
    let mut cells: BTreeMap<NaiveDate, BTreeMap<GroupKey, Vec<T>>> = BTreeMap::new();
    for d in days.iter().filter(|d| period.contains(d.date)) {
        cells
            .entry(cadence.period_of(d.date))
            .or_default()
            .entry(grouping.key_of(&d.attribution))
            .or_default()
            .push(d.throughput());
    }
    let points = cells
        .into_iter()
        .filter(|(_, groups)| groups.len() >= 2)
        .map(|(start, groups)| {
            let medians: Vec<T> = groups.values().map(|v| median(v).expect("non-empty")).collect();
            variance_point(start, &medians)
        })
        .collect();
    VarianceSeries { scope: VarianceScope::AcrossGroups, cadence, points }
}

/// Day-over-day variance of one group's daily medians, per ISO week.
/// Weeks with fewer than two reporting days are gaps.
pub fn within_group_variance<T: Scalar>(
    days: &[ClientDay<T>],
    key: &GroupKey,
    period: DateRange,
) -> VarianceSeries<T> {
    let mut cells: BTreeMap<NaiveDate, BTreeMap<NaiveDate, Vec<T>>> = BTreeMap::new();
    for d in days.iter().filter(|d| period.contains(d.date) && key.matches(&d.attribution)) {
        cells
            .entry(iso_week_start(d.date))
            .or_default()
            .entry(d.date)
            .or_default()
            .push(d.throughput());
    }
    let points = cells
        .into_iter()
        .filter(|(_, by_day)| by_day.len() >= 2)
        .map(|(start, by_day)| {
            let medians: Vec<T> = by_day.values().map(|v| median(v).expect("non-empty")).collect();
            variance_point(start, &medians)
        })
        .collect();
    VarianceSeries { scope: VarianceScope::WithinGroup, cadence: Cadence::Weekly, points }
}
