//! Control-group analysis: high-percentile network cohorts, cohort versus
//! national series, and per-network recovery after a throttling event.

use std::collections::{BTreeMap, BTreeSet};
use std::net::Ipv4Addr;

use chrono::{Months, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::aggregate::{median_series_of, AggregateSeries, ClientDay, GroupKey, Grouping};
use crate::dates::DateRange;
use crate::num::Scalar;
use crate::stats::{mean, median, percent_change, percentile};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CohortError {
    #[error("invalid cohort spec: {0}")]
    InvalidSpec(String),
    #[error("cohort is empty")]
    EmptyCohort,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CohortSpec {
    pub period: DateRange,
    pub percentile: f64,
    pub grouping: Grouping,
    /// Fraction of a window's days a group must report on to qualify.
    pub min_presence: f64,
}

impl CohortSpec {
    pub fn new(period: DateRange, grouping: Grouping) -> Self {
        Self { period, percentile: 0.95, grouping, min_presence: 0.5 }
    }

    pub fn validate(&self) -> Result<(), CohortError> {
        if !(self.percentile > 0.0 && self.percentile < 1.0) {
            return Err(CohortError::InvalidSpec(format!("percentile {} not in (0, 1)", self.percentile)));
        }
        if !(self.min_presence > 0.0 && self.min_presence <= 1.0) {
            return Err(CohortError::InvalidSpec(format!("min_presence {} not in (0, 1]", self.min_presence)));
        }
        if self.grouping == Grouping::Country {
            return Err(CohortError::InvalidSpec("cohorts group by asn or prefix".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortMember {
    pub group: GroupKey,
    pub owner: String,
    /// Distinct clients with at least one ClientDay strictly above the cutoff.
    pub clients: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortRanking<T> {
    /// National percentile cutoff, bits per second; `None` for an empty period.
    pub cutoff: Option<T>,
    pub members: Vec<CohortMember>,
}

impl<T> Default for CohortRanking<T> {
    fn default() -> Self {
        Self { cutoff: None, members: Vec::new() }
    }
}

impl<T> CohortRanking<T> {
    pub fn groups(&self) -> Vec<GroupKey> {
        self.members.iter().map(|m| m.group.clone()).collect()
    }
}

/// Ranks groups by how many of their clients exceeded the national
/// throughput percentile during `spec.period`.
pub fn top_percentile_networks<T: Scalar>(days: &[ClientDay<T>], spec: &CohortSpec) -> Result<CohortRanking<T>, CohortError> {
    spec.validate()?;
    let in_period: Vec<&ClientDay<T>> = days.iter().filter(|d| spec.period.contains(d.date)).collect();
    let tput: Vec<T> = in_period.iter().map(|d| d.throughput()).collect();
    let Some(cutoff) = percentile(&tput, T::lit(spec.percentile)) else {
        return Ok(CohortRanking { cutoff: None, members: Vec::new() });
    };
    let mut clients: BTreeMap<GroupKey, (String, BTreeSet<Ipv4Addr>)> = BTreeMap::new();
    for d in in_period.iter().filter(|d| d.throughput() > cutoff) {
        clients
            .entry(spec.grouping.key_of(&d.attribution))
            .or_insert_with(|| (d.attribution.owner.clone(), BTreeSet::new()))
            .1
            .insert(d.client_addr);
    }
    let mut members: Vec<CohortMember> = clients
        .into_iter()
        .map(|(group, (owner, set))| CohortMember { group, owner, clients: set.len() })
        .collect();
    // stable sort keeps key order among equal counts
    members.sort_by_key(|m| std::cmp::Reverse(m.clients));
    Ok(CohortRanking { cutoff: Some(cutoff), members })
}

/// Daily median of the cohort's ClientDays alongside the national daily
/// median, both restricted to `range`.
pub fn comparative_series<T: Scalar>(
    cohort: &[GroupKey],
    days: &[ClientDay<T>],
    range: DateRange,
    cohort_name: &str,
    national: GroupKey,
) -> Result<(AggregateSeries<T>, AggregateSeries<T>), CohortError> {
    if cohort.is_empty() {
        return Err(CohortError::EmptyCohort);
    }
    let in_range: Vec<&ClientDay<T>> = days.iter().filter(|d| range.contains(d.date)).collect();
    let cohort_series = median_series_of(
        in_range.iter().copied().filter(|d| cohort.iter().any(|k| k.matches(&d.attribution))),
        GroupKey::Cohort(cohort_name.to_string()),
    );
    let national_series = median_series_of(in_range.iter().copied(), national);
    Ok((cohort_series, national_series))
}

/// Baseline used for the second-event column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Event2Baseline {
    /// The same pre-event baseline as the other columns.
    Shared,
    /// A fresh window of the baseline's length ending the day before the
    /// second event.
    Fresh,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecoveryWindows {
    pub baseline: DateRange,
    pub after: DateRange,
    pub plus2: DateRange,
    pub plus10: DateRange,
    pub event2: Option<DateRange>,
    pub event2_baseline: Event2Baseline,
}

fn months_range(start: NaiveDate, from: u32, to: u32) -> DateRange {
    let a = start + Months::new(from);
    let b = start + Months::new(to) - chrono::Duration::days(1);
    DateRange { start: a, end: b }
}

impl RecoveryWindows {
    /// Two months before `event_start` as baseline; the two months after,
    /// months 2-5 and months 8-11 after as recovery windows; the two months
    /// from `event2_start` for the second event.
    pub fn around(event_start: NaiveDate, event2_start: Option<NaiveDate>) -> Self {
        Self {
            baseline: DateRange { start: event_start - Months::new(2), end: event_start - chrono::Duration::days(1) },
            after: months_range(event_start, 0, 2),
            plus2: months_range(event_start, 2, 5),
            plus10: months_range(event_start, 8, 11),
            event2: event2_start.map(|s| months_range(s, 0, 2)),
            event2_baseline: Event2Baseline::Fresh,
        }
    }

    pub fn event2_baseline_range(&self) -> Option<DateRange> {
        let e2 = self.event2?;
        Some(match self.event2_baseline {
            Event2Baseline::Shared => self.baseline,
            Event2Baseline::Fresh => DateRange::preceding(e2.start, self.baseline.days()),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryRow<T> {
    pub group: GroupKey,
    pub owner: String,
    /// Mean of daily medians over the baseline window, bits per second.
    pub baseline_mean: T,
    pub delta_after: Option<T>,
    pub delta_plus2: Option<T>,
    pub delta_plus10: Option<T>,
    pub delta_event2: Option<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcludedGroup {
    pub group: GroupKey,
    pub owner: String,
    pub failed: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryTable<T> {
    pub windows: RecoveryWindows,
    pub rows: Vec<RecoveryRow<T>>,
    pub excluded: Vec<ExcludedGroup>,
}

struct GroupDays<T> {
    owner: String,
    // date -> throughputs of that day's ClientDays
    by_date: BTreeMap<NaiveDate, Vec<T>>,
}

impl<T: Scalar> GroupDays<T> {
    fn medians_in(&self, w: DateRange) -> Vec<T> {
        self.by_date
            .range(w.start..=w.end)
            .map(|(_, v)| median(v).expect("non-empty"))
            .collect()
    }

    fn presence(&self, w: DateRange) -> f64 {
        self.by_date.range(w.start..=w.end).count() as f64 / w.days() as f64
    }
}

/// Percent change of each group's windowed mean of daily medians against
/// its baseline mean. Groups must report on at least `min_presence` of the
/// baseline and of the after-window days to get a row.
pub fn recovery_table<T: Scalar>(
    days: &[ClientDay<T>],
    windows: &RecoveryWindows,
    spec: &CohortSpec,
) -> Result<RecoveryTable<T>, CohortError> {
    spec.validate()?;
    let mut groups: BTreeMap<GroupKey, GroupDays<T>> = BTreeMap::new();
    for d in days {
        groups
            .entry(spec.grouping.key_of(&d.attribution))
            .or_insert_with(|| GroupDays { owner: d.attribution.owner.clone(), by_date: BTreeMap::new() })
            .by_date
            .entry(d.date)
            .or_default()
            .push(d.throughput());
    }

    let mut rows = Vec::new();
    let mut excluded = Vec::new();
    for (group, g) in groups {
        let base_presence = g.presence(windows.baseline);
        let after_presence = g.presence(windows.after);
        let failed = if base_presence < spec.min_presence {
            Some(format!("baseline presence {base_presence:.2} < {:.2}", spec.min_presence))
        } else if after_presence < spec.min_presence {
            Some(format!("after-window presence {after_presence:.2} < {:.2}", spec.min_presence))
        } else {
            None
        };
        if let Some(failed) = failed {
            excluded.push(ExcludedGroup { group, owner: g.owner, failed });
            continue;
        }
        let baseline_mean = mean(&g.medians_in(windows.baseline)).expect("qualified baseline has data");
        let delta = |w: DateRange, base: T| mean(&g.medians_in(w)).and_then(|m| percent_change(m, base));
        let delta_event2 = match (windows.event2, windows.event2_baseline_range()) {
            (Some(e2), Some(b2)) => mean(&g.medians_in(b2)).and_then(|b| delta(e2, b)),
            _ => None,
        };
        rows.push(RecoveryRow {
            delta_after: delta(windows.after, baseline_mean),
            delta_plus2: delta(windows.plus2, baseline_mean),
            delta_plus10: delta(windows.plus10, baseline_mean),
            delta_event2,
            baseline_mean,
            owner: g.owner,
            group,
        });
    }
    Ok(RecoveryTable { windows: *windows, rows, excluded })
}
