use chrono::{Duration, Timelike};
use serde::{Deserialize, Serialize};

use super::{AggregateError, AttributedTest};
use crate::num::Scalar;
use crate::stats::median;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HourBucket<T> {
    pub hour: u32,
    pub median_throughput: Option<T>,
    pub tests: usize,
}

/// Per local-hour throughput profile over individual tests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiurnalProfile<T> {
    pub utc_offset_minutes: i32,
    pub buckets: Vec<HourBucket<T>>,
}

impl<T: Scalar> DiurnalProfile<T> {
    /// Hour with the lowest median throughput among non-empty buckets.
    pub fn slowest_hour(&self) -> Option<u32> {
        self.buckets
            .iter()
            .filter_map(|b| b.median_throughput.map(|m| (b.hour, m)))
            .fold(None::<(u32, T)>, |acc, (h, m)| match acc {
                Some((_, best)) if best <= m => acc,
                _ => Some((h, m)),
            })
            .map(|(h, _)| h)
    }
}

/// Buckets every test (no per-client dedup) by local hour of day.
pub fn diurnal_profile<'a, T, I>(tests: I, utc_offset_minutes: i32) -> Result<DiurnalProfile<T>, AggregateError>
where
    T: Scalar,
    I: IntoIterator<Item = &'a AttributedTest<T>>,
{
    if !(-720..=840).contains(&utc_offset_minutes) {
        return Err(AggregateError::OffsetOutOfRange(utc_offset_minutes));
    }
    let offset = Duration::minutes(utc_offset_minutes as i64);
    let mut values: Vec<Vec<T>> = vec![Vec::new(); 24];
    for t in tests {
        if let Some(v) = t.metrics.throughput {
            let local = t.timestamp.naive_utc() + offset;
            values[local.hour() as usize].push(v);
        }
    }
    let buckets = values
        .iter()
        .enumerate()
        .map(|(h, v)| HourBucket { hour: h as u32, median_throughput: median(v), tests: v.len() })
        .collect();
    Ok(DiurnalProfile { utc_offset_minutes, buckets })
}
