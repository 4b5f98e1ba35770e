use chrono::{Duration, NaiveDate};

use super::{Breach, DetectionEvent, DetectorConfig, FlagSet};
use crate::num::Scalar;

fn mean_in<T: Scalar>(series: &[(NaiveDate, T)], from: NaiveDate, to: NaiveDate) -> Option<f64> {
    let vals: Vec<f64> = series
        .iter()
        .filter(|(d, _)| *d >= from && *d <= to)
        .map(|(_, v)| v.as_f64())
        .collect();
    (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
}

/// Merges same-direction flags whose gap is at most `merge_gap_days` into
/// events. Events shorter than `min_event_days` are kept but marked
/// short-term. Magnitude compares the event mean of `series` with its mean
/// over the `window_days` before the event.
pub fn coalesce<T: Scalar>(flags: &FlagSet, series: &[(NaiveDate, T)], cfg: &DetectorConfig) -> Vec<DetectionEvent> {
    let step = flags.cadence.days();
    let mut sorted = flags.flags.clone();
    sorted.sort_by_key(|b| b.date);

    let mut runs: Vec<Vec<Breach>> = Vec::new();
    for b in sorted {
        match runs.last_mut() {
            Some(run) => {
                let last = run.last().expect("runs are non-empty");
                let gap = (b.date - last.date).num_days() - step;
                if last.direction == b.direction && gap <= cfg.merge_gap_days {
                    run.push(b);
                } else {
                    runs.push(vec![b]);
                }
            }
            None => runs.push(vec![b]),
        }
    }

    runs.into_iter()
        .map(|run| {
            let start = run[0].date;
            let end = run[run.len() - 1].date;
            let baseline = mean_in(series, start - Duration::days(cfg.window_days as i64), start - Duration::days(1));
            let event_mean = mean_in(series, start, end);
            let magnitude_pct = match (baseline, event_mean) {
                (Some(b), Some(m)) if b > 0.0 => Some((m - b) / b * 100.0),
                _ => None,
            };
            let length = (end - start).num_days() + step;
            DetectionEvent {
                start,
                end,
                metric: flags.metric,
                direction: run[0].direction,
                magnitude_pct,
                baseline,
                event_mean,
                detector: flags.detector,
                short_term: length < cfg.min_event_days,
                flags: run,
            }
        })
        .collect()
}
