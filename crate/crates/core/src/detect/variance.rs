use chrono::NaiveDate;

use super::{Breach, DetectError, DetectorConfig, DetectorKind, FlagSet, Metric, Shift};
use crate::aggregate::Cadence;
use crate::num::Scalar;

/// Trailing periods compared against: the detector window expressed in
/// periods, never fewer than four.
pub fn variance_trailing_periods(cfg: &DetectorConfig, cadence: Cadence) -> usize {
    (cfg.window_days / cadence.days() as usize).max(4)
}

/// Flags periods whose variance falls below `(1 - t)` times the trailing mean
/// (collapse) or rises above the trailing mean divided by `(1 - t)` (the
/// symmetric spike in log scale), with `t = variance_drop_threshold`.
pub fn variance_detect<T: Scalar>(
    series: &[(NaiveDate, T)],
    cadence: Cadence,
    cfg: &DetectorConfig,
) -> Result<FlagSet, DetectError> {
    cfg.validate()?;
    let window = variance_trailing_periods(cfg, cadence);
    if series.len() < window {
        return Err(DetectError::InsufficientHistory { needed: window, have: series.len() });
    }
    let keep = 1.0 - cfg.variance_drop_threshold;
    let values: Vec<f64> = series.iter().map(|(_, v)| v.as_f64()).collect();
    let mut flags = Vec::new();
    for i in window..values.len() {
        let expected = values[i - window..i].iter().sum::<f64>() / window as f64;
        if expected <= 0.0 {
            continue;
        }
        let (lower, upper) = (expected * keep, expected / keep);
        let v = values[i];
        let direction = if v < lower {
            Some(Shift::Drop)
        } else if v > upper {
            Some(Shift::Spike)
        } else {
            None
        };
        if let Some(direction) = direction {
            flags.push(Breach { date: series[i].0, direction, observed: v, expected, lower, upper });
        }
    }
    Ok(FlagSet {
        metric: Metric::Variance,
        detector: DetectorKind::Variance,
        cadence,
        flags,
        evaluated: values.len() - window,
    })
}
