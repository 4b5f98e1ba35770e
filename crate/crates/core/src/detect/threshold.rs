use chrono::NaiveDate;

use super::poisson;
use super::{Breach, DetectError, DetectorConfig, DetectorKind, FlagSet, Metric, Shift};
use crate::aggregate::Cadence;
use crate::num::Scalar;

/// Integer count of `unit_kbps` units in a bits-per-second value.
pub fn quantize<T: Scalar>(value_bps: T, unit_kbps: f64) -> f64 {
    (value_bps.as_f64() / (unit_kbps * 1000.0)).round().max(0.0)
}

/// Flags days whose quantized value leaves the Poisson bounds around the
/// mean of the preceding `window_days` points (the evaluated day excluded).
///
/// The first `window_days` points are warm-up and never flagged.
pub fn threshold_detect<T: Scalar>(series: &[(NaiveDate, T)], cfg: &DetectorConfig) -> Result<FlagSet, DetectError> {
    cfg.validate()?;
    let window = cfg.window_days;
    if series.len() < window {
        return Err(DetectError::InsufficientHistory { needed: window, have: series.len() });
    }
    let q: Vec<f64> = series.iter().map(|(_, v)| quantize(*v, cfg.quantization_unit)).collect();
    let mut trailing: f64 = q[..window].iter().sum();
    let mut flags = Vec::new();
    for i in window..q.len() {
        let lambda = trailing / window as f64;
        let (lo, hi) = poisson::bounds(lambda, cfg.confidence);
        let x = q[i];
        let direction = if x < lo as f64 {
            Some(Shift::Drop)
        } else if x > hi as f64 {
            Some(Shift::Spike)
        } else {
            None
        };
        if let Some(direction) = direction {
            flags.push(Breach {
                date: series[i].0,
                direction,
                observed: x,
                expected: lambda,
                lower: lo as f64,
                upper: hi as f64,
            });
        }
        trailing += x - q[i - window];
    }
    Ok(FlagSet {
        metric: Metric::Throughput,
        detector: DetectorKind::Threshold,
        cadence: Cadence::Daily,
        flags,
        evaluated: q.len() - window,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dates::ymd;
    use chrono::Duration;

    fn series(vals: &[f64]) -> Vec<(NaiveDate, f64)> {
        let d0 = ymd(2011, 10, 1);
        vals.iter().enumerate().map(|(i, &v)| (d0 + Duration::days(i as i64), v)).collect()
    }

    #[test]
    fn quantizes_to_units() {
        assert_eq!(quantize(1_800_000.0, 10.0), 180.0);
        assert_eq!(quantize(14_999.0, 10.0), 1.0);
        assert_eq!(quantize(15_000.0, 10.0), 2.0);
    }

    #[test]
    fn constant_series_never_flags() {
        let s = series(&[1_800_000.0; 60]);
        let f = threshold_detect(&s, &DetectorConfig::default()).unwrap();
        assert!(f.flags.is_empty());
        assert_eq!(f.evaluated, 32);
    }

    #[test]
    fn warm_up_and_short_series() {
        let s = series(&[1_800_000.0; 10]);
        assert_eq!(
            threshold_detect(&s, &DetectorConfig::default()),
            Err(DetectError::InsufficientHistory { needed: 28, have: 10 })
        );
        let s = series(&[1_800_000.0; 28]);
        assert_eq!(threshold_detect(&s, &DetectorConfig::default()).unwrap().evaluated, 0);
    }

    #[test]
    fn rejects_invalid_config() {
        let s = series(&[1.0; 40]);
        let cfg = DetectorConfig { confidence: 1.0, ..Default::default() };
        assert!(matches!(threshold_detect(&s, &cfg), Err(DetectError::InvalidConfig(_))));
        let cfg = DetectorConfig { window_days: 6, ..Default::default() };
        assert!(matches!(threshold_detect(&s, &cfg), Err(DetectError::InvalidConfig(_))));
    }
}
