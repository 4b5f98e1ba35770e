//! Warning mechanisms over aggregate series and their coalescing into
//! dated events.
//!
//! Two detectors feed the same event model. [`threshold_detect`] compares
//! each day's quantized median against Poisson quantile bounds around a
//! trailing mean; [`variance_detect`] watches cross-group variance for the
//! collapse expected under a uniform ceiling (and the spike at its onset).
//! Events are warnings for review, not verdicts: every contributing flag is
//! kept on the event.

mod coalesce;
mod context;
pub mod poisson;
mod threshold;
mod variance;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::aggregate::Cadence;

pub use coalesce::coalesce;
pub use context::{event_context, parse_labeled_dates, ContextRow, ContextStatus, LabeledDate};
pub use threshold::{quantize, threshold_detect};
pub use variance::{variance_detect, variance_trailing_periods};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DetectError {
    #[error("insufficient history: need {needed} points, have {have}")]
    InsufficientHistory { needed: usize, have: usize },
    #[error("invalid detector config: {0}")]
    InvalidConfig(String),
    #[error("line {line}: {message}")]
    BadLabeledDate { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorConfig {
    pub window_days: usize,
    pub confidence: f64,
    /// kbit/s per Poisson count
    pub quantization_unit: f64,
    pub min_event_days: i64,
    pub merge_gap_days: i64,
    pub variance_drop_threshold: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            window_days: 28,
            confidence: 0.999,
            quantization_unit: 10.0,
            min_event_days: 3,
            merge_gap_days: 2,
            variance_drop_threshold: 0.5,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<(), DetectError> {
        if self.window_days < 7 {
            return Err(DetectError::InvalidConfig(format!("window_days {} < 7", self.window_days)));
        }
        if !(self.confidence > 0.5 && self.confidence < 1.0) {
            return Err(DetectError::InvalidConfig(format!("confidence {} not in (0.5, 1)", self.confidence)));
        }
        if !(self.quantization_unit > 0.0 && self.quantization_unit.is_finite()) {
            return Err(DetectError::InvalidConfig(format!("quantization_unit {} must be > 0", self.quantization_unit)));
        }
        if !(self.variance_drop_threshold > 0.0 && self.variance_drop_threshold < 1.0) {
            return Err(DetectError::InvalidConfig(format!(
                "variance_drop_threshold {} not in (0, 1)",
                self.variance_drop_threshold
            )));
        }
        if self.min_event_days < 1 || self.merge_gap_days < 0 {
            return Err(DetectError::InvalidConfig("min_event_days >= 1 and merge_gap_days >= 0 required".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Shift {
    Drop,
    Spike,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Metric {
    Throughput,
    Variance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum DetectorKind {
    Threshold,
    Variance,
}

/// One period outside its expected bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Breach {
    pub date: NaiveDate,
    pub direction: Shift,
    pub observed: f64,
    pub expected: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Detector output for one series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlagSet {
    pub metric: Metric,
    pub detector: DetectorKind,
    pub cadence: Cadence,
    pub flags: Vec<Breach>,
    /// Periods that had enough history to be tested.
    pub evaluated: usize,
}

/// A coalesced run of same-direction breaches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionEvent {
    pub start: NaiveDate,
    pub end: NaiveDate,
    pub metric: Metric,
    pub direction: Shift,
    /// Percent change of the in-event mean against the pre-event mean;
    /// absent when the baseline is not positive or has no data.
    pub magnitude_pct: Option<f64>,
    pub baseline: Option<f64>,
    pub event_mean: Option<f64>,
    pub detector: DetectorKind,
    pub short_term: bool,
    pub flags: Vec<Breach>,
}

impl DetectionEvent {
    pub fn length_days(&self, cadence: Cadence) -> i64 {
        (self.end - self.start).num_days() + cadence.days()
    }
}
