//! Throughput-throttling analysis for crowd-sourced NDT measurements.
//!
//! The pipeline runs ingest, prefix attribution, per-client-day
//! deduplication and median aggregation, then anomaly detection and cohort
//! comparison. [`synth`] generates labeled corpora for testing all of it.
//!
//! Numeric code is generic over [`Scalar`]; the `*F64` aliases below are
//! what the CLI uses.

pub mod aggregate;
pub mod attribution;
pub mod cohort;
pub mod dates;
pub mod detect;
pub mod ingest;
pub mod metrics;
pub mod num;
pub mod pipeline;
pub mod report;
pub mod stats;
pub mod synth;

pub use num::Scalar;

pub type Metrics = metrics::DerivedMetrics<f64>;
pub type ClientDayF64 = aggregate::ClientDay<f64>;
pub type AttributedTestF64 = aggregate::AttributedTest<f64>;
pub type AggregateSeriesF64 = aggregate::AggregateSeries<f64>;
pub type VarianceSeriesF64 = aggregate::VarianceSeries<f64>;
pub type RecoveryRowF64 = cohort::RecoveryRow<f64>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Ingest(#[from] ingest::IngestError),
    #[error(transparent)]
    Attribution(#[from] attribution::AttributionError),
    #[error(transparent)]
    Aggregate(#[from] aggregate::AggregateError),
    #[error(transparent)]
    Detect(#[from] detect::DetectError),
    #[error(transparent)]
    Cohort(#[from] cohort::CohortError),
    #[error(transparent)]
    Synth(#[from] synth::SynthError),
}
