//! Derived per-test metrics: RTT, packet loss, network-limited time ratio
//! and throughput.

use serde::{Deserialize, Serialize};

use crate::ingest::MeasurementRecord;
use crate::num::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum MetricError {
    #[error("average RTT undefined: CountRTT is 0")]
    NoRttSamples,
    #[error("congestion loss undefined: SegsOut is 0")]
    NoSegments,
    #[error("retransmission loss undefined: DataSegsOut is 0")]
    NoDataSegments,
    #[error("time-based metric undefined: send-limited time sum is 0")]
    NoDuration,
}

/// A probability or fraction clamped into `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ratio<T> {
    pub value: T,
    /// The raw quotient fell outside `[0, 1]` and was clamped.
    pub clamped: bool,
}

impl<T: Scalar> Ratio<T> {
    fn of(num: u64, den: u64) -> Self {
        let raw = T::count(num) / T::count(den);
        if raw > T::one() {
            Ratio { value: T::one(), clamped: true }
        } else {
            Ratio { value: raw, clamped: false }
        }
    }
}

pub fn avg_rtt<T: Scalar>(r: &MeasurementRecord) -> Result<T, MetricError> {
    if r.count_rtt == 0 {
        return Err(MetricError::NoRttSamples);
    }
    Ok(T::lit(r.sum_rtt) / T::count(r.count_rtt))
}

/// `(CongSignals / SegsOut, SegsRetrans / DataSegsOut)`, each independently defined.
pub fn loss_ratios<T: Scalar>(
    r: &MeasurementRecord,
) -> (Result<Ratio<T>, MetricError>, Result<Ratio<T>, MetricError>) {
    let cong = if r.segs_out == 0 {
        Err(MetricError::NoSegments)
    } else {
        Ok(Ratio::of(r.cong_signals, r.segs_out))
    };
    let retrans = if r.data_segs_out == 0 {
        Err(MetricError::NoDataSegments)
    } else {
        Ok(Ratio::of(r.segs_retrans, r.data_segs_out))
    };
    (cong, retrans)
}

/// Share of the test spent congestion-window limited.
pub fn net_limited_ratio<T: Scalar>(r: &MeasurementRecord) -> Result<T, MetricError> {
    match r.duration_us() {
        0 => Err(MetricError::NoDuration),
        total => Ok(T::count(r.snd_lim_time_cwnd) / T::count(total)),
    }
}

/// Acknowledged octets over the send-limited time, bits per second.
pub fn throughput<T: Scalar>(r: &MeasurementRecord) -> Result<T, MetricError> {
    match r.duration_us() {
        0 => Err(MetricError::NoDuration),
        total => {
            let seconds = T::count(total) / T::lit(1e6);
            Ok(T::count(r.hc_thru_octets_acked) * T::lit(8.0) / seconds)
        }
    }
}

/// All derived values for one test. Undefined metrics are `None`, never zero.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DerivedMetrics<T> {
    /// bits per second
    pub throughput: Option<T>,
    /// milliseconds
    pub avg_rtt: Option<T>,
    pub min_rtt: Option<T>,
    pub max_rtt: Option<T>,
    pub loss_congestion: Option<T>,
    pub loss_retrans: Option<T>,
    pub net_limited_ratio: Option<T>,
    /// seconds
    pub duration: Option<T>,
    /// A loss ratio exceeded 1 and was clamped.
    pub clamped: bool,
}

pub fn derive<T: Scalar>(r: &MeasurementRecord) -> DerivedMetrics<T> {
    let avg = avg_rtt::<T>(r).ok();
    // min/max only carry meaning alongside at least one RTT sample
    let (min_rtt, max_rtt) = match avg {
        Some(_) => (Some(T::lit(r.min_rtt)), Some(T::lit(r.max_rtt))),
        None => (None, None),
    };
    let (cong, retrans) = loss_ratios::<T>(r);
    let clamped = matches!(cong, Ok(Ratio { clamped: true, .. }))
        || matches!(retrans, Ok(Ratio { clamped: true, .. }));
    let duration = match r.duration_us() {
        0 => None,
        us => Some(T::count(us) / T::lit(1e6)),
    };
    DerivedMetrics {
        throughput: throughput(r).ok(),
        avg_rtt: avg,
        min_rtt,
        max_rtt,
        loss_congestion: cong.ok().map(|x| x.value),
        loss_retrans: retrans.ok().map(|x| x.value),
        net_limited_ratio: net_limited_ratio(r).ok(),
        duration,
        clamped,
    }
}
