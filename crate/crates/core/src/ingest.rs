//! Measurement record parsing and the validity filter.
//!
//! Records arrive as NDJSON, one diagnostic test per line, using the
//! web100 variable names for the TCP counters. Parsing is fault-isolating:
//! a bad line becomes a [`LineError`] carrying its line number and the
//! remaining lines are still read.

use std::io::BufRead;
use std::net::Ipv4Addr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

/// Lower duration bound (exclusive), microseconds.
pub const MIN_DURATION_US: u64 = 9_000_000;
/// Upper duration bound (exclusive), microseconds.
pub const MAX_DURATION_US: u64 = 3_600_000_000;
/// Upper packet bound (exclusive).
pub const MAX_SEGS_OUT: u64 = 120_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Direction {
    S2C,
    C2S,
}

/// One raw diagnostic test.
///
/// RTT fields are milliseconds; the `SndLimTime*` counters are microseconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasurementRecord {
    pub client_addr: Ipv4Addr,
    pub timestamp: DateTime<Utc>,
    pub server_country: String,
    pub direction: Direction,
    #[serde(rename = "SumRTT")]
    pub sum_rtt: f64,
    #[serde(rename = "CountRTT")]
    pub count_rtt: u64,
    #[serde(rename = "MinRTT")]
    pub min_rtt: f64,
    #[serde(rename = "MaxRTT")]
    pub max_rtt: f64,
    #[serde(rename = "CongSignals")]
    pub cong_signals: u64,
    #[serde(rename = "SegsOut")]
    pub segs_out: u64,
    #[serde(rename = "SegsRetrans")]
    pub segs_retrans: u64,
    #[serde(rename = "DataSegsOut")]
    pub data_segs_out: u64,
    #[serde(rename = "SndLimTimeRwin")]
    pub snd_lim_time_rwin: u64,
    #[serde(rename = "SndLimTimeCwnd")]
    pub snd_lim_time_cwnd: u64,
    #[serde(rename = "SndLimTimeSnd")]
    pub snd_lim_time_snd: u64,
    #[serde(rename = "HCThruOctetsAcked")]
    pub hc_thru_octets_acked: u64,
}

impl MeasurementRecord {
    /// Summed send-limited time, microseconds. Used as the test duration.
    pub fn duration_us(&self) -> u64 {
        self.snd_lim_time_rwin
            .saturating_add(self.snd_lim_time_cwnd)
            .saturating_add(self.snd_lim_time_snd)
    }

    /// Checks the structural invariants of the counters.
    pub fn check_invariants(&self) -> Result<(), String> {
        for (name, v) in [("SumRTT", self.sum_rtt), ("MinRTT", self.min_rtt), ("MaxRTT", self.max_rtt)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(format!("{name} must be a non-negative number"));
            }
        }
        if self.count_rtt > 0 {
            let avg = self.sum_rtt / self.count_rtt as f64;
            // one ulp of slack for the division
            let eps = avg.abs() * 1e-12;
            if avg + eps < self.min_rtt || avg - eps > self.max_rtt {
                return Err(format!(
                    "average RTT {avg} outside [MinRTT {}, MaxRTT {}]",
                    self.min_rtt, self.max_rtt
                ));
            }
        }
        if self.segs_retrans > self.segs_out {
            return Err("SegsRetrans exceeds SegsOut".into());
        }
        Ok(())
    }

    /// Serializes to one NDJSON line (no trailing newline).
    pub fn to_ndjson(&self) -> String {
        serde_json::to_string(self).expect("record serializes")
    }
}

/// A parsed record together with its 1-based source line.
#[derive(Debug, Clone, PartialEq)]
pub struct Sourced<R> {
    pub line: usize,
    pub record: R,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("line {line}: malformed record: {message}")]
pub struct LineError {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("failed to read input: {0}")]
    Io(#[from] std::io::Error),
}

/// Everything recovered from one input stream.
#[derive(Debug, Default)]
pub struct ParsedRecords {
    pub records: Vec<Sourced<MeasurementRecord>>,
    pub errors: Vec<LineError>,
}

fn parse_line(line: &str) -> Result<MeasurementRecord, String> {
    let rec: MeasurementRecord = serde_json::from_str(line).map_err(|e| e.to_string())?;
    let cc = &rec.server_country;
    if cc.len() != 2 || !cc.bytes().all(|b| b.is_ascii_uppercase()) {
        return Err(format!("server_country {cc:?} is not an ISO alpha-2 code"));
    }
    for (name, v) in [("SumRTT", rec.sum_rtt), ("MinRTT", rec.min_rtt), ("MaxRTT", rec.max_rtt)] {
        if !(v.is_finite() && v >= 0.0) {
            return Err(format!("{name} must be a non-negative number"));
        }
    }
    Ok(rec)
}

/// Iterates a newline-delimited stream. Blank lines are skipped.
pub fn iter_records<R: BufRead>(
    reader: R,
) -> impl Iterator<Item = Result<Result<Sourced<MeasurementRecord>, LineError>, std::io::Error>> {
    reader.lines().enumerate().filter_map(|(idx, line)| {
        let line_no = idx + 1;
        match line {
            Err(e) => Some(Err(e)),
            Ok(l) if l.trim().is_empty() => None,
            Ok(l) => Some(Ok(parse_line(l.trim())
                .map(|record| Sourced { line: line_no, record })
                .map_err(|message| LineError { line: line_no, message }))),
        }
    })
}

/// Parses a whole stream, collecting good records and per-line errors in input order.
pub fn parse_records<R: BufRead>(reader: R) -> Result<ParsedRecords, IngestError> {
    let mut out = ParsedRecords::default();
    for item in iter_records(reader) {
        match item? {
            Ok(r) => out.records.push(r),
            Err(e) => out.errors.push(e),
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Reason {
    Ok,
    TooShort,
    TooLong,
    TooFewPackets,
    TooManyPackets,
    WrongDirection,
    Malformed,
}

impl Reason {
    pub const ALL: [Reason; 7] = [
        Reason::Ok,
        Reason::TooShort,
        Reason::TooLong,
        Reason::TooFewPackets,
        Reason::TooManyPackets,
        Reason::WrongDirection,
        Reason::Malformed,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Reason::Ok => "OK",
            Reason::TooShort => "TOO_SHORT",
            Reason::TooLong => "TOO_LONG",
            Reason::TooFewPackets => "TOO_FEW_PACKETS",
            Reason::TooManyPackets => "TOO_MANY_PACKETS",
            Reason::WrongDirection => "WRONG_DIRECTION",
            Reason::Malformed => "MALFORMED",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidityVerdict {
    pub valid: bool,
    pub reason: Reason,
}

impl ValidityVerdict {
    fn reject(reason: Reason) -> Self {
        Self { valid: false, reason }
    }
}

/// Downstream tests lasting strictly between 9 s and 1 h that sent
/// at least one and fewer than 120,000 segments.
pub fn validate(record: &MeasurementRecord) -> ValidityVerdict {
    if record.direction != Direction::S2C {
        return ValidityVerdict::reject(Reason::WrongDirection);
    }
    let duration = record.duration_us();
    if duration <= MIN_DURATION_US {
        return ValidityVerdict::reject(Reason::TooShort);
    }
    if duration >= MAX_DURATION_US {
        return ValidityVerdict::reject(Reason::TooLong);
    }
    if record.segs_out < 1 {
        return ValidityVerdict::reject(Reason::TooFewPackets);
    }
    if record.segs_out >= MAX_SEGS_OUT {
        return ValidityVerdict::reject(Reason::TooManyPackets);
    }
    ValidityVerdict { valid: true, reason: Reason::Ok }
}
