//! Labeled synthetic corpora with injected throttling policies.
//!
//! Every record is built backward from drawn ground truth (throughput, RTT,
//! loss, network-limited share) so that [`crate::metrics::derive`] recovers
//! the drawn values. Randomness comes from ChaCha8 streams keyed by
//! `(seed, client index, day index)`, so any cell can be regenerated on its
//! own and output does not depend on iteration order.

mod generate;
mod rng;
mod shapes;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::attribution::{Attribution, Ipv4Cidr, PrefixTable};
use crate::dates::DateRange;

pub use generate::{generate, GroupOnset, PolicyTruth, RecordTruth, ScenarioTruth, SynthCorpus};
pub use rng::cell_rng;
pub use shapes::{reference_groups, replay_paper_shapes, PaperShape};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SynthError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("unknown scenario {0:?}")]
    UnknownShape(String),
}

fn invalid(msg: impl Into<String>) -> SynthError {
    SynthError::InvalidScenario(msg.into())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSpec {
    pub asn: u32,
    pub prefix: Ipv4Cidr,
    pub owner: String,
    pub country: String,
    pub n_clients: u32,
    /// Mean of ln(Mbit/s) for the per-client baseline.
    pub base_log_mean: f64,
    pub base_log_sigma: f64,
}

impl GroupSpec {
    pub fn attribution(&self) -> Attribution {
        Attribution {
            prefix: self.prefix,
            asn: self.asn,
            owner: self.owner.clone(),
            country: self.country.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Diurnal {
    /// Fractional throughput loss at the peak-load hour, in `[0, 1)`.
    pub amplitude: f64,
    pub peak_local_hour: f64,
    pub utc_offset_minutes: i32,
}

impl Diurnal {
    /// Throughput multiplier at a local hour of day (fractional).
    pub fn multiplier(&self, local_hour: f64) -> f64 {
        let phase = 2.0 * std::f64::consts::PI * (local_hour - self.peak_local_hour) / 24.0;
        1.0 - self.amplitude * (1.0 + phase.cos()) / 2.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServerShare {
    pub country: String,
    pub probability: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cap {
    /// Multiply throughput by a factor in `(0, 1]`.
    Factor(f64),
    /// Clamp throughput to a ceiling, Mbit/s.
    CeilingMbps(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    All,
    Asns(Vec<u32>),
    Prefixes(Vec<Ipv4Cidr>),
}

impl Scope {
    pub fn covers(&self, g: &GroupSpec) -> bool {
        match self {
            Scope::All => true,
            Scope::Asns(asns) => asns.contains(&g.asn),
            Scope::Prefixes(ps) => ps
                .iter()
                .any(|p| p.prefix_len() <= g.prefix.prefix_len() && p.contains(g.prefix.network())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThrottlePolicy {
    pub start: NaiveDate,
    pub end: NaiveDate,
    pub cap: Cap,
    pub scope: Scope,
    /// ASNs left untouched even when in scope.
    #[serde(default)]
    pub exemptions: Vec<u32>,
    /// Onset delay per rank, days. Groups are ranked by client count,
    /// largest first, ties by ASN.
    #[serde(default)]
    pub rollout_stagger_days: u32,
    /// Added per-segment loss probability.
    #[serde(default)]
    pub loss_injection: f64,
    #[serde(default = "one")]
    pub rtt_inflation: f64,
}

fn one() -> f64 {
    1.0
}

impl ThrottlePolicy {
    pub fn applies_to(&self, g: &GroupSpec) -> bool {
        self.scope.covers(g) && !self.exemptions.contains(&g.asn)
    }

    fn validate(&self, i: usize) -> Result<(), SynthError> {
        if self.end < self.start {
            return Err(invalid(format!("policy {i}: end before start")));
        }
        match self.cap {
            Cap::Factor(f) if !(f > 0.0 && f <= 1.0) => {
                return Err(invalid(format!("policy {i}: factor {f} not in (0, 1]")))
            }
            Cap::CeilingMbps(c) if !(c > 0.0 && c.is_finite()) => {
                return Err(invalid(format!("policy {i}: ceiling {c} must be positive")))
            }
            _ => {}
        }
        if !(0.0..1.0).contains(&self.loss_injection) {
            return Err(invalid(format!("policy {i}: loss_injection not in [0, 1)")));
        }
        if !(self.rtt_inflation >= 1.0 && self.rtt_inflation.is_finite()) {
            return Err(invalid(format!("policy {i}: rtt_inflation must be >= 1")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThrottleScenario {
    pub name: String,
    pub seed: u64,
    pub span: DateRange,
    pub groups: Vec<GroupSpec>,
    /// Per-test log-normal spread around a client's baseline.
    pub test_log_sigma: f64,
    pub diurnal: Diurnal,
    /// Poisson mean of tests per client per day.
    pub tests_per_client_day: f64,
    pub server_mix: Vec<ServerShare>,
    pub base_rtt_ms: f64,
    pub rtt_log_sigma: f64,
    /// Per-segment loss probability outside any policy.
    pub base_loss: f64,
    pub policies: Vec<ThrottlePolicy>,
}

impl ThrottleScenario {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.span.end < self.span.start {
            return Err(invalid("span is empty"));
        }
        if self.groups.is_empty() {
            return Err(invalid("no groups"));
        }
        let mut asns = BTreeSet::new();
        for g in &self.groups {
            if g.n_clients == 0 {
                return Err(invalid(format!("AS{}: n_clients must be >= 1", g.asn)));
            }
            if u64::from(g.n_clients) + 2 > g.prefix.size() {
                return Err(invalid(format!("AS{}: {} clients do not fit in {}", g.asn, g.n_clients, g.prefix)));
            }
            if !(g.base_log_mean.is_finite() && g.base_log_sigma >= 0.0) {
                return Err(invalid(format!("AS{}: bad baseline distribution", g.asn)));
            }
            if !asns.insert(g.asn) {
                return Err(invalid(format!("AS{} listed twice", g.asn)));
            }
        }
        self.prefix_table()?;
        let total: f64 = self.server_mix.iter().map(|s| s.probability).sum();
        if (total - 1.0).abs() > 1e-9 || self.server_mix.iter().any(|s| s.probability < 0.0) {
            return Err(invalid(format!("server_mix probabilities sum to {total}")));
        }
        if !(0.0..1.0).contains(&self.diurnal.amplitude) {
            return Err(invalid("diurnal amplitude not in [0, 1)"));
        }
        if !(-720..=840).contains(&self.diurnal.utc_offset_minutes) {
            return Err(invalid("utc offset out of range"));
        }
        if !(self.tests_per_client_day > 0.0 && self.tests_per_client_day.is_finite()) {
            return Err(invalid("tests_per_client_day must be positive"));
        }
        if !(self.test_log_sigma >= 0.0 && self.rtt_log_sigma >= 0.0 && self.base_rtt_ms > 0.0) {
            return Err(invalid("bad spread or RTT parameters"));
        }
        if !(0.0..1.0).contains(&self.base_loss) {
            return Err(invalid("base_loss not in [0, 1)"));
        }
        for (i, p) in self.policies.iter().enumerate() {
            p.validate(i)?;
        }
        Ok(())
    }

    pub fn prefix_table(&self) -> Result<PrefixTable, SynthError> {
        PrefixTable::from_entries(self.groups.iter().map(GroupSpec::attribution))
            .map_err(|e| invalid(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }
}

impl fmt::Display for PaperShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PaperShape {
    type Err = SynthError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PaperShape::ALL
            .into_iter()
            .find(|p| p.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| SynthError::UnknownShape(s.to_string()))
    }
}
