use serde::{Deserialize, Serialize};

use super::{Cap, Diurnal, GroupSpec, Scope, ServerShare, ThrottlePolicy, ThrottleScenario};
use crate::dates::{ymd, DateRange};

/// Canned scenarios mirroring published national throughput episodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PaperShape {
    Nov2011,
    Oct2012,
    Staggered,
    ExemptAcademic,
    DiurnalOnly,
}

impl PaperShape {
    pub const ALL: [PaperShape; 5] = [
        PaperShape::Nov2011,
        PaperShape::Oct2012,
        PaperShape::Staggered,
        PaperShape::ExemptAcademic,
        PaperShape::DiurnalOnly,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            PaperShape::Nov2011 => "NOV2011",
            PaperShape::Oct2012 => "OCT2012",
            PaperShape::Staggered => "STAGGERED",
            PaperShape::ExemptAcademic => "EXEMPT_ACADEMIC",
            PaperShape::DiurnalOnly => "DIURNAL_ONLY",
        }
    }
}

/// Ten Iranian networks with (asn, prefix, owner, clients, ln Mbit/s).
pub fn reference_groups() -> Vec<GroupSpec> {
    [
        (12660, "213.233.160.0/19", "Sharif University of Technology", 8, 2.0),
        (12880, "2.176.0.0/16", "Information Technology Company (ITC)", 30, 0.8),
        (16322, "91.98.0.0/15", "Parsonline", 20, 1.0),
        (39501, "188.158.0.0/16", "Neda Gostar Saba Data Transfer Company", 15, 1.2),
        (29068, "80.66.176.0/20", "University of Tehran Informatics Center", 10, 1.8),
        (43754, "79.127.32.0/20", "AsiaTech Inc.", 12, 0.9),
        (49103, "188.34.0.0/17", "Asre Enteghal Dadeha", 12, 0.7),
        (50810, "178.131.0.0/16", "Mobin Net Communication Company", 18, 0.6),
        (48159, "2.185.128.0/19", "Telecommunication Infrastructure Company", 12, 1.1),
        (41881, "95.38.32.0/19", "Fanava Group", 15, 1.3),
    ]
    .into_iter()
    .map(|(asn, prefix, owner, n_clients, mu)| GroupSpec {
        asn,
        prefix: prefix.parse().expect("valid prefix"),
        owner: owner.to_string(),
        country: "IR".to_string(),
        n_clients,
        base_log_mean: mu,
        base_log_sigma: 0.5,
    })
    .collect()
}

fn server_mix() -> Vec<ServerShare> {
    [("GR", 0.5039), ("US", 0.2208), ("GB", 0.1640), ("FR", 0.0928), ("IT", 0.0085), ("DE", 0.0060), ("NL", 0.0040)]
        .into_iter()
        .map(|(c, p)| ServerShare { country: c.to_string(), probability: p })
        .collect()
}

fn national_cap(start: (i32, u32, u32), end: (i32, u32, u32), factor: f64, loss: f64) -> ThrottlePolicy {
    ThrottlePolicy {
        start: ymd(start.0, start.1, start.2),
        end: ymd(end.0, end.1, end.2),
        cap: Cap::Factor(factor),
        scope: Scope::All,
        exemptions: Vec::new(),
        rollout_stagger_days: 0,
        loss_injection: loss,
        rtt_inflation: 1.0,
    }
}

fn base(name: &str, seed: u64, span: DateRange) -> ThrottleScenario {
    ThrottleScenario {
        name: name.to_string(),
        seed,
        span,
        groups: reference_groups(),
        test_log_sigma: 0.25,
        diurnal: Diurnal { amplitude: 0.3, peak_local_hour: 20.0, utc_offset_minutes: 270 },
        tests_per_client_day: 2.0,
        server_mix: server_mix(),
        base_rtt_ms: 120.0,
        rtt_log_sigma: 0.3,
        base_loss: 0.01,
        policies: Vec::new(),
    }
}

fn span(a: (i32, u32, u32), b: (i32, u32, u32)) -> DateRange {
    DateRange::new(ymd(a.0, a.1, a.2), ymd(b.0, b.1, b.2)).expect("ordered span")
}

pub fn replay_paper_shapes(shape: PaperShape) -> ThrottleScenario {
    let nov = || national_cap((2011, 11, 30), (2012, 8, 15), 0.23, 0.30);
    let oct = || national_cap((2012, 10, 4), (2012, 11, 22), 0.31, 0.10);
    match shape {
        PaperShape::Nov2011 => {
            let mut s = base("NOV2011", 20111130, span((2011, 10, 1), (2012, 9, 15)));
            s.policies.push(nov());
            s
        }
        PaperShape::Oct2012 => {
            let mut s = base("OCT2012", 20121004, span((2012, 8, 1), (2012, 12, 31)));
            s.policies.push(oct());
            s
        }
        PaperShape::Staggered => {
            let mut s = base("STAGGERED", 20120301, span((2012, 1, 1), (2012, 6, 30)));
            let mut p = national_cap((2012, 3, 1), (2012, 5, 15), 0.3, 0.0);
            p.rollout_stagger_days = 4;
            s.policies.push(p);
            s
        }
        PaperShape::ExemptAcademic => {
            let mut s = base("EXEMPT_ACADEMIC", 20111201, span((2011, 9, 1), (2012, 11, 30)));
            for mut p in [nov(), oct()] {
                p.exemptions.push(12660);
                s.policies.push(p);
            }
            s
        }
        PaperShape::DiurnalOnly => {
            let mut s = base("DIURNAL_ONLY", 20120101, span((2012, 1, 1), (2012, 12, 30)));
            s.diurnal.amplitude = 0.4;
            s
        }
    }
}
