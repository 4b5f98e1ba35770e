use std::net::Ipv4Addr;

use chrono::{DateTime, Duration, NaiveDate, Timelike, Utc};
use rand::Rng;
use rand_distr::{Binomial, Distribution, LogNormal, Normal, Poisson};
use serde::{Deserialize, Serialize};

use super::{cell_rng, Cap, GroupSpec, SynthError, ThrottlePolicy, ThrottleScenario};
use crate::attribution::PrefixTable;
use crate::ingest::{Direction, MeasurementRecord};

const MSS: u64 = 1448;
const MIN_BPS: f64 = 8_000.0;
const MAX_BPS: f64 = 80e6;
const CAP_NOISE: f64 = 0.02;

/// Ground truth for one generated record, matching it by position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordTruth {
    pub client_addr: Ipv4Addr,
    pub timestamp: DateTime<Utc>,
    pub asn: u32,
    /// Bits per second after diurnal load and policies.
    pub throughput: f64,
    pub avg_rtt: f64,
    pub loss_congestion: f64,
    pub loss_retrans: f64,
    pub net_limited_ratio: f64,
    /// Indices into the scenario's policy list that shaped this record.
    pub policies: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupOnset {
    pub asn: u32,
    pub prefix: crate::attribution::Ipv4Cidr,
    pub onset: NaiveDate,
    pub end: NaiveDate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyTruth {
    pub index: usize,
    pub policy: ThrottlePolicy,
    pub groups: Vec<GroupOnset>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioTruth {
    pub scenario: String,
    pub seed: u64,
    pub policies: Vec<PolicyTruth>,
}

impl ScenarioTruth {
    pub fn onset_of(&self, policy: usize, asn: u32) -> Option<NaiveDate> {
        self.policies.get(policy)?.groups.iter().find(|g| g.asn == asn).map(|g| g.onset)
    }
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub records: Vec<MeasurementRecord>,
    pub record_truth: Vec<RecordTruth>,
    pub truth: ScenarioTruth,
    pub prefix_table: PrefixTable,
}

fn policy_truth(s: &ThrottleScenario) -> Vec<PolicyTruth> {
    s.policies
        .iter()
        .enumerate()
        .map(|(index, p)| {
            let mut affected: Vec<&GroupSpec> = s.groups.iter().filter(|g| p.applies_to(g)).collect();
            affected.sort_by(|a, b| b.n_clients.cmp(&a.n_clients).then(a.asn.cmp(&b.asn)));
            let groups = affected
                .into_iter()
                .enumerate()
                .map(|(rank, g)| GroupOnset {
                    asn: g.asn,
                    prefix: g.prefix,
                    onset: p.start + Duration::days(rank as i64 * i64::from(p.rollout_stagger_days)),
                    end: p.end,
                })
                .filter(|o| o.onset <= o.end)
                .collect();
            PolicyTruth { index, policy: p.clone(), groups }
        })
        .collect()
}

struct Active<'a> {
    index: usize,
    policy: &'a ThrottlePolicy,
}

/// Builds the corpus for a scenario. Output order is by day, then group,
/// then client, then test time.
pub fn generate(s: &ThrottleScenario) -> Result<SynthCorpus, SynthError> {
    s.validate()?;
    let prefix_table = s.prefix_table()?;
    let policies = policy_truth(s);
    let tests = Poisson::new(s.tests_per_client_day).expect("validated rate");
    let test_noise = Normal::new(0.0, s.test_log_sigma).expect("validated sigma");
    let rtt = LogNormal::new(s.base_rtt_ms.ln(), s.rtt_log_sigma).expect("validated rtt");

    // per-client baselines, Mbit/s, from each client's own stream
    let mut clients: Vec<(u64, &GroupSpec, Ipv4Addr, f64)> = Vec::new();
    let mut global = 0u64;
    for g in &s.groups {
        let base = LogNormal::new(g.base_log_mean, g.base_log_sigma).expect("validated baseline");
        for i in 0..g.n_clients {
            let mut rng = cell_rng(s.seed, global, u64::MAX);
            clients.push((global, g, g.prefix.nth(u64::from(i) + 1), base.sample(&mut rng)));
            global += 1;
        }
    }

    let mut records = Vec::new();
    let mut record_truth = Vec::new();
    for (day_idx, date) in s.span.iter().enumerate() {
        for &(client_idx, group, addr, base_mbps) in &clients {
            let active: Vec<Active> = policies
                .iter()
                .filter(|pt| pt.groups.iter().any(|o| o.asn == group.asn && o.onset <= date && date <= o.end))
                .map(|pt| Active { index: pt.index, policy: &s.policies[pt.index] })
                .collect();
            let mut rng = cell_rng(s.seed, client_idx, day_idx as u64);
            let n = tests.sample(&mut rng) as u64;
            let mut seconds: Vec<u32> = (0..n).map(|_| rng.random_range(0..86_400)).collect();
            seconds.sort_unstable();
            for sec in seconds {
                let timestamp = date.and_hms_opt(0, 0, 0).expect("midnight").and_utc() + Duration::seconds(sec.into());
                let local = timestamp + Duration::minutes(s.diurnal.utc_offset_minutes.into());
                let local_hour = f64::from(local.num_seconds_from_midnight()) / 3600.0;
                let mut bps = base_mbps * 1e6 * test_noise.sample(&mut rng).exp() * s.diurnal.multiplier(local_hour);
                let mut loss = s.base_loss;
                let mut rtt_ms = rtt.sample(&mut rng);
                for a in &active {
                    let noise = 1.0 + rng.random_range(-CAP_NOISE..=CAP_NOISE);
                    bps = match a.policy.cap {
                        Cap::Factor(f) => bps * f * noise,
                        Cap::CeilingMbps(c) => bps.min(c * 1e6 * noise),
                    };
                    loss += a.policy.loss_injection;
                    rtt_ms *= a.policy.rtt_inflation;
                }
                let server_country = pick_server(s, &mut rng);
                let (record, truth) = build(
                    &mut rng,
                    Draw {
                        addr,
                        timestamp,
                        asn: group.asn,
                        bps: bps.clamp(MIN_BPS, MAX_BPS),
                        rtt_ms,
                        loss: loss.min(0.95),
                        server_country,
                        policies: active.iter().map(|a| a.index).collect(),
                    },
                );
                records.push(record);
                record_truth.push(truth);
            }
        }
    }
    log::debug!("synthesized {} records for {}", records.len(), s.name);
    Ok(SynthCorpus {
        records,
        record_truth,
        truth: ScenarioTruth { scenario: s.name.clone(), seed: s.seed, policies },
        prefix_table,
    })
}

fn pick_server<R: Rng>(s: &ThrottleScenario, rng: &mut R) -> String {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for share in &s.server_mix {
        acc += share.probability;
        if u < acc {
            return share.country.clone();
        }
    }
    s.server_mix.last().map(|s| s.country.clone()).unwrap_or_else(|| "US".into())
}

struct Draw {
    addr: Ipv4Addr,
    timestamp: DateTime<Utc>,
    asn: u32,
    bps: f64,
    rtt_ms: f64,
    loss: f64,
    server_country: String,
    policies: Vec<usize>,
}

fn build<R: Rng>(rng: &mut R, d: Draw) -> (MeasurementRecord, RecordTruth) {
    let target_us: f64 = rng.random_range(10_000_000.0..10_400_000.0);
    let octets = ((d.bps * target_us / 8e6).round() as u64).max(1);
    // duration is solved from the integer octet count so the quotient lands on bps
    let duration = (octets as f64 * 8e6 / d.bps).round() as u64;

    let nu: f64 = rng.random_range(0.3..0.9);
    let cwnd = (nu * duration as f64).round() as u64;
    let rwin = (rng.random::<f64>() * (duration - cwnd) as f64).round() as u64;
    let snd = duration - cwnd - rwin;

    let data_segs = octets.div_ceil(MSS);
    let retrans = Binomial::new(data_segs, d.loss).expect("loss in [0, 1)").sample(rng);
    let segs_out = data_segs + retrans;
    let cong = Binomial::new(retrans, 0.5).expect("fixed p").sample(rng);

    let count_rtt = data_segs;
    let sum_rtt = d.rtt_ms * count_rtt as f64;
    let avg = sum_rtt / count_rtt as f64;
    let min_rtt = avg * rng.random_range(0.5..0.9);
    let max_rtt = avg * rng.random_range(1.2..3.0);

    let record = MeasurementRecord {
        client_addr: d.addr,
        timestamp: d.timestamp,
        server_country: d.server_country,
        direction: Direction::S2C,
        sum_rtt,
        count_rtt,
        min_rtt,
        max_rtt,
        cong_signals: cong,
        segs_out,
        segs_retrans: retrans,
        data_segs_out: data_segs,
        snd_lim_time_rwin: rwin,
        snd_lim_time_cwnd: cwnd,
        snd_lim_time_snd: snd,
        hc_thru_octets_acked: octets,
    };
    let truth = RecordTruth {
        client_addr: d.addr,
        timestamp: d.timestamp,
        asn: d.asn,
        throughput: d.bps,
        avg_rtt: d.rtt_ms,
        loss_congestion: cong as f64 / segs_out as f64,
        loss_retrans: retrans as f64 / data_segs as f64,
        net_limited_ratio: cwnd as f64 / duration as f64,
        policies: d.policies,
    };
    (record, truth)
}

#[cfg(test)]
mod tests {
    use super::super::*;
    use crate::dates::ymd;
    use crate::ingest::{validate, Reason};
    use crate::metrics::derive;

    fn tiny(policies: Vec<ThrottlePolicy>) -> ThrottleScenario {
        let mut s = replay_paper_shapes(PaperShape::DiurnalOnly);
        s.span = DateRange::new(ymd(2012, 1, 1), ymd(2012, 1, 10)).unwrap();
        s.groups.truncate(3);
        s.policies = policies;
        s
    }

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn one_client_one_day_identity() {
        let mut s = tiny(vec![]);
        s.span = DateRange::new(ymd(2012, 1, 1), ymd(2012, 1, 1)).unwrap();
        s.groups.truncate(1);
        s.groups[0].n_clients = 1;
        s.tests_per_client_day = 6.0;
        let c = generate(&s).unwrap();
        assert!(!c.records.is_empty());
        for (r, t) in c.records.iter().zip(&c.record_truth) {
            let m = derive::<f64>(r);
            assert!(rel(m.throughput.unwrap(), t.throughput) < 1e-6);
            assert!(rel(m.avg_rtt.unwrap(), t.avg_rtt) < 1e-9);
            assert_eq!(m.net_limited_ratio.unwrap(), t.net_limited_ratio);
            assert_eq!(validate(r).reason, Reason::Ok);
            assert!(r.check_invariants().is_ok());
        }
    }

    #[test]
    fn same_seed_same_corpus() {
        let s = tiny(vec![]);
        let a = generate(&s).unwrap();
        let b = generate(&s).unwrap();
        assert_eq!(a.records, b.records);
        let mut s2 = s.clone();
        s2.seed += 1;
        assert_ne!(generate(&s2).unwrap().records, a.records);
    }

    #[test]
    fn policy_labels_and_exemption() {
        let policy = ThrottlePolicy {
            start: ymd(2012, 1, 4),
            end: ymd(2012, 1, 6),
            cap: Cap::Factor(0.5),
            scope: Scope::All,
            exemptions: vec![12660],
            rollout_stagger_days: 0,
            loss_injection: 0.2,
            rtt_inflation: 1.0,
        };
        let s = tiny(vec![policy.clone()]);
        let c = generate(&s).unwrap();
        for t in &c.record_truth {
            let inside = policy.start <= t.timestamp.date_naive() && t.timestamp.date_naive() <= policy.end;
            assert_eq!(!t.policies.is_empty(), inside && t.asn != 12660, "{t:?}");
        }
        assert!(c.truth.policies[0].groups.iter().all(|g| g.asn != 12660));
    }

    #[test]
    fn stagger_orders_by_size() {
        let mut s = tiny(vec![ThrottlePolicy {
            start: ymd(2012, 1, 2),
            end: ymd(2012, 1, 9),
            cap: Cap::CeilingMbps(0.5),
            scope: Scope::All,
            exemptions: vec![],
            rollout_stagger_days: 3,
            loss_injection: 0.0,
            rtt_inflation: 1.5,
        }]);
        s.groups[0].n_clients = 1;
        s.groups[1].n_clients = 9;
        s.groups[2].n_clients = 5;
        let c = generate(&s).unwrap();
        let on: Vec<_> = c.truth.policies[0].groups.iter().map(|g| (g.asn, g.onset)).collect();
        assert_eq!(
            on,
            vec![(s.groups[1].asn, ymd(2012, 1, 2)), (s.groups[2].asn, ymd(2012, 1, 5)), (s.groups[0].asn, ymd(2012, 1, 8))]
        );
        for t in c.record_truth.iter().filter(|t| !t.policies.is_empty()) {
            assert!(t.throughput <= 0.5e6 * 1.02 + 1e-6);
        }
    }

    #[test]
    fn rejects_bad_scenarios() {
        let mut s = tiny(vec![]);
        s.server_mix[0].probability += 0.01;
        assert!(generate(&s).is_err());
        let mut s = tiny(vec![]);
        s.groups[0].n_clients = 0;
        assert!(generate(&s).is_err());
        let mut s = tiny(vec![]);
        s.span = DateRange { start: ymd(2012, 1, 2), end: ymd(2012, 1, 1) };
        assert!(generate(&s).is_err());
        let mut s = tiny(vec![]);
        s.policies.push(ThrottlePolicy {
            start: ymd(2012, 1, 2),
            end: ymd(2012, 1, 3),
            cap: Cap::Factor(1.5),
            scope: Scope::All,
            exemptions: vec![],
            rollout_stagger_days: 0,
            loss_injection: 0.0,
            rtt_inflation: 1.0,
        });
        assert!(generate(&s).is_err());
    }
}
