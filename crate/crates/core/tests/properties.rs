use std::collections::HashSet;
use std::net::Ipv4Addr;

use chrono::{DateTime, Duration, NaiveDate, Utc};
use proptest::prelude::*;

use throttlescope::aggregate::{best_per_client_day, cross_group_variance, AttributedTest, Cadence, ClientDay, Grouping};
use throttlescope::attribution::{Attribution, Ipv4Cidr, PrefixTable};
use throttlescope::cohort::{top_percentile_networks, CohortSpec};
use throttlescope::dates::{ymd, DateRange};
use throttlescope::detect::{coalesce, threshold_detect, DetectorConfig, FlagSet};
use throttlescope::ingest::{parse_records, Direction, MeasurementRecord};
use throttlescope::metrics::DerivedMetrics;
use throttlescope::stats::median;

fn attribution(asn: u32) -> Attribution {
    Attribution { prefix: "10.0.0.0/8".parse().unwrap(), asn, owner: format!("o{asn}"), country: "IR".into() }
}

fn day0() -> NaiveDate {
    ymd(2012, 1, 1)
}

fn record() -> impl Strategy<Value = MeasurementRecord> {
    (
        any::<u32>(),
        0i64..400_000_000,
        prop::sample::select(vec!["GR", "US", "GB", "FR"]),
        any::<bool>(),
        (1u64..10_000, 0.0f64..500.0, 0.0f64..500.0),
        (0u64..200_000, 0u64..200_000, 0u64..200_000),
        (0u64..4_000_000_000, 0u64..4_000_000_000, 0u64..4_000_000_000, any::<u64>()),
    )
        .prop_map(|(addr, secs, cc, s2c, (count, a, b), (segs, retr, cong), (rw, cw, sd, oct))| {
            let (min_rtt, max_rtt) = (a.min(b), a.max(b));
            MeasurementRecord {
                client_addr: Ipv4Addr::from(addr),
                timestamp: DateTime::<Utc>::from_timestamp(1_300_000_000 + secs, 0).unwrap(),
                server_country: cc.into(),
                direction: if s2c { Direction::S2C } else { Direction::C2S },
                sum_rtt: (min_rtt + max_rtt) / 2.0 * count as f64,
                count_rtt: count,
                min_rtt,
                max_rtt,
                cong_signals: cong,
                segs_out: segs,
                segs_retrans: retr,
                data_segs_out: segs,
                snd_lim_time_rwin: rw,
                snd_lim_time_cwnd: cw,
                snd_lim_time_snd: sd,
                hc_thru_octets_acked: oct,
            }
        })
}

fn tests_strategy() -> impl Strategy<Value = Vec<AttributedTest<f64>>> {
    prop::collection::vec((0u32..6, 0i64..5, 0i64..86_400, 1u32..50), 1..60).prop_map(|v| {
        v.into_iter()
            .map(|(c, d, s, mbps)| AttributedTest {
                client_addr: Ipv4Addr::from(c),
                timestamp: (day0() + Duration::days(d)).and_hms_opt(0, 0, 0).unwrap().and_utc() + Duration::seconds(s),
                metrics: DerivedMetrics { throughput: Some(mbps as f64 * 1e5), avg_rtt: Some(s as f64), ..Default::default() },
                attribution: attribution(c % 3),
            })
            .collect()
    })
}

fn series_strategy() -> impl Strategy<Value = Vec<(NaiveDate, f64)>> {
    prop::collection::vec(1u32..400, 30..80).prop_map(|v| {
        v.into_iter().enumerate().map(|(i, x)| (day0() + Duration::days(i as i64), x as f64 * 1e4)).collect()
    })
}

fn brute_lookup(entries: &[Attribution], addr: Ipv4Addr) -> Option<Ipv4Cidr> {
    entries.iter().filter(|e| e.prefix.contains(addr)).map(|e| e.prefix).max_by_key(|p| p.prefix_len())
}

fn client_days(cells: &[(u8, u8, u32)]) -> Vec<ClientDay<f64>> {
    cells
        .iter()
        .map(|&(client, group, kbps)| {
            let date = day0() + Duration::days((client % 4) as i64);
            ClientDay {
                client_addr: Ipv4Addr::from(client as u32),
                date,
                chosen: DerivedMetrics { throughput: Some(kbps as f64 * 1e3), ..Default::default() },
                chosen_timestamp: date.and_hms_opt(1, 0, 0).unwrap().and_utc(),
                attribution: attribution(group as u32),
                n_tests: 1,
            }
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn ndjson_round_trip(recs in prop::collection::vec(record(), 1..20)) {
        let text: String = recs.iter().map(|r| r.to_ndjson() + "\n").collect();
        let parsed = parse_records(text.as_bytes()).unwrap();
        prop_assert!(parsed.errors.is_empty());
        let back: Vec<MeasurementRecord> = parsed.records.into_iter().map(|s| s.record).collect();
        prop_assert_eq!(back, recs);
    }

    #[test]
    fn lpm_matches_linear_scan(
        nets in prop::collection::vec((any::<u32>(), 0u8..=32), 1..40),
        probes in prop::collection::vec(any::<u32>(), 1..100),
    ) {
        let mut seen = HashSet::new();
        let entries: Vec<Attribution> = nets
            .into_iter()
            .map(|(a, l)| Ipv4Cidr::new(Ipv4Addr::from(a & ((u64::from(u32::MAX) << (32 - l)) as u32)), l).unwrap())
            .filter(|p| seen.insert(*p))
            .enumerate()
            .map(|(i, prefix)| Attribution { prefix, ..attribution(i as u32) })
            .collect();
        let table = PrefixTable::from_entries(entries.clone()).unwrap();
        for p in probes.iter().copied().chain(entries.iter().map(|e| u32::from(e.prefix.network()))) {
            let addr = Ipv4Addr::from(p);
            prop_assert_eq!(table.lookup(addr).map(|a| a.prefix), brute_lookup(&entries, addr));
        }
    }

    #[test]
    fn best_per_client_day_ignores_input_order(tests in tests_strategy(), seed in any::<u64>()) {
        let mut shuffled = tests.clone();
        let n = shuffled.len();
        let mut s = seed;
        for i in (1..n).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            shuffled.swap(i, (s >> 33) as usize % (i + 1));
        }
        prop_assert_eq!(best_per_client_day(&tests), best_per_client_day(&shuffled));
    }

    #[test]
    fn median_is_monotone(v in prop::collection::vec(0.0f64..1e6, 1..50), bumps in prop::collection::vec(0.0f64..1e3, 50)) {
        let raised: Vec<f64> = v.iter().zip(&bumps).map(|(a, b)| a + b).collect();
        prop_assert!(median(&raised).unwrap() >= median(&v).unwrap());
    }

    #[test]
    fn higher_confidence_flags_are_a_subset(series in series_strategy()) {
        let lo = DetectorConfig { confidence: 0.95, ..Default::default() };
        let hi = DetectorConfig { confidence: 0.999, ..Default::default() };
        let lo_dates: HashSet<_> = threshold_detect(&series, &lo).unwrap().flags.iter().map(|b| (b.date, b.direction)).collect();
        for b in threshold_detect(&series, &hi).unwrap().flags {
            prop_assert!(lo_dates.contains(&(b.date, b.direction)));
        }
    }

    #[test]
    fn rescaling_series_and_unit_keeps_flags(series in series_strategy(), k in -3i32..4) {
        let f = 2f64.powi(k);
        let cfg = DetectorConfig::default();
        let scaled_cfg = DetectorConfig { quantization_unit: cfg.quantization_unit * f, ..cfg };
        let scaled: Vec<_> = series.iter().map(|(d, v)| (*d, v * f)).collect();
        let a = threshold_detect(&series, &cfg).unwrap();
        let b = threshold_detect(&scaled, &scaled_cfg).unwrap();
        let key = |s: &FlagSet| s.flags.iter().map(|b| (b.date, b.direction, b.observed, b.lower, b.upper)).collect::<Vec<_>>();
        prop_assert_eq!(key(&a), key(&b));
    }

    #[test]
    fn coalescing_is_idempotent(series in series_strategy()) {
        let cfg = DetectorConfig { confidence: 0.9, ..Default::default() };
        let flags = threshold_detect(&series, &cfg).unwrap();
        let events = coalesce(&flags, &series, &cfg);
        let again = FlagSet { flags: events.iter().flat_map(|e| e.flags.clone()).collect(), ..flags };
        prop_assert_eq!(coalesce(&again, &series, &cfg), events);
    }

    #[test]
    fn cohort_ranking_is_scale_free(cells in prop::collection::vec((any::<u8>(), 0u8..5, 1u32..5000), 5..120), k in -4i32..5) {
        let days = client_days(&cells);
        let f = 2f64.powi(k);
        let scaled: Vec<_> = days
            .iter()
            .cloned()
            .map(|mut d| {
                d.chosen.throughput = d.chosen.throughput.map(|t| t * f);
                d
            })
            .collect();
        let spec = CohortSpec::new(DateRange::new(day0(), day0() + Duration::days(3)).unwrap(), Grouping::Asn);
        let a = top_percentile_networks(&days, &spec).unwrap();
        let b = top_percentile_networks(&scaled, &spec).unwrap();
        prop_assert_eq!(a.members, b.members);
        prop_assert_eq!(a.cutoff.map(|c| c * f), b.cutoff);
    }

    #[test]
    fn variance_is_zero_iff_group_medians_agree(kbps in prop::collection::vec(1u32..5000, 2..6), same in any::<bool>()) {
        let cells: Vec<(u8, u8, u32)> = kbps
            .iter()
            .enumerate()
            .map(|(g, k)| ((g * 4) as u8, g as u8, if same { kbps[0] } else { *k }))
            .collect();
        let span = DateRange::new(day0(), day0()).unwrap();
        let var = cross_group_variance(&client_days(&cells), span, Cadence::Daily, Grouping::Asn);
        let medians: HashSet<u32> = cells.iter().map(|c| c.2).collect();
        prop_assert_eq!(var.points.len(), 1);
        prop_assert_eq!(var.points[0].variance == 0.0, medians.len() == 1);
    }
}
