//! Acceptance criteria. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fail.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::net::Ipv4Addr;
use std::path::Path;
use std::time::{Duration, Instant};

use chrono::{NaiveDate, TimeZone, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

use throttlescope::aggregate::{best_per_client_day, cross_group_variance, daily_median, AttributedTest, Cadence, ClientDay, GroupKey, Grouping};
use throttlescope::attribution::{Attribution, Ipv4Cidr, PrefixTable};
use throttlescope::cohort::{recovery_table, top_percentile_networks, CohortSpec, RecoveryWindows};
use throttlescope::dates::{ymd, DateRange};
use throttlescope::detect::{coalesce, threshold_detect, variance_detect, DetectorConfig, Shift};
use throttlescope::ingest::{Direction, MeasurementRecord};
use throttlescope::metrics::{derive, DerivedMetrics};
use throttlescope::pipeline::{run, Command, RunConfig};
use throttlescope::synth::{generate, replay_paper_shapes, PaperShape, SynthCorpus};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within_time(started: Instant, limit: Duration, detail: String) -> Outcome {
    let took = started.elapsed();
    check(took < limit, format!("{detail}; {:.2}s of {}s budget", took.as_secs_f64(), limit.as_secs()))
}

fn attributed(corpus: &SynthCorpus) -> Vec<AttributedTest<f64>> {
    corpus
        .records
        .iter()
        .map(|r| AttributedTest {
            client_addr: r.client_addr,
            timestamp: r.timestamp,
            metrics: derive(r),
            attribution: corpus.prefix_table.lookup(r.client_addr).expect("synth client is attributable").clone(),
        })
        .collect()
}

fn client_days(shape: PaperShape) -> Vec<ClientDay<f64>> {
    let corpus = generate(&replay_paper_shapes(shape)).expect("canned scenario generates");
    best_per_client_day(&attributed(&corpus))
}

fn rel_err(got: f64, want: f64) -> f64 {
    if want == 0.0 {
        got.abs()
    } else {
        ((got - want) / want).abs()
    }
}

fn metric_exactness() -> Outcome {
    let started = Instant::now();
    let hand = MeasurementRecord {
        client_addr: Ipv4Addr::new(213, 233, 161, 5),
        timestamp: Utc.with_ymd_and_hms(2011, 11, 30, 21, 30, 0).unwrap(),
        server_country: "GR".into(),
        direction: Direction::S2C,
        sum_rtt: 5000.0,
        count_rtt: 50,
        min_rtt: 80.0,
        max_rtt: 240.0,
        cong_signals: 30,
        segs_out: 500,
        segs_retrans: 0,
        data_segs_out: 500,
        snd_lim_time_rwin: 3_000_000,
        snd_lim_time_cwnd: 5_000_000,
        snd_lim_time_snd: 2_000_000,
        hc_thru_octets_acked: 1_250_000,
    };
    let m = derive::<f64>(&hand);
    if (m.throughput, m.avg_rtt, m.net_limited_ratio) != (Some(1_000_000.0), Some(100.0), Some(0.5)) {
        return Err(format!("hand examples gave {:?} {:?} {:?}", m.throughput, m.avg_rtt, m.net_limited_ratio));
    }

    let mut s = replay_paper_shapes(PaperShape::Nov2011);
    s.span = DateRange::new(ymd(2011, 11, 25), ymd(2011, 12, 5)).unwrap();
    let corpus = generate(&s).map_err(|e| e.to_string())?;
    let n = 1000;
    if corpus.records.len() < n {
        return Err(format!("only {} records synthesized", corpus.records.len()));
    }
    let mut worst: f64 = 0.0;
    for (r, t) in corpus.records.iter().zip(&corpus.record_truth).take(n) {
        let m = derive::<f64>(r);
        for (got, want) in [
            (m.throughput, t.throughput),
            (m.avg_rtt, t.avg_rtt),
            (m.net_limited_ratio, t.net_limited_ratio),
            (m.loss_congestion, t.loss_congestion),
            (m.loss_retrans, t.loss_retrans),
        ] {
            worst = worst.max(got.map_or(f64::INFINITY, |g| rel_err(g, want)));
        }
    }
    if worst > 1e-6 {
        return Err(format!("max relative error {worst:e} over {n} records"));
    }
    within_time(started, Duration::from_secs(1), format!("hand examples exact; max relative error {worst:.1e} over {n} records"))
}

fn random_tests(rng: &mut ChaCha8Rng) -> Vec<AttributedTest<f64>> {
    let attribution = Attribution { prefix: "10.0.0.0/8".parse().unwrap(), asn: 64500, owner: "test".into(), country: "IR".into() };
    (0..10_000)
        .map(|_| {
            let client = Ipv4Addr::from(0x0A00_0000 + rng.random_range(0..200u32));
            let day = ymd(2012, 1, 1) + chrono::Duration::days(rng.random_range(0..30));
            let secs = rng.random_range(0..86_400);
            // a coarse grid makes throughput ties common
            let tput = if rng.random_bool(0.3) { f64::from(rng.random_range(1..5u32)) * 1e6 } else { rng.random_range(1e4..1e7) };
            AttributedTest {
                client_addr: client,
                timestamp: day.and_hms_opt(0, 0, 0).unwrap().and_utc() + chrono::Duration::seconds(secs),
                metrics: DerivedMetrics {
                    throughput: Some(tput),
                    avg_rtt: Some(rng.random_range(20.0..400.0)),
                    ..Default::default()
                },
                attribution: attribution.clone(),
            }
        })
        .collect()
}

fn brute_best(tests: &[AttributedTest<f64>]) -> BTreeMap<(NaiveDate, Ipv4Addr), (&AttributedTest<f64>, usize)> {
    let mut keys: Vec<(NaiveDate, Ipv4Addr)> = tests.iter().map(|t| (t.timestamp.date_naive(), t.client_addr)).collect();
    keys.sort();
    keys.dedup();
    keys.into_iter()
        .map(|k| {
            let group: Vec<&AttributedTest<f64>> = tests.iter().filter(|t| (t.timestamp.date_naive(), t.client_addr) == k).collect();
            let mut best = group[0];
            for t in &group[1..] {
                let (a, b) = (t.metrics.throughput.unwrap(), best.metrics.throughput.unwrap());
                let better = a > b
                    || (a == b && t.timestamp < best.timestamp)
                    || (a == b && t.timestamp == best.timestamp && t.metrics.avg_rtt < best.metrics.avg_rtt);
                if better {
                    best = t;
                }
            }
            (k, (best, group.len()))
        })
        .collect()
}

fn brute_median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

fn dedup_median_oracle() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let tests = random_tests(&mut rng);
    let days = best_per_client_day(&tests);
    let oracle = brute_best(&tests);
    if days.len() != oracle.len() {
        return Err(format!("{} ClientDays vs {} oracle groups", days.len(), oracle.len()));
    }
    for d in &days {
        let (t, n) = oracle[&(d.date, d.client_addr)];
        if d.chosen != t.metrics || d.chosen_timestamp != t.timestamp || d.n_tests != n {
            return Err(format!("chosen test differs for {} on {}", d.client_addr, d.date));
        }
    }
    let series = daily_median(&days, &GroupKey::Country("IR".into()));
    let mut by_date: BTreeMap<NaiveDate, Vec<&AttributedTest<f64>>> = BTreeMap::new();
    for ((date, _), (t, _)) in &oracle {
        by_date.entry(*date).or_default().push(t);
    }
    if series.points.len() != by_date.len() {
        return Err("series length differs from oracle".into());
    }
    let mut worst: f64 = 0.0;
    for p in &series.points {
        let chosen = &by_date[&p.date];
        let tput = brute_median(chosen.iter().map(|t| t.metrics.throughput.unwrap()).collect());
        let rtt = brute_median(chosen.iter().map(|t| t.metrics.avg_rtt.unwrap()).collect());
        worst = worst.max((p.throughput - tput).abs() / tput).max((p.avg_rtt.unwrap() - rtt).abs() / rtt);
        if p.client_count != chosen.len() {
            return Err(format!("client_count differs on {}", p.date));
        }
    }
    if worst > 1e-12 {
        return Err(format!("median relative error {worst:e}"));
    }
    within_time(
        started,
        Duration::from_secs(5),
        format!("{} tests, {} ClientDays identical; median error {worst:.1e}", tests.len(), days.len()),
    )
}

fn lpm_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut entries: HashMap<Ipv4Cidr, Attribution> = HashMap::new();
    while entries.len() < 500 {
        let len = rng.random_range(8..=28u8);
        let mask = u32::MAX << (32 - len);
        // draw inside a few /8s so prefixes nest
        let base = (rng.random_range(0..4u32) << 24) | (rng.random::<u32>() & 0x00FF_FFFF);
        let cidr = Ipv4Cidr::new(Ipv4Addr::from(base & mask), len).unwrap();
        entries.insert(cidr, Attribution { prefix: cidr, asn: entries.len() as u32, owner: String::new(), country: "IR".into() });
    }
    let list: Vec<Attribution> = entries.into_values().collect();
    let table = PrefixTable::from_entries(list.clone()).map_err(|e| e.to_string())?;
    let started = Instant::now();
    let mut hits = 0;
    for i in 0..10_000 {
        let addr = if i % 2 == 0 {
            let e = &list[rng.random_range(0..list.len())];
            e.prefix.nth(rng.random_range(0..e.prefix.size()))
        } else {
            Ipv4Addr::from(rng.random_range(0..0x0500_0000u32))
        };
        let brute = list.iter().filter(|e| e.prefix.contains(addr)).max_by_key(|e| e.prefix.prefix_len()).map(|e| e.prefix);
        let got = table.lookup(addr).map(|e| e.prefix);
        if got != brute {
            return Err(format!("{addr}: table {got:?}, scan {brute:?}"));
        }
        hits += usize::from(got.is_some());
    }
    within_time(started, Duration::from_secs(1), format!("10000/10000 agree ({hits} hits, 500 entries)"))
}

fn run_synth_detect(shape: PaperShape, dir: &Path) -> Result<Value, String> {
    let corpus_dir = dir.join("synth");
    let mut synth = RunConfig::new(Command::Synth, &corpus_dir);
    synth.scenario = Some(shape.as_str().to_string());
    run(&synth).map_err(|e| e.to_string())?;
    let mut detect = RunConfig::new(Command::Detect, dir.join("detect"));
    detect.inputs = vec![corpus_dir.join("records.ndjson")];
    detect.prefix_table = Some(corpus_dir.join("prefix_table.csv"));
    run(&detect).map_err(|e| e.to_string())?;
    let text = fs::read_to_string(dir.join("detect/events.json")).map_err(|e| e.to_string())?;
    serde_json::from_str(&text).map_err(|e| e.to_string())
}

fn shape_reproduction(shape: PaperShape, onset: NaiveDate, target: f64, budget: Option<Duration>) -> Outcome {
    let started = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let report = run_synth_detect(shape, dir.path())?;
    let long_drops: Vec<&Value> = report["events"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|e| e["metric"] == "THROUGHPUT" && e["direction"] == "DROP" && e["short_term"] == false)
        .collect();
    let [event] = long_drops.as_slice() else {
        return Err(format!("{} long throughput DROP events", long_drops.len()));
    };
    let start: NaiveDate = event["start"].as_str().unwrap().parse().unwrap();
    let magnitude = event["magnitude_pct"].as_f64().unwrap_or(f64::NAN);
    let offset = (start - onset).num_days();
    let detail = format!("onset {start} ({offset:+} d), magnitude {magnitude:.2}% (target {target}%)");
    let close = (magnitude - target).abs() <= 5.0;
    if offset.abs() > 2 || !close {
        return Err(detail);
    }
    match budget {
        Some(limit) => within_time(started, limit, detail),
        None => Ok(detail),
    }
}

fn variance_collapse() -> Outcome {
    let days = client_days(PaperShape::Nov2011);
    let scenario = replay_paper_shapes(PaperShape::Nov2011);
    let policy = &scenario.policies[0];
    let var = cross_group_variance(&days, scenario.span, Cadence::Weekly, Grouping::Asn);
    let pre: Vec<f64> = var.points.iter().filter(|p| p.period_start + chrono::Duration::days(6) < policy.start).map(|p| p.variance).collect();
    let during: Vec<f64> = var
        .points
        .iter()
        .filter(|p| p.period_start >= policy.start && p.period_start + chrono::Duration::days(6) <= policy.end)
        .map(|p| p.variance)
        .collect();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let drop_pct = (mean(&during) - mean(&pre)) / mean(&pre) * 100.0;
    let flags = variance_detect(&var.values(), Cadence::Weekly, &DetectorConfig::default()).map_err(|e| e.to_string())?;
    let first = flags
        .flags
        .iter()
        .filter(|b| b.direction == Shift::Drop)
        .map(|b| b.date)
        .find(|d| *d + chrono::Duration::days(6) >= policy.start);
    let detail = format!("weekly variance {drop_pct:.1}% vs pre-event; first collapse flag {first:?}");
    let flagged_in_time = first.is_some_and(|d| (d - policy.start).num_days().abs() <= 7);
    check(drop_pct <= -80.0 && flagged_in_time, detail)
}

fn exemption_cohort() -> Outcome {
    let days = client_days(PaperShape::ExemptAcademic);
    let windows = RecoveryWindows::around(ymd(2011, 11, 30), Some(ymd(2012, 10, 4)));
    let during = DateRange::new(ymd(2011, 11, 30), ymd(2012, 8, 15)).unwrap();
    let spec = CohortSpec::new(during, Grouping::Asn);
    let table = recovery_table(&days, &windows, &spec).map_err(|e| e.to_string())?;
    let exempt = GroupKey::Asn(12660);
    let Some(row) = table.rows.iter().find(|r| r.group == exempt) else {
        return Err("exempt ASN missing from recovery table".into());
    };
    let exempt_delta = row.delta_after.unwrap_or(f64::NAN);
    let capped: Vec<f64> = table.rows.iter().filter(|r| r.group != exempt).map(|r| r.delta_after.unwrap_or(f64::NAN)).collect();
    let worst_capped = capped.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let ranking = top_percentile_networks(&days, &spec).map_err(|e| e.to_string())?;
    let top = ranking.members.first().map(|m| m.group.clone());
    let detail = format!(
        "exempt delta {exempt_delta:.2}%, least-affected capped {worst_capped:.2}% over {} ASNs, top ranked {top:?}",
        capped.len()
    );
    check(exempt_delta > -10.0 && capped.len() == 9 && worst_capped < -60.0 && top == Some(exempt), detail)
}

fn false_positive_budget() -> Outcome {
    let days = client_days(PaperShape::DiurnalOnly);
    let series = daily_median(&days, &GroupKey::Country("IR".into())).throughput();
    let cfg = DetectorConfig::default();
    let flags = threshold_detect(&series, &cfg).map_err(|e| e.to_string())?;
    let events = coalesce(&flags, &series, &cfg);
    let long = events.iter().filter(|e| !e.short_term).count();
    check(
        flags.flags.len() <= 3 && long == 0,
        format!("{} flagged days of {} evaluated, {long} long events", flags.flags.len(), flags.evaluated),
    )
}

fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for sub in ["synth", "analyze", "detect"] {
        for entry in fs::read_dir(dir.join(sub)).unwrap() {
            let entry = entry.unwrap();
            out.insert(format!("{sub}/{}", entry.file_name().to_string_lossy()), fs::read(entry.path()).unwrap());
        }
    }
    out
}

fn determinism() -> Outcome {
    let mut snaps = Vec::new();
    for _ in 0..2 {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        run_synth_detect(PaperShape::Oct2012, dir.path())?;
        let corpus = dir.path().join("synth");
        let mut analyze = RunConfig::new(Command::Analyze, dir.path().join("analyze"));
        analyze.inputs = vec![corpus.join("records.ndjson")];
        analyze.prefix_table = Some(corpus.join("prefix_table.csv"));
        run(&analyze).map_err(|e| e.to_string())?;
        snaps.push(snapshot(dir.path()));
    }
    let differing: Vec<&String> = snaps[0].keys().filter(|k| snaps[0].get(*k) != snaps[1].get(*k)).collect();
    check(
        differing.is_empty() && snaps[0].len() == snaps[1].len(),
        format!("{} artifacts compared, differing: {differing:?}", snaps[0].len()),
    )
}

fn main() {
    let criteria: Vec<Criterion> = vec![
        ("metric exactness", metric_exactness),
        ("dedup and median oracle", dedup_median_oracle),
        ("longest-prefix oracle", lpm_oracle),
        ("NOV2011 shape", || shape_reproduction(PaperShape::Nov2011, ymd(2011, 11, 30), -77.0, Some(Duration::from_secs(60)))),
        ("OCT2012 shape", || shape_reproduction(PaperShape::Oct2012, ymd(2012, 10, 4), -69.0, None)),
        ("variance collapse", variance_collapse),
        ("exemption cohort", exemption_cohort),
        ("false-positive budget", false_positive_budget),
        ("determinism", determinism),
    ];
    let total = criteria.len();
    let mut failed = 0;
    for (name, criterion) in criteria {
        match criterion() {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail}");
            }
        }
    }
    println!("{total} criteria, {failed} failed");
    if failed > 0 {
        std::process::exit(1);
    }
}
