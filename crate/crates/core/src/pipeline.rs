//! End-to-end commands over files: ingest, analyze, detect, cohort, synth
//! and report. The CLI is a thin wrapper around [`run`].

use std::collections::BTreeMap;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::aggregate::{
    best_per_client_day, cross_group_variance, daily_median, daily_medians_by, diurnal_profile, weekly_rollup,
    AttributedTest, Cadence, ClientDay, GroupKey, Grouping, VarianceSeries,
};
use crate::attribution::{filter_country, load_prefix_table, PrefixTable};
use crate::cohort::{
    comparative_series, recovery_table, top_percentile_networks, CohortSpec, Event2Baseline, RecoveryWindows,
};
use crate::dates::DateRange;
use crate::detect::{
    coalesce, event_context, parse_labeled_dates, threshold_detect, variance_detect, DetectionEvent, DetectorConfig,
};
use crate::ingest::{iter_records, validate, Reason};
use crate::metrics::derive;
use crate::report::{self, write_atomic};
use crate::synth::{generate, replay_paper_shapes, PaperShape, ThrottleScenario};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Ingest,
    Analyze,
    Detect,
    Cohort,
    Synth,
    Report,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortOptions {
    /// Period for the percentile ranking; defaults to the analysis span.
    pub period: Option<DateRange>,
    pub percentile: f64,
    pub min_presence: f64,
    pub event_start: Option<NaiveDate>,
    pub event2_start: Option<NaiveDate>,
    pub event2_baseline: Event2Baseline,
    pub baseline: Option<DateRange>,
    pub after: Option<DateRange>,
    pub plus2: Option<DateRange>,
    pub plus10: Option<DateRange>,
    /// How many top-ranked groups form the comparative cohort.
    pub cohort_size: usize,
}

impl Default for CohortOptions {
    fn default() -> Self {
        Self {
            period: None,
            percentile: 0.95,
            min_presence: 0.5,
            event_start: None,
            event2_start: None,
            event2_baseline: Event2Baseline::Fresh,
            baseline: None,
            after: None,
            plus2: None,
            plus10: None,
            cohort_size: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: Command,
    pub inputs: Vec<PathBuf>,
    pub prefix_table: Option<PathBuf>,
    pub country: String,
    pub grouping: Grouping,
    pub detector: DetectorConfig,
    pub out: PathBuf,
    pub range: Option<DateRange>,
    pub events_file: Option<PathBuf>,
    /// Canned scenario name or path to a scenario JSON file.
    pub scenario: Option<String>,
    pub seed: Option<u64>,
    pub utc_offset_minutes: i32,
    pub cohort: CohortOptions,
}

impl RunConfig {
    pub fn new(command: Command, out: impl Into<PathBuf>) -> Self {
        Self {
            command,
            inputs: Vec::new(),
            prefix_table: None,
            country: "IR".to_string(),
            grouping: Grouping::Country,
            detector: DetectorConfig::default(),
            out: out.into(),
            range: None,
            events_file: None,
            scenario: None,
            seed: None,
            utc_offset_minutes: 270,
            cohort: CohortOptions::default(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Core(#[from] crate::Error),
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
}

impl PipelineError {
    /// Stable machine-readable category.
    pub fn kind(&self) -> &'static str {
        match self {
            PipelineError::Config(_) => "config",
            PipelineError::Io { .. } => "io",
            PipelineError::Core(_) => "analysis",
            PipelineError::Parse { .. } => "parse",
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        json!({ "error": self.kind(), "message": self.to_string() })
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io { path: path.to_path_buf(), source }
}

fn config(msg: impl Into<String>) -> PipelineError {
    PipelineError::Config(msg.into())
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RunOutcome {
    pub command: Option<Command>,
    pub artifacts: Vec<PathBuf>,
    pub warnings: Vec<String>,
}

impl RunOutcome {
    fn write(&mut self, dir: &Path, name: &str, contents: impl AsRef<[u8]>) -> Result<(), PipelineError> {
        let path = dir.join(name);
        write_atomic(&path, contents.as_ref()).map_err(io_err(&path))?;
        self.artifacts.push(path);
        Ok(())
    }

    fn warn(&mut self, msg: impl Into<String>) {
        let msg = msg.into();
        log::warn!("{msg}");
        self.warnings.push(msg);
    }
}

/// Pretty JSON without rounding, for inputs that must round-trip.
fn pretty_exact<S: Serialize>(v: &S) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("artifact serializes");
    s.push('\n');
    s
}

/// Pretty JSON with floats rounded to six decimals.
fn pretty<S: Serialize>(v: &S) -> String {
    let mut value = serde_json::to_value(v).expect("artifact serializes");
    report::round_floats(&mut value, 6);
    let mut s = serde_json::to_string_pretty(&value).expect("value serializes");
    s.push('\n');
    s
}

pub fn run(cfg: &RunConfig) -> Result<RunOutcome, PipelineError> {
    cfg.detector.validate().map_err(crate::Error::from)?;
    for p in cfg.inputs.iter().chain(&cfg.prefix_table).chain(&cfg.events_file) {
        if !p.exists() {
            return Err(config(format!("{} does not exist", p.display())));
        }
    }
    fs::create_dir_all(&cfg.out).map_err(io_err(&cfg.out))?;
    let mut out = RunOutcome { command: Some(cfg.command), ..Default::default() };
    match cfg.command {
        Command::Ingest => ingest(cfg, &mut out)?,
        Command::Analyze => analyze(cfg, &mut out)?,
        Command::Detect => detect(cfg, &mut out)?,
        Command::Cohort => cohort(cfg, &mut out)?,
        Command::Synth => synth(cfg, &mut out)?,
        Command::Report => summary(cfg, &mut out)?,
    }
    Ok(out)
}

/// Counts from reading and filtering the inputs.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct IngestStats {
    pub files: Vec<String>,
    pub lines: usize,
    pub parsed: usize,
    pub malformed: usize,
    pub verdicts: BTreeMap<String, usize>,
    pub valid: usize,
    pub clamped_ratios: usize,
    pub outside_range: usize,
    pub attributed: Option<usize>,
    pub unattributed: Option<usize>,
    pub other_country: Option<usize>,
    /// The first malformed lines, as `file:line: message`.
    pub errors: Vec<String>,
}

const MAX_REPORTED_ERRORS: usize = 20;

struct Loaded {
    tests: Vec<AttributedTest<f64>>,
    stats: IngestStats,
}

fn load_table(cfg: &RunConfig) -> Result<Option<PrefixTable>, PipelineError> {
    let Some(path) = &cfg.prefix_table else { return Ok(None) };
    let f = fs::File::open(path).map_err(io_err(path))?;
    Ok(Some(load_prefix_table(f).map_err(crate::Error::from)?))
}

fn load(cfg: &RunConfig, require_table: bool) -> Result<Loaded, PipelineError> {
    if cfg.inputs.is_empty() {
        return Err(config("no --input given"));
    }
    let table = load_table(cfg)?;
    if require_table && table.is_none() {
        return Err(config("--prefix-table is required"));
    }
    let mut stats = IngestStats::default();
    for r in Reason::ALL {
        stats.verdicts.insert(r.as_str().to_string(), 0);
    }
    let mut records = Vec::new();
    for path in &cfg.inputs {
        stats.files.push(path.display().to_string());
        let reader = BufReader::new(fs::File::open(path).map_err(io_err(path))?);
        for item in iter_records(reader) {
            stats.lines += 1;
            match item.map_err(io_err(path))? {
                Ok(src) => {
                    stats.parsed += 1;
                    let verdict = validate(&src.record);
                    *stats.verdicts.get_mut(verdict.reason.as_str()).expect("all reasons seeded") += 1;
                    if !verdict.valid {
                        continue;
                    }
                    stats.valid += 1;
                    if let Some(range) = cfg.range {
                        if !range.contains(src.record.timestamp.date_naive()) {
                            stats.outside_range += 1;
                            continue;
                        }
                    }
                    records.push(src.record);
                }
                Err(e) => {
                    stats.malformed += 1;
                    *stats.verdicts.get_mut(Reason::Malformed.as_str()).expect("seeded") += 1;
                    if stats.errors.len() < MAX_REPORTED_ERRORS {
                        stats.errors.push(format!("{}:{}: {}", path.display(), e.line, e.message));
                    }
                }
            }
        }
    }

    let mut tests = Vec::new();
    if let Some(table) = &table {
        let filtered = filter_country(&records, table, &cfg.country);
        stats.attributed = Some(filtered.kept.len());
        stats.unattributed = Some(filtered.misses);
        stats.other_country = Some(filtered.other_country);
        for (r, attribution) in filtered.kept {
            let metrics = derive::<f64>(r);
            if metrics.clamped {
                stats.clamped_ratios += 1;
            }
            if metrics.throughput.is_none() {
                continue;
            }
            tests.push(AttributedTest { client_addr: r.client_addr, timestamp: r.timestamp, metrics, attribution });
        }
    } else {
        stats.clamped_ratios = records.iter().filter(|r| derive::<f64>(r).clamped).count();
    }
    Ok(Loaded { tests, stats })
}

fn ingest(cfg: &RunConfig, out: &mut RunOutcome) -> Result<(), PipelineError> {
    let loaded = load(cfg, false)?;
    if loaded.stats.malformed > 0 {
        out.warn(format!("{} malformed lines skipped", loaded.stats.malformed));
    }
    if loaded.stats.valid == 0 {
        out.warn("no valid records");
    }
    out.write(&cfg.out, "ingest_stats.json", pretty(&loaded.stats))
}

fn span_of(days: &[ClientDay<f64>]) -> Option<DateRange> {
    let first = days.iter().map(|d| d.date).min()?;
    let last = days.iter().map(|d| d.date).max()?;
    DateRange::new(first, last)
}

/// The data span, narrowed to the configured range.
fn analysis_span(cfg: &RunConfig, days: &[ClientDay<f64>]) -> Option<DateRange> {
    let span = span_of(days)?;
    match cfg.range {
        Some(r) => r.intersect(&span),
        None => Some(span),
    }
}

fn variance_grouping(g: Grouping) -> Grouping {
    match g {
        Grouping::Country => Grouping::Asn,
        other => other,
    }
}

fn prepare(cfg: &RunConfig, out: &mut RunOutcome) -> Result<(Loaded, Vec<ClientDay<f64>>), PipelineError> {
    let loaded = load(cfg, true)?;
    if loaded.stats.malformed > 0 {
        out.warn(format!("{} malformed lines skipped", loaded.stats.malformed));
    }
    if loaded.tests.is_empty() {
        out.warn(format!("no valid records attributed to {}", cfg.country));
    }
    let days = best_per_client_day(&loaded.tests);
    Ok((loaded, days))
}

fn analyze(cfg: &RunConfig, out: &mut RunOutcome) -> Result<(), PipelineError> {
    let (loaded, days) = prepare(cfg, out)?;
    let daily = daily_medians_by(&days, cfg.grouping);
    let weekly: Vec<_> = daily.iter().map(weekly_rollup).collect();
    let mut variance: Vec<VarianceSeries<f64>> = Vec::new();
    if let Some(period) = analysis_span(cfg, &days) {
        let vg = variance_grouping(cfg.grouping);
        for cadence in [Cadence::Daily, Cadence::Weekly] {
            variance.push(cross_group_variance(&days, period, cadence, vg));
        }
        if cfg.grouping == Grouping::Country {
            let key = GroupKey::Country(cfg.country.clone());
            variance.push(crate::aggregate::within_group_variance(&days, &key, period));
        }
    }
    if variance.iter().all(|v| v.points.is_empty()) {
        out.warn("no period had enough groups for a variance estimate");
    }
    let diurnal = diurnal_profile(&loaded.tests, cfg.utc_offset_minutes).map_err(crate::Error::from)?;
    out.write(&cfg.out, "daily.csv", report::series_csv(&daily))?;
    out.write(&cfg.out, "weekly.csv", report::weekly_csv(&weekly))?;
    out.write(&cfg.out, "variance.csv", report::variance_csv(&variance))?;
    out.write(&cfg.out, "diurnal.csv", report::diurnal_csv(&diurnal))
}

/// Detector output for one corpus.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DetectReport {
    pub country: String,
    pub config: DetectorConfig,
    pub series_start: Option<NaiveDate>,
    pub series_end: Option<NaiveDate>,
    pub threshold_flags: usize,
    pub variance_flags: usize,
    pub events: Vec<DetectionEvent>,
}

/// Threshold detection on the national daily median and variance detection
/// on weekly cross-group variance, both coalesced into events.
pub fn detect_events(
    days: &[ClientDay<f64>],
    country: &str,
    grouping: Grouping,
    cfg: &DetectorConfig,
    warnings: &mut Vec<String>,
) -> Result<DetectReport, PipelineError> {
    let national = daily_median(days, &GroupKey::Country(country.to_string()));
    let series = national.throughput();
    let mut events = Vec::new();
    let mut threshold_flags = 0;
    match threshold_detect(&series, cfg) {
        Ok(flags) => {
            threshold_flags = flags.flags.len();
            events.extend(coalesce(&flags, &series, cfg));
        }
        Err(e) => warnings.push(format!("threshold detector skipped: {e}")),
    }
    let mut variance_flags = 0;
    if let Some(period) = span_of(days) {
        let var = cross_group_variance(days, period, Cadence::Weekly, variance_grouping(grouping));
        let values = var.values();
        match variance_detect(&values, Cadence::Weekly, cfg) {
            Ok(flags) => {
                variance_flags = flags.flags.len();
                events.extend(coalesce(&flags, &values, cfg));
            }
            Err(e) => warnings.push(format!("variance detector skipped: {e}")),
        }
    }
    events.sort_by_key(|e| (e.start, e.detector, e.direction));
    Ok(DetectReport {
        country: country.to_string(),
        config: *cfg,
        series_start: series.first().map(|p| p.0),
        series_end: series.last().map(|p| p.0),
        threshold_flags,
        variance_flags,
        events,
    })
}

fn detect(cfg: &RunConfig, out: &mut RunOutcome) -> Result<(), PipelineError> {
    let (_, days) = prepare(cfg, out)?;
    let mut warnings = Vec::new();
    let report = detect_events(&days, &cfg.country, cfg.grouping, &cfg.detector, &mut warnings)?;
    for w in warnings {
        out.warn(w);
    }
    out.write(&cfg.out, "events.json", pretty(&report))?;
    if let Some(path) = &cfg.events_file {
        let f = fs::File::open(path).map_err(io_err(path))?;
        let dates = parse_labeled_dates(BufReader::new(f))
            .map_err(|e| PipelineError::Parse { path: path.clone(), message: e.to_string() })?;
        let national = daily_median(&days, &GroupKey::Country(cfg.country.clone()));
        let rows = event_context(&national, &dates);
        out.write(&cfg.out, "correlation.csv", report::correlation_csv(&rows))?;
    }
    Ok(())
}

fn cohort(cfg: &RunConfig, out: &mut RunOutcome) -> Result<(), PipelineError> {
    let (_, days) = prepare(cfg, out)?;
    let grouping = match cfg.grouping {
        Grouping::Country => Grouping::Asn,
        g => g,
    };
    let Some(full) = analysis_span(cfg, &days) else {
        out.warn("no data for cohort analysis");
        out.write(&cfg.out, "cohort.csv", report::cohort_csv(&Default::default()))?;
        return Ok(());
    };
    let o = &cfg.cohort;
    let spec = CohortSpec {
        period: o.period.unwrap_or(full),
        percentile: o.percentile,
        grouping,
        min_presence: o.min_presence,
    };
    let ranking = top_percentile_networks(&days, &spec).map_err(crate::Error::from)?;
    out.write(&cfg.out, "cohort.csv", report::cohort_csv(&ranking))?;

    let mut meta = json!({
        "grouping": grouping,
        "period": spec.period,
        "percentile": spec.percentile,
        "cutoff_mbps": ranking.cutoff.map(|c| c / 1e6),
        "min_presence": spec.min_presence,
    });

    let members: Vec<GroupKey> = ranking.groups().into_iter().take(o.cohort_size).collect();
    if members.is_empty() {
        out.warn("no group exceeded the percentile cutoff; comparative series skipped");
    } else {
        let (c, n) = comparative_series(&members, &days, full, "top", GroupKey::Country(cfg.country.clone()))
            .map_err(crate::Error::from)?;
        meta["cohort"] = json!(members.iter().map(|k| k.to_string()).collect::<Vec<_>>());
        out.write(&cfg.out, "comparative.csv", report::comparative_csv(&c, &n))?;
    }

    if let Some(start) = o.event_start {
        let mut windows = RecoveryWindows::around(start, o.event2_start);
        windows.event2_baseline = o.event2_baseline;
        if let Some(b) = o.baseline {
            windows.baseline = b;
        }
        if let Some(w) = o.after {
            windows.after = w;
        }
        if let Some(w) = o.plus2 {
            windows.plus2 = w;
        }
        if let Some(w) = o.plus10 {
            windows.plus10 = w;
        }
        let table = recovery_table(&days, &windows, &spec).map_err(crate::Error::from)?;
        meta["windows"] = json!(windows);
        meta["event2_baseline_range"] = json!(windows.event2_baseline_range());
        if windows.event2.is_some() {
            meta["event2_baseline_note"] = json!(match windows.event2_baseline {
                Event2Baseline::Fresh => "event-2 deltas are relative to the window preceding the second event",
                Event2Baseline::Shared => "event-2 deltas are relative to the first event's baseline",
            });
        }
        out.write(&cfg.out, "recovery.csv", report::recovery_csv(&table))?;
        out.write(&cfg.out, "recovery_excluded.csv", report::excluded_csv(&table))?;
    }
    out.write(&cfg.out, "cohort.json", pretty(&meta))
}

/// Resolves a canned scenario name or a scenario JSON path.
pub fn resolve_scenario(spec: &str) -> Result<ThrottleScenario, PipelineError> {
    let path = Path::new(spec);
    if path.is_file() {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        return serde_json::from_str(&text).map_err(|e| PipelineError::Parse { path: path.to_path_buf(), message: e.to_string() });
    }
    let shape: PaperShape = spec.parse().map_err(crate::Error::from)?;
    Ok(replay_paper_shapes(shape))
}

fn synth(cfg: &RunConfig, out: &mut RunOutcome) -> Result<(), PipelineError> {
    let name = cfg.scenario.as_deref().ok_or_else(|| config("--scenario is required"))?;
    let mut scenario = resolve_scenario(name)?;
    if let Some(seed) = cfg.seed {
        scenario.seed = seed;
    }
    let corpus = generate(&scenario).map_err(crate::Error::from)?;
    let mut records = String::new();
    for r in &corpus.records {
        records.push_str(&r.to_ndjson());
        records.push('\n');
    }
    let mut truth_records = String::new();
    for t in &corpus.record_truth {
        truth_records.push_str(&serde_json::to_string(t).expect("truth serializes"));
        truth_records.push('\n');
    }
    out.write(&cfg.out, "records.ndjson", records)?;
    out.write(&cfg.out, "truth_records.ndjson", truth_records)?;
    out.write(&cfg.out, "truth.json", pretty_exact(&corpus.truth))?;
    out.write(&cfg.out, "prefix_table.csv", corpus.prefix_table.to_csv())?;
    out.write(&cfg.out, "scenario.json", pretty_exact(&scenario))
}

fn summary(cfg: &RunConfig, out: &mut RunOutcome) -> Result<(), PipelineError> {
    let dir = cfg.inputs.first().unwrap_or(&cfg.out);
    if !dir.is_dir() {
        return Err(config(format!("{} is not a directory", dir.display())));
    }
    let value = report::summarize(dir).map_err(io_err(dir))?;
    if value["artifacts"].as_object().is_none_or(|m| m.is_empty()) {
        out.warn(format!("no artifacts found in {}", dir.display()));
    }
    out.write(&cfg.out, report::SUMMARY_FILE, pretty(&value))
}
