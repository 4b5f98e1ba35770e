//! `throttlescope` command-line front end.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, bail};
use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand, ValueEnum};

use throttlescope::aggregate::Grouping;
use throttlescope::cohort::Event2Baseline;
use throttlescope::dates::DateRange;
use throttlescope::detect::DetectorConfig;
use throttlescope::pipeline::{run, Command, RunConfig};

#[derive(Parser, Debug)]
#[command(name = "throttlescope", version, about = "Throughput throttling analysis for NDT measurements")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Parse and validate records, write ingest_stats.json.
    Ingest(Common),
    /// Write daily, weekly, variance and diurnal series CSVs.
    Analyze(Common),
    /// Run both detectors, write events.json and correlation.csv.
    Detect(Common),
    /// Rank high-percentile networks and compute recovery deltas.
    Cohort(Common),
    /// Generate a labeled synthetic corpus.
    Synth(Common),
    /// Merge artifacts in a directory into summary.json.
    Report(Common),
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum GroupBy {
    Country,
    Asn,
    Prefix,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum BaselineMode {
    Fresh,
    Shared,
}

#[derive(Args, Debug)]
struct Common {
    /// Input NDJSON files (REPORT: artifact directory).
    #[arg(long, num_args = 1..)]
    input: Vec<PathBuf>,
    /// CSV with columns cidr,asn,owner,country.
    #[arg(long)]
    prefix_table: Option<PathBuf>,
    #[arg(long, default_value = "IR")]
    country: String,
    #[arg(long, value_enum, default_value = "country")]
    group_by: GroupBy,
    /// Trailing window, days.
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    confidence: Option<f64>,
    /// Quantization unit for the threshold detector, kbit/s.
    #[arg(long)]
    quantize: Option<f64>,
    #[arg(long)]
    min_event_days: Option<i64>,
    #[arg(long)]
    merge_gap_days: Option<i64>,
    #[arg(long)]
    variance_drop: Option<f64>,
    #[arg(long)]
    from: Option<NaiveDate>,
    #[arg(long)]
    to: Option<NaiveDate>,
    /// Labeled dates, one `YYYY-MM-DD[,label]` per line.
    #[arg(long)]
    events_file: Option<PathBuf>,
    /// Canned scenario name or scenario JSON path.
    #[arg(long)]
    scenario: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Local time offset for diurnal profiles, minutes.
    #[arg(long, default_value_t = 270, allow_hyphen_values = true)]
    utc_offset: i32,
    #[arg(long)]
    percentile: Option<f64>,
    #[arg(long)]
    min_presence: Option<f64>,
    /// Ranking period as START..END.
    #[arg(long, value_parser = parse_range)]
    cohort_period: Option<DateRange>,
    #[arg(long)]
    event_start: Option<NaiveDate>,
    #[arg(long)]
    event2_start: Option<NaiveDate>,
    #[arg(long, value_enum, default_value = "fresh")]
    event2_baseline: BaselineMode,
    #[arg(long, value_parser = parse_range)]
    baseline_window: Option<DateRange>,
    #[arg(long, value_parser = parse_range)]
    after_window: Option<DateRange>,
    #[arg(long, value_parser = parse_range)]
    plus2_window: Option<DateRange>,
    #[arg(long, value_parser = parse_range)]
    plus10_window: Option<DateRange>,
    #[arg(long, default_value_t = 5)]
    cohort_size: usize,
}

fn parse_range(s: &str) -> Result<DateRange, String> {
    let (a, b) = s.split_once("..").ok_or("expected START..END")?;
    let a: NaiveDate = a.parse().map_err(|e| format!("{a}: {e}"))?;
    let b: NaiveDate = b.parse().map_err(|e| format!("{b}: {e}"))?;
    DateRange::new(a, b).ok_or_else(|| "END before START".to_string())
}

fn to_config(command: Command, c: Common) -> anyhow::Result<RunConfig> {
    let mut cfg = RunConfig::new(command, c.out);
    cfg.inputs = c.input;
    cfg.prefix_table = c.prefix_table;
    cfg.country = c.country;
    cfg.grouping = match c.group_by {
        GroupBy::Country => Grouping::Country,
        GroupBy::Asn => Grouping::Asn,
        GroupBy::Prefix => Grouping::Prefix,
    };
    let d = DetectorConfig::default();
    cfg.detector = DetectorConfig {
        window_days: c.window.unwrap_or(d.window_days),
        confidence: c.confidence.unwrap_or(d.confidence),
        quantization_unit: c.quantize.unwrap_or(d.quantization_unit),
        min_event_days: c.min_event_days.unwrap_or(d.min_event_days),
        merge_gap_days: c.merge_gap_days.unwrap_or(d.merge_gap_days),
        variance_drop_threshold: c.variance_drop.unwrap_or(d.variance_drop_threshold),
    };
    cfg.range = match (c.from, c.to) {
        (None, None) => None,
        (from, to) => {
            let from = from.unwrap_or(NaiveDate::MIN);
            let to = to.unwrap_or(NaiveDate::MAX);
            Some(DateRange::new(from, to).ok_or_else(|| anyhow!("--to is before --from"))?)
        }
    };
    cfg.events_file = c.events_file;
    cfg.scenario = c.scenario;
    cfg.seed = c.seed;
    cfg.utc_offset_minutes = c.utc_offset;
    let o = &mut cfg.cohort;
    if let Some(p) = c.percentile {
        o.percentile = p;
    }
    if let Some(p) = c.min_presence {
        o.min_presence = p;
    }
    o.period = c.cohort_period;
    o.event_start = c.event_start;
    o.event2_start = c.event2_start;
    o.event2_baseline = match c.event2_baseline {
        BaselineMode::Fresh => Event2Baseline::Fresh,
        BaselineMode::Shared => Event2Baseline::Shared,
    };
    o.baseline = c.baseline_window;
    o.after = c.after_window;
    o.plus2 = c.plus2_window;
    o.plus10 = c.plus10_window;
    o.cohort_size = c.cohort_size;
    if o.event_start.is_none() && (o.event2_start.is_some() || o.after.is_some()) {
        bail!("recovery windows need --event-start");
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("THROTTLESCOPE_LOG", "warn")).init();
    let cli = Cli::parse();
    let (command, common) = match cli.command {
        Cmd::Ingest(c) => (Command::Ingest, c),
        Cmd::Analyze(c) => (Command::Analyze, c),
        Cmd::Detect(c) => (Command::Detect, c),
        Cmd::Cohort(c) => (Command::Cohort, c),
        Cmd::Synth(c) => (Command::Synth, c),
        Cmd::Report(c) => (Command::Report, c),
    };
    let result = to_config(command, common)
        .map_err(|e| serde_json::json!({ "error": "config", "message": format!("{e:#}") }))
        .and_then(|cfg| run(&cfg).map_err(|e| e.to_json()));
    match result {
        Ok(outcome) => {
            let summary = serde_json::json!({
                "command": outcome.command,
                "artifacts": outcome.artifacts,
                "warnings": outcome.warnings.len(),
            });
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(err) => {
            println!("{err}");
            ExitCode::FAILURE
        }
    }
}
