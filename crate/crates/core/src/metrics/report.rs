use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use super::{JobReport, SimReport};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("unknown report format '{0}' (expected csv, jsonl or table)")]
    Usage(String),
    #[error("cannot write {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    JsonLines,
    Table,
}

impl ReportFormat {
    pub const ALL: [ReportFormat; 3] = [ReportFormat::Csv, ReportFormat::JsonLines, ReportFormat::Table];

    pub fn extension(self) -> &'static str {
        match self {
            ReportFormat::Csv => "csv",
            ReportFormat::JsonLines => "jsonl",
            ReportFormat::Table => "txt",
        }
    }
}

impl FromStr for ReportFormat {
    type Err = ReportError;
    fn from_str(s: &str) -> Result<Self, ReportError> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "jsonl" | "json-lines" => Ok(ReportFormat::JsonLines),
            "table" => Ok(ReportFormat::Table),
            other => Err(ReportError::Usage(other.to_string())),
        }
    }
}

pub const CSV_COLUMNS: [&str; 13] = [
    "job_id",
    "job_type",
    "input_size",
    "submit_time",
    "deadline",
    "finish_time",
    "completion_time",
    "deadline_met",
    "map_tasks",
    "reduce_tasks",
    "local_maps",
    "map_locality_rate",
    "fallbacks",
];

fn csv_row(j: &JobReport) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{},{},{},{}",
        j.job_id,
        j.job_type,
        j.input_size,
        j.submit_time,
        j.deadline,
        j.finish_time,
        j.completion_time,
        j.deadline_met,
        j.map_tasks,
        j.reduce_tasks,
        j.local_maps,
        j.map_locality_rate,
        j.fallbacks
    )
}

#[derive(Serialize)]
struct Summary<'a> {
    record: &'static str,
    policy: &'a str,
    seed: u64,
    workload_id: &'a str,
    jobs: usize,
    makespan: f64,
    throughput: f64,
    mean_completion_time: f64,
    deadline_misses: u32,
    map_locality_rate: f64,
    core_moves: u64,
    deferred_launches: u64,
    mean_deferred_wait: f64,
    fallback_launches: u64,
    fallback_fraction: f64,
    event_count: u64,
    trace_sha256: &'a str,
}

#[derive(Serialize)]
struct JobLine<'a> {
    record: &'static str,
    #[serde(flatten)]
    job: &'a JobReport,
}

fn summary(r: &SimReport) -> Summary<'_> {
    Summary {
        record: "summary",
        policy: &r.policy,
        seed: r.seed,
        workload_id: &r.workload_id,
        jobs: r.jobs.len(),
        makespan: r.makespan,
        throughput: r.throughput,
        mean_completion_time: r.mean_completion_time,
        deadline_misses: r.deadline_misses,
        map_locality_rate: r.map_locality_rate,
        core_moves: r.core_moves,
        deferred_launches: r.deferred_launches,
        mean_deferred_wait: r.mean_deferred_wait,
        fallback_launches: r.fallback_launches,
        fallback_fraction: r.fallback_fraction,
        event_count: r.event_count,
        trace_sha256: &r.trace_sha256,
    }
}

/// Renders `report`. CSV has one row per job; JSON lines has one object per
/// job followed by a summary object; the table is for people.
pub fn render_report(report: &SimReport, format: ReportFormat) -> String {
    let mut out = String::new();
    match format {
        ReportFormat::Csv => {
            out.push_str(&CSV_COLUMNS.join(","));
            out.push('\n');
            for j in &report.jobs {
                out.push_str(&csv_row(j));
                out.push('\n');
            }
        }
        ReportFormat::JsonLines => {
            for j in &report.jobs {
                out.push_str(&serde_json::to_string(&JobLine { record: "job", job: j }).expect("serializable"));
                out.push('\n');
            }
            out.push_str(&serde_json::to_string(&summary(report)).expect("serializable"));
            out.push('\n');
        }
        ReportFormat::Table => render_table(report, &mut out),
    }
    out
}

fn render_table(r: &SimReport, out: &mut String) {
    let _ = writeln!(out, "policy {}  seed {}  workload {}", r.policy, r.seed, r.workload_id);
    let _ = writeln!(
        out,
        "{:>4}  {:<20} {:>6} {:>9} {:>9} {:>11} {:>4} {:>6} {:>8}",
        "job", "type", "GB", "submit", "deadline", "completion", "met", "maps", "local"
    );
    for j in &r.jobs {
        let _ = writeln!(
            out,
            "{:>4}  {:<20} {:>6.2} {:>9.1} {:>9.1} {:>11.1} {:>4} {:>6} {:>7.1}%",
            j.job_id,
            j.job_type.name(),
            j.input_size as f64 / crate::model::GIB as f64,
            j.submit_time,
            j.deadline,
            j.completion_time,
            if j.deadline_met { "yes" } else { "no" },
            j.map_tasks,
            100.0 * j.map_locality_rate
        );
    }
    let _ = writeln!(out);
    let rows: [(&str, String); 10] = [
        ("makespan", format!("{:.1} s", r.makespan)),
        ("throughput", format!("{:.3} jobs/h", r.throughput * 3600.0)),
        ("mean completion", format!("{:.1} s", r.mean_completion_time)),
        ("deadline misses", format!("{} of {}", r.deadline_misses, r.jobs.len())),
        ("map locality", format!("{:.2}%", 100.0 * r.map_locality_rate)),
        ("core moves", r.core_moves.to_string()),
        ("deferred launches", r.deferred_launches.to_string()),
        ("mean deferred wait", format!("{:.2} s", r.mean_deferred_wait)),
        ("fallback launches", format!("{} ({:.2}%)", r.fallback_launches, 100.0 * r.fallback_fraction)),
        ("events", r.event_count.to_string()),
    ];
    for (k, v) in rows {
        let _ = writeln!(out, "{k:<20}{v}");
    }
}

pub fn emit_report(report: &SimReport, format: ReportFormat, path: &Path) -> Result<(), ReportError> {
    write_file(path, &render_report(report, format))
}

/// Full report as pretty JSON, the input format of `compare`.
pub fn write_json(report: &SimReport, path: &Path) -> Result<(), ReportError> {
    let mut text = serde_json::to_string_pretty(report).expect("serializable");
    text.push('\n');
    write_file(path, &text)
}

pub(crate) fn write_file(path: &Path, text: &str) -> Result<(), ReportError> {
    std::fs::write(path, text).map_err(|source| ReportError::Io { path: path.display().to_string(), source })
}
