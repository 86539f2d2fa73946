//! Workload trace files: one job per line,
//! `job_id submit_time job_type input_size_bytes deadline_s reduce_tasks`,
//! whitespace separated, `#` starts a comment.

use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::model::{JobId, JobSpec, JobType};

#[derive(Debug, Error, PartialEq)]
pub enum TraceFileError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{0}")]
    Io(String),
}

fn field<T: std::str::FromStr>(raw: &str, name: &str, line: usize) -> Result<T, TraceFileError> {
    raw.parse()
        .map_err(|_| TraceFileError::Parse { line, message: format!("bad {name} '{raw}'") })
}

pub fn parse_trace_str(text: &str) -> Result<Vec<JobSpec>, TraceFileError> {
    let mut jobs: Vec<JobSpec> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let cols: Vec<&str> = content.split_whitespace().collect();
        if cols.len() != 6 {
            return Err(TraceFileError::Parse { line, message: format!("expected 6 fields, found {}", cols.len()) });
        }
        let job_type: JobType = cols[2].parse().map_err(|message| TraceFileError::Parse { line, message })?;
        let spec = JobSpec {
            job_id: JobId(field(cols[0], "job_id", line)?),
            submit_time: field(cols[1], "submit_time", line)?,
            job_type,
            input_size: field(cols[3], "input_size_bytes", line)?,
            deadline: field(cols[4], "deadline_s", line)?,
            reduce_task_count: field(cols[5], "reduce_tasks", line)?,
        };
        spec.validate().map_err(|message| TraceFileError::Parse { line, message })?;
        if jobs.iter().any(|j| j.job_id == spec.job_id) {
            return Err(TraceFileError::Parse { line, message: format!("duplicate job id {}", spec.job_id) });
        }
        jobs.push(spec);
    }
    Ok(jobs)
}

pub fn parse_trace(path: &Path) -> Result<Vec<JobSpec>, TraceFileError> {
    let text = std::fs::read_to_string(path).map_err(|e| TraceFileError::Io(format!("{}: {e}", path.display())))?;
    parse_trace_str(&text)
}

pub fn format_trace(jobs: &[JobSpec]) -> String {
    let mut out = String::from("# job_id submit_time job_type input_size_bytes deadline_s reduce_tasks\n");
    for j in jobs {
        let _ = writeln!(
            out,
            "{} {} {} {} {} {}",
            j.job_id.0, j.submit_time, j.job_type, j.input_size, j.deadline, j.reduce_task_count
        );
    }
    out
}

pub fn write_trace(jobs: &[JobSpec], path: &Path) -> Result<(), TraceFileError> {
    std::fs::write(path, format_trace(jobs)).map_err(|e| TraceFileError::Io(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    const THREE: &str = "\
# three jobs
0 0 Grep 1073741824 300 1
1 12.5 Sort 2147483648 600 2   # trailing comment

2 30 wordcount 512 90.25 0
";

    #[test]
    fn three_lines_three_jobs() {
        let jobs = parse_trace_str(THREE).unwrap();
        assert_eq!(jobs.len(), 3);
        assert_eq!(jobs[1].submit_time, 12.5);
        assert_eq!(jobs[2].job_type, JobType::WordCount);
        assert_eq!(jobs[2].reduce_task_count, 0);
    }

    #[test]
    fn round_trip() {
        let jobs = parse_trace_str(THREE).unwrap();
        assert_eq!(parse_trace_str(&format_trace(&jobs)).unwrap(), jobs);
    }

    #[test]
    fn negative_deadline_is_rejected() {
        let err = parse_trace_str("# x\n0 0 Grep 100 -5 1\n").unwrap_err();
        assert!(matches!(err, TraceFileError::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn unknown_type_and_short_lines() {
        assert!(matches!(parse_trace_str("0 0 Terasort 1 1 1"), Err(TraceFileError::Parse { line: 1, .. })));
        assert!(matches!(parse_trace_str("0 0 Grep 1 1"), Err(TraceFileError::Parse { line: 1, .. })));
        assert!(matches!(parse_trace_str("0 0 Grep 1 1 1\n0 1 Grep 1 1 1"), Err(TraceFileError::Parse { line: 2, .. })));
    }
}
