//! Run reports, comparisons, trace replay and the experiment driver.

use serde::{Deserialize, Serialize};

use crate::model::JobType;

pub mod compare;
pub mod experiment;
pub mod replay;
pub mod report;

pub use compare::{compare, relative, ComparisonError, ComparisonReport};
pub use experiment::{run_cell, run_experiment, CellResult, Matrix, MatrixEntry};
pub use replay::{replay, Check, ReplayError, ReplaySummary, Violation};
pub use report::{emit_report, render_report, write_json, ReportError, ReportFormat};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobReport {
    pub job_id: u32,
    pub job_type: JobType,
    pub input_size: u64,
    pub submit_time: f64,
    /// Relative deadline, seconds.
    pub deadline: f64,
    pub finish_time: f64,
    /// `finish_time - submit_time`.
    pub completion_time: f64,
    pub deadline_met: bool,
    pub map_tasks: u32,
    pub reduce_tasks: u32,
    pub local_maps: u32,
    pub map_locality_rate: f64,
    pub fallbacks: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub policy: String,
    pub seed: u64,
    pub workload_id: String,
    pub jobs: Vec<JobReport>,
    /// Last completion minus first submission.
    pub makespan: f64,
    /// Completed jobs per second of makespan.
    pub throughput: f64,
    pub mean_completion_time: f64,
    pub deadline_misses: u32,
    pub map_locality_rate: f64,
    pub core_moves: u64,
    pub deferred_launches: u64,
    pub mean_deferred_wait: f64,
    pub fallback_launches: u64,
    /// Fallback launches over all map launches.
    pub fallback_fraction: f64,
    pub event_count: u64,
    pub trace_sha256: String,
}

/// Counters gathered while a run executes.
#[derive(Debug, Clone, Default)]
pub struct RunTotals {
    pub core_moves: u64,
    /// Waits of deferred map tasks between assignment and launch, in launch
    /// order.
    pub deferred_waits: Vec<f64>,
    pub event_count: u64,
}

pub(crate) fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

impl SimReport {
    pub fn aggregate(
        policy: &str,
        seed: u64,
        workload_id: String,
        jobs: Vec<JobReport>,
        totals: &RunTotals,
        trace_sha256: String,
    ) -> Self {
        let first_submit = jobs.iter().map(|j| j.submit_time).fold(f64::INFINITY, f64::min);
        let last_finish = jobs.iter().map(|j| j.finish_time).fold(f64::NEG_INFINITY, f64::max);
        let makespan = if jobs.is_empty() { 0.0 } else { last_finish - first_submit };
        let n = jobs.len() as f64;
        let completion_sum: f64 = jobs.iter().map(|j| j.completion_time).sum();
        let map_launches: u32 = jobs.iter().map(|j| j.map_tasks).sum();
        let local: u32 = jobs.iter().map(|j| j.local_maps).sum();
        let fallbacks: u32 = jobs.iter().map(|j| j.fallbacks).sum();
        let wait_sum: f64 = totals.deferred_waits.iter().sum();
        SimReport {
            policy: policy.to_string(),
            seed,
            workload_id,
            makespan,
            throughput: ratio(n, makespan),
            mean_completion_time: ratio(completion_sum, n),
            deadline_misses: jobs.iter().filter(|j| !j.deadline_met).count() as u32,
            map_locality_rate: ratio(f64::from(local), f64::from(map_launches)),
            core_moves: totals.core_moves,
            deferred_launches: totals.deferred_waits.len() as u64,
            mean_deferred_wait: ratio(wait_sum, totals.deferred_waits.len() as f64),
            fallback_launches: u64::from(fallbacks),
            fallback_fraction: ratio(f64::from(fallbacks), f64::from(map_launches)),
            event_count: totals.event_count,
            trace_sha256,
            jobs,
        }
    }

    pub fn job(&self, id: u32) -> Option<&JobReport> {
        self.jobs.iter().find(|j| j.job_id == id)
    }
}
