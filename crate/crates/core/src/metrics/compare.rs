use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::SimReport;

#[derive(Debug, Error, PartialEq)]
pub enum ComparisonError {
    #[error("reports cover different workloads: {a} vs {b}")]
    WorkloadMismatch { a: String, b: String },
}

/// Relative differences of `a` against `b`: `(a - b) / b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub workload_id: String,
    pub a_policy: String,
    pub b_policy: String,
    pub throughput_gain: f64,
    pub mean_completion_delta: f64,
    pub locality_delta: f64,
    /// Per job type: relative difference of mean completion times.
    pub completion_by_type: Vec<(String, f64)>,
}

/// `(a - b) / b`; when `b` is zero the result is 0 for equal values and
/// ±1 otherwise, so the sign always tells which side is larger.
pub fn relative(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else if b == 0.0 {
        (a - b).signum()
    } else {
        (a - b) / b.abs()
    }
}

pub fn compare(a: &SimReport, b: &SimReport) -> Result<ComparisonReport, ComparisonError> {
    if a.workload_id != b.workload_id {
        return Err(ComparisonError::WorkloadMismatch { a: a.workload_id.clone(), b: b.workload_id.clone() });
    }
    let by_type = |r: &SimReport, t| {
        let v: Vec<f64> = r.jobs.iter().filter(|j| j.job_type == t).map(|j| j.completion_time).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    };
    let completion_by_type = crate::model::JobType::ALL
        .into_iter()
        .filter_map(|t| Some((t.name().to_string(), relative(by_type(a, t)?, by_type(b, t)?))))
        .collect();
    Ok(ComparisonReport {
        workload_id: a.workload_id.clone(),
        a_policy: a.policy.clone(),
        b_policy: b.policy.clone(),
        throughput_gain: relative(a.throughput, b.throughput),
        mean_completion_delta: relative(a.mean_completion_time, b.mean_completion_time),
        locality_delta: relative(a.map_locality_rate, b.map_locality_rate),
        completion_by_type,
    })
}

impl ComparisonReport {
    pub fn render(&self) -> String {
        let mut out = format!("{} vs {} on {}\n", self.a_policy, self.b_policy, self.workload_id);
        let pct = |v: f64| format!("{:+.2}%", 100.0 * v);
        out.push_str(&format!("throughput          {}\n", pct(self.throughput_gain)));
        out.push_str(&format!("mean completion     {}\n", pct(self.mean_completion_delta)));
        out.push_str(&format!("map locality        {}\n", pct(self.locality_delta)));
        for (t, d) in &self.completion_by_type {
            out.push_str(&format!("  {:<18}{}\n", t, pct(*d)));
        }
        out
    }
}
