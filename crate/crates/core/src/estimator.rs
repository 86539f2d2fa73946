//! Resource predictor: per-job task statistics, the phase-duration model and
//! the minimum map/reduce slot pair that meets a completion-time goal.
//!
//! With `A = u_m * t_m`, `B = v_r * t_r` and `C = D - u_m * v_r * t_s`, the
//! completion-time constraint is `A / n_m + B / n_r <= C`. Minimising
//! `n_m + n_r` on that curve with a Lagrange multiplier gives
//!
//! ```text
//! n_m = sqrt(A) (sqrt(A) + sqrt(B)) / C
//! n_r = sqrt(B) (sqrt(A) + sqrt(B)) / C
//! ```
//!
//! which is then rounded up to whole slots.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{JobState, TaskId, TaskKind};

#[derive(Debug, Error, PartialEq)]
pub enum EstimatorError {
    #[error("no completed map tasks to estimate from")]
    NoCompletedTasks,
    #[error("{phase} phase has tasks but zero slots")]
    DivisionByZeroDemand { phase: &'static str },
    #[error("contract violation: {0}")]
    ContractViolation(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskRecord {
    pub task_id: TaskId,
    pub kind: TaskKind,
    /// Seconds (t_m or t_r).
    pub duration: f64,
    pub was_local: bool,
}

/// Timing statistics the completion-time model runs on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobTimingModel {
    pub mean_map_time: f64,
    /// Nodes are homogeneous, so this equals `mean_map_time` unless set
    /// explicitly.
    pub mean_reduce_time: f64,
    /// t_s: one copy operation of the shuffle.
    pub shuffle_copy_time: f64,
    pub map_task_count: u32,
    pub reduce_task_count: u32,
    /// Copy operations still to perform; `u_m * v_r` for a fresh job.
    pub copy_operations: f64,
}

impl JobTimingModel {
    pub fn new(mean_map_time: f64, shuffle_copy_time: f64, map_task_count: u32, reduce_task_count: u32) -> Self {
        JobTimingModel {
            mean_map_time,
            mean_reduce_time: mean_map_time,
            shuffle_copy_time,
            map_task_count,
            reduce_task_count,
            copy_operations: f64::from(map_task_count) * f64::from(reduce_task_count),
        }
    }

    /// A = u_m * t_m
    pub fn map_work(&self) -> f64 {
        f64::from(self.map_task_count) * self.mean_map_time
    }

    /// B = v_r * t_r
    pub fn reduce_work(&self) -> f64 {
        f64::from(self.reduce_task_count) * self.mean_reduce_time
    }

    /// (u_m * v_r) * t_s
    pub fn shuffle_duration(&self) -> f64 {
        self.copy_operations * self.shuffle_copy_time
    }

    fn check(&self) -> Result<(), EstimatorError> {
        let fields = [
            ("mean_map_time", self.mean_map_time),
            ("mean_reduce_time", self.mean_reduce_time),
            ("shuffle_copy_time", self.shuffle_copy_time),
            ("copy_operations", self.copy_operations),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v >= 0.0) {
                return Err(EstimatorError::ContractViolation(format!("{name} = {v}")));
            }
        }
        Ok(())
    }
}

/// Minimum slot pair for a job, plus the unrounded optimum it came from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlotDemand {
    pub map_slots: u32,
    pub reduce_slots: u32,
    pub feasible: bool,
    pub continuous_map: f64,
    pub continuous_reduce: f64,
}

impl SlotDemand {
    pub fn fixed(map_slots: u32, reduce_slots: u32) -> Self {
        SlotDemand {
            map_slots,
            reduce_slots,
            feasible: true,
            continuous_map: f64::from(map_slots),
            continuous_reduce: f64::from(reduce_slots),
        }
    }

    pub fn total(&self) -> u32 {
        self.map_slots + self.reduce_slots
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseDurations {
    pub map: f64,
    pub reduce: f64,
    pub shuffle: f64,
}

impl PhaseDurations {
    pub fn total(&self) -> f64 {
        self.map + self.shuffle + self.reduce
    }
}

/// Mean duration of the completed map tasks. Reduce records are ignored.
pub fn mean_map_task_time(completed: &[TaskRecord]) -> Result<f64, EstimatorError> {
    let (sum, n) = completed
        .iter()
        .filter(|r| r.kind == TaskKind::Map)
        .fold((0.0, 0u32), |(s, n), r| (s + r.duration, n + 1));
    if n == 0 {
        return Err(EstimatorError::NoCompletedTasks);
    }
    Ok(sum / f64::from(n))
}

fn phase(tasks: u32, time: f64, slots: u32, name: &'static str) -> Result<f64, EstimatorError> {
    if tasks == 0 {
        return Ok(0.0);
    }
    if slots == 0 {
        return Err(EstimatorError::DivisionByZeroDemand { phase: name });
    }
    Ok(f64::from(tasks) * time / f64::from(slots))
}

pub fn phase_durations(model: &JobTimingModel, demand: &SlotDemand) -> Result<PhaseDurations, EstimatorError> {
    model.check()?;
    Ok(PhaseDurations {
        map: phase(model.map_task_count, model.mean_map_time, demand.map_slots, "map")?,
        reduce: phase(model.reduce_task_count, model.mean_reduce_time, demand.reduce_slots, "reduce")?,
        shuffle: model.shuffle_duration(),
    })
}

pub fn estimate_completion_time(model: &JobTimingModel, demand: &SlotDemand) -> Result<f64, EstimatorError> {
    phase_durations(model, demand).map(|p| p.total())
}

/// Minimum `(n_m, n_r)` so the modeled completion time fits in
/// `remaining_deadline`. Reports `feasible = false` (with every remaining
/// task in parallel) when the shuffle alone overruns the deadline.
pub fn min_slots(model: &JobTimingModel, remaining_deadline: f64) -> Result<SlotDemand, EstimatorError> {
    model.check()?;
    if remaining_deadline.is_nan() {
        return Err(EstimatorError::ContractViolation("remaining deadline is NaN".into()));
    }
    let a = model.map_work();
    let b = model.reduce_work();
    let c = remaining_deadline - model.shuffle_duration();
    if c <= 0.0 {
        return Ok(SlotDemand {
            map_slots: model.map_task_count,
            reduce_slots: model.reduce_task_count,
            feasible: false,
            continuous_map: f64::from(model.map_task_count),
            continuous_reduce: f64::from(model.reduce_task_count),
        });
    }
    let (ra, rb) = (a.sqrt(), b.sqrt());
    let continuous_map = ra * (ra + rb) / c;
    let continuous_reduce = rb * (ra + rb) / c;
    let mut map_slots = round_up(continuous_map).max(u32::from(model.map_task_count > 0));
    let mut reduce_slots = round_up(continuous_reduce).max(u32::from(model.reduce_task_count > 0));

    // The square roots can land an ulp off an integral optimum in either
    // direction; round_up absorbs the high side and this loop the low side.
    let lhs = |m: u32, r: u32| {
        let map = if m == 0 { 0.0 } else { a / f64::from(m) };
        let red = if r == 0 { 0.0 } else { b / f64::from(r) };
        map + red
    };
    while lhs(map_slots, reduce_slots) > c {
        if a > 0.0 {
            map_slots += 1;
        } else {
            reduce_slots += 1;
        }
    }
    Ok(SlotDemand { map_slots, reduce_slots, feasible: true, continuous_map, continuous_reduce })
}

fn round_up(x: f64) -> u32 {
    (x - 1e-9 * x.max(1.0)).ceil().max(0.0) as u32
}

/// Timing model over the work a running job still has to do.
///
/// Task counts are the not-yet-completed tasks. The copy term counts the
/// shuffle still outstanding: all `u_m * v_r` copies before the map phase
/// ends, and the unexpired part of the shuffle gate afterwards.
pub fn remaining_model(job: &JobState, now: f64) -> Result<JobTimingModel, EstimatorError> {
    let t_m = mean_map_task_time(&job.completed_maps)?;
    let mut model = JobTimingModel::new(t_m, job.copy_time, job.remaining_maps(), job.remaining_reduces());
    model.copy_operations = if !job.map_finished {
        f64::from(job.map_task_count) * f64::from(job.remaining_reduces())
    } else {
        let outstanding = job.reduce_ready_at.map_or(0.0, |t| (t - now).max(0.0));
        if job.copy_time > 0.0 {
            outstanding / job.copy_time
        } else {
            0.0
        }
    };
    Ok(model)
}

/// Rebuilds the job's statistics from C^j and solves for the slots needed
/// to finish by `submit + D`.
pub fn recompute_demand(job: &JobState, now: f64) -> Result<(JobTimingModel, SlotDemand), EstimatorError> {
    let model = remaining_model(job, now)?;
    let remaining_deadline = job.spec.absolute_deadline() - now;
    let demand = min_slots(&model, remaining_deadline)?;
    Ok((model, demand))
}
