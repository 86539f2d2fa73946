use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::ids::{JobId, TaskId, TaskKind, VmId};
use super::placement::BlockPlacement;
use crate::estimator::{SlotDemand, TaskRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum JobType {
    WordCount,
    Sort,
    Grep,
    PermutationGenerator,
    InvertedIndex,
}

impl JobType {
    pub const ALL: [JobType; 5] = [
        JobType::WordCount,
        JobType::Sort,
        JobType::Grep,
        JobType::PermutationGenerator,
        JobType::InvertedIndex,
    ];

    pub fn name(self) -> &'static str {
        match self {
            JobType::WordCount => "WordCount",
            JobType::Sort => "Sort",
            JobType::Grep => "Grep",
            JobType::PermutationGenerator => "PermutationGenerator",
            JobType::InvertedIndex => "InvertedIndex",
        }
    }
}

impl fmt::Display for JobType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for JobType {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        JobType::ALL
            .into_iter()
            .find(|t| t.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown job type '{s}'"))
    }
}

/// A submitted MapReduce job.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobSpec {
    pub job_id: JobId,
    /// Seconds since simulation start.
    pub submit_time: f64,
    pub job_type: JobType,
    /// Bytes of input (the data size the job must process).
    pub input_size: u64,
    /// Completion-time goal, seconds relative to `submit_time`.
    pub deadline: f64,
    pub reduce_task_count: u32,
}

impl JobSpec {
    /// u_m: one map task per input block.
    pub fn map_task_count(&self, block_size: u64) -> u32 {
        self.input_size.div_ceil(block_size).max(1) as u32
    }

    pub fn absolute_deadline(&self) -> f64 {
        self.submit_time + self.deadline
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.deadline.is_finite() && self.deadline > 0.0) {
            return Err(format!("job {}: deadline must be positive", self.job_id));
        }
        if self.input_size == 0 {
            return Err(format!("job {}: input size must be positive", self.job_id));
        }
        if !(self.submit_time.is_finite() && self.submit_time >= 0.0) {
            return Err(format!("job {}: submit time must be non-negative", self.job_id));
        }
        Ok(())
    }
}

/// A task occupying a slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskState {
    pub task_id: TaskId,
    pub node: VmId,
    pub start_time: f64,
    /// Total modeled duration; elapsed + remaining always sums to this.
    pub duration: f64,
    /// Reduce tasks are local by convention.
    pub is_local: bool,
}

impl TaskState {
    pub fn kind(&self) -> TaskKind {
        self.task_id.kind
    }

    pub fn job_id(&self) -> JobId {
        self.task_id.job
    }

    pub fn end_time(&self) -> f64 {
        self.start_time + self.duration
    }

    /// e_m: time spent so far.
    pub fn elapsed_time(&self, now: f64) -> f64 {
        (now - self.start_time).clamp(0.0, self.duration)
    }

    /// d_m: time left.
    pub fn remaining_time(&self, now: f64) -> f64 {
        self.duration - self.elapsed_time(now)
    }
}

/// A map task assigned to a replica holder that is waiting for a core.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Deferral {
    /// VM whose heartbeat produced the assignment.
    pub origin: VmId,
    /// Replica holder the task will run on.
    pub target: VmId,
    pub since: f64,
}

/// Runtime bookkeeping of one job: C^j, R^j, U^j plus scheduler counters.
///
/// Every task id sits in exactly one of `completed_*`, `running` or
/// `unstarted`. Deferred map tasks are unstarted but already assigned.
#[derive(Debug, Clone)]
pub struct JobState {
    pub spec: JobSpec,
    pub placement: BlockPlacement,
    pub map_task_count: u32,
    /// t_s: duration of one map-to-reducer copy.
    pub copy_time: f64,
    pub completed_maps: Vec<TaskRecord>,
    pub completed_reduces: Vec<TaskRecord>,
    pub running: BTreeMap<TaskId, TaskState>,
    pub unstarted: BTreeSet<TaskId>,
    pub deferred: BTreeMap<TaskId, Deferral>,
    unassigned_maps: BTreeSet<u32>,
    local_maps: Vec<BTreeSet<u32>>,
    unassigned_reduces: BTreeSet<u32>,
    /// Maps running or deferred (Algorithm 2's ScheduledMaptasks).
    pub scheduled_map_count: u32,
    /// Reduces running (ScheduledReducetasks).
    pub scheduled_reduce_count: u32,
    pub map_finished: bool,
    pub map_finish_time: Option<f64>,
    /// Earliest time reduce tasks may start (end of the shuffle gate).
    pub reduce_ready_at: Option<f64>,
    pub current_demand: Option<SlotDemand>,
    pub completion_time: Option<f64>,
}

impl JobState {
    pub fn new(spec: JobSpec, placement: BlockPlacement, vm_count: usize, copy_time: f64) -> Self {
        let map_task_count = placement.block_count() as u32;
        let mut local_maps = vec![BTreeSet::new(); vm_count];
        for (block, replicas) in placement.iter().enumerate() {
            for vm in replicas {
                local_maps[vm.index()].insert(block as u32);
            }
        }
        let job = spec.job_id;
        let unstarted = (0..map_task_count)
            .map(|i| TaskId::map(job, i))
            .chain((0..spec.reduce_task_count).map(|i| TaskId::reduce(job, i)))
            .collect();
        JobState {
            unassigned_maps: (0..map_task_count).collect(),
            unassigned_reduces: (0..spec.reduce_task_count).collect(),
            spec,
            placement,
            map_task_count,
            copy_time,
            completed_maps: Vec::new(),
            completed_reduces: Vec::new(),
            running: BTreeMap::new(),
            unstarted,
            deferred: BTreeMap::new(),
            local_maps,
            scheduled_map_count: 0,
            scheduled_reduce_count: 0,
            map_finished: false,
            map_finish_time: None,
            reduce_ready_at: None,
            current_demand: None,
            completion_time: None,
        }
    }

    pub fn id(&self) -> JobId {
        self.spec.job_id
    }

    pub fn reduce_task_count(&self) -> u32 {
        self.spec.reduce_task_count
    }

    pub fn total_tasks(&self) -> usize {
        (self.map_task_count + self.spec.reduce_task_count) as usize
    }

    pub fn is_done(&self) -> bool {
        self.completion_time.is_some()
    }

    /// No map task has completed yet, so no timing statistics exist.
    pub fn in_bootstrap(&self) -> bool {
        self.completed_maps.is_empty()
    }

    pub fn has_unassigned_maps(&self) -> bool {
        !self.unassigned_maps.is_empty()
    }

    pub fn unassigned_map_count(&self) -> usize {
        self.unassigned_maps.len()
    }

    pub fn has_local_map(&self, vm: VmId) -> bool {
        !self.local_maps[vm.index()].is_empty()
    }

    pub fn has_unassigned_reduces(&self) -> bool {
        !self.unassigned_reduces.is_empty()
    }

    pub fn reduces_runnable(&self, now: f64) -> bool {
        self.map_finished
            && self.has_unassigned_reduces()
            && self.reduce_ready_at.is_some_and(|t| now >= t)
    }

    fn claim_map(&mut self, block: u32) -> TaskId {
        self.unassigned_maps.remove(&block);
        for vm in self.placement.replicas(block) {
            self.local_maps[vm.index()].remove(&block);
        }
        self.scheduled_map_count += 1;
        TaskId::map(self.id(), block)
    }

    /// Assigns the lowest-numbered unassigned map task whose block has a
    /// replica on `vm`.
    pub fn take_local_map(&mut self, vm: VmId) -> Option<TaskId> {
        let block = *self.local_maps[vm.index()].first()?;
        Some(self.claim_map(block))
    }

    /// Assigns the lowest-numbered unassigned map task regardless of locality.
    pub fn take_any_map(&mut self) -> Option<TaskId> {
        let block = *self.unassigned_maps.first()?;
        Some(self.claim_map(block))
    }

    pub fn take_reduce(&mut self) -> Option<TaskId> {
        let index = self.unassigned_reduces.pop_first()?;
        self.scheduled_reduce_count += 1;
        Some(TaskId::reduce(self.id(), index))
    }

    /// Returns an assigned-but-unstarted map task to the pool.
    pub fn requeue_map(&mut self, task: TaskId) {
        debug_assert_eq!(task.kind, TaskKind::Map);
        debug_assert!(self.unstarted.contains(&task));
        self.deferred.remove(&task);
        self.unassigned_maps.insert(task.index);
        for vm in self.placement.replicas(task.index) {
            self.local_maps[vm.index()].insert(task.index);
        }
        self.scheduled_map_count -= 1;
    }

    pub fn defer(&mut self, task: TaskId, deferral: Deferral) {
        self.deferred.insert(task, deferral);
    }

    /// Moves an assigned task from U^j into R^j.
    pub fn start(&mut self, state: TaskState) -> Option<Deferral> {
        let removed = self.unstarted.remove(&state.task_id);
        debug_assert!(removed, "{} started twice", state.task_id);
        let deferral = self.deferred.remove(&state.task_id);
        self.running.insert(state.task_id, state);
        deferral
    }

    /// Moves a running task into C^j and returns its record.
    pub fn complete(&mut self, task: TaskId, now: f64) -> Option<TaskRecord> {
        let state = self.running.remove(&task)?;
        let record = TaskRecord {
            task_id: task,
            kind: task.kind,
            duration: state.duration,
            was_local: state.is_local,
        };
        debug_assert!((now - state.end_time()).abs() < 1e-6);
        match task.kind {
            TaskKind::Map => {
                self.scheduled_map_count -= 1;
                self.completed_maps.push(record.clone());
                if self.completed_maps.len() == self.map_task_count as usize {
                    self.map_finished = true;
                    self.map_finish_time = Some(now);
                }
            }
            TaskKind::Reduce => {
                self.scheduled_reduce_count -= 1;
                self.completed_reduces.push(record.clone());
            }
        }
        Some(record)
    }

    pub fn all_tasks_complete(&self) -> bool {
        self.map_finished && self.completed_reduces.len() == self.spec.reduce_task_count as usize
    }

    /// |C| + |R| + |U| equals the job's task count.
    pub fn sets_consistent(&self) -> bool {
        self.completed_maps.len() + self.completed_reduces.len() + self.running.len() + self.unstarted.len()
            == self.total_tasks()
    }

    pub fn remaining_maps(&self) -> u32 {
        self.map_task_count - self.completed_maps.len() as u32
    }

    pub fn remaining_reduces(&self) -> u32 {
        self.spec.reduce_task_count - self.completed_reduces.len() as u32
    }
}
