//! Scheduling policies. Each policy reacts to heartbeats by handing free
//! slots of the heartbeating VM to tasks.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::estimator::{SlotDemand, TaskRecord};
use crate::model::{ClusterTopology, JobId, JobSpec, JobState, TaskId, TaskKind, VmId};
use crate::reconfig::{Matched, ReconfigNote, Reconfigurator};

mod ct;
mod fair;
mod fifo;

pub use ct::CompletionTimeScheduler;
pub use fair::FairScheduler;
pub use fifo::FifoScheduler;

pub const POLICIES: [&str; 3] = ["ct", "fair", "fifo"];

#[derive(Debug, Error, PartialEq)]
pub enum SchedError {
    #[error("job {0} was already added")]
    DuplicateJob(JobId),
    #[error("unknown scheduler '{0}' (expected ct, fair or fifo)")]
    UnknownPolicy(String),
    #[error("contract violation: {0}")]
    ContractViolation(String),
}

/// How a running task got its slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Via {
    /// Assigned straight onto the heartbeating VM.
    Direct,
    /// Queued for a replica holder which then ran it on a core of its own.
    Elided,
    /// Queued for a replica holder and run on a core moved in from a
    /// neighbouring VM.
    Move,
    /// Queued too long; run away from its data on the VM that assigned it.
    Fallback,
}

impl Via {
    pub fn as_str(self) -> &'static str {
        match self {
            Via::Direct => "direct",
            Via::Elided => "elided",
            Via::Move => "move",
            Via::Fallback => "fallback",
        }
    }
}

/// Priority class a deadline-driven grant was made under.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum GrantMode {
    Bootstrap,
    Feasible,
    Late,
}

impl GrantMode {
    pub fn as_str(self) -> &'static str {
        match self {
            GrantMode::Bootstrap => "bootstrap",
            GrantMode::Feasible => "feasible",
            GrantMode::Late => "late",
        }
    }
}

/// Scheduler bookkeeping attached to a fresh grant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrantInfo {
    pub mode: GrantMode,
    /// Slot cap the job was held to; `None` when uncapped.
    pub cap: Option<u32>,
    /// Scheduled count of that slot kind after the grant.
    pub scheduled: u32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Launch {
    pub task: TaskId,
    pub vm: VmId,
    pub local: bool,
    pub via: Via,
    pub grant: Option<GrantInfo>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    /// The slot is already occupied; the engine starts the task.
    Launch(Launch),
    /// A map task was assigned to a replica holder other than the
    /// heartbeating VM.
    Deferred { task: TaskId, origin: VmId, target: VmId, grant: Option<GrantInfo> },
    /// Release/Assign queue activity, including scheduled core moves.
    Queue(ReconfigNote),
}

/// Everything one scheduling pass did, in order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SchedulerDecision {
    pub actions: Vec<Action>,
    pub demand_updates: Vec<(JobId, SlotDemand)>,
}

impl SchedulerDecision {
    pub fn is_empty(&self) -> bool {
        self.actions.is_empty() && self.demand_updates.is_empty()
    }

    pub fn launches(&self) -> impl Iterator<Item = &Launch> {
        self.actions.iter().filter_map(|a| match a {
            Action::Launch(l) => Some(l),
            _ => None,
        })
    }
}

/// Mutable simulation state a policy may act on during one dispatch.
pub struct SchedContext<'a> {
    pub now: f64,
    pub topology: &'a mut ClusterTopology,
    pub jobs: &'a mut BTreeMap<JobId, JobState>,
    pub reconf: &'a mut Reconfigurator,
}

impl SchedContext<'_> {
    /// Occupies a slot on `vm` for `task` and records the launch.
    pub fn launch(&mut self, out: &mut SchedulerDecision, task: TaskId, vm: VmId, via: Via, grant: Option<GrantInfo>) {
        self.flush(out);
        let local = match task.kind {
            TaskKind::Map => self.jobs[&task.job].placement.holds(task.index, vm),
            TaskKind::Reduce => true,
        };
        let v = self.topology.vm_mut(vm);
        match task.kind {
            TaskKind::Map => v.busy_map_slots += 1,
            TaskKind::Reduce => v.busy_reduce_slots += 1,
        }
        out.actions.push(Action::Launch(Launch { task, vm, local, via, grant }));
    }

    /// Moves pending queue notes into the decision so they keep their place
    /// relative to launches.
    pub fn flush(&mut self, out: &mut SchedulerDecision) {
        out.actions.extend(self.reconf.take_notes().into_iter().map(Action::Queue));
    }

    /// Pairs the Assign and Release queues of `vm`'s machine.
    pub fn run_matches(&mut self, vm: VmId, out: &mut SchedulerDecision) {
        let pm = self.topology.host_of(vm);
        for m in self.reconf.match_and_reconfigure(pm, self.topology, self.now) {
            match m {
                Matched::Elided { task, vm } => self.launch(out, task, vm, Via::Elided, None),
                Matched::Move(_) => self.flush(out),
            }
        }
        self.flush(out);
    }

    /// Jobs that have arrived and are not finished, in id order.
    pub fn active_jobs(&self) -> impl Iterator<Item = &JobState> {
        self.jobs.values().filter(|j| !j.is_done())
    }
}

pub trait Scheduler: Send {
    fn name(&self) -> &'static str;

    fn on_job_added(&mut self, job: &JobSpec, now: f64) -> Result<(), SchedError>;

    fn on_heartbeat(&mut self, node: VmId, ctx: &mut SchedContext<'_>) -> SchedulerDecision;

    /// Called after the engine moved the task into the job's completed set.
    fn on_task_complete(
        &mut self,
        record: &TaskRecord,
        ctx: &mut SchedContext<'_>,
    ) -> Result<Option<SlotDemand>, SchedError>;

    fn uses_reconfiguration(&self) -> bool {
        false
    }
}

pub fn make_scheduler(name: &str, bootstrap_wave: u32) -> Result<Box<dyn Scheduler>, SchedError> {
    match name {
        "ct" => Ok(Box::new(CompletionTimeScheduler::new(bootstrap_wave))),
        "fair" => Ok(Box::new(FairScheduler::default())),
        "fifo" => Ok(Box::new(FifoScheduler::default())),
        other => Err(SchedError::UnknownPolicy(other.to_string())),
    }
}

/// Takes a local map task of `job` for `node`, falling back to any
/// unassigned map task. Used by the baselines, which never reconfigure.
pub(crate) fn take_map_prefer_local(job: &mut JobState, node: VmId) -> Option<TaskId> {
    job.take_local_map(node).or_else(|| job.take_any_map())
}

/// Registry of seen job ids shared by the policies.
#[derive(Debug, Default, Clone)]
pub(crate) struct Admitted(std::collections::BTreeSet<JobId>);

impl Admitted {
    pub(crate) fn admit(&mut self, job: JobId) -> Result<(), SchedError> {
        if self.0.insert(job) {
            Ok(())
        } else {
            Err(SchedError::DuplicateJob(job))
        }
    }
}
