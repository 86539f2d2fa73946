//! Resource reconfigurator: per-machine Assign and Release queues and the
//! locality-preserving map placement that moves idle cores between VMs of
//! one physical machine instead of running a task away from its data.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ClusterTopology, Deferral, JobId, JobState, PmId, TaskId, VmId};

#[derive(Debug, Error, PartialEq)]
pub enum ReconfigError {
    #[error("job has no unassigned map task")]
    NoTask,
    #[error("contract violation: {0}")]
    ContractViolation(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReleaseEntry {
    pub vm: VmId,
    pub registered: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AssignEntry {
    /// Replica holder that will run the task.
    pub vm: VmId,
    pub task: TaskId,
    /// VM whose heartbeat produced the assignment.
    pub origin: VmId,
    pub enqueued: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CoreMoveQueues {
    pub pm_id: PmId,
    pub release_queue: VecDeque<ReleaseEntry>,
    pub assign_queue: VecDeque<AssignEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoreMove {
    pub pm_id: PmId,
    pub from_vm: VmId,
    pub to_vm: VmId,
    pub task_id: TaskId,
    pub effective_time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PlacementAction {
    LaunchLocal { task: TaskId, node: VmId },
    DeferredLaunch { task: TaskId, target: VmId },
    /// The chosen replica holder has an idle core of its own, so its queue
    /// pair resolves on the spot and nothing is queued.
    ElidedLaunch { task: TaskId, target: VmId },
}

/// Outcome of pairing one Release entry with one Assign entry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Matched {
    /// The releasing VM is the task's target: it frees the reserved core and
    /// runs the task itself, no hot-plug needed.
    Elided { task: TaskId, vm: VmId },
    Move(CoreMove),
}

/// Queue activity, drained by the engine into the trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ReconfigNote {
    Release { vm: VmId },
    Withdraw { vm: VmId, lapsed: bool },
    Move(CoreMove),
}

#[derive(Debug, Clone)]
pub struct Reconfigurator {
    queues: Vec<CoreMoveQueues>,
    in_flight: BTreeMap<TaskId, CoreMove>,
    latency: f64,
    release_hold: f64,
    notes: Vec<ReconfigNote>,
}

impl Reconfigurator {
    pub fn new(pm_count: usize, reconfig_latency: f64, release_hold: f64) -> Self {
        let queues = (0..pm_count)
            .map(|p| CoreMoveQueues { pm_id: PmId(p as u32), ..CoreMoveQueues::default() })
            .collect();
        Reconfigurator {
            queues,
            in_flight: BTreeMap::new(),
            latency: reconfig_latency,
            release_hold,
            notes: Vec::new(),
        }
    }

    pub fn for_topology(topology: &ClusterTopology, release_hold: f64) -> Self {
        Self::new(topology.pm_count(), topology.config.reconfig_latency, release_hold)
    }

    pub fn queues(&self, pm: PmId) -> &CoreMoveQueues {
        &self.queues[pm.index()]
    }

    pub fn rq_len(&self, pm: PmId) -> usize {
        self.queues[pm.index()].release_queue.len()
    }

    pub fn aq_len(&self, pm: PmId) -> usize {
        self.queues[pm.index()].assign_queue.len()
    }

    pub fn total_rq(&self) -> usize {
        self.queues.iter().map(|q| q.release_queue.len()).sum()
    }

    pub fn total_aq(&self) -> usize {
        self.queues.iter().map(|q| q.assign_queue.len()).sum()
    }

    pub fn in_flight(&self) -> usize {
        self.in_flight.len()
    }

    pub fn take_notes(&mut self) -> Vec<ReconfigNote> {
        std::mem::take(&mut self.notes)
    }

    /// Replica holder on the machine with the most Release entries; when no
    /// candidate machine has any, the one with the fewest Assign entries.
    /// Ties go to the lowest VM id.
    pub fn select_target_node(&self, replicas: &[VmId], topology: &ClusterTopology) -> VmId {
        assert!(!replicas.is_empty(), "task without replicas");
        let rq = |v: VmId| self.rq_len(topology.host_of(v));
        let aq = |v: VmId| self.aq_len(topology.host_of(v));
        let mut sorted = replicas.to_vec();
        sorted.sort_unstable();
        if sorted.iter().any(|&v| rq(v) > 0) {
            let best = sorted.iter().map(|&v| rq(v)).max().unwrap_or(0);
            sorted.into_iter().find(|&v| rq(v) == best).unwrap()
        } else {
            let best = sorted.iter().map(|&v| aq(v)).min().unwrap_or(0);
            sorted.into_iter().find(|&v| aq(v) == best).unwrap()
        }
    }

    /// Places one map task of `job` for a heartbeat from `node`: a local
    /// task runs on `node`; otherwise the task is queued for a replica holder
    /// and `node` offers its free core on its own machine.
    pub fn assign_map_task(
        &mut self,
        job: &mut JobState,
        node: VmId,
        topology: &mut ClusterTopology,
        now: f64,
    ) -> Result<PlacementAction, ReconfigError> {
        if let Some(task) = job.take_local_map(node) {
            return Ok(PlacementAction::LaunchLocal { task, node });
        }
        let task = job.take_any_map().ok_or(ReconfigError::NoTask)?;
        let target = self.select_target_node(job.placement.replicas(task.index), topology);
        if topology.free_map_slots(target) > 0 {
            job.defer(task, Deferral { origin: node, target, since: now });
            return Ok(PlacementAction::ElidedLaunch { task, target });
        }
        let pm = topology.host_of(target);
        self.queues[pm.index()].assign_queue.push_back(AssignEntry { vm: target, task, origin: node, enqueued: now });
        job.defer(task, Deferral { origin: node, target, since: now });
        self.register_release(topology.host_of(node), node, topology, now)?;
        Ok(PlacementAction::DeferredLaunch { task, target })
    }

    /// Offers one free core of `vm` on its machine's Release queue and holds
    /// it idle. Returns false when `vm` has no further core it can give up,
    /// which makes repeated registration of the same core a no-op.
    pub fn register_release(
        &mut self,
        pm: PmId,
        vm: VmId,
        topology: &mut ClusterTopology,
        now: f64,
    ) -> Result<bool, ReconfigError> {
        if topology.host_of(vm) != pm {
            return Err(ReconfigError::ContractViolation(format!("{vm} is not hosted on {pm}")));
        }
        if !topology.reserve_core(vm) {
            return Ok(false);
        }
        self.queues[pm.index()].release_queue.push_back(ReleaseEntry { vm, registered: now });
        self.notes.push(ReconfigNote::Release { vm });
        Ok(true)
    }

    /// Drops `vm`'s unmatched Release entries that are at least
    /// `release_hold` old, returning their cores to normal use.
    pub fn expire_releases(&mut self, vm: VmId, topology: &mut ClusterTopology, now: f64) -> u32 {
        let hold = self.release_hold;
        let q = &mut self.queues[topology.host_of(vm).index()].release_queue;
        let before = q.len();
        q.retain(|e| !(e.vm == vm && now - e.registered >= hold));
        let dropped = (before - q.len()) as u32;
        for _ in 0..dropped {
            topology.unreserve_core(vm);
            self.notes.push(ReconfigNote::Withdraw { vm, lapsed: true });
        }
        dropped
    }

    /// Takes back the newest unmatched Release entry of `vm`, freeing its
    /// core for the caller.
    pub fn withdraw_release(&mut self, vm: VmId, topology: &mut ClusterTopology) -> bool {
        let q = &mut self.queues[topology.host_of(vm).index()].release_queue;
        match q.iter().rposition(|e| e.vm == vm) {
            Some(i) => {
                q.remove(i);
                topology.unreserve_core(vm);
                self.notes.push(ReconfigNote::Withdraw { vm, lapsed: false });
                true
            }
            None => false,
        }
    }

    /// Pairs queue heads first-in first-out while both queues of `pm` are
    /// non-empty.
    pub fn match_and_reconfigure(&mut self, pm: PmId, topology: &mut ClusterTopology, now: f64) -> Vec<Matched> {
        let mut out = Vec::new();
        loop {
            let q = &mut self.queues[pm.index()];
            if q.release_queue.is_empty() || q.assign_queue.is_empty() {
                break;
            }
            let rel = q.release_queue.pop_front().unwrap();
            let asg = q.assign_queue.pop_front().unwrap();
            if rel.vm == asg.vm {
                topology.unreserve_core(rel.vm);
                out.push(Matched::Elided { task: asg.task, vm: asg.vm });
            } else {
                let mv = CoreMove {
                    pm_id: pm,
                    from_vm: rel.vm,
                    to_vm: asg.vm,
                    task_id: asg.task,
                    effective_time: now + self.latency,
                };
                self.in_flight.insert(asg.task, mv);
                self.notes.push(ReconfigNote::Move(mv));
                out.push(Matched::Move(mv));
            }
        }
        out
    }

    /// Assign entries on `pm` targeting `vm`, oldest first.
    pub fn pending_for(&self, pm: PmId, vm: VmId) -> Vec<AssignEntry> {
        self.queues[pm.index()].assign_queue.iter().filter(|e| e.vm == vm).copied().collect()
    }

    pub fn is_queued(&self, task: TaskId) -> bool {
        self.assign_entry(task).is_some()
    }

    pub fn assign_entry(&self, task: TaskId) -> Option<&AssignEntry> {
        self.queues.iter().find_map(|q| q.assign_queue.iter().find(|e| e.task == task))
    }

    /// Removes a still-queued task from its Assign queue.
    pub fn take_assign(&mut self, task: TaskId) -> Option<AssignEntry> {
        for q in &mut self.queues {
            if let Some(i) = q.assign_queue.iter().position(|e| e.task == task) {
                return q.assign_queue.remove(i);
            }
        }
        None
    }

    /// Applies the core move carrying `task` once it takes effect.
    pub fn complete_move(&mut self, task: TaskId, topology: &mut ClusterTopology) -> Result<CoreMove, ReconfigError> {
        let mv = self
            .in_flight
            .remove(&task)
            .ok_or_else(|| ReconfigError::ContractViolation(format!("no core move in flight for {task}")))?;
        topology
            .apply_core_move(mv.from_vm, mv.to_vm)
            .map_err(|e| ReconfigError::ContractViolation(e.to_string()))?;
        Ok(mv)
    }

    /// Drops every Assign entry of a finished job. Matching Release entries
    /// stay valid.
    pub fn purge_job(&mut self, job: JobId) -> Vec<AssignEntry> {
        let mut purged = Vec::new();
        for q in &mut self.queues {
            q.assign_queue.retain(|e| {
                let keep = e.task.job != job;
                if !keep {
                    purged.push(*e);
                }
                keep
            });
        }
        purged
    }
}
