use crate::estimator::{SlotDemand, TaskRecord};
use crate::model::{JobId, JobSpec, JobState, TaskKind, VmId};

use super::{take_map_prefer_local, Admitted, SchedContext, SchedError, Scheduler, SchedulerDecision, Via};

/// Slot-level max-min fair sharing: every free slot goes to the job furthest
/// below its equal share of that slot kind. Locality is preferred but never
/// waited for, and no cores move.
#[derive(Debug, Default)]
pub struct FairScheduler {
    admitted: Admitted,
}

fn wants(job: &JobState, kind: TaskKind, now: f64) -> bool {
    match kind {
        TaskKind::Map => job.has_unassigned_maps(),
        TaskKind::Reduce => job.reduces_runnable(now),
    }
}

fn running(job: &JobState, kind: TaskKind) -> u32 {
    match kind {
        TaskKind::Map => job.scheduled_map_count,
        TaskKind::Reduce => job.scheduled_reduce_count,
    }
}

/// Job with the largest deficit (share minus running tasks) among those
/// wanting a slot of `kind`; ties go to the earlier submission.
fn neediest(ctx: &SchedContext<'_>, kind: TaskKind, total_slots: u32) -> Option<JobId> {
    let active = ctx.active_jobs().count();
    if active == 0 {
        return None;
    }
    let share = f64::from(total_slots) / active as f64;
    ctx.active_jobs()
        .filter(|j| wants(j, kind, ctx.now))
        .map(|j| (share - f64::from(running(j, kind)), j.spec.submit_time, j.id()))
        .min_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.total_cmp(&b.1)).then_with(|| a.2.cmp(&b.2)))
        .map(|(_, _, id)| id)
}

impl Scheduler for FairScheduler {
    fn name(&self) -> &'static str {
        "fair"
    }

    fn on_job_added(&mut self, job: &JobSpec, _now: f64) -> Result<(), SchedError> {
        self.admitted.admit(job.job_id)
    }

    fn on_heartbeat(&mut self, node: VmId, ctx: &mut SchedContext<'_>) -> SchedulerDecision {
        let mut out = SchedulerDecision::default();
        let n_m = ctx.topology.total_map_slots();
        let n_r = ctx.topology.total_reduce_slots();
        while ctx.topology.free_map_slots(node) > 0 {
            let Some(id) = neediest(ctx, TaskKind::Map, n_m) else { break };
            let task = take_map_prefer_local(ctx.jobs.get_mut(&id).unwrap(), node).unwrap();
            ctx.launch(&mut out, task, node, Via::Direct, None);
        }
        while ctx.topology.free_reduce_slots(node) > 0 {
            let Some(id) = neediest(ctx, TaskKind::Reduce, n_r) else { break };
            let task = ctx.jobs.get_mut(&id).unwrap().take_reduce().unwrap();
            ctx.launch(&mut out, task, node, Via::Direct, None);
        }
        out
    }

    fn on_task_complete(&mut self, _: &TaskRecord, _: &mut SchedContext<'_>) -> Result<Option<SlotDemand>, SchedError> {
        Ok(None)
    }
}
