use crate::estimator::{SlotDemand, TaskRecord};
use crate::model::{JobId, JobSpec, VmId};

use super::{take_map_prefer_local, Admitted, SchedContext, SchedError, Scheduler, SchedulerDecision, Via};

/// Hadoop's default policy: the earliest-submitted job with work of the
/// right kind takes every free slot.
#[derive(Debug, Default)]
pub struct FifoScheduler {
    admitted: Admitted,
}

fn first_by_submit(ctx: &SchedContext<'_>, pred: impl Fn(&crate::model::JobState) -> bool) -> Option<JobId> {
    ctx.active_jobs()
        .filter(|j| pred(j))
        .min_by(|a, b| a.spec.submit_time.total_cmp(&b.spec.submit_time).then_with(|| a.id().cmp(&b.id())))
        .map(|j| j.id())
}

impl Scheduler for FifoScheduler {
    fn name(&self) -> &'static str {
        "fifo"
    }

    fn on_job_added(&mut self, job: &JobSpec, _now: f64) -> Result<(), SchedError> {
        self.admitted.admit(job.job_id)
    }

    fn on_heartbeat(&mut self, node: VmId, ctx: &mut SchedContext<'_>) -> SchedulerDecision {
        let mut out = SchedulerDecision::default();
        let now = ctx.now;
        while ctx.topology.free_map_slots(node) > 0 {
            let Some(id) = first_by_submit(ctx, |j| j.has_unassigned_maps()) else { break };
            let task = take_map_prefer_local(ctx.jobs.get_mut(&id).unwrap(), node).unwrap();
            ctx.launch(&mut out, task, node, Via::Direct, None);
        }
        while ctx.topology.free_reduce_slots(node) > 0 {
            let Some(id) = first_by_submit(ctx, |j| j.reduces_runnable(now)) else { break };
            let task = ctx.jobs.get_mut(&id).unwrap().take_reduce().unwrap();
            ctx.launch(&mut out, task, node, Via::Direct, None);
        }
        out
    }

    fn on_task_complete(&mut self, _: &TaskRecord, _: &mut SchedContext<'_>) -> Result<Option<SlotDemand>, SchedError> {
        Ok(None)
    }
}
