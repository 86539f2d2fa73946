use crate::estimator::{recompute_demand, SlotDemand, TaskRecord};
use crate::model::{JobId, JobSpec, JobState, VmId};
use crate::reconfig::PlacementAction;

use super::{Admitted, Action, GrantInfo, GrantMode, SchedContext, SchedError, Scheduler, SchedulerDecision, Via};

/// Deadline-driven scheduler. Jobs without timing statistics go first, one
/// wave each; the rest are served earliest deadline first, each held to the
/// minimum slot counts that still meet its deadline. Map tasks only ever run
/// next to their data: a non-local assignment is queued for a replica holder
/// and the assigning VM offers its idle core to that machine.
#[derive(Debug)]
pub struct CompletionTimeScheduler {
    admitted: Admitted,
    bootstrap_wave: u32,
}

impl CompletionTimeScheduler {
    pub fn new(bootstrap_wave: u32) -> Self {
        CompletionTimeScheduler { admitted: Admitted::default(), bootstrap_wave: bootstrap_wave.max(1) }
    }
}

pub fn grant_mode(job: &JobState, now: f64) -> GrantMode {
    match job.current_demand {
        None => GrantMode::Bootstrap,
        Some(d) if d.feasible && now < job.spec.absolute_deadline() => GrantMode::Feasible,
        Some(_) => GrantMode::Late,
    }
}

/// Bootstrap jobs oldest first, then feasible jobs by absolute deadline,
/// then late jobs by absolute deadline.
pub fn priority_order<'a>(jobs: impl Iterator<Item = &'a JobState>, now: f64) -> Vec<(JobId, GrantMode)> {
    let mut keyed: Vec<(GrantMode, f64, f64, JobId)> = jobs
        .filter(|j| !j.is_done())
        .map(|j| {
            let mode = grant_mode(j, now);
            let primary = match mode {
                GrantMode::Bootstrap => j.spec.submit_time,
                _ => j.spec.absolute_deadline(),
            };
            (mode, primary, j.spec.submit_time, j.id())
        })
        .collect();
    keyed.sort_by(|a, b| {
        a.0.cmp(&b.0)
            .then_with(|| a.1.total_cmp(&b.1))
            .then_with(|| a.2.total_cmp(&b.2))
            .then_with(|| a.3.cmp(&b.3))
    });
    keyed.into_iter().map(|(m, _, _, id)| (id, m)).collect()
}

fn map_cap(job: &JobState, mode: GrantMode, wave: u32) -> Option<u32> {
    match mode {
        GrantMode::Bootstrap => Some(wave),
        GrantMode::Feasible => job.current_demand.map(|d| d.map_slots),
        GrantMode::Late => None,
    }
}

fn reduce_cap(job: &JobState, mode: GrantMode) -> Option<u32> {
    match mode {
        GrantMode::Feasible => job.current_demand.map(|d| d.reduce_slots),
        _ => None,
    }
}

fn under(cap: Option<u32>, scheduled: u32) -> bool {
    cap.is_none_or(|c| scheduled < c)
}

impl Scheduler for CompletionTimeScheduler {
    fn name(&self) -> &'static str {
        "ct"
    }

    fn on_job_added(&mut self, job: &JobSpec, _now: f64) -> Result<(), SchedError> {
        self.admitted.admit(job.job_id)
    }

    fn uses_reconfiguration(&self) -> bool {
        true
    }

    fn on_heartbeat(&mut self, node: VmId, ctx: &mut SchedContext<'_>) -> SchedulerDecision {
        let mut out = SchedulerDecision::default();
        let now = ctx.now;
        let pm = ctx.topology.host_of(node);
        ctx.reconf.expire_releases(node, ctx.topology, now);

        // Tasks already queued for this VM take its idle cores first.
        for entry in ctx.reconf.pending_for(pm, node) {
            if ctx.topology.free_map_slots(node) == 0 {
                break;
            }
            ctx.reconf.take_assign(entry.task);
            ctx.launch(&mut out, entry.task, node, Via::Elided, None);
        }

        let mut map_budget = ctx.topology.free_map_slots(node);
        for (id, mode) in priority_order(ctx.jobs.values(), now) {
            let job = &ctx.jobs[&id];
            if !job.map_finished {
                let cap = map_cap(job, mode, self.bootstrap_wave);
                loop {
                    let job = ctx.jobs.get_mut(&id).unwrap();
                    if map_budget == 0
                        || ctx.topology.free_map_slots(node) == 0
                        || !under(cap, job.scheduled_map_count)
                        || !job.has_unassigned_maps()
                    {
                        break;
                    }
                    map_budget -= 1;
                    let action = match ctx.reconf.assign_map_task(job, node, ctx.topology, now) {
                        Ok(a) => a,
                        Err(_) => break,
                    };
                    let grant = Some(GrantInfo { mode, cap, scheduled: job.scheduled_map_count });
                    match action {
                        PlacementAction::LaunchLocal { task, node } => {
                            ctx.launch(&mut out, task, node, Via::Direct, grant);
                        }
                        PlacementAction::ElidedLaunch { task, target } => {
                            out.actions.push(Action::Deferred { task, origin: node, target, grant });
                            ctx.launch(&mut out, task, target, Via::Elided, None);
                        }
                        PlacementAction::DeferredLaunch { task, target } => {
                            out.actions.push(Action::Deferred { task, origin: node, target, grant });
                            ctx.run_matches(target, &mut out);
                            ctx.run_matches(node, &mut out);
                        }
                    }
                }
            } else if job.reduces_runnable(now) {
                let cap = reduce_cap(job, mode);
                loop {
                    let job = ctx.jobs.get_mut(&id).unwrap();
                    if ctx.topology.free_reduce_slots(node) == 0 || !under(cap, job.scheduled_reduce_count) {
                        break;
                    }
                    let Some(task) = job.take_reduce() else { break };
                    let grant = Some(GrantInfo { mode, cap, scheduled: job.scheduled_reduce_count });
                    ctx.launch(&mut out, task, node, Via::Direct, grant);
                }
            }
        }

        // Idle cores with no local work left are offered to queued tasks of
        // neighbouring VMs.
        let wanted = ctx.reconf.aq_len(pm).saturating_sub(ctx.reconf.rq_len(pm));
        if wanted > 0
            && ctx.topology.free_map_slots(node) > 0
            && !ctx.active_jobs().any(|j| j.has_local_map(node))
        {
            for _ in 0..wanted {
                if !matches!(ctx.reconf.register_release(pm, node, ctx.topology, now), Ok(true)) {
                    break;
                }
            }
            ctx.run_matches(node, &mut out);
        }
        ctx.flush(&mut out);
        out
    }

    fn on_task_complete(
        &mut self,
        record: &TaskRecord,
        ctx: &mut SchedContext<'_>,
    ) -> Result<Option<SlotDemand>, SchedError> {
        let job = ctx
            .jobs
            .get_mut(&record.task_id.job)
            .ok_or_else(|| SchedError::ContractViolation(format!("unknown task {}", record.task_id)))?;
        if job.in_bootstrap() {
            return Ok(None);
        }
        let (_, demand) =
            recompute_demand(job, ctx.now).map_err(|e| SchedError::ContractViolation(e.to_string()))?;
        job.current_demand = Some(demand);
        Ok(Some(demand))
    }
}
