use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::metrics::{JobReport, RunTotals, SimReport};
use crate::model::{
    place_blocks, ClusterTopology, ConfigError, JobId, JobState, PlacementError, ShuffleModel, SimConfig, TaskId,
    TaskKind, TaskState, TopologyError, VmId,
};
use crate::reconfig::{ReconfigError, ReconfigNote, Reconfigurator};
use crate::sched::{make_scheduler, Action, Launch, SchedContext, SchedError, Scheduler, SchedulerDecision, Via};
use crate::workload::{ProfileSet, Workload};

use super::event::{heartbeat_offset, heartbeat_time, Event, EventKind, EventQueue};
use super::trace::{Trace, TraceKind, TraceRecord};

const JITTER_STREAM: u64 = u64::MAX;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Placement(#[from] PlacementError),
    #[error(transparent)]
    Scheduler(#[from] SchedError),
    #[error(transparent)]
    Reconfig(#[from] ReconfigError),
    #[error("core audit failed at t={time}: {error}")]
    Audit { time: f64, error: TopologyError },
    #[error("simulation exceeded {events} events without finishing")]
    RunawaySimulation { events: u64 },
    #[error("workload is empty")]
    EmptyWorkload,
    #[error("invalid job: {0}")]
    InvalidJob(String),
}

#[derive(Debug, Clone)]
pub struct SimOutcome {
    pub report: SimReport,
    pub trace: Trace,
}

/// Simulates `workload` to completion under the named policy. The result is
/// a pure function of the arguments.
pub fn run(
    config: &SimConfig,
    workload: &Workload,
    profiles: &ProfileSet,
    policy: &str,
    seed: u64,
) -> Result<SimOutcome, SimError> {
    Engine::new(config, workload, profiles, policy, seed)?.run()
}

#[derive(Debug, Default, Clone, Copy)]
struct JobCounters {
    local_maps: u32,
    fallbacks: u32,
}

struct Engine<'a> {
    cfg: &'a SimConfig,
    workload: &'a Workload,
    profiles: &'a ProfileSet,
    policy: Box<dyn Scheduler>,
    seed: u64,
    topology: ClusterTopology,
    jobs: BTreeMap<JobId, JobState>,
    reconf: Reconfigurator,
    queue: EventQueue,
    now: f64,
    rng: ChaCha8Rng,
    trace: Vec<TraceRecord>,
    totals: RunTotals,
    counters: BTreeMap<JobId, JobCounters>,
    done: usize,
    ending: bool,
}

impl<'a> Engine<'a> {
    fn new(
        cfg: &'a SimConfig,
        workload: &'a Workload,
        profiles: &'a ProfileSet,
        policy: &str,
        seed: u64,
    ) -> Result<Self, SimError> {
        cfg.validate()?;
        if workload.jobs.is_empty() {
            return Err(SimError::EmptyWorkload);
        }
        let mut seen = BTreeSet::new();
        for j in &workload.jobs {
            j.validate().map_err(SimError::InvalidJob)?;
            if !seen.insert(j.job_id) {
                return Err(SchedError::DuplicateJob(j.job_id).into());
            }
        }
        let topology = ClusterTopology::build(&cfg.cluster)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(JITTER_STREAM);
        Ok(Engine {
            cfg,
            workload,
            profiles,
            policy: make_scheduler(policy, cfg.bootstrap_wave())?,
            seed,
            reconf: Reconfigurator::for_topology(&topology, cfg.release_hold()),
            topology,
            jobs: BTreeMap::new(),
            queue: EventQueue::default(),
            now: 0.0,
            rng,
            trace: Vec::new(),
            totals: RunTotals::default(),
            counters: BTreeMap::new(),
            done: 0,
            ending: false,
        })
    }

    fn log(&mut self, mut r: TraceRecord) {
        r.rq = self.reconf.total_rq();
        r.aq = self.reconf.total_aq();
        self.trace.push(r);
    }

    fn at(&self, kind: TraceKind) -> TraceRecord {
        TraceRecord::new(self.now, kind)
    }

    fn run(mut self) -> Result<SimOutcome, SimError> {
        let c = &self.cfg.cluster;
        let vm_count = self.topology.vm_count();
        let sim = self
            .at(TraceKind::Sim)
            .with("policy", self.policy.name())
            .with("seed", self.seed)
            .with("workload", self.workload.id())
            .with("heartbeat", c.heartbeat_interval)
            .with("vms", vm_count)
            .with("pms", self.topology.pm_count())
            .with("map_slots", self.topology.total_map_slots())
            .with("reduce_slots", self.topology.total_reduce_slots())
            .with("wave", self.cfg.bootstrap_wave())
            .with("shuffle", self.cfg.options.shuffle_model)
            .with("latency", c.reconfig_latency);
        self.log(sim);
        for i in 0..vm_count {
            let v = &self.topology.vms[i];
            let r = self
                .at(TraceKind::Vm)
                .vm(v.vm_id)
                .with("pm", v.host_pm)
                .with("cores", v.core_count)
                .with("offset", heartbeat_offset(i, vm_count, c.heartbeat_interval));
            self.log(r);
        }
        for (i, j) in self.workload.jobs.iter().enumerate() {
            self.queue.push(j.submit_time, EventKind::JobArrival(i));
        }
        for i in 0..vm_count {
            let t = heartbeat_time(i, vm_count, c.heartbeat_interval, 0);
            self.queue.push(t, EventKind::Heartbeat { vm: VmId(i as u32), k: 0 });
        }

        while let Some(ev) = self.queue.pop() {
            if self.ending && ev.kind != EventKind::SimEnd {
                continue;
            }
            self.totals.event_count += 1;
            if self.totals.event_count > self.cfg.options.max_events {
                return Err(SimError::RunawaySimulation { events: self.cfg.options.max_events });
            }
            self.now = ev.time;
            if self.dispatch(ev)? {
                break;
            }
        }
        Ok(self.finish())
    }

    /// Returns true once the run is over.
    fn dispatch(&mut self, ev: Event) -> Result<bool, SimError> {
        match ev.kind {
            EventKind::JobArrival(i) => self.on_arrival(i)?,
            EventKind::Heartbeat { vm, k } => {
                let r = self.at(TraceKind::Heartbeat).vm(vm);
                self.log(r);
                self.pass(vm);
                let hb = self.cfg.cluster.heartbeat_interval;
                let t = heartbeat_time(vm.index(), self.topology.vm_count(), hb, k + 1);
                self.queue.push(t, EventKind::Heartbeat { vm, k: k + 1 });
            }
            EventKind::TaskFinish(task) => self.on_finish(task)?,
            EventKind::ReconfigEffective(task) => self.on_reconfig(task)?,
            EventKind::DeferredLaunchTimeout { task, since } => self.on_timeout(task, since),
            EventKind::SimEnd => {
                let r = self.at(TraceKind::End).with("jobs", self.done);
                self.log(r);
                return Ok(true);
            }
        }
        if self.done == self.workload.jobs.len() && !self.ending {
            self.ending = true;
            self.queue.push(self.now, EventKind::SimEnd);
        }
        Ok(false)
    }

    fn on_arrival(&mut self, index: usize) -> Result<(), SimError> {
        let spec = self.workload.jobs[index].clone();
        let placement = place_blocks(&spec, &self.topology, self.seed)?;
        let maps = placement.block_count() as u32;
        let copy_time = self.profiles.copy_time(&spec, maps, self.cfg.cluster.network_bandwidth);
        self.policy.on_job_added(&spec, self.now)?;
        let r = self
            .at(TraceKind::Arrive)
            .job(spec.job_id)
            .with("type", spec.job_type)
            .with("size", spec.input_size)
            .with("submit", spec.submit_time)
            .with("deadline", spec.deadline)
            .with("maps", maps)
            .with("reduces", spec.reduce_task_count)
            .with("ts", copy_time);
        self.log(r);
        self.counters.insert(spec.job_id, JobCounters::default());
        let job = JobState::new(spec, placement, self.topology.vm_count(), copy_time);
        self.jobs.insert(job.id(), job);
        Ok(())
    }

    /// Runs the policy for `vm` and applies what it decided.
    fn pass(&mut self, vm: VmId) {
        let mut ctx = SchedContext {
            now: self.now,
            topology: &mut self.topology,
            jobs: &mut self.jobs,
            reconf: &mut self.reconf,
        };
        let mut d = self.policy.on_heartbeat(vm, &mut ctx);
        ctx.flush(&mut d);
        self.apply(d);
    }

    fn apply(&mut self, d: SchedulerDecision) {
        let mut waiting = Vec::new();
        for action in d.actions {
            match action {
                Action::Launch(l) => self.start_task(l),
                Action::Deferred { task, origin, target, grant } => {
                    let mut r = self.at(TraceKind::Defer).task(task).vm(target).with("origin", origin);
                    if let Some(g) = grant {
                        r = r.with("mode", g.mode.as_str()).with("sched", g.scheduled);
                        if let Some(cap) = g.cap {
                            r = r.with("cap", cap);
                        }
                    }
                    self.log(r);
                    waiting.push(task);
                }
                Action::Queue(note) => self.log_note(note),
            }
        }
        let timeout = self.cfg.defer_timeout();
        for task in waiting {
            if self.reconf.is_queued(task) {
                self.queue.push(self.now + timeout, EventKind::DeferredLaunchTimeout { task, since: self.now });
            }
        }
    }

    fn log_note(&mut self, note: ReconfigNote) {
        let r = match note {
            ReconfigNote::Release { vm } => self.at(TraceKind::Release).vm(vm),
            ReconfigNote::Withdraw { vm, lapsed } => self.at(TraceKind::Withdraw).vm(vm).with("lapsed", u8::from(lapsed)),
            ReconfigNote::Move(mv) => {
                self.queue.push(mv.effective_time, EventKind::ReconfigEffective(mv.task_id));
                self.at(TraceKind::Move)
                    .task(mv.task_id)
                    .vm(mv.to_vm)
                    .with("from", mv.from_vm)
                    .with("pm", mv.pm_id)
                    .with("eff", mv.effective_time)
            }
        };
        self.log(r);
    }

    fn start_task(&mut self, l: Launch) {
        let job = self.jobs.get_mut(&l.task.job).expect("launch for unknown job");
        let profile = self.profiles.get(job.spec.job_type);
        let base = match l.task.kind {
            TaskKind::Map => profile.base_map_time_per_block,
            TaskKind::Reduce => profile.base_reduce_time,
        };
        let j = self.cfg.options.jitter;
        let jitter = if j > 0.0 { self.rng.gen_range(-j..=j) } else { 0.0 };
        let mut duration = base * (1.0 + jitter);
        if l.task.kind == TaskKind::Map && !l.local {
            duration += self.cfg.cluster.block_size as f64 / self.cfg.cluster.network_bandwidth;
        }
        let deferral = job.start(TaskState {
            task_id: l.task,
            node: l.vm,
            start_time: self.now,
            duration,
            is_local: l.local,
        });
        let counters = self.counters.get_mut(&l.task.job).unwrap();
        if l.task.kind == TaskKind::Map && l.local {
            counters.local_maps += 1;
        }
        if l.via == Via::Fallback {
            counters.fallbacks += 1;
        }
        let mut r = self.at(TraceKind::Launch).task(l.task).vm(l.vm).local(l.local).with("via", l.via.as_str());
        if let Some(g) = l.grant {
            r = r.with("mode", g.mode.as_str()).with("sched", g.scheduled);
            if let Some(cap) = g.cap {
                r = r.with("cap", cap);
            }
        }
        if let Some(d) = deferral {
            let wait = self.now - d.since;
            self.totals.deferred_waits.push(wait);
            r = r.with("wait", wait);
        }
        r = r.with("dur", duration);
        self.log(r);
        self.queue.push(self.now + duration, EventKind::TaskFinish(l.task));
    }

    fn shuffle_gate(&self, job: &JobState) -> f64 {
        let um = f64::from(job.map_task_count);
        let vr = f64::from(job.reduce_task_count());
        match self.cfg.options.shuffle_model {
            ShuffleModel::Serial => um * vr * job.copy_time,
            ShuffleModel::Parallel => {
                if vr > 0.0 {
                    um * job.copy_time
                } else {
                    0.0
                }
            }
        }
    }

    fn on_finish(&mut self, task: TaskId) -> Result<(), SimError> {
        let now = self.now;
        let job = self.jobs.get_mut(&task.job).expect("finish for unknown job");
        let vm = job.running[&task].node;
        let record = job
            .complete(task, now)
            .ok_or_else(|| SchedError::ContractViolation(format!("{task} finished but was not running")))?;
        let v = self.topology.vm_mut(vm);
        match task.kind {
            TaskKind::Map => v.busy_map_slots -= 1,
            TaskKind::Reduce => v.busy_reduce_slots -= 1,
        }
        let r = self.at(TraceKind::Finish).task(task).vm(vm).local(record.was_local).with("dur", record.duration);
        self.log(r);

        let job = &self.jobs[&task.job];
        if task.kind == TaskKind::Map && job.map_finished && job.reduce_ready_at.is_none() {
            let ready = now + self.shuffle_gate(job);
            self.jobs.get_mut(&task.job).unwrap().reduce_ready_at = Some(ready);
            let r = self.at(TraceKind::Shuffle).job(task.job).with("ready", ready);
            self.log(r);
        }

        let demand = {
            let mut ctx = SchedContext {
                now,
                topology: &mut self.topology,
                jobs: &mut self.jobs,
                reconf: &mut self.reconf,
            };
            self.policy.on_task_complete(&record, &mut ctx)?
        };
        if let Some(d) = demand {
            let over = d.map_slots > self.topology.total_map_slots() || d.reduce_slots > self.topology.total_reduce_slots();
            let r = self
                .at(TraceKind::Demand)
                .job(task.job)
                .with("m", d.map_slots)
                .with("r", d.reduce_slots)
                .with("feasible", u8::from(d.feasible))
                .with("over", u8::from(over));
            self.log(r);
        }

        let job = self.jobs.get_mut(&task.job).unwrap();
        if job.all_tasks_complete() {
            job.completion_time = Some(now);
            let completion = now - job.spec.submit_time;
            let met = completion <= job.spec.deadline;
            self.reconf.purge_job(task.job);
            self.done += 1;
            let r = self
                .at(TraceKind::JobDone)
                .job(task.job)
                .with("completion", completion)
                .with("met", u8::from(met));
            self.log(r);
        }
        if self.done < self.workload.jobs.len() {
            self.pass(vm);
        }
        Ok(())
    }

    fn on_reconfig(&mut self, task: TaskId) -> Result<(), SimError> {
        let mv = self.reconf.complete_move(task, &mut self.topology)?;
        self.totals.core_moves += 1;
        let pm_cores = self.topology.pm_core_sum(mv.pm_id);
        let r = self
            .at(TraceKind::Reconfig)
            .task(task)
            .vm(mv.to_vm)
            .with("from", mv.from_vm)
            .with("pm", mv.pm_id)
            .with("cores_from", self.topology.vm(mv.from_vm).core_count)
            .with("cores_to", self.topology.vm(mv.to_vm).core_count)
            .with("pm_cores", pm_cores);
        self.log(r);
        let mut d = SchedulerDecision::default();
        let mut ctx = SchedContext {
            now: self.now,
            topology: &mut self.topology,
            jobs: &mut self.jobs,
            reconf: &mut self.reconf,
        };
        ctx.launch(&mut d, task, mv.to_vm, Via::Move, None);
        self.apply(d);
        self.topology.audit().map_err(|error| SimError::Audit { time: self.now, error })
    }

    fn on_timeout(&mut self, task: TaskId, since: f64) {
        let current = self.reconf.assign_entry(task).is_some_and(|e| e.enqueued == since);
        if !current {
            let r = self.at(TraceKind::Timeout).task(task).with("action", "stale");
            self.log(r);
            return;
        }
        let entry = self.reconf.take_assign(task).unwrap();
        let origin = entry.origin;
        let mut d = SchedulerDecision::default();
        let mut ctx = SchedContext {
            now: self.now,
            topology: &mut self.topology,
            jobs: &mut self.jobs,
            reconf: &mut self.reconf,
        };
        let slot = ctx.reconf.withdraw_release(origin, ctx.topology) || ctx.topology.free_map_slots(origin) > 0;
        if slot {
            ctx.launch(&mut d, task, origin, Via::Fallback, None);
        } else {
            ctx.jobs.get_mut(&task.job).unwrap().requeue_map(task);
        }
        let action = if slot { "fallback" } else { "requeue" };
        let r = self.at(TraceKind::Timeout).task(task).vm(origin).with("action", action);
        self.log(r);
        if !slot {
            let r = self.at(TraceKind::Requeue).task(task);
            self.log(r);
        }
        self.apply(d);
    }

    fn finish(self) -> SimOutcome {
        let jobs: Vec<JobReport> = self
            .jobs
            .values()
            .map(|j| {
                let finish_time = j.completion_time.unwrap_or(f64::NAN);
                let completion_time = finish_time - j.spec.submit_time;
                let c = self.counters[&j.id()];
                JobReport {
                    job_id: j.id().0,
                    job_type: j.spec.job_type,
                    input_size: j.spec.input_size,
                    submit_time: j.spec.submit_time,
                    deadline: j.spec.deadline,
                    finish_time,
                    completion_time,
                    deadline_met: completion_time <= j.spec.deadline,
                    map_tasks: j.map_task_count,
                    reduce_tasks: j.reduce_task_count(),
                    local_maps: c.local_maps,
                    map_locality_rate: f64::from(c.local_maps) / f64::from(j.map_task_count),
                    fallbacks: c.fallbacks,
                }
            })
            .collect();
        let trace = Trace { records: self.trace };
        let report = SimReport::aggregate(
            self.policy.name(),
            self.seed,
            self.workload.id(),
            jobs,
            &self.totals,
            trace.sha256(),
        );
        SimOutcome { report, trace }
    }
}
