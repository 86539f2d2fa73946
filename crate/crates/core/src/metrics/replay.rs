//! Independent re-derivation of a run from its trace log: every report
//! aggregate is recomputed from the records alone, and the scheduling
//! invariants are checked record by record.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use thiserror::Error;

use crate::model::{JobType, TaskKind, VmId};
use crate::sim::{Trace, TraceKind, TraceRecord};

use super::{JobReport, SimReport};

const CADENCE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum ReplayError {
    #[error("trace record {index}: {message}")]
    Malformed { index: usize, message: String },
    #[error("trace has no SIM header record")]
    MissingHeader,
    #[error("trace does not end with an END record")]
    Truncated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Check {
    /// A later-deadline job got a slot while an earlier one still needed it.
    Edf,
    /// A grant exceeded the job's current slot demand.
    Demand,
    /// Core counts drifted on a reconfiguration.
    Conservation,
    CrossMachine,
    Cadence,
    Causality,
    /// A reduce task started before its job's shuffle gate opened.
    Gating,
    /// A baseline policy touched the reconfiguration machinery.
    Isolation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub check: Check,
    pub time: f64,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "t={} {:?}: {}", self.time, self.check, self.message)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplaySummary {
    pub policy: String,
    pub seed: u64,
    pub workload_id: String,
    pub jobs: Vec<JobReport>,
    pub makespan: f64,
    pub throughput: f64,
    pub mean_completion_time: f64,
    pub deadline_misses: u32,
    pub map_locality_rate: f64,
    pub core_moves: u64,
    pub deferred_launches: u64,
    pub mean_deferred_wait: f64,
    pub fallback_launches: u64,
    pub fallback_fraction: f64,
    pub event_count: u64,
    pub trace_sha256: String,
    /// Grants checked for priority order and demand compliance.
    pub grants_checked: u64,
    pub violations: Vec<Violation>,
}

impl ReplaySummary {
    pub fn count(&self, check: Check) -> usize {
        self.violations.iter().filter(|v| v.check == check).count()
    }

    /// Fields where the recomputed value differs from `report`, compared
    /// exactly.
    pub fn mismatches(&self, report: &SimReport) -> Vec<String> {
        let mut out = Vec::new();
        macro_rules! cmp {
            ($($f:ident),*) => {$(
                if self.$f != report.$f {
                    out.push(format!("{}: replay {:?}, report {:?}", stringify!($f), self.$f, report.$f));
                }
            )*};
        }
        cmp!(
            policy,
            seed,
            workload_id,
            makespan,
            throughput,
            mean_completion_time,
            deadline_misses,
            map_locality_rate,
            core_moves,
            deferred_launches,
            mean_deferred_wait,
            fallback_launches,
            fallback_fraction,
            event_count,
            trace_sha256
        );
        if self.jobs.len() != report.jobs.len() {
            out.push(format!("jobs: replay {}, report {}", self.jobs.len(), report.jobs.len()));
        }
        for (a, b) in self.jobs.iter().zip(&report.jobs) {
            if a != b {
                out.push(format!("job {}: replay {a:?}, report {b:?}", a.job_id));
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Mode {
    Bootstrap,
    Feasible,
    Late,
}

impl Mode {
    fn name(self) -> &'static str {
        match self {
            Mode::Bootstrap => "bootstrap",
            Mode::Feasible => "feasible",
            Mode::Late => "late",
        }
    }
}

#[derive(Debug, Clone)]
struct JobTrack {
    job_type: JobType,
    size: u64,
    submit: f64,
    deadline: f64,
    maps: u32,
    reduces: u32,
    copy_time: f64,
    sched_maps: u32,
    sched_reduces: u32,
    done_maps: u32,
    done_reduces: u32,
    launched_reduces: u32,
    demand: Option<(u32, u32, bool)>,
    last_map_finish: f64,
    ready: Option<f64>,
    finish: Option<f64>,
    local: u32,
    fallbacks: u32,
}

impl JobTrack {
    fn abs_deadline(&self) -> f64 {
        self.submit + self.deadline
    }

    fn mode(&self, t: f64) -> Mode {
        match self.demand {
            None => Mode::Bootstrap,
            Some((_, _, true)) if t < self.abs_deadline() => Mode::Feasible,
            Some(_) => Mode::Late,
        }
    }

    fn active(&self) -> bool {
        self.finish.is_none()
    }

    fn map_phase_done(&self) -> bool {
        self.done_maps == self.maps
    }

    fn unassigned_maps(&self) -> u32 {
        self.maps - self.sched_maps - self.done_maps
    }

    fn cap(&self, kind: TaskKind, mode: Mode, wave: u32) -> Option<u32> {
        match (mode, kind, self.demand) {
            (Mode::Bootstrap, TaskKind::Map, _) => Some(wave),
            (Mode::Feasible, TaskKind::Map, Some((m, _, _))) => Some(m),
            (Mode::Feasible, TaskKind::Reduce, Some((_, r, _))) => Some(r),
            _ => None,
        }
    }

    /// Still under its cap with a task of `kind` it could run right now.
    fn wants(&self, kind: TaskKind, t: f64, wave: u32) -> bool {
        let mode = self.mode(t);
        let (sched, assignable) = match kind {
            TaskKind::Map => (self.sched_maps, !self.map_phase_done() && self.unassigned_maps() > 0),
            TaskKind::Reduce => (
                self.sched_reduces,
                self.map_phase_done() && self.ready.is_some_and(|r| t >= r) && self.launched_reduces < self.reduces,
            ),
        };
        assignable && self.cap(kind, mode, wave).is_none_or(|c| sched < c)
    }
}

struct Replayer {
    policy: String,
    seed: u64,
    workload_id: String,
    heartbeat: f64,
    wave: u32,
    serial: bool,
    vm_pm: Vec<u32>,
    vm_cores: Vec<u32>,
    pm_total: BTreeMap<u32, u32>,
    vm_offset: Vec<f64>,
    last_beat: Vec<Option<f64>>,
    jobs: BTreeMap<u32, JobTrack>,
    running: HashMap<(u32, TaskKind, u32), f64>,
    move_eff: HashMap<(u32, u32), f64>,
    waits: Vec<f64>,
    moves: u64,
    events: u64,
    grants: u64,
    violations: Vec<Violation>,
}

fn field<T: std::str::FromStr>(r: &TraceRecord, key: &str) -> Result<T, String> {
    r.get_parsed(key).ok_or_else(|| format!("{} record lacks a valid '{key}'", r.kind))
}

impl Replayer {
    fn flag(&mut self, check: Check, time: f64, message: String) {
        self.violations.push(Violation { check, time, message });
    }

    fn job(&mut self, r: &TraceRecord) -> Result<&mut JobTrack, String> {
        let id = r.job.ok_or("record without job")?.0;
        self.jobs.get_mut(&id).ok_or_else(|| format!("job {id} used before ARRIVE"))
    }

    fn vm_index(&self, vm: VmId) -> Result<usize, String> {
        let i = vm.index();
        if i < self.vm_pm.len() {
            Ok(i)
        } else {
            Err(format!("unknown vm {vm}"))
        }
    }

    fn record(&mut self, r: &TraceRecord) -> Result<(), String> {
        let t = r.time;
        match r.kind {
            TraceKind::Sim => return Err("second SIM record".into()),
            TraceKind::Vm => {
                let vm = r.vm.ok_or("VM record without vm")?;
                if vm.index() != self.vm_pm.len() {
                    return Err(format!("VM records out of order at {vm}"));
                }
                let pm: u32 = field(r, "pm")?;
                let cores: u32 = field(r, "cores")?;
                self.vm_pm.push(pm);
                self.vm_cores.push(cores);
                *self.pm_total.entry(pm).or_default() += cores;
                self.vm_offset.push(field(r, "offset")?);
                self.last_beat.push(None);
            }
            TraceKind::Arrive => {
                self.events += 1;
                let id = r.job.ok_or("ARRIVE without job")?.0;
                let track = JobTrack {
                    job_type: field(r, "type")?,
                    size: field(r, "size")?,
                    submit: field(r, "submit")?,
                    deadline: field(r, "deadline")?,
                    maps: field(r, "maps")?,
                    reduces: field(r, "reduces")?,
                    copy_time: field(r, "ts")?,
                    sched_maps: 0,
                    sched_reduces: 0,
                    done_maps: 0,
                    done_reduces: 0,
                    launched_reduces: 0,
                    demand: None,
                    last_map_finish: f64::NAN,
                    ready: None,
                    finish: None,
                    local: 0,
                    fallbacks: 0,
                };
                if track.submit != t {
                    self.flag(Check::Causality, t, format!("job {id} arrived away from its submit time"));
                }
                if self.jobs.insert(id, track).is_some() {
                    return Err(format!("job {id} arrived twice"));
                }
            }
            TraceKind::Heartbeat => {
                self.events += 1;
                let vm = r.vm.ok_or("HEARTBEAT without vm")?;
                let i = self.vm_index(vm)?;
                let expected = match self.last_beat[i] {
                    None => self.vm_offset[i],
                    Some(prev) => prev + self.heartbeat,
                };
                if (t - expected).abs() > CADENCE_TOLERANCE {
                    self.flag(Check::Cadence, t, format!("{vm} beat at {t}, expected {expected}"));
                }
                self.last_beat[i] = Some(t);
            }
            TraceKind::Launch => self.launch(r)?,
            TraceKind::Defer => {
                self.isolated(r);
                let task = r.task.ok_or("DEFER without task")?;
                if task.kind != TaskKind::Map {
                    return Err("DEFER of a reduce task".into());
                }
                let mode: String = field(r, "mode")?;
                let sched: u32 = field(r, "sched")?;
                self.grant(r, TaskKind::Map, &mode, sched)?;
            }
            TraceKind::Release | TraceKind::Withdraw => self.isolated(r),
            TraceKind::Move => {
                self.isolated(r);
                let task = r.task.ok_or("MOVE without task")?;
                let to = self.vm_index(r.vm.ok_or("MOVE without vm")?)?;
                let from = self.vm_index(VmId(field(r, "from")?))?;
                let pm: u32 = field(r, "pm")?;
                if self.vm_pm[from] != pm || self.vm_pm[to] != pm {
                    self.flag(Check::CrossMachine, t, format!("core move vm{from} -> vm{to} claims pm{pm}"));
                }
                let eff: f64 = field(r, "eff")?;
                if eff < t {
                    self.flag(Check::Causality, t, format!("core move for {task} effective in the past"));
                }
                self.move_eff.insert((task.job.0, task.index), eff);
            }
            TraceKind::Reconfig => {
                self.events += 1;
                self.moves += 1;
                self.isolated(r);
                let task = r.task.ok_or("RECONFIG without task")?;
                let to = self.vm_index(r.vm.ok_or("RECONFIG without vm")?)?;
                let from = self.vm_index(VmId(field(r, "from")?))?;
                let pm: u32 = field(r, "pm")?;
                match self.move_eff.get(&(task.job.0, task.index)) {
                    Some(&eff) if eff == t => {}
                    _ => self.flag(Check::Causality, t, format!("reconfiguration for {task} without a matching move")),
                }
                if self.vm_pm[from] != pm || self.vm_pm[to] != pm {
                    self.flag(Check::CrossMachine, t, format!("core move vm{from} -> vm{to} crosses machines"));
                }
                if self.vm_cores[from] < 2 {
                    self.flag(Check::Conservation, t, format!("vm{from} gave away its last core"));
                } else {
                    self.vm_cores[from] -= 1;
                    self.vm_cores[to] += 1;
                }
                let sum: u32 = (0..self.vm_pm.len()).filter(|&i| self.vm_pm[i] == pm).map(|i| self.vm_cores[i]).sum();
                let reported = (field::<u32>(r, "cores_from")?, field::<u32>(r, "cores_to")?, field::<u32>(r, "pm_cores")?);
                if sum != self.pm_total[&pm] || reported != (self.vm_cores[from], self.vm_cores[to], sum) {
                    self.flag(
                        Check::Conservation,
                        t,
                        format!("pm{pm} cores {reported:?}, expected ({}, {}, {})", self.vm_cores[from], self.vm_cores[to], self.pm_total[&pm]),
                    );
                }
            }
            TraceKind::Timeout => {
                self.events += 1;
                self.isolated(r);
            }
            TraceKind::Requeue => {
                self.isolated(r);
                self.job(r)?.sched_maps -= 1;
            }
            TraceKind::Finish => self.finish(r)?,
            TraceKind::Demand => {
                let d = (field(r, "m")?, field(r, "r")?, field::<u8>(r, "feasible")? == 1);
                self.job(r)?.demand = Some(d);
            }
            TraceKind::Shuffle => {
                let serial = self.serial;
                let j = self.job(r)?;
                let ready: f64 = field(r, "ready")?;
                let (um, vr) = (f64::from(j.maps), f64::from(j.reduces));
                let gate = if serial {
                    um * vr * j.copy_time
                } else if vr > 0.0 {
                    um * j.copy_time
                } else {
                    0.0
                };
                let ok = j.map_phase_done() && j.last_map_finish == t && ready == t + gate;
                j.ready = Some(ready);
                if !ok {
                    self.flag(Check::Gating, t, format!("shuffle gate of job {} opens at {ready}", r.job.unwrap()));
                }
            }
            TraceKind::JobDone => {
                let j = self.job(r)?;
                if j.done_maps != j.maps || j.done_reduces != j.reduces || j.finish.is_some() {
                    return Err("JOB_DONE before all tasks finished".into());
                }
                j.finish = Some(t);
            }
            TraceKind::End => return Err("records after END".into()),
        }
        Ok(())
    }

    fn isolated(&mut self, r: &TraceRecord) {
        if self.policy != "ct" {
            let policy = self.policy.clone();
            self.flag(Check::Isolation, r.time, format!("{} record under {policy}", r.kind));
        }
    }

    fn launch(&mut self, r: &TraceRecord) -> Result<(), String> {
        let t = r.time;
        let task = r.task.ok_or("LAUNCH without task")?;
        r.vm.ok_or("LAUNCH without vm")?;
        let local = r.local.ok_or("LAUNCH without locality flag")?;
        let via: String = field(r, "via")?;
        if via != "direct" && self.policy != "ct" {
            self.flag(Check::Isolation, t, format!("{via} launch under {}", self.policy));
        }
        let key = (task.job.0, task.kind, task.index);
        if self.running.insert(key, t).is_some() {
            self.flag(Check::Causality, t, format!("{task} launched while running"));
        }
        if via == "move" {
            match self.move_eff.remove(&(task.job.0, task.index)) {
                Some(eff) if t >= eff => {}
                _ => self.flag(Check::Causality, t, format!("{task} launched on a moved core before the move")),
            }
        }
        if let Some(w) = r.get("wait") {
            self.waits.push(w.parse().map_err(|_| format!("bad wait '{w}'"))?);
        }
        if let Some(mode) = r.get("mode") {
            let mode = mode.to_string();
            let sched: u32 = field(r, "sched")?;
            if task.kind == TaskKind::Reduce {
                self.job(r)?.launched_reduces += 1;
            }
            self.grant(r, task.kind, &mode, sched)?;
        } else if self.policy != "ct" {
            let j = self.job(r)?;
            match task.kind {
                TaskKind::Map => j.sched_maps += 1,
                TaskKind::Reduce => {
                    j.sched_reduces += 1;
                    j.launched_reduces += 1;
                }
            }
        } else if matches!(via.as_str(), "direct") {
            return Err(format!("direct ct launch of {task} without grant details"));
        }
        let j = self.job(r)?;
        if task.kind == TaskKind::Map && local {
            j.local += 1;
        }
        if via == "fallback" {
            j.fallbacks += 1;
        }
        if task.kind == TaskKind::Reduce && !(j.map_phase_done() && j.ready.is_some_and(|ready| t >= ready)) {
            self.flag(Check::Gating, t, format!("{task} launched before its shuffle gate"));
        }
        Ok(())
    }

    /// Books a ct grant and checks it against demand and priority order.
    fn grant(&mut self, r: &TraceRecord, kind: TaskKind, mode: &str, sched: u32) -> Result<(), String> {
        let t = r.time;
        let id = r.job.unwrap().0;
        let wave = self.wave;
        self.grants += 1;
        let j = self.jobs.get_mut(&id).ok_or("grant for unknown job")?;
        let m = j.mode(t);
        let count = match kind {
            TaskKind::Map => {
                j.sched_maps += 1;
                j.sched_maps
            }
            TaskKind::Reduce => {
                j.sched_reduces += 1;
                j.sched_reduces
            }
        };
        let cap = j.cap(kind, m, wave);
        let key = (j.submit, j.abs_deadline());
        if mode != m.name() {
            self.flag(Check::Demand, t, format!("job {id} granted as {mode} but is {}", m.name()));
        }
        if count != sched {
            self.flag(Check::Demand, t, format!("job {id} reports {sched} scheduled, replay counts {count}"));
        }
        if cap.is_some_and(|c| count > c) {
            self.flag(Check::Demand, t, format!("job {id} holds {count} {kind:?} slots over its demand {}", cap.unwrap()));
        }
        let mut ahead = Vec::new();
        for (&other, o) in &self.jobs {
            if other == id || !o.active() || !o.wants(kind, t, wave) {
                continue;
            }
            let om = o.mode(t);
            let precedes = match (om, m) {
                (Mode::Bootstrap, Mode::Bootstrap) => (o.submit, other) < (key.0, id),
                (Mode::Bootstrap, _) => true,
                (Mode::Feasible, Mode::Feasible) => {
                    o.abs_deadline() < key.1 || (o.abs_deadline() == key.1 && (o.submit, other) < (key.0, id))
                }
                (Mode::Feasible, Mode::Late) => true,
                _ => false,
            };
            if precedes {
                ahead.push(other);
            }
        }
        for other in ahead {
            self.flag(Check::Edf, t, format!("job {id} granted a {kind:?} slot while job {other} waits ahead of it"));
        }
        Ok(())
    }

    fn finish(&mut self, r: &TraceRecord) -> Result<(), String> {
        self.events += 1;
        let t = r.time;
        let task = r.task.ok_or("FINISH without task")?;
        match self.running.remove(&(task.job.0, task.kind, task.index)) {
            Some(start) if start <= t => {}
            _ => self.flag(Check::Causality, t, format!("{task} finished without running")),
        }
        let j = self.job(r)?;
        match task.kind {
            TaskKind::Map => {
                j.sched_maps -= 1;
                j.done_maps += 1;
                if j.map_phase_done() {
                    j.last_map_finish = t;
                }
            }
            TaskKind::Reduce => {
                j.sched_reduces -= 1;
                j.done_reduces += 1;
            }
        }
        Ok(())
    }

    fn summarize(self, trace: &Trace) -> Result<ReplaySummary, ReplayError> {
        let mut jobs = Vec::with_capacity(self.jobs.len());
        for (&id, j) in &self.jobs {
            let finish_time = j.finish.ok_or(ReplayError::Truncated)?;
            let completion_time = finish_time - j.submit;
            jobs.push(JobReport {
                job_id: id,
                job_type: j.job_type,
                input_size: j.size,
                submit_time: j.submit,
                deadline: j.deadline,
                finish_time,
                completion_time,
                deadline_met: completion_time <= j.deadline,
                map_tasks: j.maps,
                reduce_tasks: j.reduces,
                local_maps: j.local,
                map_locality_rate: f64::from(j.local) / f64::from(j.maps),
                fallbacks: j.fallbacks,
            });
        }
        let div = |a: f64, b: f64| if b > 0.0 { a / b } else { 0.0 };
        let first = jobs.iter().map(|j| j.submit_time).fold(f64::INFINITY, f64::min);
        let last = jobs.iter().map(|j| j.finish_time).fold(f64::NEG_INFINITY, f64::max);
        let makespan = if jobs.is_empty() { 0.0 } else { last - first };
        let n = jobs.len() as f64;
        let maps: u32 = jobs.iter().map(|j| j.map_tasks).sum();
        let local: u32 = jobs.iter().map(|j| j.local_maps).sum();
        let fallbacks: u32 = jobs.iter().map(|j| j.fallbacks).sum();
        let completions: f64 = jobs.iter().map(|j| j.completion_time).sum();
        let waits: f64 = self.waits.iter().sum();
        Ok(ReplaySummary {
            policy: self.policy,
            seed: self.seed,
            workload_id: self.workload_id,
            makespan,
            throughput: div(n, makespan),
            mean_completion_time: div(completions, n),
            deadline_misses: jobs.iter().filter(|j| !j.deadline_met).count() as u32,
            map_locality_rate: div(f64::from(local), f64::from(maps)),
            core_moves: self.moves,
            deferred_launches: self.waits.len() as u64,
            mean_deferred_wait: div(waits, self.waits.len() as f64),
            fallback_launches: u64::from(fallbacks),
            fallback_fraction: div(f64::from(fallbacks), f64::from(maps)),
            event_count: self.events,
            trace_sha256: trace.sha256(),
            grants_checked: self.grants,
            violations: self.violations,
            jobs,
        })
    }
}

pub fn replay(trace: &Trace) -> Result<ReplaySummary, ReplayError> {
    let head = trace.records.first().filter(|r| r.kind == TraceKind::Sim).ok_or(ReplayError::MissingHeader)?;
    let bad = |index: usize| move |message: String| ReplayError::Malformed { index, message };
    let mut rp = Replayer {
        policy: field(head, "policy").map_err(bad(0))?,
        seed: field(head, "seed").map_err(bad(0))?,
        workload_id: field(head, "workload").map_err(bad(0))?,
        heartbeat: field(head, "heartbeat").map_err(bad(0))?,
        wave: field(head, "wave").map_err(bad(0))?,
        serial: field::<String>(head, "shuffle").map_err(bad(0))? == "serial",
        vm_pm: Vec::new(),
        vm_cores: Vec::new(),
        pm_total: BTreeMap::new(),
        vm_offset: Vec::new(),
        last_beat: Vec::new(),
        jobs: BTreeMap::new(),
        running: HashMap::new(),
        move_eff: HashMap::new(),
        waits: Vec::new(),
        moves: 0,
        events: 0,
        grants: 0,
        violations: Vec::new(),
    };
    let Some((last, body)) = trace.records[1..].split_last() else {
        return Err(ReplayError::Truncated);
    };
    if last.kind != TraceKind::End {
        return Err(ReplayError::Truncated);
    }
    let mut prev = head.time;
    for (i, r) in body.iter().enumerate() {
        if r.time < prev {
            rp.flag(Check::Causality, r.time, format!("record {} goes back in time", i + 1));
        }
        prev = r.time;
        rp.record(r).map_err(bad(i + 1))?;
    }
    rp.events += 1;
    rp.summarize(trace)
}
