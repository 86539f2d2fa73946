//! Trace log: one record per line, tab separated, columns
//! `time kind job task vm local rq aq detail`. Empty cells are `-`; `rq` and
//! `aq` are cluster-wide Release and Assign queue lengths after the record;
//! `detail` is a comma-separated list of `key=value` pairs.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::model::{JobId, TaskId, VmId};

pub const HEADER: &str = "# time\tkind\tjob\ttask\tvm\tlocal\trq\taq\tdetail";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TraceKind {
    Sim,
    Vm,
    Arrive,
    Heartbeat,
    Launch,
    Defer,
    Release,
    Withdraw,
    Move,
    Reconfig,
    Timeout,
    Requeue,
    Finish,
    Demand,
    Shuffle,
    JobDone,
    End,
}

const KINDS: [(TraceKind, &str); 17] = [
    (TraceKind::Sim, "SIM"),
    (TraceKind::Vm, "VM"),
    (TraceKind::Arrive, "ARRIVE"),
    (TraceKind::Heartbeat, "HEARTBEAT"),
    (TraceKind::Launch, "LAUNCH"),
    (TraceKind::Defer, "DEFER"),
    (TraceKind::Release, "RELEASE"),
    (TraceKind::Withdraw, "WITHDRAW"),
    (TraceKind::Move, "MOVE"),
    (TraceKind::Reconfig, "RECONFIG"),
    (TraceKind::Timeout, "TIMEOUT"),
    (TraceKind::Requeue, "REQUEUE"),
    (TraceKind::Finish, "FINISH"),
    (TraceKind::Demand, "DEMAND"),
    (TraceKind::Shuffle, "SHUFFLE"),
    (TraceKind::JobDone, "JOB_DONE"),
    (TraceKind::End, "END"),
];

impl TraceKind {
    pub fn as_str(self) -> &'static str {
        KINDS.iter().find(|(k, _)| *k == self).map(|(_, s)| *s).unwrap()
    }
}

impl FromStr for TraceKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        KINDS.iter().find(|(_, n)| *n == s).map(|(k, _)| *k).ok_or_else(|| format!("unknown record kind '{s}'"))
    }
}

impl fmt::Display for TraceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub time: f64,
    pub kind: TraceKind,
    pub job: Option<JobId>,
    pub task: Option<TaskId>,
    pub vm: Option<VmId>,
    pub local: Option<bool>,
    pub rq: usize,
    pub aq: usize,
    pub detail: Vec<(String, String)>,
}

impl TraceRecord {
    pub fn new(time: f64, kind: TraceKind) -> Self {
        TraceRecord { time, kind, job: None, task: None, vm: None, local: None, rq: 0, aq: 0, detail: Vec::new() }
    }

    pub fn job(mut self, job: JobId) -> Self {
        self.job = Some(job);
        self
    }

    pub fn task(mut self, task: TaskId) -> Self {
        self.job = Some(task.job);
        self.task = Some(task);
        self
    }

    pub fn vm(mut self, vm: VmId) -> Self {
        self.vm = Some(vm);
        self
    }

    pub fn local(mut self, local: bool) -> Self {
        self.local = Some(local);
        self
    }

    pub fn with(mut self, key: &str, value: impl fmt::Display) -> Self {
        self.detail.push((key.to_string(), value.to_string()));
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.detail.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn get_parsed<T: FromStr>(&self, key: &str) -> Option<T> {
        self.get(key)?.parse().ok()
    }

    pub fn write_line(&self, out: &mut String) {
        fn opt<T: fmt::Display>(out: &mut String, v: Option<T>) {
            match v {
                Some(v) => {
                    let _ = write!(out, "{v}");
                }
                None => out.push('-'),
            }
        }
        let _ = write!(out, "{}\t{}\t", self.time, self.kind);
        opt(out, self.job.map(|j| j.0));
        out.push('\t');
        opt(out, self.task.map(|t| t.label()));
        out.push('\t');
        opt(out, self.vm.map(|v| v.0));
        out.push('\t');
        opt(out, self.local.map(u8::from));
        let _ = write!(out, "\t{}\t{}\t", self.rq, self.aq);
        if self.detail.is_empty() {
            out.push('-');
        } else {
            for (i, (k, v)) in self.detail.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                let _ = write!(out, "{k}={v}");
            }
        }
        out.push('\n');
    }

    pub fn parse_line(line: &str) -> Result<Self, String> {
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 9 {
            return Err(format!("expected 9 columns, found {}", cols.len()));
        }
        let num = |s: &str, what: &str| -> Result<Option<u32>, String> {
            if s == "-" {
                Ok(None)
            } else {
                s.parse().map(Some).map_err(|_| format!("bad {what} '{s}'"))
            }
        };
        let time: f64 = cols[0].parse().map_err(|_| format!("bad time '{}'", cols[0]))?;
        let kind: TraceKind = cols[1].parse()?;
        let job = num(cols[2], "job")?.map(JobId);
        let task = match (cols[3], job) {
            ("-", _) => None,
            (label, Some(j)) => Some(TaskId::parse_label(j, label).ok_or_else(|| format!("bad task '{label}'"))?),
            (label, None) => return Err(format!("task '{label}' without job")),
        };
        let vm = num(cols[4], "vm")?.map(VmId);
        let local = match cols[5] {
            "-" => None,
            "1" => Some(true),
            "0" => Some(false),
            s => return Err(format!("bad local flag '{s}'")),
        };
        let rq = cols[6].parse().map_err(|_| format!("bad rq '{}'", cols[6]))?;
        let aq = cols[7].parse().map_err(|_| format!("bad aq '{}'", cols[7]))?;
        let detail = if cols[8] == "-" {
            Vec::new()
        } else {
            cols[8]
                .split(',')
                .map(|kv| {
                    kv.split_once('=')
                        .map(|(k, v)| (k.to_string(), v.to_string()))
                        .ok_or_else(|| format!("bad detail '{kv}'"))
                })
                .collect::<Result<_, _>>()?
        };
        Ok(TraceRecord { time, kind, job, task, vm, local, rq, aq, detail })
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    pub records: Vec<TraceRecord>,
}

impl Trace {
    pub fn to_tsv(&self) -> String {
        let mut out = String::with_capacity(self.records.len() * 48);
        out.push_str(HEADER);
        out.push('\n');
        for r in &self.records {
            r.write_line(&mut out);
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.starts_with('#') || line.is_empty() {
                continue;
            }
            records.push(TraceRecord::parse_line(line).map_err(|e| format!("trace line {}: {e}", i + 1))?);
        }
        Ok(Trace { records })
    }

    pub fn sha256(&self) -> String {
        hex::encode(Sha256::digest(self.to_tsv().as_bytes()))
    }

    pub fn count(&self, kind: TraceKind) -> usize {
        self.records.iter().filter(|r| r.kind == kind).count()
    }
}
