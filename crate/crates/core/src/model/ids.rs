use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct JobId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VmId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PmId(pub u32);

impl VmId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl PmId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for JobId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for VmId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for PmId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Map,
    Reduce,
}

impl TaskKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::Map => "map",
            TaskKind::Reduce => "reduce",
        }
    }
}

/// A task is addressed by its job, its phase and its index within that phase.
/// Map task `i` reads input block `i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TaskId {
    pub job: JobId,
    pub kind: TaskKind,
    pub index: u32,
}

impl TaskId {
    pub fn map(job: JobId, index: u32) -> Self {
        TaskId { job, kind: TaskKind::Map, index }
    }

    pub fn reduce(job: JobId, index: u32) -> Self {
        TaskId { job, kind: TaskKind::Reduce, index }
    }

    /// Short job-local label: `m12`, `r3`.
    pub fn label(&self) -> String {
        match self.kind {
            TaskKind::Map => format!("m{}", self.index),
            TaskKind::Reduce => format!("r{}", self.index),
        }
    }

    pub fn parse_label(job: JobId, label: &str) -> Option<Self> {
        let (kind, rest) = match label.as_bytes().first()? {
            b'm' => (TaskKind::Map, &label[1..]),
            b'r' => (TaskKind::Reduce, &label[1..]),
            _ => return None,
        };
        let index = rest.parse().ok()?;
        Some(TaskId { job, kind, index })
    }
}

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "j{}.{}", self.job, self.label())
    }
}
