//! Job profiles, synthetic workloads and workload trace files.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::model::{ClusterConfig, ConfigError, JobSpec};

pub mod profile;
pub mod synth;
pub mod trace_file;

pub use profile::{default_reduce_count, ProfileSet, WorkloadProfile, DEFAULT_PROFILES};
pub use synth::{nominal_time, paper_sweep_params, synth_workload, table2, SynthParams};
pub use trace_file::{format_trace, parse_trace, parse_trace_str, write_trace, TraceFileError};

pub const PRESETS: [&str; 2] = ["paper-sweep", "table2"];

#[derive(Debug, Error)]
pub enum WorkloadError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Trace(#[from] TraceFileError),
    #[error("workload is empty")]
    Empty,
}

/// A named job list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Workload {
    pub name: String,
    pub jobs: Vec<JobSpec>,
}

impl Workload {
    pub fn new(name: impl Into<String>, jobs: Vec<JobSpec>) -> Self {
        Workload { name: name.into(), jobs }
    }

    /// Name plus a digest of the job list; equal ids mean equal jobs.
    pub fn id(&self) -> String {
        let digest = Sha256::digest(format_trace(&self.jobs).as_bytes());
        format!("{}@{}", self.name, &hex::encode(digest)[..16])
    }

    /// A preset name (`paper-sweep`, `table2`) or a trace file path.
    pub fn resolve(
        arg: &str,
        seed: u64,
        profiles: &ProfileSet,
        cluster: &ClusterConfig,
    ) -> Result<Self, WorkloadError> {
        let w = match arg {
            "paper-sweep" => Workload::new(arg, synth_workload(&paper_sweep_params(), profiles, cluster, seed)?),
            "table2" => Workload::new(arg, table2()),
            path => {
                let p = Path::new(path);
                let name = p.file_stem().map_or_else(|| path.to_string(), |s| s.to_string_lossy().into_owned());
                Workload::new(name, parse_trace(p)?)
            }
        };
        if w.jobs.is_empty() {
            return Err(WorkloadError::Empty);
        }
        Ok(w)
    }
}
