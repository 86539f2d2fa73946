use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::model::{ConfigError, JobSpec, JobType, GIB};

pub const DEFAULT_PROFILES: &str = include_str!("../../profiles/default.toml");

/// Timing and data-volume constants of one job type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadProfile {
    #[serde(skip)]
    pub name: Option<JobType>,
    pub base_map_time_per_block: f64,
    pub base_reduce_time: f64,
    pub intermediate_ratio: f64,
}

impl WorkloadProfile {
    fn validate(&self, t: JobType) -> Result<(), ConfigError> {
        if !(self.base_map_time_per_block.is_finite() && self.base_map_time_per_block > 0.0) {
            return Err(ConfigError::Invalid(format!("{t}: base_map_time_per_block must be positive")));
        }
        if !(self.base_reduce_time.is_finite() && self.base_reduce_time > 0.0) {
            return Err(ConfigError::Invalid(format!("{t}: base_reduce_time must be positive")));
        }
        if !(self.intermediate_ratio.is_finite() && self.intermediate_ratio >= 0.0) {
            return Err(ConfigError::Invalid(format!("{t}: intermediate_ratio must be non-negative")));
        }
        Ok(())
    }

    /// Bytes of intermediate data a job of `input_size` bytes shuffles.
    pub fn intermediate_bytes(&self, input_size: u64) -> f64 {
        input_size as f64 * self.intermediate_ratio
    }
}

/// Default reduce count: one reducer per started GiB of input.
pub fn default_reduce_count(input_size: u64) -> u32 {
    input_size.div_ceil(GIB) as u32
}

/// Profiles for all five job types.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProfileSet {
    profiles: BTreeMap<JobType, WorkloadProfile>,
}

impl ProfileSet {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        Self::parse(text, "<profiles>")
    }

    fn parse(text: &str, origin: &str) -> Result<Self, ConfigError> {
        let raw: BTreeMap<String, WorkloadProfile> = toml::from_str(text)
            .map_err(|e| ConfigError::Parse { path: origin.to_string(), message: e.to_string() })?;
        let mut profiles = BTreeMap::new();
        for (name, mut p) in raw {
            let t: JobType = name.parse().map_err(ConfigError::Invalid)?;
            p.validate(t)?;
            p.name = Some(t);
            profiles.insert(t, p);
        }
        if let Some(missing) = JobType::ALL.into_iter().find(|t| !profiles.contains_key(t)) {
            return Err(ConfigError::Invalid(format!("profile for {missing} is missing")));
        }
        Ok(ProfileSet { profiles })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn get(&self, t: JobType) -> &WorkloadProfile {
        &self.profiles[&t]
    }

    /// Copy time of one map-to-reducer transfer: the per-pair share of the
    /// job's intermediate data over the network bandwidth.
    pub fn copy_time(&self, job: &JobSpec, map_tasks: u32, bandwidth: f64) -> f64 {
        if job.reduce_task_count == 0 || map_tasks == 0 {
            return 0.0;
        }
        let pairs = f64::from(map_tasks) * f64::from(job.reduce_task_count);
        self.get(job.job_type).intermediate_bytes(job.input_size) / pairs / bandwidth
    }
}

impl Default for ProfileSet {
    fn default() -> Self {
        Self::from_toml_str(DEFAULT_PROFILES).expect("shipped profile file is valid")
    }
}
