use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::model::{ClusterConfig, ConfigError, JobId, JobSpec, JobType, GIB};

use super::profile::{default_reduce_count, ProfileSet};

const SYNTH_STREAM: u64 = u64::MAX - 1;

/// Generator parameters: one job per (type, size) pair, submitted uniformly
/// at random in `[0, submit_window]`, with a deadline drawn as a multiple of
/// the job's nominal run time on `nominal_slots` slots per phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    pub job_types: Vec<JobType>,
    pub sizes: Vec<u64>,
    pub submit_window: f64,
    pub deadline_slack: (f64, f64),
    pub nominal_slots: u32,
}

impl SynthParams {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        if self.job_types.is_empty() {
            return bad("at least one job type must be enabled");
        }
        if self.sizes.is_empty() || self.sizes.contains(&0) {
            return bad("job sizes must be non-empty and positive");
        }
        if !(self.submit_window.is_finite() && self.submit_window >= 0.0) {
            return bad("submit_window must be non-negative");
        }
        let (lo, hi) = self.deadline_slack;
        if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && lo <= hi) {
            return bad("deadline_slack must satisfy 0 < low <= high");
        }
        if self.nominal_slots == 0 {
            return bad("nominal_slots must be positive");
        }
        Ok(())
    }
}

/// Five job types at 2, 4, 6, 8 and 10 GiB each, submitted together as one
/// batch, with deadlines 1 to 1.5 times their run time on 32 slots.
pub fn paper_sweep_params() -> SynthParams {
    SynthParams {
        job_types: JobType::ALL.to_vec(),
        sizes: [2, 4, 6, 8, 10].iter().map(|g| g * GIB).collect(),
        submit_window: 0.0,
        deadline_slack: (1.0, 1.5),
        nominal_slots: 32,
    }
}

/// Modeled run time of `job` with up to `slots` tasks of each phase in
/// parallel and no contention.
pub fn nominal_time(job: &JobSpec, profiles: &ProfileSet, cluster: &ClusterConfig, slots: u32) -> f64 {
    let p = profiles.get(job.job_type);
    let maps = job.map_task_count(cluster.block_size);
    let waves = |tasks: u32| f64::from(tasks.div_ceil(slots.min(tasks).max(1)));
    let map_phase = waves(maps) * p.base_map_time_per_block;
    let reduce_phase = if job.reduce_task_count == 0 { 0.0 } else { waves(job.reduce_task_count) * p.base_reduce_time };
    let shuffle = if job.reduce_task_count == 0 {
        0.0
    } else {
        p.intermediate_bytes(job.input_size) / cluster.network_bandwidth
    };
    map_phase + shuffle + reduce_phase
}

pub fn synth_workload(
    params: &SynthParams,
    profiles: &ProfileSet,
    cluster: &ClusterConfig,
    seed: u64,
) -> Result<Vec<JobSpec>, ConfigError> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(SYNTH_STREAM);
    let mut jobs = Vec::new();
    for &job_type in &params.job_types {
        for &size in &params.sizes {
            let submit = if params.submit_window > 0.0 { rng.gen_range(0.0..=params.submit_window) } else { 0.0 };
            let slack = rng.gen_range(params.deadline_slack.0..=params.deadline_slack.1);
            let mut spec = JobSpec {
                job_id: JobId(jobs.len() as u32),
                submit_time: round_ms(submit),
                job_type,
                input_size: size,
                deadline: 1.0,
                reduce_task_count: default_reduce_count(size),
            };
            spec.deadline = round_ms(slack * nominal_time(&spec, profiles, cluster, params.nominal_slots));
            jobs.push(spec);
        }
    }
    Ok(jobs)
}

fn round_ms(x: f64) -> f64 {
    (x * 1000.0).round() / 1000.0
}

/// (type, relative deadline in seconds, input size in GiB)
const TABLE2: [(JobType, f64, u64); 5] = [
    (JobType::Grep, 650.0, 10),
    (JobType::WordCount, 520.0, 5),
    (JobType::Sort, 500.0, 10),
    (JobType::PermutationGenerator, 850.0, 4),
    (JobType::InvertedIndex, 720.0, 8),
];

/// Five concurrent jobs with fixed sizes and deadlines, all submitted at 0.
pub fn table2() -> Vec<JobSpec> {
    TABLE2
        .iter()
        .enumerate()
        .map(|(i, &(job_type, deadline, gib))| JobSpec {
            job_id: JobId(i as u32),
            submit_time: 0.0,
            job_type,
            input_size: gib * GIB,
            deadline,
            reduce_task_count: default_reduce_count(gib * GIB),
        })
        .collect()
}
