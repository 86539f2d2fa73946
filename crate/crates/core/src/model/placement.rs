use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::ids::VmId;
use super::job::JobSpec;
use super::topology::ClusterTopology;

#[derive(Debug, Error, PartialEq)]
pub enum PlacementError {
    #[error("replication factor {replication} needs at least that many VMs, cluster has {vms}")]
    TooFewVms { replication: u32, vms: usize },
}

/// Replica locations of every input block of one job. Block `i` is the
/// input split of map task `i`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockPlacement {
    replicas: Vec<Vec<VmId>>,
}

impl BlockPlacement {
    pub fn from_replicas(replicas: Vec<Vec<VmId>>) -> Self {
        BlockPlacement { replicas }
    }

    pub fn block_count(&self) -> usize {
        self.replicas.len()
    }

    pub fn replicas(&self, block: u32) -> &[VmId] {
        &self.replicas[block as usize]
    }

    pub fn holds(&self, block: u32, vm: VmId) -> bool {
        self.replicas(block).contains(&vm)
    }

    pub fn iter(&self) -> impl Iterator<Item = &[VmId]> {
        self.replicas.iter().map(Vec::as_slice)
    }
}

/// Uniform random placement over VMs: replicas of a block land on distinct
/// VMs, and on at least two physical machines whenever the cluster has more
/// than one. Each job draws from its own ChaCha stream, so placements depend
/// only on `(seed, job_id)`.
pub fn place_blocks(
    job: &JobSpec,
    topology: &ClusterTopology,
    seed: u64,
) -> Result<BlockPlacement, PlacementError> {
    let replication = topology.config.replication_factor;
    let vms = topology.vm_count();
    if (replication as usize) > vms {
        return Err(PlacementError::TooFewVms { replication, vms });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::from(job.job_id.0));

    let blocks = job.map_task_count(topology.config.block_size);
    let spread = topology.pm_count() >= 2 && replication >= 2;
    let mut replicas = Vec::with_capacity(blocks as usize);
    for _ in 0..blocks {
        let mut chosen: Vec<VmId> = sample(&mut rng, vms, replication as usize)
            .into_iter()
            .map(|i| VmId(i as u32))
            .collect();
        if spread {
            let first_pm = topology.host_of(chosen[0]);
            if chosen.iter().all(|&v| topology.host_of(v) == first_pm) {
                let others: Vec<VmId> = topology
                    .vms
                    .iter()
                    .map(|v| v.vm_id)
                    .filter(|&v| topology.host_of(v) != first_pm)
                    .collect();
                let last = chosen.len() - 1;
                chosen[last] = others[rng.gen_range(0..others.len())];
            }
        }
        chosen.sort_unstable();
        replicas.push(chosen);
    }
    Ok(BlockPlacement { replicas })
}
