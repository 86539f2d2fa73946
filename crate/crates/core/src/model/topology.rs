use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::config::{ClusterConfig, ConfigError};
use super::ids::{PmId, VmId};

#[derive(Debug, Error, PartialEq)]
pub enum TopologyError {
    #[error("vm {vm} is not hosted on pm {pm}")]
    NotHosted { vm: VmId, pm: PmId },
    #[error("core move {from} -> {to} crosses physical machines")]
    CrossMachine { from: VmId, to: VmId },
    #[error("core move {from} -> {to}: source has no reserved free core")]
    NoReservedCore { from: VmId, to: VmId },
    #[error("vm {0} would lose its last core")]
    LastCore(VmId),
    #[error("core conservation violated on pm {pm}: {actual} cores, expected {expected}")]
    Conservation { pm: PmId, actual: u32, expected: u32 },
    #[error("slot occupancy exceeds capacity on vm {0}")]
    Overcommitted(VmId),
}

/// Dynamic state of one virtual machine.
///
/// A task occupies one core. Map capacity follows the core count: every core
/// hot-plugged beyond the initial allocation adds a map slot, every core
/// unplugged removes one. Reduce capacity is fixed by configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VmState {
    pub vm_id: VmId,
    pub host_pm: PmId,
    pub core_count: u32,
    pub busy_map_slots: u32,
    pub busy_reduce_slots: u32,
    /// Free cores registered in the host's Release Queue; held idle until
    /// matched or the registration lapses.
    pub reserved_cores: u32,
}

impl VmState {
    pub fn busy(&self) -> u32 {
        self.busy_map_slots + self.busy_reduce_slots
    }

    fn idle_cores(&self) -> i64 {
        i64::from(self.core_count) - i64::from(self.busy()) - i64::from(self.reserved_cores)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhysicalMachine {
    pub pm_id: PmId,
    pub vms: Vec<VmId>,
    /// Cores handed to this machine's VMs at construction; conserved.
    pub allocated_cores: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterTopology {
    pub config: ClusterConfig,
    pub pms: Vec<PhysicalMachine>,
    pub vms: Vec<VmState>,
    pub total_cores: u32,
}

impl ClusterTopology {
    /// Lays out `physical_machine_count` machines, each hosting `vms_per_pm`
    /// VMs with `cores_per_vm_initial` cores. VM ids are dense and grouped by
    /// host: pm p hosts vms p*k .. p*k+k-1.
    pub fn build(config: &ClusterConfig) -> Result<Self, ConfigError> {
        config.validate()?;
        let mut pms = Vec::with_capacity(config.physical_machine_count as usize);
        let mut vms = Vec::with_capacity(config.vm_count() as usize);
        for p in 0..config.physical_machine_count {
            let pm_id = PmId(p);
            let mut hosted = Vec::with_capacity(config.vms_per_pm as usize);
            for k in 0..config.vms_per_pm {
                let vm_id = VmId(p * config.vms_per_pm + k);
                hosted.push(vm_id);
                vms.push(VmState {
                    vm_id,
                    host_pm: pm_id,
                    core_count: config.cores_per_vm_initial,
                    busy_map_slots: 0,
                    busy_reduce_slots: 0,
                    reserved_cores: 0,
                });
            }
            pms.push(PhysicalMachine {
                pm_id,
                vms: hosted,
                allocated_cores: config.vms_per_pm * config.cores_per_vm_initial,
            });
        }
        let total_cores = pms.iter().map(|p| p.allocated_cores).sum();
        Ok(ClusterTopology { config: config.clone(), pms, vms, total_cores })
    }

    pub fn vm(&self, vm: VmId) -> &VmState {
        &self.vms[vm.index()]
    }

    pub fn vm_mut(&mut self, vm: VmId) -> &mut VmState {
        &mut self.vms[vm.index()]
    }

    pub fn host_of(&self, vm: VmId) -> PmId {
        self.vms[vm.index()].host_pm
    }

    pub fn vm_count(&self) -> usize {
        self.vms.len()
    }

    pub fn pm_count(&self) -> usize {
        self.pms.len()
    }

    pub fn total_map_slots(&self) -> u32 {
        self.config.total_map_slots()
    }

    pub fn total_reduce_slots(&self) -> u32 {
        self.config.total_reduce_slots()
    }

    pub fn map_capacity(&self, vm: VmId) -> u32 {
        let v = self.vm(vm);
        let cap = i64::from(self.config.map_slots_per_vm) + i64::from(v.core_count)
            - i64::from(self.config.cores_per_vm_initial);
        cap.max(0) as u32
    }

    pub fn free_map_slots(&self, vm: VmId) -> u32 {
        let v = self.vm(vm);
        let by_slots = i64::from(self.map_capacity(vm))
            - i64::from(v.busy_map_slots)
            - i64::from(v.reserved_cores);
        by_slots.min(v.idle_cores()).max(0) as u32
    }

    pub fn free_reduce_slots(&self, vm: VmId) -> u32 {
        let v = self.vm(vm);
        let by_slots =
            i64::from(self.config.reduce_slots_per_vm) - i64::from(v.busy_reduce_slots);
        by_slots.min(v.idle_cores()).max(0) as u32
    }

    /// Whether `vm` holds a free map slot whose core may be donated: the VM
    /// must keep at least one core once every reservation is honoured.
    pub fn can_release_core(&self, vm: VmId) -> bool {
        let v = self.vm(vm);
        self.free_map_slots(vm) > 0 && v.core_count >= v.reserved_cores + 2
    }

    pub fn reserve_core(&mut self, vm: VmId) -> bool {
        if !self.can_release_core(vm) {
            return false;
        }
        self.vm_mut(vm).reserved_cores += 1;
        true
    }

    pub fn unreserve_core(&mut self, vm: VmId) {
        let v = self.vm_mut(vm);
        debug_assert!(v.reserved_cores > 0);
        v.reserved_cores = v.reserved_cores.saturating_sub(1);
    }

    /// Moves one reserved core from `from` to `to`. Both VMs must share a host.
    pub fn apply_core_move(&mut self, from: VmId, to: VmId) -> Result<(), TopologyError> {
        if self.host_of(from) != self.host_of(to) || from == to {
            return Err(TopologyError::CrossMachine { from, to });
        }
        let src = self.vm(from);
        if src.reserved_cores == 0 {
            return Err(TopologyError::NoReservedCore { from, to });
        }
        if src.core_count < 2 {
            return Err(TopologyError::LastCore(from));
        }
        let src = self.vm_mut(from);
        src.core_count -= 1;
        src.reserved_cores -= 1;
        self.vm_mut(to).core_count += 1;
        Ok(())
    }

    pub fn pm_core_sum(&self, pm: PmId) -> u32 {
        self.pms[pm.index()]
            .vms
            .iter()
            .map(|&v| self.vm(v).core_count)
            .sum()
    }

    pub fn cluster_core_sum(&self) -> u32 {
        self.vms.iter().map(|v| v.core_count).sum()
    }

    /// Per-machine and cluster-wide core conservation plus slot occupancy.
    pub fn audit(&self) -> Result<(), TopologyError> {
        for pm in &self.pms {
            let actual = self.pm_core_sum(pm.pm_id);
            if actual != pm.allocated_cores {
                return Err(TopologyError::Conservation {
                    pm: pm.pm_id,
                    actual,
                    expected: pm.allocated_cores,
                });
            }
        }
        for v in &self.vms {
            if v.core_count == 0
                || v.busy() + v.reserved_cores > v.core_count
                || v.busy_reduce_slots > self.config.reduce_slots_per_vm
                || v.busy_map_slots + v.reserved_cores > self.map_capacity(v.vm_id)
            {
                return Err(TopologyError::Overcommitted(v.vm_id));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn paper_like() -> ClusterConfig {
        ClusterConfig {
            physical_machine_count: 20,
            vms_per_pm: 1,
            cores_per_vm_initial: 2,
            cores_per_pm: 4,
            map_slots_per_vm: 2,
            reduce_slots_per_vm: 2,
            ..ClusterConfig::default()
        }
    }

    #[test]
    fn twenty_single_vm_machines() {
        let topo = ClusterTopology::build(&paper_like()).unwrap();
        assert_eq!(topo.vm_count(), 20);
        assert_eq!(topo.total_map_slots(), 40);
        assert_eq!(topo.total_reduce_slots(), 40);
        assert_eq!(topo.total_cores, 40);
    }

    #[test]
    fn single_node_cluster() {
        let cfg = ClusterConfig {
            physical_machine_count: 1,
            vms_per_pm: 1,
            replication_factor: 1,
            ..ClusterConfig::default()
        };
        let topo = ClusterTopology::build(&cfg).unwrap();
        assert_eq!(topo.vm_count(), 1);
        assert_eq!(topo.pm_count(), 1);
    }

    #[test]
    fn oversubscribed_machine_fails_to_build() {
        let cfg = ClusterConfig { cores_per_pm: 7, ..ClusterConfig::default() };
        assert!(matches!(ClusterTopology::build(&cfg), Err(ConfigError::Invalid(_))));
    }

    #[test]
    fn cores_bound_total_occupancy() {
        let mut topo = ClusterTopology::build(&paper_like()).unwrap();
        let vm = VmId(0);
        assert_eq!(topo.free_map_slots(vm), 2);
        topo.vm_mut(vm).busy_reduce_slots = 1;
        // two cores, one busy with a reduce: one map slot left
        assert_eq!(topo.free_map_slots(vm), 1);
        assert_eq!(topo.free_reduce_slots(vm), 1);
    }

    #[test]
    fn core_move_shifts_map_capacity() {
        let mut topo = ClusterTopology::build(&ClusterConfig::default()).unwrap();
        let (a, b) = (VmId(0), VmId(1));
        assert_eq!(topo.host_of(a), topo.host_of(b));
        topo.vm_mut(b).busy_map_slots = 2;
        assert_eq!(topo.free_map_slots(b), 0);
        assert!(topo.reserve_core(a));
        assert_eq!(topo.free_map_slots(a), 1);
        topo.apply_core_move(a, b).unwrap();
        assert_eq!(topo.vm(a).core_count, 3);
        assert_eq!(topo.vm(b).core_count, 5);
        assert_eq!(topo.free_map_slots(a), 1);
        assert_eq!(topo.free_map_slots(b), 1);
        topo.audit().unwrap();
    }

    #[test]
    fn cross_machine_move_is_refused() {
        let mut topo = ClusterTopology::build(&ClusterConfig::default()).unwrap();
        assert!(topo.reserve_core(VmId(0)));
        assert_eq!(
            topo.apply_core_move(VmId(0), VmId(2)),
            Err(TopologyError::CrossMachine { from: VmId(0), to: VmId(2) })
        );
    }

    #[test]
    fn last_core_is_never_released() {
        let cfg = ClusterConfig {
            cores_per_vm_initial: 1,
            map_slots_per_vm: 1,
            reduce_slots_per_vm: 0,
            ..ClusterConfig::default()
        };
        let mut topo = ClusterTopology::build(&cfg).unwrap();
        assert!(!topo.can_release_core(VmId(0)));
        assert!(!topo.reserve_core(VmId(0)));
    }
}
