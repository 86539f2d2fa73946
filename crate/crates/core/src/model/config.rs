//! Cluster and simulation configuration.
//!
//! The configuration file is flat TOML: every field of [`ClusterConfig`] and
//! [`SimOptions`] is a top-level key, and any key left out takes its default.
//!
//! ```toml
//! physical_machine_count = 20
//! vms_per_pm = 2
//! network_bandwidth = 8388608   # bytes/s
//! jitter = 0.0
//! shuffle_model = "serial"
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MIB: u64 = 1 << 20;
pub const GIB: u64 = 1 << 30;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid cluster config: {0}")]
    Invalid(String),
    #[error("cannot read config file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed config file {path}: {message}")]
    Parse { path: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterConfig {
    pub physical_machine_count: u32,
    pub vms_per_pm: u32,
    pub cores_per_vm_initial: u32,
    pub cores_per_pm: u32,
    pub map_slots_per_vm: u32,
    pub reduce_slots_per_vm: u32,
    /// Bytes.
    pub block_size: u64,
    pub replication_factor: u32,
    /// Bytes per second.
    pub network_bandwidth: f64,
    /// Seconds.
    pub heartbeat_interval: f64,
    /// Seconds between a core move being matched and the core being usable.
    pub reconfig_latency: f64,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        ClusterConfig {
            physical_machine_count: 20,
            vms_per_pm: 2,
            cores_per_vm_initial: 4,
            cores_per_pm: 8,
            map_slots_per_vm: 2,
            reduce_slots_per_vm: 2,
            block_size: 64 * MIB,
            replication_factor: 3,
            network_bandwidth: DEFAULT_NETWORK_BANDWIDTH,
            heartbeat_interval: 3.0,
            reconfig_latency: 1.0,
        }
    }
}

/// 8 MiB/s: the per-flow share of a contended link. Only the ratio between
/// remote-read cost and map time matters for the comparisons.
pub const DEFAULT_NETWORK_BANDWIDTH: f64 = 8.0 * MIB as f64;

impl ClusterConfig {
    pub fn vm_count(&self) -> u32 {
        self.physical_machine_count * self.vms_per_pm
    }

    /// N_m: configured map slots summed over all VMs.
    pub fn total_map_slots(&self) -> u32 {
        self.vm_count() * self.map_slots_per_vm
    }

    /// N_r: configured reduce slots summed over all VMs.
    pub fn total_reduce_slots(&self) -> u32 {
        self.vm_count() * self.reduce_slots_per_vm
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let fail = |msg: String| Err(ConfigError::Invalid(msg));
        if self.physical_machine_count == 0 {
            return fail("physical_machine_count must be at least 1".into());
        }
        if self.vms_per_pm == 0 {
            return fail("vms_per_pm must be at least 1".into());
        }
        if self.cores_per_vm_initial == 0 {
            return fail("cores_per_vm_initial must be at least 1".into());
        }
        if u64::from(self.vms_per_pm) * u64::from(self.cores_per_vm_initial)
            > u64::from(self.cores_per_pm)
        {
            return fail(format!(
                "vms_per_pm x cores_per_vm_initial ({} x {}) exceeds cores_per_pm ({})",
                self.vms_per_pm, self.cores_per_vm_initial, self.cores_per_pm
            ));
        }
        if self.map_slots_per_vm == 0 {
            return fail("map_slots_per_vm must be at least 1".into());
        }
        if self.block_size == 0 {
            return fail("block_size must be positive".into());
        }
        if self.replication_factor == 0 {
            return fail("replication_factor must be at least 1".into());
        }
        if self.replication_factor > self.vm_count() {
            return fail(format!(
                "replication_factor ({}) exceeds total VM count ({})",
                self.replication_factor,
                self.vm_count()
            ));
        }
        if !(self.network_bandwidth.is_finite() && self.network_bandwidth > 0.0) {
            return fail("network_bandwidth must be positive".into());
        }
        if !(self.heartbeat_interval.is_finite() && self.heartbeat_interval > 0.0) {
            return fail("heartbeat_interval must be positive".into());
        }
        if !(self.reconfig_latency.is_finite() && self.reconfig_latency >= 0.0) {
            return fail("reconfig_latency must be non-negative".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShuffleModel {
    /// All u_m * v_r copies are serialized after the map phase.
    Serial,
    /// Reducers copy in parallel: the gate is u_m * t_s.
    Parallel,
}

impl std::fmt::Display for ShuffleModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ShuffleModel::Serial => "serial",
            ShuffleModel::Parallel => "parallel",
        })
    }
}

impl std::str::FromStr for ShuffleModel {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "serial" => Ok(ShuffleModel::Serial),
            "parallel" => Ok(ShuffleModel::Parallel),
            other => Err(format!("unknown shuffle model '{other}' (expected serial|parallel)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimOptions {
    /// Half-width of the uniform task-duration jitter, as a fraction.
    pub jitter: f64,
    pub shuffle_model: ShuffleModel,
    /// Deferred launches older than this fall back to a non-local launch.
    /// Defaults to 10 heartbeat intervals.
    pub defer_timeout: Option<f64>,
    /// How long a core registered in a Release Queue stays reserved before the
    /// registration lapses. Defaults to one heartbeat interval.
    pub release_hold: Option<f64>,
    /// Running-task cap for a job before its first map completion.
    /// Defaults to the cluster's total map slots.
    pub bootstrap_wave: Option<u32>,
    pub max_events: u64,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            jitter: 0.05,
            shuffle_model: ShuffleModel::Serial,
            defer_timeout: None,
            release_hold: None,
            bootstrap_wave: None,
            max_events: 20_000_000,
        }
    }
}

impl SimOptions {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.jitter.is_finite() && (0.0..1.0).contains(&self.jitter)) {
            return Err(ConfigError::Invalid("jitter must lie in [0, 1)".into()));
        }
        for (name, v) in [("defer_timeout", self.defer_timeout), ("release_hold", self.release_hold)] {
            if let Some(v) = v {
                if !(v.is_finite() && v >= 0.0) {
                    return Err(ConfigError::Invalid(format!("{name} must be non-negative")));
                }
            }
        }
        if self.bootstrap_wave == Some(0) {
            return Err(ConfigError::Invalid("bootstrap_wave must be at least 1".into()));
        }
        if self.max_events == 0 {
            return Err(ConfigError::Invalid("max_events must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SimConfig {
    pub cluster: ClusterConfig,
    pub options: SimOptions,
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.cluster.validate()?;
        self.options.validate()
    }

    pub fn defer_timeout(&self) -> f64 {
        self.options
            .defer_timeout
            .unwrap_or(10.0 * self.cluster.heartbeat_interval)
    }

    pub fn release_hold(&self) -> f64 {
        self.options
            .release_hold
            .unwrap_or(self.cluster.heartbeat_interval)
    }

    pub fn bootstrap_wave(&self) -> u32 {
        self.options
            .bootstrap_wave
            .unwrap_or_else(|| self.cluster.total_map_slots())
    }

    pub fn from_toml_str(text: &str) -> Result<Self, String> {
        let file: ConfigFile = toml::from_str(text).map_err(|e| e.to_string())?;
        Ok(file.into_config())
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let config = Self::from_toml_str(&text).map_err(|message| ConfigError::Parse {
            path: path.display().to_string(),
            message,
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml_string(&self) -> String {
        let c = &self.cluster;
        let o = &self.options;
        let mut out = String::new();
        out.push_str(&format!("physical_machine_count = {}\n", c.physical_machine_count));
        out.push_str(&format!("vms_per_pm = {}\n", c.vms_per_pm));
        out.push_str(&format!("cores_per_vm_initial = {}\n", c.cores_per_vm_initial));
        out.push_str(&format!("cores_per_pm = {}\n", c.cores_per_pm));
        out.push_str(&format!("map_slots_per_vm = {}\n", c.map_slots_per_vm));
        out.push_str(&format!("reduce_slots_per_vm = {}\n", c.reduce_slots_per_vm));
        out.push_str(&format!("block_size = {}\n", c.block_size));
        out.push_str(&format!("replication_factor = {}\n", c.replication_factor));
        out.push_str(&format!("network_bandwidth = {:?}\n", c.network_bandwidth));
        out.push_str(&format!("heartbeat_interval = {:?}\n", c.heartbeat_interval));
        out.push_str(&format!("reconfig_latency = {:?}\n", c.reconfig_latency));
        out.push_str(&format!("jitter = {:?}\n", o.jitter));
        out.push_str(&format!(
            "shuffle_model = \"{}\"\n",
            match o.shuffle_model {
                ShuffleModel::Serial => "serial",
                ShuffleModel::Parallel => "parallel",
            }
        ));
        if let Some(v) = o.defer_timeout {
            out.push_str(&format!("defer_timeout = {v:?}\n"));
        }
        if let Some(v) = o.release_hold {
            out.push_str(&format!("release_hold = {v:?}\n"));
        }
        if let Some(v) = o.bootstrap_wave {
            out.push_str(&format!("bootstrap_wave = {v}\n"));
        }
        out.push_str(&format!("max_events = {}\n", o.max_events));
        out
    }
}

/// On-disk shape: every key optional, unknown keys rejected.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    physical_machine_count: Option<u32>,
    vms_per_pm: Option<u32>,
    cores_per_vm_initial: Option<u32>,
    cores_per_pm: Option<u32>,
    map_slots_per_vm: Option<u32>,
    reduce_slots_per_vm: Option<u32>,
    block_size: Option<u64>,
    replication_factor: Option<u32>,
    network_bandwidth: Option<f64>,
    heartbeat_interval: Option<f64>,
    reconfig_latency: Option<f64>,
    jitter: Option<f64>,
    shuffle_model: Option<ShuffleModel>,
    defer_timeout: Option<f64>,
    release_hold: Option<f64>,
    bootstrap_wave: Option<u32>,
    max_events: Option<u64>,
}

impl ConfigFile {
    fn into_config(self) -> SimConfig {
        let d = ClusterConfig::default();
        let o = SimOptions::default();
        SimConfig {
            cluster: ClusterConfig {
                physical_machine_count: self.physical_machine_count.unwrap_or(d.physical_machine_count),
                vms_per_pm: self.vms_per_pm.unwrap_or(d.vms_per_pm),
                cores_per_vm_initial: self.cores_per_vm_initial.unwrap_or(d.cores_per_vm_initial),
                cores_per_pm: self.cores_per_pm.unwrap_or(d.cores_per_pm),
                map_slots_per_vm: self.map_slots_per_vm.unwrap_or(d.map_slots_per_vm),
                reduce_slots_per_vm: self.reduce_slots_per_vm.unwrap_or(d.reduce_slots_per_vm),
                block_size: self.block_size.unwrap_or(d.block_size),
                replication_factor: self.replication_factor.unwrap_or(d.replication_factor),
                network_bandwidth: self.network_bandwidth.unwrap_or(d.network_bandwidth),
                heartbeat_interval: self.heartbeat_interval.unwrap_or(d.heartbeat_interval),
                reconfig_latency: self.reconfig_latency.unwrap_or(d.reconfig_latency),
            },
            options: SimOptions {
                jitter: self.jitter.unwrap_or(o.jitter),
                shuffle_model: self.shuffle_model.unwrap_or(o.shuffle_model),
                defer_timeout: self.defer_timeout.or(o.defer_timeout),
                release_hold: self.release_hold.or(o.release_hold),
                bootstrap_wave: self.bootstrap_wave.or(o.bootstrap_wave),
                max_events: self.max_events.unwrap_or(o.max_events),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        SimConfig::default().validate().unwrap();
        assert_eq!(ClusterConfig::default().heartbeat_interval, 3.0);
    }

    #[test]
    fn oversubscribed_pm_is_rejected() {
        let cfg = ClusterConfig {
            vms_per_pm: 3,
            cores_per_vm_initial: 4,
            cores_per_pm: 8,
            ..ClusterConfig::default()
        };
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("cores_per_pm"), "{err}");
    }

    #[test]
    fn replication_above_vm_count_is_rejected() {
        let cfg = ClusterConfig {
            physical_machine_count: 1,
            vms_per_pm: 2,
            replication_factor: 3,
            ..ClusterConfig::default()
        };
        assert!(cfg.validate().unwrap_err().to_string().contains("replication_factor"));
    }

    #[test]
    fn zero_heartbeat_is_rejected() {
        let cfg = ClusterConfig { heartbeat_interval: 0.0, ..ClusterConfig::default() };
        assert!(cfg.validate().unwrap_err().to_string().contains("heartbeat_interval"));
    }

    #[test]
    fn partial_file_takes_defaults() {
        let cfg = SimConfig::from_toml_str("vms_per_pm = 1\njitter = 0.0\n").unwrap();
        assert_eq!(cfg.cluster.vms_per_pm, 1);
        assert_eq!(cfg.cluster.physical_machine_count, 20);
        assert_eq!(cfg.options.jitter, 0.0);
        assert_eq!(cfg.options.shuffle_model, ShuffleModel::Serial);
    }

    #[test]
    fn unknown_key_is_rejected() {
        assert!(SimConfig::from_toml_str("bogus = 1\n").is_err());
    }

    #[test]
    fn toml_round_trip() {
        let mut cfg = SimConfig::default();
        cfg.options.defer_timeout = Some(12.5);
        cfg.options.shuffle_model = ShuffleModel::Parallel;
        let back = SimConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(back, cfg);
    }
}
