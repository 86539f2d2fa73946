//! Domain types for the simulated cluster: configuration, topology,
//! block placement, jobs and tasks.

pub mod config;
pub mod ids;
pub mod job;
pub mod placement;
pub mod topology;

pub use config::{ClusterConfig, ConfigError, ShuffleModel, SimConfig, SimOptions, GIB, MIB};
pub use ids::{JobId, PmId, TaskId, TaskKind, VmId};
pub use job::{Deferral, JobSpec, JobState, JobType, TaskState};
pub use placement::{place_blocks, BlockPlacement, PlacementError};
pub use topology::{ClusterTopology, PhysicalMachine, TopologyError, VmState};
