pub mod estimator;
pub mod metrics;
pub mod model;
pub mod reconfig;
pub mod sched;
pub mod sim;
pub mod workload;
