//! Discrete-event simulation of the cluster.

pub mod engine;
pub mod event;
pub mod trace;

pub use engine::{run, SimError, SimOutcome};
pub use event::{Event, EventKind, EventQueue};
pub use trace::{Trace, TraceKind, TraceRecord};
