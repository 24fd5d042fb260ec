//! Epidemic thresholds on tie-decay temporal networks.
//!
//! Interactions between nodes are accumulated into continuous tie strengths
//! that decay exponentially between contacts. On top of the resulting
//! snapshot sequence the crate runs discrete-time SIS simulations and
//! estimates the critical value of the linearized dynamics, for synthetic
//! networks, contact logs, and the fixed-window aggregation baseline.

pub mod error;
pub mod events;
pub mod exec;
pub mod experiment;
pub mod ingest;
pub mod rng;
pub mod sis;
pub mod synthetic;
pub mod threshold;
pub mod tie_decay;
pub mod windowed;

pub use error::{Error, Result};
pub use events::{Event, EventLog};
pub use exec::Execution;
pub use tie_decay::{DecayParams, InteractionMatrix, SnapshotSequence, TieMatrix};
