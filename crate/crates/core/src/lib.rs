//! Replicated domain model and event log for offline-first teleconsultation
//! servers.

pub mod domain;
pub mod event;
pub mod fixture;
pub mod graph;
pub mod hlc;
pub mod ids;
pub mod log;
pub mod notify;
pub mod replica;
pub mod report;
pub mod routing;
pub mod state;
pub mod stub;
pub mod sync;
pub mod validate;

pub use event::{Event, EventId, EventKind, EventPayload, VersionVector};
pub use hlc::{HlcTimestamp, HybridClock};
pub use ids::*;
pub use replica::{Replica, ReplicaConfig};
pub use state::{materialize, State};
