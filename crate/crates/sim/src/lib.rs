//! Deterministic virtual-time simulator for replica networks with
//! intermittent links.

pub mod check;
pub mod outage;
pub mod run;
pub mod scenario;
pub mod scripted;
pub mod sweep;

pub use check::{audit_notifications, check_convergence, drop_event, Divergence, NotificationAudit};
pub use outage::{generate_outage_trace, Outage, OutageParams, OutageTrace};
pub use run::{run_scenario, ScenarioError, ScenarioResult};
pub use scenario::{random_scenario, RandomShape, Scenario, Topology};
pub use sweep::{sweep, SeedFailure, SweepReport};
