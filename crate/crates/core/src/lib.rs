//! Deadline-aware service composition.
//!
//! Services are grouped into categories; a plan picks one service per
//! category, orders the categories (a fixed prefix followed by a freely
//! reorderable tail), schedules them as a PERT network and maximises the
//! probability of finishing before the deadline. Reordering the free tail is
//! what rescues a plan when a service is unavailable at its first slot.
//!
//! - [`pert`]: three-point estimates, CPM passes, normal completion probability
//! - [`registry`]: the service matrix and availability windows
//! - [`planner`]: order generation, combination search, negotiation, selection
//! - [`composer`]: booking the selected plan with rollback
//! - [`bench`]: randomized comparison of search modes
//! - [`scenario`]: the JSON scenario format

pub mod bench;
pub mod composer;
pub mod curve;
pub mod pert;
pub mod planner;
pub mod registry;
pub mod scenario;

pub use pert::Minutes;
pub use planner::{plan, PlanOutcome, PlanReport, PlanRequest, PlanRun, SearchMode};
pub use registry::ServiceMatrix;
pub use scenario::Scenario;
