//! Multirobot orchestration: placement, budgets, communication, partitions
//! and the synchronized mission loop.

mod budget;
mod comm;
mod mission;
mod partition;
mod placement;

pub use budget::{allocate_budgets, BudgetPolicy, BudgetSpec};
pub use comm::{broadcast, comm_success_prob, delivery_outcomes, CommRegime, CommSpec};
pub use mission::{
    run_mission, run_mission_with, Mission, MissionConfig, MissionSetup, Policy, RobotState, TrialResult,
};
pub use partition::{voronoi_partition, Partition};
pub use placement::{place_initial, PlacementSpec};
