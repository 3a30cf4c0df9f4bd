//! Distributed potential-game iLQR for multi-agent trajectory planning.
//!
//! Agents with individual tracking costs and pairwise proximity penalties
//! form a potential game, so a joint trajectory minimizing the potential is a
//! Nash equilibrium. The distributed planner splits the potential over an
//! interaction graph of predicted encounters and solves one small iLQR
//! problem per agent; the centralized planner solves the whole potential.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod costs;
pub mod dynamics;
pub mod error;
pub mod graph;
pub mod ilqr;
pub mod planner;
pub mod sim;

pub use costs::{CostParams, PotentialSpec, ProximityCost, TrackingCost};
pub use dynamics::{AgentModel, JointState, JointTrajectory, Layout, ModelKey};
pub use error::{ConfigError, SolveError};
pub use graph::{build_graph, InteractionGraph};
pub use ilqr::{solve, SolveReport, SolverOptions};
pub use planner::{
    run_receding_horizon, BudgetScope, PlannerKind, PlannerOptions, Scenario, SimulationTrace, Termination,
};
pub use sim::{build_scenario, generate_scenario, MetricsRecord, ScenarioConfig};
