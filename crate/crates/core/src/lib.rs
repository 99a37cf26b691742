//! Safe multi-agent reinforcement learning with decentralized
//! control-barrier-function shields.
//!
//! - [`sim`]: double-integrator agents in a walled square arena.
//! - [`cbf`]: barrier values and their linear action constraints.
//! - [`qp`]: small dense quadratic program for the projection.
//! - [`shield`]: per-agent action filter.
//! - [`env`]: the two-patrolman task.
//! - [`marl`]: MADDPG trainer with the shield in the loop.

pub mod cbf;
pub mod config;
pub mod env;
pub mod marl;
pub mod qp;
pub mod shield;
pub mod sim;

pub use cbf::{CbfError, ConstraintKind, EntityId, LinearConstraint, ShieldParams};
pub use config::{ConfigError, RunConfig};
pub use env::{EpisodeMetrics, PatrolEnv, StepRecord, AGENT_COUNT};
pub use qp::{QpProblem, QpSolution, QpStatus};
pub use shield::{filter_action, ShieldReport, ShieldStatus};
pub use sim::{AgentState, ObstacleSpec, Vec2, WallFace, WorldConfig};
