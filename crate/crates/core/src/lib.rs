//! Simplified nuclear power plant, an expert decision-tree policy grown with
//! Conservative Q-Improvement, and the machinery to run explained learning
//! sessions against it.
//!
//! * [`plant`]: deterministic plant dynamics.
//! * [`tree`] and [`cqi`]: the policy tree and its training.
//! * [`explain`]: what- and why-answers.
//! * [`session`]: the two-phase protocol, logs and replay.
//! * [`simuser`]: scripted users.
//! * [`analysis`]: measures over session logs.

pub mod analysis;
pub mod config;
pub mod cqi;
pub mod explain;
pub mod plant;
pub mod session;
pub mod simuser;
pub mod tree;

pub use config::{ConfigError, ExperimentConfig};
pub use cqi::{train, TrainConfig, TrainError, TrainOutcome};
pub use explain::{Explanation, Strategy, Templates, UsageTracker};
pub use plant::{Action, Feature, Plant, PlantConfig, PlantState, RodLevel, StepOutcome};
pub use session::{Condition, MoveRecord, MoveType, Phase, Session, SessionConfig, SessionError, SessionLog};
pub use tree::{DecisionTree, NodeId, TreeDocument};
