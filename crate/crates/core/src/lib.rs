//! Planning paths that minimize the expected traversal cost until the first
//! success on a graph whose nodes succeed independently with known
//! probabilities.
//!
//! The crate provides exact solvers (an MDP over visited sets, an exhaustive
//! enumerator, a best-first search, RTDP), game-theoretic solvers (best reply
//! and log-linear learning over successor profiles), an outward-DAG planner,
//! myopic and annealing baselines, scenario generators, and Monte-Carlo
//! evaluation.

pub mod baselines;
pub mod error;
pub mod eval;
pub mod exact;
pub mod game;
pub mod graph;
pub mod idag;
pub mod rng;
pub mod scenarios;
pub mod transforms;

pub use error::{InstanceError, PathError, ScenarioError, SolveError, TransformError};
pub use graph::{
    expected_cost, failure_probability, validate_instance, ExtendedCost, NodeId, Path,
    ProblemInstance,
};
