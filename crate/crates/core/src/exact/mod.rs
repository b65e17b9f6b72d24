//! Exact solvers for the expected-cost path problem.
//!
//! * [`value_iteration_exact`] solves the stochastic shortest path MDP over
//!   `(node, visited set)` states.
//! * [`brute_force_optimum`] enumerates simple paths of the metric closure.
//! * [`optimal_search`] is a best-first search over the same simple paths
//!   that reaches instances too large for the other two.
//! * [`rtdp_solve`] is trial-based real-time dynamic programming.

mod brute;
mod mdp;
mod rtdp;
mod search;

pub use brute::{brute_force_optimum, BRUTE_FORCE_CAP};
pub use mdp::{
    extract_optimal_path, value_iteration_exact, MdpState, ValueTable, DEFAULT_SIZE_CAP,
};
pub use rtdp::{rtdp_solve, RtdpOutcome};
pub use search::{optimal_search, SearchConfig};

use crate::graph::{ExtendedCost, Path};

/// A path and its expected cost.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub path: Path,
    pub cost: ExtendedCost,
}
