//! Instance generators: random sampling grids and connectivity maps built
//! from a simulated radio channel.

mod channel;
mod quadrature;

pub use channel::{
    channel_instance, gen_channel_field, generate_channel_scenario, grid_csv, line_expected_distance,
    multipath_db_variance, predict_connectivity, rician_exceedance, ChannelField, ChannelScenario,
    ChannelSpec, Prediction,
};
pub use quadrature::{gauss_hermite, gaussian_expectation};

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::ScenarioError;
use crate::graph::{NodeId, ProblemInstance};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Side length in cells.
    pub n: usize,
    /// Number of guaranteed-success corners.
    pub n_t: usize,
    pub seed: u64,
}

/// Upper end of the uniform success-probability range on grids.
pub const GRID_MAX_PROB: f64 = 0.1;

/// Corner cells in placement order: (0,0), (n-1,n-1), (0,n-1), (n-1,0).
/// Two terminals sit on opposite corners; three take the first three.
pub fn terminal_corners(n: usize, n_t: usize) -> Vec<(usize, usize)> {
    let last = n - 1;
    let all = [(0, 0), (last, last), (0, last), (last, 0)];
    all[..n_t].to_vec()
}

pub fn grid_node(n: usize, row: usize, col: usize) -> NodeId {
    row * n + col
}

/// Edges of an `n x n` 4-neighbor grid with the given edge cost.
pub fn grid_edges(n: usize, cost: f64) -> Vec<(NodeId, NodeId, f64)> {
    let mut edges = Vec::with_capacity(2 * n * n);
    for r in 0..n {
        for c in 0..n {
            if c + 1 < n {
                edges.push((grid_node(n, r, c), grid_node(n, r, c + 1), cost));
            }
            if r + 1 < n {
                edges.push((grid_node(n, r, c), grid_node(n, r + 1, c), cost));
            }
        }
    }
    edges
}

/// A unit-cost grid with i.i.d. `U[0, 0.1)` probabilities, corner terminals
/// and the start at the middle cell.
pub fn gen_grid(spec: &GridSpec) -> Result<ProblemInstance, ScenarioError> {
    if spec.n < 2 {
        return Err(ScenarioError::GridTooSmall(spec.n));
    }
    if spec.n_t > 4 {
        return Err(ScenarioError::TerminalCount(spec.n_t));
    }
    let n = spec.n;
    let mut rng = rng::stream(spec.seed, "grid");
    let mut p: Vec<f64> = (0..n * n).map(|_| GRID_MAX_PROB * rng.random::<f64>()).collect();
    for (r, c) in terminal_corners(n, spec.n_t) {
        p[grid_node(n, r, c)] = 1.0;
    }
    let start = grid_node(n, n / 2, n / 2);
    Ok(ProblemInstance::new(p, grid_edges(n, 1.0), start).expect("grid is a valid instance"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn five_by_five() {
        let inst = gen_grid(&GridSpec { n: 5, n_t: 1, seed: 3 }).unwrap();
        assert_eq!(inst.node_count(), 25);
        assert_eq!(inst.edge_count(), 40);
        assert_eq!(inst.success_prob(0), 1.0);
        assert_eq!(inst.start(), 12);
        assert_eq!(inst.terminals(), &[0]);
        for v in 1..25 {
            let p = inst.success_prob(v);
            assert!((0.0..GRID_MAX_PROB).contains(&p));
        }
    }

    #[test]
    fn four_corners() {
        let inst = gen_grid(&GridSpec { n: 25, n_t: 4, seed: 0 }).unwrap();
        assert_eq!(inst.terminals(), &[0, 24, 600, 624]);
    }

    #[test]
    fn no_terminals_and_bad_specs() {
        let inst = gen_grid(&GridSpec { n: 2, n_t: 0, seed: 1 }).unwrap();
        assert!(inst.terminals().is_empty());
        assert_eq!(inst.start(), 3);
        assert!(matches!(gen_grid(&GridSpec { n: 1, n_t: 0, seed: 0 }), Err(ScenarioError::GridTooSmall(1))));
        assert!(matches!(gen_grid(&GridSpec { n: 4, n_t: 5, seed: 0 }), Err(ScenarioError::TerminalCount(5))));
    }

    #[test]
    fn seeds_differ_and_repeat() {
        let a = gen_grid(&GridSpec { n: 6, n_t: 1, seed: 9 }).unwrap();
        let b = gen_grid(&GridSpec { n: 6, n_t: 1, seed: 9 }).unwrap();
        let c = gen_grid(&GridSpec { n: 6, n_t: 1, seed: 10 }).unwrap();
        assert_eq!(a.probabilities(), b.probabilities());
        assert_ne!(a.probabilities(), c.probabilities());
    }
}
