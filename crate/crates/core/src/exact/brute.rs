use crate::error::SolveError;
use crate::exact::Solution;
use crate::graph::{ExtendedCost, NodeId, Path, ProblemInstance};
use crate::transforms::{build_complete_graph, expand_simple_path, ShortestPathTable};

/// Largest number of non-terminal nodes the enumerator accepts.
pub const BRUTE_FORCE_CAP: usize = 9;

/// Enumerates every simple path of the metric closure from the start to a
/// terminal and expands the cheapest one onto the base graph.
///
/// The reported cost is the closure-path cost from the enumeration. Ties keep
/// the lexicographically first path in ascending-id order.
pub fn brute_force_optimum(inst: &ProblemInstance) -> Result<Solution, SolveError> {
    let m = inst.nonterminals().len();
    if m > BRUTE_FORCE_CAP {
        return Err(SolveError::StateExplosion { nonterminals: m, cap: BRUTE_FORCE_CAP });
    }
    if inst.terminals().is_empty() {
        return Err(SolveError::NoTerminal);
    }
    if inst.is_terminal(inst.start()) {
        return Ok(Solution { path: Path::single(inst.start()), cost: ExtendedCost::ZERO });
    }
    let ci = build_complete_graph(inst);
    let mut search = Enumerator {
        inst,
        table: &ci.table,
        visited: vec![false; inst.node_count()],
        stack: vec![inst.start()],
        best: f64::INFINITY,
        best_path: Vec::new(),
    };
    search.visited[inst.start()] = true;
    search.dfs(inst.start(), 0.0, 1.0);
    let comp_path = Path::new(search.best_path).map_err(|_| SolveError::NoProperPolicy)?;
    Ok(Solution {
        path: expand_simple_path(&ci, &comp_path),
        cost: ExtendedCost::finite(search.best),
    })
}

struct Enumerator<'a> {
    inst: &'a ProblemInstance,
    table: &'a ShortestPathTable,
    visited: Vec<bool>,
    stack: Vec<NodeId>,
    best: f64,
    best_path: Vec<NodeId>,
}

impl Enumerator<'_> {
    /// `acc` is the cost so far and `survival` the probability that every
    /// node before `at` failed.
    fn dfs(&mut self, at: NodeId, acc: f64, survival: f64) {
        let survival = survival * (1.0 - self.inst.success_prob(at));
        for next in 0..self.inst.node_count() {
            if self.visited[next] {
                continue;
            }
            let cost = acc + survival * self.table.dist(at, next);
            // Costs only grow along a path.
            if cost >= self.best {
                continue;
            }
            self.stack.push(next);
            if self.inst.is_terminal(next) {
                self.best = cost;
                self.best_path = self.stack.clone();
            } else {
                self.visited[next] = true;
                self.dfs(next, cost, survival);
                self.visited[next] = false;
            }
            self.stack.pop();
        }
    }
}
