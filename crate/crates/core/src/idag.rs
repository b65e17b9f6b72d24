//! Planning on the imposed DAG: only moves that strictly increase the
//! shortest-path distance from the start are allowed, which makes the
//! per-node value iteration exact and fast at the price of optimality.

use serde::Serialize;

use crate::error::SolveError;
use crate::graph::{ExtendedCost, NodeId, Path, ProblemInstance};
use crate::transforms::dijkstra;

/// Slack for comparing shortest-path distances.
const DIST_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IdagOptions {
    /// Also admit moves into an adjacent terminal that the distance rule
    /// would drop.
    pub allow_adjacent_terminals: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImposedDag {
    /// Shortest-path distance of every node from the start.
    pub dist: Vec<f64>,
    /// Outgoing edges with costs, ascending by head.
    pub out: Vec<Vec<(NodeId, f64)>>,
}

#[derive(Serialize)]
struct DagEdge {
    u: NodeId,
    v: NodeId,
    cost: f64,
}

impl ImposedDag {
    pub fn edge_count(&self) -> usize {
        self.out.iter().map(Vec::len).sum()
    }

    pub fn has_edge(&self, u: NodeId, v: NodeId) -> bool {
        self.out[u].iter().any(|&(w, _)| w == v)
    }

    /// Kahn's algorithm; `None` if a cycle exists.
    pub fn topological_order(&self) -> Option<Vec<NodeId>> {
        let n = self.out.len();
        let mut indegree = vec![0usize; n];
        for list in &self.out {
            for &(v, _) in list {
                indegree[v] += 1;
            }
        }
        let mut stack: Vec<NodeId> = (0..n).rev().filter(|&v| indegree[v] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(u) = stack.pop() {
            order.push(u);
            for &(v, _) in self.out[u].iter().rev() {
                indegree[v] -= 1;
                if indegree[v] == 0 {
                    stack.push(v);
                }
            }
        }
        (order.len() == n).then_some(order)
    }

    /// Edge list as JSON.
    pub fn to_json(&self) -> serde_json::Value {
        let edges: Vec<DagEdge> = self
            .out
            .iter()
            .enumerate()
            .flat_map(|(u, list)| list.iter().map(move |&(v, cost)| DagEdge { u, v, cost }))
            .collect();
        serde_json::to_value(edges).expect("edges serialize")
    }
}

/// The imposed DAG under the strict distance rule.
pub fn impose_dag(inst: &ProblemInstance) -> ImposedDag {
    impose_dag_with(inst, IdagOptions::default())
}

/// Keeps `(u, v)` iff `v` is strictly farther from the start than `u`. Edges
/// between equidistant nodes are dropped in both directions.
pub fn impose_dag_with(inst: &ProblemInstance, opts: IdagOptions) -> ImposedDag {
    let dist = dijkstra(inst, inst.start());
    let out = (0..inst.node_count())
        .map(|u| {
            inst.neighbors(u)
                .iter()
                .copied()
                .filter(|&(v, _)| {
                    dist[v] > dist[u] + DIST_TOLERANCE * (1.0 + dist[u])
                        || (opts.allow_adjacent_terminals
                            && inst.is_terminal(v)
                            && !inst.is_terminal(u))
                })
                .collect()
        })
        .collect();
    ImposedDag { dist, out }
}

#[derive(Debug, Clone)]
pub struct IdagSolution {
    /// Per-node cost-to-go; terminals are zero, dead ends infinite.
    pub values: Vec<ExtendedCost>,
    pub policy: Vec<Option<NodeId>>,
    pub path: Path,
    pub cost: ExtendedCost,
    /// Sweeps that changed at least one value.
    pub sweeps: usize,
}

fn backup(
    inst: &ProblemInstance,
    dag: &ImposedDag,
    v: NodeId,
    values: &[ExtendedCost],
) -> (ExtendedCost, Option<NodeId>) {
    let q = 1.0 - inst.success_prob(v);
    let mut best = (ExtendedCost::INFINITE, None);
    for &(u, l) in &dag.out[v] {
        let c = (ExtendedCost::finite(l) + values[u]).scale(q);
        if c < best.0 {
            best = (c, Some(u));
        }
    }
    best
}

fn extract(
    inst: &ProblemInstance,
    values: Vec<ExtendedCost>,
    policy: Vec<Option<NodeId>>,
    sweeps: usize,
) -> Result<IdagSolution, SolveError> {
    let start = inst.start();
    let cost = values[start];
    if cost.is_infinite() {
        return Err(SolveError::InfeasibleDag);
    }
    let mut nodes = vec![start];
    let mut cur = start;
    while !inst.is_terminal(cur) {
        cur = policy[cur].ok_or(SolveError::InfeasibleDag)?;
        nodes.push(cur);
    }
    let path = Path::new(nodes).expect("nonempty");
    Ok(IdagSolution { values, policy, path, cost, sweeps })
}

/// Value iteration on the DAG in one pass over the nodes by decreasing
/// distance from the start, so every successor is final before it is read.
pub fn idag_value_iteration(
    inst: &ProblemInstance,
    dag: &ImposedDag,
) -> Result<IdagSolution, SolveError> {
    if inst.terminals().is_empty() {
        return Err(SolveError::NoTerminal);
    }
    let n = inst.node_count();
    let mut values: Vec<ExtendedCost> = (0..n)
        .map(|v| if inst.is_terminal(v) { ExtendedCost::ZERO } else { ExtendedCost::INFINITE })
        .collect();
    let mut policy = vec![None; n];
    let mut order: Vec<NodeId> = inst.nonterminals().to_vec();
    order.sort_by(|&a, &b| dag.dist[b].total_cmp(&dag.dist[a]).then(a.cmp(&b)));
    for v in order {
        let (c, a) = backup(inst, dag, v, &values);
        values[v] = c;
        policy[v] = a;
    }
    extract(inst, values, policy, 1)
}

/// Jacobi value iteration on the DAG from an all-infinite start, sweeping all
/// nodes until nothing changes. Reports how many sweeps changed a value.
pub fn idag_value_iteration_synchronous(
    inst: &ProblemInstance,
    dag: &ImposedDag,
) -> Result<IdagSolution, SolveError> {
    if inst.terminals().is_empty() {
        return Err(SolveError::NoTerminal);
    }
    let n = inst.node_count();
    let mut values: Vec<ExtendedCost> = (0..n)
        .map(|v| if inst.is_terminal(v) { ExtendedCost::ZERO } else { ExtendedCost::INFINITE })
        .collect();
    let mut policy = vec![None; n];
    let mut sweeps = 0;
    // A DAG path has at most n edges, so n + 1 sweeps always suffice.
    for _ in 0..=n {
        let next: Vec<(ExtendedCost, Option<NodeId>)> =
            inst.nonterminals().iter().map(|&v| backup(inst, dag, v, &values)).collect();
        let mut changed = false;
        for (&v, (c, a)) in inst.nonterminals().iter().zip(next) {
            if c != values[v] {
                changed = true;
            }
            values[v] = c;
            policy[v] = a;
        }
        if !changed {
            break;
        }
        sweeps += 1;
    }
    extract(inst, values, policy, sweeps)
}
