use std::cmp::Ordering;
use std::collections::hash_map::Entry;
use std::collections::{BinaryHeap, HashMap};

use crate::error::SolveError;
use crate::exact::Solution;
use crate::graph::{ExtendedCost, NodeId, Path, ProblemInstance};
use crate::transforms::{build_complete_graph, expand_simple_path, CompleteInstance};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SearchConfig {
    /// Node expansions before giving up.
    pub max_expansions: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig { max_expansions: 20_000_000 }
    }
}

#[derive(Clone, Copy)]
struct Record {
    node: NodeId,
    parent: u32,
    /// Probability that every node visited before `node` failed.
    survival: f64,
    visited: u128,
    goal: bool,
}

#[derive(PartialEq)]
struct Open {
    f: f64,
    g: f64,
    record: u32,
}

impl Eq for Open {}

impl PartialOrd for Open {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Open {
    // Min-heap on f, deeper (larger g) first on ties, then oldest record.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .f
            .total_cmp(&self.f)
            .then(self.g.total_cmp(&other.g))
            .then(other.record.cmp(&self.record))
    }
}

/// Exact optimum by best-first search over simple paths of the metric
/// closure, expanded onto the base graph.
///
/// A state is the current node and the set of nodes already visited. Nodes
/// with zero success probability are never targeted since detouring through
/// them cannot lower the cost. The heuristic charges the remaining distance to
/// the nearest terminal with the smallest survival factors the unvisited nodes
/// allow, which never overestimates, so the first terminal popped is optimal.
pub fn optimal_search(inst: &ProblemInstance, cfg: &SearchConfig) -> Result<Solution, SolveError> {
    if inst.terminals().is_empty() {
        return Err(SolveError::NoTerminal);
    }
    let start = inst.start();
    if inst.is_terminal(start) {
        return Ok(Solution { path: Path::single(start), cost: ExtendedCost::ZERO });
    }
    let candidates: Vec<NodeId> =
        inst.nonterminals().iter().copied().filter(|&v| inst.success_prob(v) > 0.0).collect();
    if candidates.len() > 128 {
        return Err(SolveError::StateExplosion { nonterminals: candidates.len(), cap: 128 });
    }
    let mut bit_of = vec![None; inst.node_count()];
    for (b, &v) in candidates.iter().enumerate() {
        bit_of[v] = Some(b);
    }
    // Candidate positions by ascending failure probability.
    let mut by_q: Vec<usize> = (0..candidates.len()).collect();
    by_q.sort_by(|&a, &b| {
        let qa = 1.0 - inst.success_prob(candidates[a]);
        let qb = 1.0 - inst.success_prob(candidates[b]);
        qa.total_cmp(&qb).then(a.cmp(&b))
    });
    let q_sorted: Vec<(usize, f64)> =
        by_q.iter().map(|&b| (b, 1.0 - inst.success_prob(candidates[b]))).collect();

    let ci = build_complete_graph(inst);
    let table = &ci.table;
    let n = inst.node_count();
    // Nearest terminal per node, lowest id on ties.
    let nearest: Vec<(NodeId, f64)> = (0..n)
        .map(|v| {
            inst.terminals()
                .iter()
                .map(|&t| (t, table.dist(v, t)))
                .fold((NodeId::MAX, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a })
        })
        .collect();
    let min_edge = inst.edges().map(|(_, _, c)| c).fold(f64::INFINITY, f64::min);

    let heuristic = |node: NodeId, factor: f64, visited: u128| -> f64 {
        let d = nearest[node].1;
        let mut best = factor * d;
        let mut f = factor;
        let mut prefix = 0.0;
        let mut k = 1.0;
        for &(b, q) in &q_sorted {
            if visited >> b & 1 == 1 || bit_of[node] == Some(b) {
                continue;
            }
            prefix += f * min_edge;
            f *= q;
            let tail = (d - k * min_edge).max(min_edge);
            let candidate = prefix + f * tail;
            if candidate < best {
                best = candidate;
            }
            if k * min_edge >= d {
                break;
            }
            k += 1.0;
        }
        best
    };

    let mut records =
        vec![Record { node: start, parent: u32::MAX, survival: 1.0, visited: 0, goal: false }];
    let mut best_g: HashMap<(NodeId, u128), f64> = HashMap::new();
    let mut open = BinaryHeap::new();
    let f0 = heuristic(start, 1.0 - inst.success_prob(start), 0);
    open.push(Open { f: f0, g: 0.0, record: 0 });
    let mut incumbent = f64::INFINITY;
    let mut expansions = 0usize;

    while let Some(Open { g, record, .. }) = open.pop() {
        let rec = records[record as usize];
        if rec.goal {
            return Ok(finish(&ci, &records, record, g));
        }
        if best_g.get(&(rec.node, rec.visited)).is_some_and(|&b| g > b) {
            continue;
        }
        expansions += 1;
        if expansions > cfg.max_expansions {
            return Err(SolveError::BudgetExhausted(cfg.max_expansions));
        }
        let factor = rec.survival * (1.0 - inst.success_prob(rec.node));
        let visited = rec.visited | bit_of[rec.node].map_or(0, |b| 1u128 << b);

        let (t, dt) = nearest[rec.node];
        let goal_g = g + factor * dt;
        if goal_g < incumbent {
            incumbent = goal_g;
            records.push(Record { node: t, parent: record, survival: 0.0, visited, goal: true });
            open.push(Open { f: goal_g, g: goal_g, record: (records.len() - 1) as u32 });
        }

        for (b, &x) in candidates.iter().enumerate() {
            if visited >> b & 1 == 1 {
                continue;
            }
            let g2 = g + factor * table.dist(rec.node, x);
            let h2 = heuristic(x, factor * (1.0 - inst.success_prob(x)), visited);
            if g2 + h2 >= incumbent {
                continue;
            }
            match best_g.entry((x, visited)) {
                Entry::Occupied(mut e) => {
                    if g2 >= *e.get() {
                        continue;
                    }
                    e.insert(g2);
                }
                Entry::Vacant(e) => {
                    e.insert(g2);
                }
            }
            records.push(Record { node: x, parent: record, survival: factor, visited, goal: false });
            open.push(Open { f: g2 + h2, g: g2, record: (records.len() - 1) as u32 });
        }
    }
    Err(SolveError::NoProperPolicy)
}

fn finish(
    ci: &CompleteInstance,
    records: &[Record],
    goal: u32,
    cost: f64,
) -> Solution {
    let mut nodes = Vec::new();
    let mut cur = goal;
    while cur != u32::MAX {
        nodes.push(records[cur as usize].node);
        cur = records[cur as usize].parent;
    }
    nodes.reverse();
    let comp_path = Path::new(nodes).expect("nonempty");
    Solution { path: expand_simple_path(ci, &comp_path), cost: ExtendedCost::finite(cost) }
}
