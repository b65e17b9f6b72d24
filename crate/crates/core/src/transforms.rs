//! Shortest paths, the metric-closure graph, path expansion and compression,
//! and the reduction of a terminal-free instance to an ordinary one.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use rayon::prelude::*;

use crate::error::TransformError;
use crate::graph::{NodeId, Path, ProblemInstance, RawInstance};

/// Relative slack used when deciding whether a neighbor lies on a shortest path.
const TIE_TOLERANCE: f64 = 1e-12;

/// Instances up to this size use Floyd-Warshall; larger ones run one
/// Dijkstra per source in parallel.
const FLOYD_WARSHALL_MAX_NODES: usize = 700;

fn on_shortest_path(via: f64, best: f64) -> bool {
    via <= best + TIE_TOLERANCE * (1.0 + best)
}

/// All-pairs distances with next-hop reconstruction.
#[derive(Debug, Clone, PartialEq)]
pub struct ShortestPathTable {
    n: usize,
    dist: Vec<f64>,
    next_hop: Vec<NodeId>,
    diameter: f64,
}

impl ShortestPathTable {
    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn dist(&self, u: NodeId, v: NodeId) -> f64 {
        self.dist[u * self.n + v]
    }

    /// First node after `u` on the chosen shortest path to `v` (`v` itself when
    /// adjacent, `u` when `u == v`).
    pub fn next_hop(&self, u: NodeId, v: NodeId) -> NodeId {
        self.next_hop[u * self.n + v]
    }

    pub fn row(&self, u: NodeId) -> &[f64] {
        &self.dist[u * self.n..(u + 1) * self.n]
    }

    /// Largest finite distance.
    pub fn diameter(&self) -> f64 {
        self.diameter
    }

    /// Node sequence from `u` to `v`, both included.
    pub fn path(&self, u: NodeId, v: NodeId) -> Vec<NodeId> {
        let mut out = vec![u];
        let mut cur = u;
        while cur != v {
            cur = self.next_hop(cur, v);
            out.push(cur);
        }
        out
    }
}

/// Exact all-pairs shortest paths. Among equally short continuations the
/// lowest-id neighbor is the next hop.
pub fn all_pairs_shortest_paths(inst: &ProblemInstance) -> ShortestPathTable {
    let n = inst.node_count();
    let dist = if n <= FLOYD_WARSHALL_MAX_NODES {
        floyd_warshall(inst)
    } else {
        let rows: Vec<Vec<f64>> = (0..n).into_par_iter().map(|s| dijkstra(inst, s)).collect();
        rows.concat()
    };
    let next_hop = lowest_id_next_hops(inst, &dist);
    let diameter = dist.iter().copied().filter(|d| d.is_finite()).fold(0.0, f64::max);
    ShortestPathTable { n, dist, next_hop, diameter }
}

fn floyd_warshall(inst: &ProblemInstance) -> Vec<f64> {
    let n = inst.node_count();
    let mut d = vec![f64::INFINITY; n * n];
    for u in 0..n {
        d[u * n + u] = 0.0;
        for &(v, c) in inst.neighbors(u) {
            d[u * n + v] = d[u * n + v].min(c);
        }
    }
    for k in 0..n {
        let row_k: Vec<f64> = d[k * n..(k + 1) * n].to_vec();
        for i in 0..n {
            let dik = d[i * n + k];
            if !dik.is_finite() {
                continue;
            }
            let row_i = &mut d[i * n..(i + 1) * n];
            for (dij, &dkj) in row_i.iter_mut().zip(&row_k) {
                let via = dik + dkj;
                if via < *dij {
                    *dij = via;
                }
            }
        }
    }
    // Floating-point sums can differ by direction; force exact symmetry.
    for i in 0..n {
        for j in i + 1..n {
            let m = d[i * n + j].min(d[j * n + i]);
            d[i * n + j] = m;
            d[j * n + i] = m;
        }
    }
    d
}

fn lowest_id_next_hops(inst: &ProblemInstance, dist: &[f64]) -> Vec<NodeId> {
    let n = inst.node_count();
    let mut next = vec![0; n * n];
    next.par_chunks_mut(n).enumerate().for_each(|(u, row)| {
        for (v, slot) in row.iter_mut().enumerate() {
            if u == v {
                *slot = u;
                continue;
            }
            let best = dist[u * n + v];
            // Neighbor lists are sorted, so the first match has the lowest id.
            *slot = inst
                .neighbors(u)
                .iter()
                .find(|&&(w, c)| on_shortest_path(c + dist[w * n + v], best))
                .map(|&(w, _)| w)
                .unwrap_or(v);
        }
    });
    next
}

#[derive(Clone, Copy, PartialEq)]
struct HeapEntry(f64, NodeId);

impl Eq for HeapEntry {}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0).then(self.1.cmp(&other.1))
    }
}

/// Single-source distances.
pub fn dijkstra(inst: &ProblemInstance, source: NodeId) -> Vec<f64> {
    multi_source_dijkstra(inst, &[source])
}

/// Distance from every node to the nearest node of `sources`.
pub fn multi_source_dijkstra(inst: &ProblemInstance, sources: &[NodeId]) -> Vec<f64> {
    let mut dist = vec![f64::INFINITY; inst.node_count()];
    let mut heap = BinaryHeap::new();
    for &s in sources {
        dist[s] = 0.0;
        heap.push(Reverse(HeapEntry(0.0, s)));
    }
    while let Some(Reverse(HeapEntry(d, u))) = heap.pop() {
        if d > dist[u] {
            continue;
        }
        for &(v, c) in inst.neighbors(u) {
            let nd = d + c;
            if nd < dist[v] {
                dist[v] = nd;
                heap.push(Reverse(HeapEntry(nd, v)));
            }
        }
    }
    dist
}

/// Walks from `from` down a distance field toward its zero set, taking the
/// lowest-id neighbor that stays on a shortest path at every step.
pub fn descend(inst: &ProblemInstance, dist_to_target: &[f64], from: NodeId) -> Vec<NodeId> {
    let mut out = vec![from];
    let mut cur = from;
    while dist_to_target[cur] > 0.0 {
        let best = dist_to_target[cur];
        cur = inst
            .neighbors(cur)
            .iter()
            .find(|&&(w, c)| on_shortest_path(c + dist_to_target[w], best) && dist_to_target[w] < best)
            .map(|&(w, _)| w)
            .expect("connected graph has a descending neighbor");
        out.push(cur);
    }
    out
}

/// Shortest path from `s` to `t` with lowest-id tie-breaking.
pub fn shortest_path(inst: &ProblemInstance, s: NodeId, t: NodeId) -> Vec<NodeId> {
    descend(inst, &dijkstra(inst, t), s)
}

/// The original instance together with its metric closure: the complete graph
/// on the same nodes whose edge costs are shortest-path distances.
#[derive(Debug, Clone)]
pub struct CompleteInstance {
    pub base: ProblemInstance,
    pub comp: ProblemInstance,
    pub table: ShortestPathTable,
}

pub fn build_complete_graph(inst: &ProblemInstance) -> CompleteInstance {
    let table = all_pairs_shortest_paths(inst);
    let n = inst.node_count();
    let adjacency = (0..n)
        .map(|u| (0..n).filter(|&v| v != u).map(|v| (v, table.dist(u, v))).collect())
        .collect();
    let comp =
        ProblemInstance::from_trusted_parts(inst.probabilities().to_vec(), adjacency, inst.start());
    CompleteInstance { base: inst.clone(), comp, table }
}

impl CompleteInstance {
    /// Serializable form of the closure, tagged with its origin.
    pub fn to_raw(&self) -> RawInstance {
        let mut raw = self.comp.to_raw();
        raw.derived_from = Some("metric_closure".to_string());
        raw
    }
}

/// Replaces every closure edge with the chosen shortest path of the base graph.
pub fn expand_simple_path(ci: &CompleteInstance, comp_path: &Path) -> Path {
    let nodes = comp_path.nodes();
    let mut out = vec![nodes[0]];
    for w in nodes.windows(2) {
        out.extend(ci.table.path(w[0], w[1]).into_iter().skip(1));
    }
    Path::new(out).expect("nonempty")
}

/// Keeps only first visits. The result is a simple path of the closure.
pub fn compress_path(inst: &ProblemInstance, path: &Path) -> Path {
    let mut seen = vec![false; inst.node_count()];
    let out: Vec<NodeId> = path
        .nodes()
        .iter()
        .copied()
        .filter(|&v| !std::mem::replace(&mut seen[v], true))
        .collect();
    Path::new(out).expect("nonempty")
}

/// Largest shortest-path distance, by one Dijkstra per source.
pub fn graph_diameter(inst: &ProblemInstance) -> f64 {
    (0..inst.node_count())
        .into_par_iter()
        .map(|s| dijkstra(inst, s).into_iter().fold(0.0, f64::max))
        .reduce(|| 0.0, f64::max)
}

/// A terminal-free instance turned into an ordinary one.
#[derive(Debug, Clone)]
pub struct NtReduction {
    pub instance: ProblemInstance,
    /// Id of the added terminal, equal to the original node count.
    pub terminal: NodeId,
    /// Cost of every edge to the added terminal.
    pub edge_cost: f64,
}

/// Adds a terminal joined to every node at cost `1.5 D / min{p_v : p_v > 0}`
/// with `D` the graph diameter.
pub fn nt_reduction(inst: &ProblemInstance) -> Result<NtReduction, TransformError> {
    nt_reduction_with_diameter(inst, None)
}

/// As [`nt_reduction`], with `D` supplied by the caller when given (the grid
/// experiments use `2n` rather than the exact `2(n - 1)`).
pub fn nt_reduction_with_diameter(
    inst: &ProblemInstance,
    diameter: Option<f64>,
) -> Result<NtReduction, TransformError> {
    if !inst.terminals().is_empty() {
        return Err(TransformError::HasTerminals);
    }
    let min_p = inst
        .probabilities()
        .iter()
        .copied()
        .filter(|&p| p > 0.0)
        .fold(f64::INFINITY, f64::min);
    if !min_p.is_finite() {
        return Err(TransformError::ObjectiveUndefined);
    }
    let d = diameter.unwrap_or_else(|| graph_diameter(inst));
    if !(d > 0.0) {
        return Err(TransformError::ZeroDiameter);
    }
    let l = 1.5 * d / min_p;
    let n = inst.node_count();
    let t = n;
    let mut probs = inst.probabilities().to_vec();
    probs.push(1.0);
    let mut adjacency: Vec<Vec<(NodeId, f64)>> =
        (0..n).map(|u| inst.neighbors(u).to_vec()).collect();
    for list in &mut adjacency {
        list.push((t, l));
    }
    adjacency.push((0..n).map(|u| (u, l)).collect());
    let instance = ProblemInstance::from_trusted_parts(probs, adjacency, inst.start());
    Ok(NtReduction { instance, terminal: t, edge_cost: l })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{expected_cost, validate_instance};

    fn line4() -> ProblemInstance {
        ProblemInstance::new(vec![0.9, 0.1, 0.1, 1.0], [(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0)], 1)
            .unwrap()
    }

    fn path(v: &[NodeId]) -> Path {
        Path::new(v.to_vec()).unwrap()
    }

    #[test]
    fn line_distances() {
        let t = all_pairs_shortest_paths(&line4());
        assert_eq!(t.dist(0, 3), 3.0);
        assert_eq!(t.diameter(), 3.0);
        for v in 0..4 {
            assert_eq!(t.dist(v, v), 0.0);
        }
    }

    #[test]
    fn triangle_detour() {
        let inst =
            ProblemInstance::new(vec![0.0, 0.0, 1.0], [(0, 1, 1.0), (1, 2, 1.0), (0, 2, 5.0)], 0)
                .unwrap();
        let t = all_pairs_shortest_paths(&inst);
        assert_eq!(t.dist(0, 2), 2.0);
        assert_eq!(t.path(0, 2), vec![0, 1, 2]);
    }

    #[test]
    fn next_hop_prefers_lowest_id() {
        // square 0-1-3, 0-2-3: two equal routes
        let inst = ProblemInstance::new(
            vec![0.0, 0.0, 0.0, 1.0],
            [(0, 2, 1.0), (0, 1, 1.0), (1, 3, 1.0), (2, 3, 1.0)],
            0,
        )
        .unwrap();
        assert_eq!(all_pairs_shortest_paths(&inst).path(0, 3), vec![0, 1, 3]);
        assert_eq!(shortest_path(&inst, 0, 3), vec![0, 1, 3]);
    }

    #[test]
    fn dijkstra_rows_match_floyd_warshall() {
        let inst = line4();
        let t = all_pairs_shortest_paths(&inst);
        for s in 0..4 {
            assert_eq!(dijkstra(&inst, s), t.row(s));
        }
        assert_eq!(graph_diameter(&inst), 3.0);
    }

    #[test]
    fn closure_of_line() {
        let ci = build_complete_graph(&line4());
        assert_eq!(ci.comp.edge_cost(0, 2), Some(2.0));
        assert_eq!(ci.comp.edge_cost(0, 3), Some(3.0));
        assert_eq!(ci.comp.edge_cost(1, 3), Some(2.0));
        assert_eq!(ci.comp.edge_count(), 6);
        assert_eq!(ci.comp.start(), 1);
        assert!(validate_instance(&ci.comp.to_raw()).is_empty());
        assert_eq!(ci.to_raw().derived_from.as_deref(), Some("metric_closure"));
    }

    #[test]
    fn closure_of_complete_graph_uses_detours() {
        let inst =
            ProblemInstance::new(vec![0.0, 0.5, 1.0], [(0, 1, 1.0), (1, 2, 1.0), (0, 2, 3.0)], 0)
                .unwrap();
        let ci = build_complete_graph(&inst);
        assert_eq!(ci.comp.edge_cost(0, 2), Some(2.0));
        assert_eq!(ci.comp.edge_cost(0, 1), Some(1.0));
    }

    #[test]
    fn closure_of_two_nodes_is_identity() {
        let inst = ProblemInstance::new(vec![0.3, 1.0], [(0, 1, 2.5)], 0).unwrap();
        let ci = build_complete_graph(&inst);
        assert_eq!(ci.comp, inst);
    }

    #[test]
    fn expansion_and_compression() {
        let inst = line4();
        let ci = build_complete_graph(&inst);
        let comp_path = path(&[1, 0, 2, 3]);
        let expanded = expand_simple_path(&ci, &comp_path);
        assert_eq!(expanded.nodes(), &[1, 0, 1, 2, 3]);
        let c_comp = expected_cost(&ci.comp, &comp_path).unwrap().value();
        let c_base = expected_cost(&inst, &expanded).unwrap().value();
        assert!((c_comp - 1.161).abs() < 1e-12);
        assert!((c_base - 1.161).abs() < 1e-12);

        assert_eq!(expand_simple_path(&ci, &path(&[1, 2, 3])).nodes(), &[1, 2, 3]);
        assert_eq!(expand_simple_path(&ci, &path(&[0, 3])).nodes(), &[0, 1, 2, 3]);

        assert_eq!(compress_path(&inst, &expanded).nodes(), &[1, 0, 2, 3]);
        assert_eq!(compress_path(&inst, &path(&[1, 2, 3])).nodes(), &[1, 2, 3]);
        assert_eq!(compress_path(&inst, &path(&[0, 1, 0])).nodes(), &[0, 1]);
    }

    #[test]
    fn nt_reduction_edge_cost() {
        let inst = ProblemInstance::new(vec![0.5; 3], [(0, 1, 1.0), (1, 2, 1.0)], 0).unwrap();
        let red = nt_reduction(&inst).unwrap();
        assert_eq!(red.edge_cost, 6.0);
        assert_eq!(red.terminal, 3);
        assert_eq!(red.instance.terminals(), &[3]);
        assert_eq!(red.instance.edge_count(), 5);
        assert!(validate_instance(&red.instance.to_raw()).is_empty());
    }

    #[test]
    fn nt_reduction_with_grid_diameter_override() {
        let n = 4usize;
        let mut edges = Vec::new();
        for r in 0..n {
            for c in 0..n {
                if c + 1 < n {
                    edges.push((r * n + c, r * n + c + 1, 1.0));
                }
                if r + 1 < n {
                    edges.push((r * n + c, (r + 1) * n + c, 1.0));
                }
            }
        }
        // zero-probability nodes do not enter the minimum
        let mut p = vec![0.1; n * n];
        p[0] = 0.0;
        let inst = ProblemInstance::new(p, edges, 0).unwrap();
        let red = nt_reduction_with_diameter(&inst, Some(2.0 * n as f64)).unwrap();
        assert!((red.edge_cost - 30.0 * n as f64).abs() < 1e-9);
    }

    #[test]
    fn nt_reduction_rejections() {
        let zero = ProblemInstance::new(vec![0.0, 0.0], [(0, 1, 1.0)], 0).unwrap();
        assert_eq!(nt_reduction(&zero).unwrap_err(), TransformError::ObjectiveUndefined);
        let single = ProblemInstance::new(vec![0.5], [], 0).unwrap();
        assert_eq!(nt_reduction(&single).unwrap_err(), TransformError::ZeroDiameter);
        assert_eq!(nt_reduction(&line4()).unwrap_err(), TransformError::HasTerminals);
    }
}
