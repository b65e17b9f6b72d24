//! Problem instances, paths, and the expected-cost-until-success objective.
//!
//! A [`ProblemInstance`] is an undirected, connected graph with a success
//! probability on every node and a strictly positive cost on every edge. Nodes
//! whose probability is exactly `1.0` are terminals: once reached, success is
//! guaranteed.
//!
//! The expected cost of a path only charges an edge with the probability that
//! every node visited *for the first time* before it has failed. Revisiting a
//! node contributes no further probability factor.

use std::cmp::Ordering;
use std::collections::{BTreeSet, VecDeque};
use std::fmt;
use std::ops::Add;
use std::path::Path as FsPath;

use serde::{Deserialize, Serialize};

use crate::error::{InstanceError, PathError};

/// Dense node identifier in `0..node_count`.
pub type NodeId = usize;

/// Number of first-visit factors accumulated in the linear domain before the
/// survival product switches to log-domain accumulation.
pub const LOG_DOMAIN_THRESHOLD: usize = 64;

/// A nonnegative cost that may be infinite.
///
/// Infinity absorbs addition and compares greater than every finite value.
#[derive(Clone, Copy, PartialEq, Default)]
pub struct ExtendedCost(f64);

impl ExtendedCost {
    pub const ZERO: ExtendedCost = ExtendedCost(0.0);
    pub const INFINITE: ExtendedCost = ExtendedCost(f64::INFINITY);

    /// Wraps a finite nonnegative value.
    pub fn finite(value: f64) -> Self {
        debug_assert!(value.is_finite() && value >= 0.0, "bad cost {value}");
        ExtendedCost(value)
    }

    /// Wraps a raw float where `+inf` means [`ExtendedCost::INFINITE`].
    pub fn from_f64(value: f64) -> Self {
        debug_assert!(!value.is_nan() && value >= 0.0, "bad cost {value}");
        ExtendedCost(value)
    }

    pub fn is_finite(self) -> bool {
        self.0.is_finite()
    }

    pub fn is_infinite(self) -> bool {
        !self.0.is_finite()
    }

    /// Raw value, `f64::INFINITY` when infinite.
    pub fn value(self) -> f64 {
        self.0
    }

    pub fn finite_value(self) -> Option<f64> {
        self.is_finite().then_some(self.0)
    }

    /// Multiplies by a survival probability. A zero factor yields zero even
    /// for an infinite cost: nothing after certain success is ever paid.
    pub fn scale(self, factor: f64) -> Self {
        if factor == 0.0 {
            ExtendedCost::ZERO
        } else {
            ExtendedCost(self.0 * factor)
        }
    }
}

impl Add for ExtendedCost {
    type Output = ExtendedCost;
    fn add(self, rhs: ExtendedCost) -> ExtendedCost {
        ExtendedCost(self.0 + rhs.0)
    }
}

impl Eq for ExtendedCost {}

impl PartialOrd for ExtendedCost {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for ExtendedCost {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

impl fmt::Debug for ExtendedCost {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl fmt::Display for ExtendedCost {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_finite() {
            fmt::Display::fmt(&self.0, f)
        } else {
            f.write_str("inf")
        }
    }
}

impl Serialize for ExtendedCost {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.finite_value().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for ExtendedCost {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v: Option<f64> = Option::deserialize(d)?;
        Ok(v.map_or(ExtendedCost::INFINITE, ExtendedCost::from_f64))
    }
}

/// Running product of `(1 - p)` factors.
///
/// Multiplies in the linear domain for the first [`LOG_DOMAIN_THRESHOLD`]
/// factors and continues as a sum of logarithms afterwards.
#[derive(Debug, Clone, Copy)]
pub struct SurvivalProduct {
    linear: f64,
    log: f64,
    factors: usize,
}

impl Default for SurvivalProduct {
    fn default() -> Self {
        SurvivalProduct { linear: 1.0, log: 0.0, factors: 0 }
    }
}

impl SurvivalProduct {
    pub fn include(&mut self, success_prob: f64) {
        let q = 1.0 - success_prob;
        self.factors += 1;
        if self.factors <= LOG_DOMAIN_THRESHOLD {
            self.linear *= q;
        } else {
            if self.factors == LOG_DOMAIN_THRESHOLD + 1 {
                self.log = self.linear.ln();
            }
            self.log += q.ln();
        }
    }

    pub fn value(&self) -> f64 {
        if self.factors <= LOG_DOMAIN_THRESHOLD {
            self.linear
        } else {
            self.log.exp()
        }
    }

    pub fn factors(&self) -> usize {
        self.factors
    }
}

/// One node entry of the JSON instance schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawNode {
    pub id: NodeId,
    pub p: f64,
}

/// One edge entry of the JSON instance schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawEdge {
    pub u: NodeId,
    pub v: NodeId,
    pub cost: f64,
}

/// The serialized, not yet validated form of an instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawInstance {
    pub nodes: Vec<RawNode>,
    pub edges: Vec<RawEdge>,
    pub start: NodeId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub derived_from: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metadata: Option<serde_json::Map<String, serde_json::Value>>,
}

/// A violated instance invariant.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NoNodes,
    NodeIdOutOfRange { id: NodeId, node_count: usize },
    DuplicateNodeId(NodeId),
    ProbabilityOutOfRange { node: NodeId, p: f64 },
    UnknownEdgeEndpoint { u: NodeId, v: NodeId },
    SelfLoop(NodeId),
    NonpositiveEdgeCost { u: NodeId, v: NodeId, cost: f64 },
    DuplicateEdge { u: NodeId, v: NodeId },
    StartOutOfRange(NodeId),
    Disconnected { reachable: usize, node_count: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NoNodes => write!(f, "instance has no nodes"),
            Violation::NodeIdOutOfRange { id, node_count } => {
                write!(f, "node id {id} outside 0..{node_count}")
            }
            Violation::DuplicateNodeId(id) => write!(f, "duplicate node id {id}"),
            Violation::ProbabilityOutOfRange { node, p } => {
                write!(f, "probability {p} of node {node} outside [0,1]")
            }
            Violation::UnknownEdgeEndpoint { u, v } => {
                write!(f, "edge ({u},{v}) references an unknown node")
            }
            Violation::SelfLoop(v) => write!(f, "self-loop at node {v}"),
            Violation::NonpositiveEdgeCost { u, v, cost } => {
                write!(f, "nonpositive edge cost {cost} on edge ({u},{v})")
            }
            Violation::DuplicateEdge { u, v } => write!(f, "duplicate edge ({u},{v})"),
            Violation::StartOutOfRange(s) => write!(f, "start node {s} does not exist"),
            Violation::Disconnected { reachable, node_count } => write!(
                f,
                "graph not connected ({reachable} of {node_count} nodes reachable from node 0)"
            ),
        }
    }
}

/// Checks every instance invariant and returns all violations found.
pub fn validate_instance(raw: &RawInstance) -> Vec<Violation> {
    let mut out = Vec::new();
    let n = raw.nodes.len();
    if n == 0 {
        out.push(Violation::NoNodes);
        return out;
    }
    let mut seen = vec![false; n];
    for node in &raw.nodes {
        if node.id >= n {
            out.push(Violation::NodeIdOutOfRange { id: node.id, node_count: n });
        } else if seen[node.id] {
            out.push(Violation::DuplicateNodeId(node.id));
        } else {
            seen[node.id] = true;
        }
        if !(0.0..=1.0).contains(&node.p) {
            out.push(Violation::ProbabilityOutOfRange { node: node.id, p: node.p });
        }
    }
    if raw.start >= n {
        out.push(Violation::StartOutOfRange(raw.start));
    }

    let mut adjacency = vec![Vec::new(); n];
    let mut edge_set = BTreeSet::new();
    for e in &raw.edges {
        if e.u >= n || e.v >= n {
            out.push(Violation::UnknownEdgeEndpoint { u: e.u, v: e.v });
            continue;
        }
        if e.u == e.v {
            out.push(Violation::SelfLoop(e.u));
            continue;
        }
        // NaN fails this comparison too.
        if !(e.cost > 0.0) || !e.cost.is_finite() {
            out.push(Violation::NonpositiveEdgeCost { u: e.u, v: e.v, cost: e.cost });
        }
        let key = (e.u.min(e.v), e.u.max(e.v));
        if !edge_set.insert(key) {
            out.push(Violation::DuplicateEdge { u: key.0, v: key.1 });
        }
        adjacency[e.u].push(e.v);
        adjacency[e.v].push(e.u);
    }

    let reachable = bfs_reachable(&adjacency, 0);
    if reachable != n {
        out.push(Violation::Disconnected { reachable, node_count: n });
    }
    out
}

fn bfs_reachable(adjacency: &[Vec<NodeId>], source: NodeId) -> usize {
    let mut seen = vec![false; adjacency.len()];
    let mut queue = VecDeque::from([source]);
    seen[source] = true;
    let mut count = 1;
    while let Some(u) = queue.pop_front() {
        for &w in &adjacency[u] {
            if !seen[w] {
                seen[w] = true;
                count += 1;
                queue.push_back(w);
            }
        }
    }
    count
}

/// A validated, immutable problem instance.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemInstance {
    success_prob: Vec<f64>,
    /// Neighbor lists sorted by neighbor id.
    adjacency: Vec<Vec<(NodeId, f64)>>,
    start: NodeId,
    terminal: Vec<bool>,
    nonterminals: Vec<NodeId>,
    terminals: Vec<NodeId>,
    edge_count: usize,
}

impl ProblemInstance {
    /// Builds and validates an instance from probabilities, undirected edges
    /// `(u, v, cost)` and a start node.
    pub fn new(
        success_prob: Vec<f64>,
        edges: impl IntoIterator<Item = (NodeId, NodeId, f64)>,
        start: NodeId,
    ) -> Result<Self, InstanceError> {
        let raw = RawInstance {
            nodes: success_prob
                .iter()
                .enumerate()
                .map(|(id, &p)| RawNode { id, p })
                .collect(),
            edges: edges.into_iter().map(|(u, v, cost)| RawEdge { u, v, cost }).collect(),
            start,
            derived_from: None,
            metadata: None,
        };
        Self::from_raw(&raw)
    }

    pub fn from_raw(raw: &RawInstance) -> Result<Self, InstanceError> {
        let violations = validate_instance(raw);
        if !violations.is_empty() {
            return Err(InstanceError::Invalid(violations));
        }
        let n = raw.nodes.len();
        let mut success_prob = vec![0.0; n];
        for node in &raw.nodes {
            success_prob[node.id] = node.p;
        }
        let mut adjacency = vec![Vec::new(); n];
        for e in &raw.edges {
            adjacency[e.u].push((e.v, e.cost));
            adjacency[e.v].push((e.u, e.cost));
        }
        for list in &mut adjacency {
            list.sort_by_key(|&(v, _)| v);
        }
        let terminal: Vec<bool> = success_prob.iter().map(|&p| p == 1.0).collect();
        let nonterminals = (0..n).filter(|&v| !terminal[v]).collect();
        let terminals = (0..n).filter(|&v| terminal[v]).collect();
        Ok(ProblemInstance {
            success_prob,
            adjacency,
            start: raw.start,
            terminal,
            nonterminals,
            terminals,
            edge_count: raw.edges.len(),
        })
    }

    /// Builds an instance from sorted adjacency lists the caller already
    /// knows to be valid (derived graphs such as the metric closure).
    pub(crate) fn from_trusted_parts(
        success_prob: Vec<f64>,
        adjacency: Vec<Vec<(NodeId, f64)>>,
        start: NodeId,
    ) -> Self {
        let n = success_prob.len();
        debug_assert_eq!(adjacency.len(), n);
        let terminal: Vec<bool> = success_prob.iter().map(|&p| p == 1.0).collect();
        let edge_count = adjacency.iter().map(Vec::len).sum::<usize>() / 2;
        ProblemInstance {
            nonterminals: (0..n).filter(|&v| !terminal[v]).collect(),
            terminals: (0..n).filter(|&v| terminal[v]).collect(),
            success_prob,
            adjacency,
            start,
            terminal,
            edge_count,
        }
    }

    pub fn from_json_str(text: &str) -> Result<Self, InstanceError> {
        let raw: RawInstance = serde_json::from_str(text).map_err(|e| InstanceError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        Self::from_raw(&raw)
    }

    pub fn load(path: impl AsRef<FsPath>) -> Result<Self, InstanceError> {
        let text = std::fs::read_to_string(path.as_ref())?;
        Self::from_json_str(&text)
    }

    pub fn to_raw(&self) -> RawInstance {
        let nodes = self
            .success_prob
            .iter()
            .enumerate()
            .map(|(id, &p)| RawNode { id, p })
            .collect();
        let edges = self
            .edges()
            .map(|(u, v, cost)| RawEdge { u, v, cost })
            .collect();
        RawInstance { nodes, edges, start: self.start, derived_from: None, metadata: None }
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.to_raw()).expect("instance serializes")
    }

    /// Same graph and probabilities with a different start node.
    pub fn with_start(&self, start: NodeId) -> Result<Self, InstanceError> {
        if start >= self.node_count() {
            return Err(InstanceError::Invalid(vec![Violation::StartOutOfRange(start)]));
        }
        let mut out = self.clone();
        out.start = start;
        Ok(out)
    }

    pub fn node_count(&self) -> usize {
        self.success_prob.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn success_prob(&self, v: NodeId) -> f64 {
        self.success_prob[v]
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.success_prob
    }

    pub fn start(&self) -> NodeId {
        self.start
    }

    pub fn is_terminal(&self, v: NodeId) -> bool {
        self.terminal[v]
    }

    /// Nodes with success probability exactly one, ascending.
    pub fn terminals(&self) -> &[NodeId] {
        &self.terminals
    }

    /// All other nodes, ascending.
    pub fn nonterminals(&self) -> &[NodeId] {
        &self.nonterminals
    }

    /// Neighbors of `v` with edge costs, sorted by neighbor id.
    pub fn neighbors(&self, v: NodeId) -> &[(NodeId, f64)] {
        &self.adjacency[v]
    }

    pub fn edge_cost(&self, u: NodeId, v: NodeId) -> Option<f64> {
        let list = self.adjacency.get(u)?;
        list.binary_search_by_key(&v, |&(w, _)| w).ok().map(|i| list[i].1)
    }

    /// Every undirected edge once, as `(u, v, cost)` with `u < v`.
    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId, f64)> + '_ {
        self.adjacency.iter().enumerate().flat_map(|(u, list)| {
            list.iter().filter(move |&&(v, _)| u < v).map(move |&(v, c)| (u, v, c))
        })
    }
}

/// An ordered node sequence.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Path(Vec<NodeId>);

impl Path {
    pub fn new(nodes: Vec<NodeId>) -> Result<Self, PathError> {
        if nodes.is_empty() {
            return Err(PathError::Empty);
        }
        Ok(Path(nodes))
    }

    pub fn single(v: NodeId) -> Self {
        Path(vec![v])
    }

    pub fn nodes(&self) -> &[NodeId] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn first(&self) -> NodeId {
        self.0[0]
    }

    pub fn last(&self) -> NodeId {
        *self.0.last().expect("paths are nonempty")
    }

    pub fn into_nodes(self) -> Vec<NodeId> {
        self.0
    }

    /// Checks that every node exists and consecutive nodes are adjacent.
    pub fn validate_on(&self, inst: &ProblemInstance) -> Result<(), PathError> {
        if self.0.is_empty() {
            return Err(PathError::Empty);
        }
        for (i, &v) in self.0.iter().enumerate() {
            if v >= inst.node_count() {
                return Err(PathError::UnknownNode { index: i, node: v });
            }
        }
        for (i, w) in self.0.windows(2).enumerate() {
            if inst.edge_cost(w[0], w[1]).is_none() {
                return Err(PathError::NotAdjacent { index: i, from: w[0], to: w[1] });
            }
        }
        Ok(())
    }

    /// Total traversal length, ignoring probabilities.
    pub fn length(&self, inst: &ProblemInstance) -> Result<f64, PathError> {
        self.validate_on(inst)?;
        Ok(self
            .0
            .windows(2)
            .map(|w| inst.edge_cost(w[0], w[1]).expect("validated"))
            .sum())
    }

    /// True if any node on the path is a terminal.
    pub fn reaches_terminal(&self, inst: &ProblemInstance) -> bool {
        self.0.iter().any(|&v| v < inst.node_count() && inst.is_terminal(v))
    }
}

impl fmt::Display for Path {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("(")?;
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{v}")?;
        }
        f.write_str(")")
    }
}

/// Flags which positions of the path are first visits.
fn first_visit_flags(inst: &ProblemInstance, path: &Path) -> Vec<bool> {
    let mut seen = vec![false; inst.node_count()];
    path.nodes()
        .iter()
        .map(|&v| !std::mem::replace(&mut seen[v], true))
        .collect()
}

/// Expected cost until success along `path`, evaluated by the backward
/// recursion `C(i) = (1 - p_i)(l_i + C(i+1))` for first visits and
/// `C(i) = l_i + C(i+1)` for revisits.
///
/// Infinite when the path never reaches a terminal node.
pub fn expected_cost(inst: &ProblemInstance, path: &Path) -> Result<ExtendedCost, PathError> {
    path.validate_on(inst)?;
    if !path.reaches_terminal(inst) {
        return Ok(ExtendedCost::INFINITE);
    }
    let first = first_visit_flags(inst, path);
    let nodes = path.nodes();
    let mut cost = 0.0;
    for i in (0..nodes.len() - 1).rev() {
        let l = inst.edge_cost(nodes[i], nodes[i + 1]).expect("validated");
        cost = if first[i] {
            (1.0 - inst.success_prob(nodes[i])) * (l + cost)
        } else {
            l + cost
        };
    }
    Ok(ExtendedCost::finite(cost))
}

/// The same objective evaluated as the forward sum over edges of
/// `[prod of (1 - p) over first visits so far] * l_e`.
///
/// Unlike [`expected_cost`] this never returns infinity: on a path without a
/// terminal it is the expected distance travelled when total failure means
/// traversing the whole path.
pub fn truncated_expected_cost(inst: &ProblemInstance, path: &Path) -> Result<f64, PathError> {
    path.validate_on(inst)?;
    let first = first_visit_flags(inst, path);
    let nodes = path.nodes();
    let mut survival = SurvivalProduct::default();
    let mut total = 0.0;
    for i in 0..nodes.len() - 1 {
        if first[i] {
            survival.include(inst.success_prob(nodes[i]));
        }
        let l = inst.edge_cost(nodes[i], nodes[i + 1]).expect("validated");
        total += survival.value() * l;
    }
    Ok(total)
}

/// Closed-form evaluation of [`expected_cost`]; infinite without a terminal.
pub fn expected_cost_closed_form(
    inst: &ProblemInstance,
    path: &Path,
) -> Result<ExtendedCost, PathError> {
    let total = truncated_expected_cost(inst, path)?;
    if path.reaches_terminal(inst) {
        Ok(ExtendedCost::finite(total))
    } else {
        Ok(ExtendedCost::INFINITE)
    }
}

/// Probability that every first-visited node of the path fails.
pub fn failure_probability(inst: &ProblemInstance, path: &Path) -> Result<f64, PathError> {
    path.validate_on(inst)?;
    if path.reaches_terminal(inst) {
        return Ok(0.0);
    }
    let first = first_visit_flags(inst, path);
    let mut survival = SurvivalProduct::default();
    for (&v, _) in path.nodes().iter().zip(&first).filter(|(_, &f)| f) {
        survival.include(inst.success_prob(v));
    }
    Ok(survival.value())
}
