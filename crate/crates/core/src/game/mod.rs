//! The path problem as a game. Every non-terminal node is a player whose
//! action is a successor (or no successor). A profile of actions induces a
//! successor graph; where it reaches a terminal, each node's cost follows
//! `C_v = (1 - p_v)(l_{v,succ} + C_succ)`.
//!
//! The free functions here recompute everything from scratch and serve as the
//! reference semantics. [`GameState`] maintains the same quantities
//! incrementally for the solvers.

mod solve;
mod state;

pub use solve::{
    best_reply_solve, log_linear_solve, BestReplyOrder, BestReplyResult, LogLinearConfig,
    LogLinearResult, TracePoint,
};
pub use state::GameState;

use std::collections::{BTreeMap, VecDeque};

use serde::Serialize;

use crate::graph::{ExtendedCost, NodeId, Path, ProblemInstance};

/// Default weight of non-start players in the local costs.
pub const DEFAULT_EPS_PRIME: f64 = 1e-6;

/// Weights `alpha` of the local costs: one for the start node, `eps_prime`
/// for everyone else.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GameWeights {
    pub eps_prime: f64,
    pub start: NodeId,
}

impl GameWeights {
    pub fn new(eps_prime: f64, start: NodeId) -> Self {
        assert!(eps_prime > 0.0, "eps_prime must be positive");
        GameWeights { eps_prime, start }
    }

    pub fn for_instance(inst: &ProblemInstance) -> Self {
        GameWeights::new(DEFAULT_EPS_PRIME, inst.start())
    }

    pub fn alpha(&self, v: NodeId) -> f64 {
        if v == self.start {
            1.0
        } else {
            self.eps_prime
        }
    }
}

/// One successor choice per node; `None` is the null action. Entries of
/// terminal nodes are always `None`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SuccessorProfile {
    choice: Vec<Option<NodeId>>,
}

impl SuccessorProfile {
    pub fn all_null(node_count: usize) -> Self {
        SuccessorProfile { choice: vec![None; node_count] }
    }

    /// Builds a profile, checking that every choice is a neighbor of a
    /// non-terminal node.
    pub fn from_choices(inst: &ProblemInstance, choice: Vec<Option<NodeId>>) -> Option<Self> {
        if choice.len() != inst.node_count() {
            return None;
        }
        for (v, c) in choice.iter().enumerate() {
            if let Some(u) = *c {
                if inst.is_terminal(v) || inst.edge_cost(v, u).is_none() {
                    return None;
                }
            }
        }
        Some(SuccessorProfile { choice })
    }

    pub fn node_count(&self) -> usize {
        self.choice.len()
    }

    pub fn get(&self, v: NodeId) -> Option<NodeId> {
        self.choice[v]
    }

    /// Sets one choice. The caller guarantees that `u` is a neighbor of `v`.
    pub fn set(&mut self, v: NodeId, u: Option<NodeId>) {
        self.choice[v] = u;
    }

    pub fn choices(&self) -> &[Option<NodeId>] {
        &self.choice
    }

    /// Predecessor lists of the successor graph.
    pub fn children(&self) -> Vec<Vec<NodeId>> {
        let mut children = vec![Vec::new(); self.choice.len()];
        for (v, c) in self.choice.iter().enumerate() {
            if let Some(u) = *c {
                children[u].push(v);
            }
        }
        children
    }

    /// Nodes along the successor chain from `v`, stopping at a terminal, a
    /// null choice, or just before a repeat.
    pub fn chain(&self, inst: &ProblemInstance, v: NodeId) -> Vec<NodeId> {
        let mut seen = vec![false; self.choice.len()];
        let mut out = vec![v];
        seen[v] = true;
        let mut cur = v;
        while !inst.is_terminal(cur) {
            match self.choice[cur] {
                Some(u) if !seen[u] => {
                    seen[u] = true;
                    out.push(u);
                    cur = u;
                }
                _ => break,
            }
        }
        out
    }

    /// The induced path from the start when it reaches a terminal.
    pub fn induced_path(&self, inst: &ProblemInstance) -> Option<Path> {
        let chain = self.chain(inst, inst.start());
        let last = *chain.last().expect("nonempty");
        inst.is_terminal(last).then(|| Path::new(chain).expect("nonempty"))
    }

    /// `node -> successor` map, for rendering the successor graph elsewhere.
    pub fn to_json(&self) -> serde_json::Value {
        let map: BTreeMap<String, Option<NodeId>> =
            self.choice.iter().enumerate().map(|(v, c)| (v.to_string(), *c)).collect();
        serde_json::to_value(map).expect("profile serializes")
    }
}

/// Per-node costs `C_v` of a profile.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProfileCosts {
    pub cost: Vec<ExtendedCost>,
}

/// Exact `C_v` for every node. Nodes whose chain ends in a null choice or a
/// cycle get infinity; terminals get zero.
pub fn profile_costs(inst: &ProblemInstance, profile: &SuccessorProfile) -> ProfileCosts {
    let n = inst.node_count();
    let mut cost: Vec<Option<ExtendedCost>> = vec![None; n];
    let mut on_walk = vec![false; n];
    for v in 0..n {
        if cost[v].is_some() {
            continue;
        }
        let mut walk = Vec::new();
        let mut cur = v;
        let tail = loop {
            if let Some(c) = cost[cur] {
                break c;
            }
            if inst.is_terminal(cur) {
                cost[cur] = Some(ExtendedCost::ZERO);
                break ExtendedCost::ZERO;
            }
            if on_walk[cur] {
                break ExtendedCost::INFINITE;
            }
            on_walk[cur] = true;
            walk.push(cur);
            match profile.get(cur) {
                Some(u) => cur = u,
                None => break ExtendedCost::INFINITE,
            }
        };
        let mut after = tail;
        for &x in walk.iter().rev() {
            on_walk[x] = false;
            after = if after.is_infinite() {
                ExtendedCost::INFINITE
            } else {
                let u = profile.get(x).expect("walk nodes have successors");
                let l = inst.edge_cost(x, u).expect("profile follows edges");
                (ExtendedCost::finite(l) + after).scale(1.0 - inst.success_prob(x))
            };
            cost[x] = Some(after);
        }
    }
    ProfileCosts { cost: cost.into_iter().map(|c| c.expect("all assigned")).collect() }
}

/// Every node whose successor chain passes through `v`, and `v` itself.
pub fn upstream_set(profile: &SuccessorProfile, v: NodeId) -> Vec<NodeId> {
    let children = profile.children();
    let mut seen = vec![false; profile.node_count()];
    seen[v] = true;
    let mut out = vec![v];
    let mut queue = VecDeque::from([v]);
    while let Some(x) = queue.pop_front() {
        for &y in &children[x] {
            if !seen[y] {
                seen[y] = true;
                out.push(y);
                queue.push_back(y);
            }
        }
    }
    out.sort_unstable();
    out
}

/// Neighbors of `v` that are terminals, or that are not upstream of `v` and
/// have finite cost. Does not depend on the current choice of `v`.
pub fn feasible_actions(inst: &ProblemInstance, profile: &SuccessorProfile, v: NodeId) -> Vec<NodeId> {
    let upstream = upstream_set(profile, v);
    let costs = profile_costs(inst, profile);
    inst.neighbors(v)
        .iter()
        .map(|&(u, _)| u)
        .filter(|&u| {
            inst.is_terminal(u) || (upstream.binary_search(&u).is_err() && costs.cost[u].is_finite())
        })
        .collect()
}

/// `J_v = sum over upstream u of alpha_u C_u`.
pub fn local_cost(
    inst: &ProblemInstance,
    profile: &SuccessorProfile,
    v: NodeId,
    w: &GameWeights,
) -> ExtendedCost {
    let costs = profile_costs(inst, profile);
    upstream_set(profile, v)
        .into_iter()
        .fold(ExtendedCost::ZERO, |acc, u| acc + costs.cost[u].scale(w.alpha(u)))
}

/// `phi = C_start + eps_prime * sum of C_v over the other non-terminal nodes`.
pub fn potential(inst: &ProblemInstance, profile: &SuccessorProfile, w: &GameWeights) -> ExtendedCost {
    let costs = profile_costs(inst, profile);
    inst.nonterminals()
        .iter()
        .fold(ExtendedCost::ZERO, |acc, &v| acc + costs.cost[v].scale(w.alpha(v)))
}

/// Replaces the choice of `v` by its best reply: the feasible action
/// minimizing `(1 - p_v)(l_vu + C_u)`, lowest id on ties, or null when there
/// is none.
pub fn best_reply_step(
    inst: &ProblemInstance,
    profile: &SuccessorProfile,
    v: NodeId,
    _w: &GameWeights,
) -> SuccessorProfile {
    let mut out = profile.clone();
    if inst.is_terminal(v) {
        return out;
    }
    let costs = profile_costs(inst, profile);
    let q = 1.0 - inst.success_prob(v);
    let mut best: Option<(NodeId, f64)> = None;
    for u in feasible_actions(inst, profile, v) {
        let x = q * (inst.edge_cost(v, u).expect("neighbor") + costs.cost[u].value());
        if best.is_none_or(|(_, b)| x < b) {
            best = Some((u, x));
        }
    }
    out.set(v, best.map(|(u, _)| u));
    out
}

/// Softmax probabilities `exp(-J_v / tau)` over the feasible actions of `v`,
/// each `J_v` evaluated on the deviated profile.
pub fn log_linear_probabilities(
    inst: &ProblemInstance,
    profile: &SuccessorProfile,
    v: NodeId,
    tau: f64,
    w: &GameWeights,
) -> Vec<(NodeId, f64)> {
    let actions = feasible_actions(inst, profile, v);
    let local: Vec<f64> = actions
        .iter()
        .map(|&u| {
            let mut deviated = profile.clone();
            deviated.set(v, Some(u));
            local_cost(inst, &deviated, v, w).value()
        })
        .collect();
    softmax(&local, tau).into_iter().zip(&actions).map(|(p, &u)| (u, p)).collect()
}

/// Probabilities proportional to `exp(-x / tau)`, shifted by the minimum for
/// stability.
pub(crate) fn softmax(xs: &[f64], tau: f64) -> Vec<f64> {
    let min = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let weights: Vec<f64> = xs.iter().map(|&x| (-(x - min) / tau).exp()).collect();
    let total: f64 = weights.iter().sum();
    weights.into_iter().map(|x| x / total).collect()
}

/// One log-linear update of `v`: a feasible action drawn from the softmax of
/// the local costs, or null when there is none.
pub fn log_linear_step(
    inst: &ProblemInstance,
    profile: &SuccessorProfile,
    v: NodeId,
    tau: f64,
    rng: &mut impl rand::Rng,
    w: &GameWeights,
) -> SuccessorProfile {
    assert!(tau > 0.0, "temperature must be positive");
    let mut out = profile.clone();
    if inst.is_terminal(v) {
        return out;
    }
    let probs = log_linear_probabilities(inst, profile, v, tau, w);
    out.set(v, sample(&probs, rng.random::<f64>()));
    out
}

/// Inverse-CDF draw; falls back to the last entry against rounding.
pub(crate) fn sample(probs: &[(NodeId, f64)], r: f64) -> Option<NodeId> {
    let mut acc = 0.0;
    for &(u, p) in probs {
        acc += p;
        if r < acc {
            return Some(u);
        }
    }
    probs.last().map(|&(u, _)| u)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line4() -> ProblemInstance {
        ProblemInstance::new(vec![0.9, 0.1, 0.1, 1.0], [(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0)], 1)
            .unwrap()
    }

    /// Choices 0->1, 1->2, 2->3.
    fn forward(inst: &ProblemInstance) -> SuccessorProfile {
        SuccessorProfile::from_choices(inst, vec![Some(1), Some(2), Some(3), None]).unwrap()
    }

    fn close(a: ExtendedCost, b: f64) -> bool {
        (a.value() - b).abs() < 1e-12
    }

    #[test]
    fn costs_of_forward_profile() {
        let inst = line4();
        let c = profile_costs(&inst, &forward(&inst)).cost;
        assert!(close(c[0], 0.271));
        assert!(close(c[1], 1.71));
        assert!(close(c[2], 0.9));
        assert_eq!(c[3], ExtendedCost::ZERO);
        // same as evaluating the induced paths
        for v in 0..3 {
            let chain = Path::new(forward(&inst).chain(&inst, v)).unwrap();
            assert_eq!(crate::graph::expected_cost(&inst, &chain).unwrap(), c[v]);
        }
    }

    #[test]
    fn cycles_and_their_upstream_are_infinite() {
        let inst = line4();
        let p = SuccessorProfile::from_choices(&inst, vec![Some(1), Some(2), Some(1), None]).unwrap();
        let c = profile_costs(&inst, &p).cost;
        assert!(c[0].is_infinite() && c[1].is_infinite() && c[2].is_infinite());
    }

    #[test]
    fn one_step_to_terminal() {
        let inst = line4();
        let p = SuccessorProfile::from_choices(&inst, vec![None, None, Some(3), None]).unwrap();
        assert!(close(profile_costs(&inst, &p).cost[2], 0.9));
    }

    #[test]
    fn upstream_sets() {
        let inst = line4();
        assert_eq!(upstream_set(&forward(&inst), 2), vec![0, 1, 2]);
        assert_eq!(upstream_set(&forward(&inst), 0), vec![0]);
        let null = SuccessorProfile::all_null(4);
        for v in 0..4 {
            assert_eq!(upstream_set(&null, v), vec![v]);
        }
    }

    #[test]
    fn feasible_action_sets() {
        let inst = line4();
        assert_eq!(feasible_actions(&inst, &forward(&inst), 1), vec![2]);
        assert_eq!(feasible_actions(&inst, &forward(&inst), 2), vec![3]);
        let null = SuccessorProfile::all_null(4);
        assert_eq!(feasible_actions(&inst, &null, 2), vec![3]);
        assert!(feasible_actions(&inst, &null, 0).is_empty());
    }

    #[test]
    fn local_cost_and_potential() {
        let inst = line4();
        let w = GameWeights::for_instance(&inst);
        let expected = 1.71 + 1e-6 * (0.271 + 0.9);
        assert!(close(local_cost(&inst, &forward(&inst), 2, &w), expected));
        assert!(close(potential(&inst, &forward(&inst), &w), expected));
        assert!(close(local_cost(&inst, &forward(&inst), 0, &w), 1e-6 * 0.271));
        let partial =
            SuccessorProfile::from_choices(&inst, vec![None, Some(2), Some(3), None]).unwrap();
        assert!(potential(&inst, &partial, &w).is_infinite());
        assert!(local_cost(&inst, &partial, 0, &w).is_infinite());
    }

    #[test]
    fn best_reply_from_null() {
        let inst = line4();
        let w = GameWeights::for_instance(&inst);
        let p = best_reply_step(&inst, &SuccessorProfile::all_null(4), 2, &w);
        assert_eq!(p.get(2), Some(3));
        assert!(close(profile_costs(&inst, &p).cost[2], 0.9));
        assert_eq!(best_reply_step(&inst, &p, 2, &w), p);
    }

    #[test]
    fn best_reply_tie_takes_lowest_id() {
        // node 0 sees terminals 1 and 2 at equal cost
        let inst =
            ProblemInstance::new(vec![0.2, 1.0, 1.0], [(0, 2, 1.0), (0, 1, 1.0)], 0).unwrap();
        let w = GameWeights::for_instance(&inst);
        let p = best_reply_step(&inst, &SuccessorProfile::all_null(3), 0, &w);
        assert_eq!(p.get(0), Some(1));
    }

    #[test]
    fn softmax_values() {
        let p = softmax(&[1.0, 2.0], 1.0);
        assert!((p[0] - 0.7310585786300049).abs() < 1e-12);
        assert!((p[1] - 0.2689414213699951).abs() < 1e-12);
        let cold = softmax(&[1.0, 2.0], 1e-3);
        assert!(cold[0] > 1.0 - 1e-12);
        assert_eq!(softmax(&[5.0], 0.3), vec![1.0]);
    }

    #[test]
    fn log_linear_single_action_is_certain() {
        let inst = line4();
        let w = GameWeights::for_instance(&inst);
        let mut rng = crate::rng::stream(1, "test");
        let p = log_linear_step(&inst, &SuccessorProfile::all_null(4), 2, 0.5, &mut rng, &w);
        assert_eq!(p.get(2), Some(3));
        let q = log_linear_step(&inst, &SuccessorProfile::all_null(4), 0, 0.5, &mut rng, &w);
        assert_eq!(q.get(0), None);
    }

    #[test]
    fn profile_json_and_validation() {
        let inst = line4();
        let json = forward(&inst).to_json();
        assert_eq!(json["0"], 1);
        assert!(json["3"].is_null());
        assert!(SuccessorProfile::from_choices(&inst, vec![Some(2), None, None, None]).is_none());
        assert!(SuccessorProfile::from_choices(&inst, vec![None, None, None, Some(2)]).is_none());
    }
}
