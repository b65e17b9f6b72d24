use std::collections::{HashMap, VecDeque};

use rayon::prelude::*;
use serde::Serialize;

use crate::error::SolveError;
use crate::graph::{ExtendedCost, NodeId, Path, ProblemInstance};

/// Default limit on the number of non-terminal nodes.
pub const DEFAULT_SIZE_CAP: usize = 20;

/// Sweeps below this state count run sequentially.
const PARALLEL_SWEEP_THRESHOLD: usize = 4096;

/// A non-absorbing MDP state: the current node and the set of non-terminal
/// nodes visited before arriving there, as a bitmask over
/// [`ProblemInstance::nonterminals`] positions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct MdpState {
    pub node: NodeId,
    pub history: u64,
}

/// One action out of a state. `next` is `None` for the absorbing state.
#[derive(Debug, Clone, Copy)]
struct Transition {
    action: NodeId,
    /// Probability of continuing, `1 - p_v` on a first visit and `1` otherwise.
    continue_prob: f64,
    length: f64,
    next: Option<u32>,
}

/// Converged cost-to-go and greedy policy over the reachable states.
#[derive(Debug, Clone)]
pub struct ValueTable {
    states: Vec<MdpState>,
    index: HashMap<MdpState, u32>,
    offsets: Vec<usize>,
    transitions: Vec<Transition>,
    values: Vec<ExtendedCost>,
    policy: Vec<Option<NodeId>>,
    start: NodeId,
    start_is_terminal: bool,
    bit_of: Vec<Option<u32>>,
    sweeps: usize,
    sweep_bound: u128,
    monotone: bool,
}

#[derive(Serialize)]
struct DumpEntry {
    node: NodeId,
    history: Vec<NodeId>,
    value: ExtendedCost,
    action: Option<NodeId>,
}

impl ValueTable {
    /// Value of the start state; zero when the start is a terminal.
    pub fn start_value(&self) -> ExtendedCost {
        if self.start_is_terminal {
            ExtendedCost::ZERO
        } else {
            self.values[0]
        }
    }

    pub fn value(&self, s: MdpState) -> Option<ExtendedCost> {
        self.index.get(&s).map(|&i| self.values[i as usize])
    }

    pub fn action(&self, s: MdpState) -> Option<NodeId> {
        self.index.get(&s).and_then(|&i| self.policy[i as usize])
    }

    /// The absorbing state always has value zero.
    pub fn absorbing_value(&self) -> ExtendedCost {
        ExtendedCost::ZERO
    }

    pub fn state_count(&self) -> usize {
        self.states.len()
    }

    pub fn states(&self) -> &[MdpState] {
        &self.states
    }

    /// Jacobi sweeps performed, counting the final one that changed nothing.
    pub fn sweeps(&self) -> usize {
        self.sweeps
    }

    /// `|V'| 2^|V'| + 1`, saturating.
    pub fn sweep_bound(&self) -> u128 {
        self.sweep_bound
    }

    /// Whether every sweep left every value no larger than before.
    pub fn values_monotone(&self) -> bool {
        self.monotone
    }

    /// Largest Bellman residual over the reachable states, ignoring states
    /// whose value is infinite.
    pub fn bellman_residual(&self) -> f64 {
        (0..self.states.len())
            .map(|i| {
                let (best, _) = self.backup(i, &self.values);
                match (best.finite_value(), self.values[i].finite_value()) {
                    (Some(a), Some(b)) => (a - b).abs(),
                    (None, None) => 0.0,
                    _ => f64::INFINITY,
                }
            })
            .fold(0.0, f64::max)
    }

    fn backup(&self, i: usize, values: &[ExtendedCost]) -> (ExtendedCost, Option<NodeId>) {
        let mut best = ExtendedCost::INFINITE;
        let mut arg = None;
        // Transitions are sorted by action id; strict improvement keeps the lowest id on ties.
        for t in &self.transitions[self.offsets[i]..self.offsets[i + 1]] {
            let after = t.next.map_or(ExtendedCost::ZERO, |j| values[j as usize]);
            let q = (ExtendedCost::finite(t.length) + after).scale(t.continue_prob);
            if q < best {
                best = q;
                arg = Some(t.action);
            }
        }
        (best, arg)
    }

    /// JSON dump of every reachable state with its value and action.
    pub fn to_json(&self, inst: &ProblemInstance) -> serde_json::Value {
        let entries: Vec<DumpEntry> = self
            .states
            .iter()
            .enumerate()
            .map(|(i, s)| DumpEntry {
                node: s.node,
                history: inst
                    .nonterminals()
                    .iter()
                    .enumerate()
                    .filter(|(b, _)| s.history >> b & 1 == 1)
                    .map(|(_, &v)| v)
                    .collect(),
                value: self.values[i],
                action: self.policy[i],
            })
            .collect();
        serde_json::to_value(entries).expect("dump serializes")
    }
}

/// Solves the `(node, history)` MDP by Jacobi value iteration from an
/// all-infinite initialization until a sweep changes nothing.
pub fn value_iteration_exact(
    inst: &ProblemInstance,
    size_cap: usize,
) -> Result<ValueTable, SolveError> {
    let m = inst.nonterminals().len();
    if m > size_cap || m > 63 {
        return Err(SolveError::StateExplosion { nonterminals: m, cap: size_cap.min(63) });
    }
    if inst.terminals().is_empty() {
        return Err(SolveError::NoTerminal);
    }
    let mut table = build(inst);
    if table.start_is_terminal {
        return Ok(table);
    }

    let n_states = table.states.len();
    let mut values = vec![ExtendedCost::INFINITE; n_states];
    let mut sweeps = 0usize;
    let mut monotone = true;
    loop {
        sweeps += 1;
        let next: Vec<(ExtendedCost, Option<NodeId>)> = if n_states >= PARALLEL_SWEEP_THRESHOLD {
            (0..n_states).into_par_iter().map(|i| table.backup(i, &values)).collect()
        } else {
            (0..n_states).map(|i| table.backup(i, &values)).collect()
        };
        let mut changed = false;
        for (i, (v, a)) in next.into_iter().enumerate() {
            if v != values[i] {
                changed = true;
                monotone &= v <= values[i];
                values[i] = v;
            }
            table.policy[i] = a;
        }
        if !changed {
            break;
        }
        if sweeps as u128 > table.sweep_bound {
            // Cannot happen for exact arithmetic; guard against a runaway loop.
            break;
        }
    }
    table.values = values;
    table.sweeps = sweeps;
    table.monotone = monotone;
    Ok(table)
}

fn build(inst: &ProblemInstance) -> ValueTable {
    let n = inst.node_count();
    let m = inst.nonterminals().len();
    let mut bit_of = vec![None; n];
    for (b, &v) in inst.nonterminals().iter().enumerate() {
        bit_of[v] = Some(b as u32);
    }
    let sweep_bound = (m as u128).checked_shl(m as u32).map_or(u128::MAX, |x| x + 1);
    let start = inst.start();
    let mut table = ValueTable {
        states: Vec::new(),
        index: HashMap::new(),
        offsets: vec![0],
        transitions: Vec::new(),
        values: Vec::new(),
        policy: Vec::new(),
        start,
        start_is_terminal: inst.is_terminal(start),
        bit_of,
        sweeps: 0,
        sweep_bound,
        monotone: true,
    };
    if table.start_is_terminal {
        return table;
    }

    let s0 = MdpState { node: start, history: 0 };
    table.index.insert(s0, 0);
    table.states.push(s0);
    let mut queue = VecDeque::from([0u32]);
    while let Some(i) = queue.pop_front() {
        let s = table.states[i as usize];
        let bit = 1u64 << table.bit_of[s.node].expect("non-terminal");
        let first_visit = s.history & bit == 0;
        let continue_prob = if first_visit { 1.0 - inst.success_prob(s.node) } else { 1.0 };
        let history = s.history | bit;
        for &(u, l) in inst.neighbors(s.node) {
            let next = if inst.is_terminal(u) {
                None
            } else {
                let ns = MdpState { node: u, history };
                let j = match table.index.get(&ns) {
                    Some(&j) => j,
                    None => {
                        let j = table.states.len() as u32;
                        table.index.insert(ns, j);
                        table.states.push(ns);
                        queue.push_back(j);
                        j
                    }
                };
                Some(j)
            };
            table.transitions.push(Transition { action: u, continue_prob, length: l, next });
        }
        table.offsets.push(table.transitions.len());
    }
    let k = table.states.len();
    table.values = vec![ExtendedCost::INFINITE; k];
    table.policy = vec![None; k];
    table
}

/// Follows the greedy policy from the start state to the absorbing state.
pub fn extract_optimal_path(vt: &ValueTable, inst: &ProblemInstance) -> Result<Path, SolveError> {
    if vt.start_is_terminal {
        return Ok(Path::single(vt.start));
    }
    if vt.start_value().is_infinite() {
        return Err(SolveError::NoProperPolicy);
    }
    let mut nodes = vec![vt.start];
    let mut state = MdpState { node: vt.start, history: 0 };
    for _ in 0..=vt.states.len() {
        let action = vt.action(state).ok_or(SolveError::NoProperPolicy)?;
        nodes.push(action);
        if inst.is_terminal(action) {
            return Ok(Path::new(nodes).expect("nonempty"));
        }
        let bit = 1u64 << vt.bit_of[state.node].expect("non-terminal");
        state = MdpState { node: action, history: state.history | bit };
    }
    Err(SolveError::NoProperPolicy)
}
