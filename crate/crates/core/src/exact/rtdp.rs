use std::collections::{HashMap, HashSet};

use rand::Rng as _;

use crate::error::SolveError;
use crate::exact::Solution;
use crate::graph::{expected_cost, ExtendedCost, NodeId, Path, ProblemInstance};
use crate::rng;

/// Result of [`rtdp_solve`].
#[derive(Debug, Clone, PartialEq)]
pub enum RtdpOutcome {
    Solved { solution: Solution, trials: usize },
    /// The greedy policy did not reach a terminal within the trial budget.
    NoViablePath { trials: usize },
}

impl RtdpOutcome {
    pub fn solution(&self) -> Option<&Solution> {
        match self {
            RtdpOutcome::Solved { solution, .. } => Some(solution),
            RtdpOutcome::NoViablePath { .. } => None,
        }
    }
}

type State = (NodeId, u128);

struct Rtdp<'a> {
    inst: &'a ProblemInstance,
    bit_of: Vec<Option<u32>>,
    /// Missing entries are zero, an admissible initial estimate.
    values: HashMap<State, f64>,
}

impl Rtdp<'_> {
    fn value(&self, s: State) -> f64 {
        self.values.get(&s).copied().unwrap_or(0.0)
    }

    fn after(&self, s: State) -> (f64, u128) {
        let bit = 1u128 << self.bit_of[s.0].expect("non-terminal");
        let q = if s.1 & bit == 0 { 1.0 - self.inst.success_prob(s.0) } else { 1.0 };
        (q, s.1 | bit)
    }

    /// Greedy action and its Q-value, lowest id on ties.
    fn greedy(&self, s: State) -> (NodeId, f64) {
        let (q, history) = self.after(s);
        let mut best = (NodeId::MAX, f64::INFINITY);
        for &(u, l) in self.inst.neighbors(s.0) {
            let next = if self.inst.is_terminal(u) { 0.0 } else { self.value((u, history)) };
            let qv = q * (l + next);
            if qv < best.1 {
                best = (u, qv);
            }
        }
        best
    }
}

/// Real-time dynamic programming on the `(node, history)` MDP from a zero
/// initialization. Each trial walks from the start state taking greedy
/// actions, backs up every visited state, and samples success at first visits.
/// The greedy path from the start is returned once the budget is spent.
pub fn rtdp_solve(
    inst: &ProblemInstance,
    trial_budget: usize,
    seed: u64,
) -> Result<RtdpOutcome, SolveError> {
    if inst.terminals().is_empty() {
        return Err(SolveError::NoTerminal);
    }
    let start = inst.start();
    if inst.is_terminal(start) {
        let solution = Solution { path: Path::single(start), cost: ExtendedCost::ZERO };
        return Ok(RtdpOutcome::Solved { solution, trials: 0 });
    }
    if trial_budget == 0 || inst.nonterminals().len() > 128 {
        return Ok(RtdpOutcome::NoViablePath { trials: 0 });
    }
    let mut bit_of = vec![None; inst.node_count()];
    for (b, &v) in inst.nonterminals().iter().enumerate() {
        bit_of[v] = Some(b as u32);
    }
    let mut solver = Rtdp { inst, bit_of, values: HashMap::new() };
    let mut rng = rng::stream(seed, "rtdp");
    let max_steps = 10 * inst.node_count() + 100;

    for _ in 0..trial_budget {
        let mut s: State = (start, 0);
        for _ in 0..max_steps {
            let (u, qv) = solver.greedy(s);
            solver.values.insert(s, qv);
            let first_visit = s.1 & (1u128 << solver.bit_of[s.0].expect("non-terminal")) == 0;
            if first_visit && rng.random::<f64>() < inst.success_prob(s.0) {
                break;
            }
            if inst.is_terminal(u) {
                break;
            }
            s = (u, solver.after(s).1);
        }
    }

    // Greedy extraction; a repeated state means the policy is improper.
    let mut nodes = vec![start];
    let mut s: State = (start, 0);
    let mut seen = HashSet::new();
    loop {
        if !seen.insert(s) || nodes.len() > max_steps {
            return Ok(RtdpOutcome::NoViablePath { trials: trial_budget });
        }
        let (u, _) = solver.greedy(s);
        nodes.push(u);
        if inst.is_terminal(u) {
            break;
        }
        s = (u, solver.after(s).1);
    }
    let path = Path::new(nodes).expect("nonempty");
    let cost = expected_cost(inst, &path).expect("greedy path follows edges");
    Ok(RtdpOutcome::Solved { solution: Solution { path, cost }, trials: trial_budget })
}
