use std::time::Instant;

use rand::Rng as _;
use serde::Serialize;

use crate::game::{GameState, GameWeights, SuccessorProfile, DEFAULT_EPS_PRIME};
use crate::graph::{ExtendedCost, Path, ProblemInstance};
use crate::rng;

/// Player selection for best-reply dynamics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BestReplyOrder {
    /// Non-terminal nodes in ascending id order, pass after pass.
    #[default]
    RoundRobin,
    /// A uniformly random player each step.
    Random,
}

#[derive(Debug, Clone)]
pub struct BestReplyResult {
    pub profile: SuccessorProfile,
    /// Induced path from the start, when it reaches a terminal.
    pub path: Option<Path>,
    pub cost: ExtendedCost,
    /// Single-player updates up to and including the last one that changed
    /// the profile.
    pub iterations: usize,
    /// All single-player updates performed, including the final stable pass.
    pub steps: usize,
    /// False when the step cap stopped the run first.
    pub converged: bool,
}

/// Best-reply dynamics from the all-null profile until no player wants to
/// change. Round-robin order stops after a full pass without change; random
/// order stops once every player has been checked since the last change.
pub fn best_reply_solve(
    inst: &ProblemInstance,
    order: BestReplyOrder,
    seed: u64,
    w: &GameWeights,
) -> BestReplyResult {
    let players = inst.nonterminals();
    let m = players.len();
    let mut state = GameState::new(inst, *w);
    let mut steps = 0usize;
    let mut iterations = 0usize;
    let mut converged = false;

    match order {
        BestReplyOrder::RoundRobin => {
            // Convergence takes at most m passes with changes; the rest is slack.
            for _ in 0..=(2 * m + 2) {
                let mut changed = false;
                for &v in players {
                    steps += 1;
                    if state.best_reply(v) {
                        changed = true;
                        iterations = steps;
                    }
                }
                if !changed {
                    converged = true;
                    break;
                }
            }
        }
        BestReplyOrder::Random => {
            let mut rng = rng::stream(seed, "best_reply_order");
            let cap = 20 * m * m + 10_000;
            let mut checked = vec![false; inst.node_count()];
            let mut unchecked = m;
            while steps < cap && m > 0 {
                let v = players[rng.random_range(0..m)];
                steps += 1;
                if state.best_reply(v) {
                    iterations = steps;
                    checked.fill(false);
                    unchecked = m;
                }
                if !checked[v] {
                    checked[v] = true;
                    unchecked -= 1;
                    if unchecked == 0 {
                        converged = true;
                        break;
                    }
                }
            }
            converged |= m == 0;
        }
    }
    let profile = state.profile();
    let (path, cost) = outcome(inst, &profile, &state);
    BestReplyResult { profile, path, cost, iterations, steps, converged }
}

fn outcome(
    inst: &ProblemInstance,
    profile: &SuccessorProfile,
    state: &GameState<'_>,
) -> (Option<Path>, ExtendedCost) {
    if inst.is_terminal(inst.start()) {
        return (Some(Path::single(inst.start())), ExtendedCost::ZERO);
    }
    (profile.induced_path(inst), state.start_cost())
}

#[derive(Debug, Clone)]
pub struct LogLinearConfig {
    pub tau0: f64,
    /// The temperature at iteration `k` is `tau0 * k^(-decay_exponent)`; zero
    /// keeps it fixed.
    pub decay_exponent: f64,
    pub iterations: usize,
    pub seed: u64,
    pub eps_prime: f64,
}

impl Default for LogLinearConfig {
    fn default() -> Self {
        LogLinearConfig {
            tau0: 1.0,
            decay_exponent: 0.75,
            iterations: 100_000,
            seed: 0,
            eps_prime: DEFAULT_EPS_PRIME,
        }
    }
}

impl LogLinearConfig {
    pub fn temperature(&self, k: usize) -> f64 {
        self.tau0 * (k as f64).powf(-self.decay_exponent)
    }
}

/// One improvement of the tracked best profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TracePoint {
    pub iteration: usize,
    pub wall_time_s: f64,
    pub best_cost: ExtendedCost,
}

#[derive(Debug, Clone)]
pub struct LogLinearResult {
    /// Lowest-potential profile visited. While no visited profile has finite
    /// potential, the one with the lowest start cost.
    pub profile: SuccessorProfile,
    pub path: Option<Path>,
    pub cost: ExtendedCost,
    pub potential: ExtendedCost,
    pub trace: Vec<TracePoint>,
}

/// Log-linear learning from the all-null profile: each iteration a uniformly
/// random player samples a feasible action from the softmax of its local
/// cost at a decaying temperature.
pub fn log_linear_solve(inst: &ProblemInstance, cfg: &LogLinearConfig) -> LogLinearResult {
    let w = GameWeights::new(cfg.eps_prime, inst.start());
    let players = inst.nonterminals();
    let mut state = GameState::new(inst, w);
    let mut rng = rng::stream(cfg.seed, "log_linear");
    let clock = Instant::now();

    let mut best_profile = state.profile();
    let mut best_phi = ExtendedCost::INFINITE;
    let mut best_cost = ExtendedCost::INFINITE;
    let mut trace = Vec::new();

    for k in 1..=cfg.iterations {
        if players.is_empty() {
            break;
        }
        let v = players[rng.random_range(0..players.len())];
        state.log_linear(v, cfg.temperature(k), &mut rng);
        let phi = state.potential();
        let cost = state.start_cost();
        let better = k == 1 || phi < best_phi || (best_phi.is_infinite() && cost < best_cost);
        if better {
            best_phi = phi;
            let improved = cost != best_cost;
            best_cost = cost;
            best_profile = state.profile();
            if improved || trace.is_empty() {
                trace.push(TracePoint {
                    iteration: k,
                    wall_time_s: clock.elapsed().as_secs_f64(),
                    best_cost: cost,
                });
            }
        }
    }

    let (path, cost) = if inst.is_terminal(inst.start()) {
        (Some(Path::single(inst.start())), ExtendedCost::ZERO)
    } else {
        (best_profile.induced_path(inst), best_cost)
    };
    LogLinearResult { profile: best_profile, path, cost, potential: best_phi, trace }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transforms::build_complete_graph;

    fn line4() -> ProblemInstance {
        ProblemInstance::new(vec![0.9, 0.1, 0.1, 1.0], [(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0)], 1)
            .unwrap()
    }

    #[test]
    fn best_reply_on_closure_finds_revisit() {
        let ci = build_complete_graph(&line4());
        let w = GameWeights::for_instance(&ci.comp);
        let r = best_reply_solve(&ci.comp, BestReplyOrder::RoundRobin, 0, &w);
        assert!(r.converged);
        assert_eq!(r.path.unwrap().nodes(), &[1, 0, 2, 3]);
        assert!((r.cost.value() - 1.161).abs() < 1e-12);
        assert!(r.iterations <= 9);
    }

    #[test]
    fn best_reply_on_base_graph_is_simple() {
        let inst = line4();
        let w = GameWeights::for_instance(&inst);
        for order in [BestReplyOrder::RoundRobin, BestReplyOrder::Random] {
            let r = best_reply_solve(&inst, order, 4, &w);
            assert!(r.converged);
            assert_eq!(r.path.unwrap().nodes(), &[1, 2, 3]);
            assert!((r.cost.value() - 1.71).abs() < 1e-12);
        }
    }

    #[test]
    fn chain_ordered_from_terminal_converges_in_one_pass() {
        // 3 - 2 - 1 - 0(terminal), start 3: ascending ids meet the terminal first
        let inst = ProblemInstance::new(
            vec![1.0, 0.2, 0.2, 0.2],
            [(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0)],
            3,
        )
        .unwrap();
        let w = GameWeights::for_instance(&inst);
        let r = best_reply_solve(&inst, BestReplyOrder::RoundRobin, 0, &w);
        assert_eq!(r.iterations, 3);
        assert_eq!(r.steps, 6);
        assert_eq!(r.path.unwrap().nodes(), &[3, 2, 1, 0]);
    }

    #[test]
    fn log_linear_on_closure_reaches_optimum() {
        let ci = build_complete_graph(&line4());
        let cfg = LogLinearConfig { iterations: 100_000, seed: 11, ..Default::default() };
        let r = log_linear_solve(&ci.comp, &cfg);
        assert!((r.cost.value() - 1.161).abs() < 1e-12, "{}", r.cost);
        assert_eq!(r.trace.last().unwrap().best_cost, r.cost);
    }

    #[test]
    fn single_iteration_returns_visited_profile() {
        let inst = line4();
        let cfg = LogLinearConfig { iterations: 1, seed: 2, ..Default::default() };
        let r = log_linear_solve(&inst, &cfg);
        assert_eq!(r.trace.len(), 1);
        assert_eq!(r.trace[0].iteration, 1);
        assert!(r.profile.choices().iter().filter(|c| c.is_some()).count() <= 1);
    }

    #[test]
    fn schedule() {
        let cfg = LogLinearConfig { tau0: 2.0, decay_exponent: 0.75, ..Default::default() };
        assert_eq!(cfg.temperature(1), 2.0);
        assert!((cfg.temperature(16) - 2.0 / 8.0).abs() < 1e-15);
    }
}
