use crate::game::{profile_costs, sample, GameWeights, SuccessorProfile};
use crate::graph::{ExtendedCost, NodeId, ProblemInstance};

/// Cost writes between full recomputations of the potential's running sum.
const RESYNC_INTERVAL: usize = 256;

/// A profile with its costs, predecessor lists and potential kept up to date
/// under single-player updates.
///
/// Changing the choice of `v` only changes the costs of `v`'s upstream set,
/// which is found by a breadth-first walk over predecessor lists. Along that
/// set every cost is affine in `C_v`, `C_x = A_x + B_x C_v`, so the local
/// cost of `v` differs between actions only through `B = sum alpha_x B_x`.
#[derive(Debug, Clone)]
pub struct GameState<'a> {
    inst: &'a ProblemInstance,
    weights: GameWeights,
    choice: Vec<Option<NodeId>>,
    choice_cost: Vec<f64>,
    children: Vec<Vec<NodeId>>,
    cost: Vec<f64>,
    mark: Vec<u32>,
    epoch: u32,
    /// Upstream set of the last collected player, in breadth-first order.
    upstream: Vec<NodeId>,
    upstream_weight: f64,
    finite_sum: f64,
    infinite_count: usize,
    writes: usize,
}

impl<'a> GameState<'a> {
    /// The all-null profile.
    pub fn new(inst: &'a ProblemInstance, weights: GameWeights) -> Self {
        Self::from_profile(inst, weights, &SuccessorProfile::all_null(inst.node_count()))
    }

    pub fn from_profile(
        inst: &'a ProblemInstance,
        weights: GameWeights,
        profile: &SuccessorProfile,
    ) -> Self {
        let n = inst.node_count();
        let choice = profile.choices().to_vec();
        let choice_cost = choice
            .iter()
            .enumerate()
            .map(|(v, c)| c.map_or(0.0, |u| inst.edge_cost(v, u).expect("neighbor")))
            .collect();
        let cost = profile_costs(inst, profile).cost.into_iter().map(|c| c.value()).collect();
        let mut state = GameState {
            inst,
            weights,
            choice,
            choice_cost,
            children: profile.children(),
            cost,
            mark: vec![0; n],
            epoch: 0,
            upstream: Vec::new(),
            upstream_weight: 0.0,
            finite_sum: 0.0,
            infinite_count: 0,
            writes: 0,
        };
        state.resync();
        state
    }

    fn resync(&mut self) {
        self.finite_sum = 0.0;
        self.infinite_count = 0;
        for &v in self.inst.nonterminals() {
            let c = self.cost[v];
            if !c.is_finite() {
                self.infinite_count += 1;
            } else if v != self.weights.start {
                self.finite_sum += c;
            }
        }
        self.writes = 0;
    }

    pub fn instance(&self) -> &'a ProblemInstance {
        self.inst
    }

    pub fn weights(&self) -> &GameWeights {
        &self.weights
    }

    pub fn choice(&self, v: NodeId) -> Option<NodeId> {
        self.choice[v]
    }

    pub fn cost(&self, v: NodeId) -> ExtendedCost {
        ExtendedCost::from_f64(self.cost[v])
    }

    /// All current costs, infinite entries as `f64::INFINITY`.
    pub fn costs(&self) -> &[f64] {
        &self.cost
    }

    pub fn start_cost(&self) -> ExtendedCost {
        self.cost(self.inst.start())
    }

    pub fn profile(&self) -> SuccessorProfile {
        SuccessorProfile { choice: self.choice.clone() }
    }

    /// Current potential from the running sums.
    pub fn potential(&self) -> ExtendedCost {
        if self.infinite_count > 0 {
            return ExtendedCost::INFINITE;
        }
        let start = self.weights.start;
        let own = if self.inst.is_terminal(start) { 0.0 } else { self.cost[start] };
        ExtendedCost::finite(own + self.weights.eps_prime * self.finite_sum)
    }

    /// True when every non-terminal node has finite cost.
    pub fn is_acyclic_forest(&self) -> bool {
        self.infinite_count == 0
    }

    /// Marks the upstream set of `v` and accumulates its weight `B`.
    fn collect_upstream(&mut self, v: NodeId) {
        self.epoch = self.epoch.wrapping_add(1);
        if self.epoch == 0 {
            self.mark.fill(0);
            self.epoch = 1;
        }
        self.upstream.clear();
        self.upstream.push(v);
        self.mark[v] = self.epoch;
        // factors[i] is B of upstream[i]
        let mut factors = vec![1.0];
        self.upstream_weight = self.weights.alpha(v);
        let mut head = 0;
        while head < self.upstream.len() {
            let x = self.upstream[head];
            let bx = factors[head];
            head += 1;
            for i in 0..self.children[x].len() {
                let y = self.children[x][i];
                if self.mark[y] != self.epoch {
                    self.mark[y] = self.epoch;
                    let by = (1.0 - self.inst.success_prob(y)) * bx;
                    self.upstream.push(y);
                    factors.push(by);
                    self.upstream_weight += self.weights.alpha(y) * by;
                }
            }
        }
    }

    /// Feasible actions of the last collected player with their resulting
    /// own cost `(1 - p_v)(l_vu + C_u)`, in ascending neighbor order.
    fn candidates(&self, v: NodeId) -> Vec<(NodeId, f64)> {
        let q = 1.0 - self.inst.success_prob(v);
        self.inst
            .neighbors(v)
            .iter()
            .filter(|&&(u, _)| {
                self.inst.is_terminal(u) || (self.mark[u] != self.epoch && self.cost[u].is_finite())
            })
            .map(|&(u, l)| (u, q * (l + self.cost[u])))
            .collect()
    }

    /// Feasible actions of `v` under the current profile.
    pub fn feasible_actions(&mut self, v: NodeId) -> Vec<NodeId> {
        self.collect_upstream(v);
        self.candidates(v).into_iter().map(|(u, _)| u).collect()
    }

    /// The upstream set of `v`, sorted.
    pub fn upstream_set(&mut self, v: NodeId) -> Vec<NodeId> {
        self.collect_upstream(v);
        let mut out = self.upstream.clone();
        out.sort_unstable();
        out
    }

    /// Best reply of `v`; returns whether its choice changed.
    pub fn best_reply(&mut self, v: NodeId) -> bool {
        if self.inst.is_terminal(v) {
            return false;
        }
        self.collect_upstream(v);
        let mut best: Option<(NodeId, f64)> = None;
        for (u, x) in self.candidates(v) {
            if best.is_none_or(|(_, b)| x < b) {
                best = Some((u, x));
            }
        }
        self.apply(v, best.map(|(u, _)| u))
    }

    /// Log-linear update of `v` at temperature `tau`; returns whether its
    /// choice changed.
    pub fn log_linear(&mut self, v: NodeId, tau: f64, rng: &mut impl rand::Rng) -> bool {
        if self.inst.is_terminal(v) {
            return false;
        }
        let probs = self.log_linear_probabilities(v, tau);
        let pick = sample(&probs, rng.random::<f64>());
        self.apply(v, pick)
    }

    /// Sampling distribution of a log-linear update of `v`.
    pub fn log_linear_probabilities(&mut self, v: NodeId, tau: f64) -> Vec<(NodeId, f64)> {
        self.collect_upstream(v);
        let cands = self.candidates(v);
        let xs: Vec<f64> = cands.iter().map(|&(_, x)| self.upstream_weight * x).collect();
        crate::game::softmax(&xs, tau).into_iter().zip(&cands).map(|(p, &(u, _))| (u, p)).collect()
    }

    /// Sets the choice of `v` and refreshes the costs of its upstream set,
    /// which must have been collected for `v` just before.
    fn apply(&mut self, v: NodeId, new: Option<NodeId>) -> bool {
        if self.choice[v] == new {
            return false;
        }
        if let Some(old) = self.choice[v] {
            let list = &mut self.children[old];
            let pos = list.iter().position(|&x| x == v).expect("child recorded");
            list.swap_remove(pos);
        }
        self.choice[v] = new;
        match new {
            Some(u) => {
                self.children[u].push(v);
                self.choice_cost[v] = self.inst.edge_cost(v, u).expect("neighbor");
            }
            None => self.choice_cost[v] = 0.0,
        }
        for i in 0..self.upstream.len() {
            let x = self.upstream[i];
            let c = match self.choice[x] {
                Some(u) => {
                    let after = self.cost[u];
                    if after.is_finite() {
                        (1.0 - self.inst.success_prob(x)) * (self.choice_cost[x] + after)
                    } else {
                        f64::INFINITY
                    }
                }
                None => f64::INFINITY,
            };
            self.write_cost(x, c);
        }
        if self.writes >= RESYNC_INTERVAL.max(self.inst.node_count()) {
            self.resync();
        }
        true
    }

    fn write_cost(&mut self, x: NodeId, c: f64) {
        let old = self.cost[x];
        if old == c {
            return;
        }
        let counted = x != self.weights.start;
        match (old.is_finite(), c.is_finite()) {
            (true, true) => {
                if counted {
                    self.finite_sum += c - old;
                }
            }
            (true, false) => {
                self.infinite_count += 1;
                if counted {
                    self.finite_sum -= old;
                }
            }
            (false, true) => {
                self.infinite_count -= 1;
                if counted {
                    self.finite_sum += c;
                }
            }
            (false, false) => {}
        }
        self.cost[x] = c;
        self.writes += 1;
    }
}
