//! Comparison heuristics: greedy nearest-neighbor, straight to the closest
//! terminal, and simulated annealing over visiting orders.

use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::error::SolveError;
use crate::graph::{expected_cost, ExtendedCost, NodeId, Path, ProblemInstance};
use crate::rng::{self, Rng};
use crate::transforms::{all_pairs_shortest_paths, dijkstra, shortest_path, ShortestPathTable};

/// Greedy walk to the unvisited neighbor with the highest success
/// probability (lowest id on ties) until a terminal is reached. At a dead end
/// the walk retraces its steps to the most recent node that still has an
/// unvisited neighbor, paying for every retraced edge.
pub fn nearest_neighbor(inst: &ProblemInstance) -> Result<Path, SolveError> {
    if inst.terminals().is_empty() {
        return Err(SolveError::NoTerminal);
    }
    let start = inst.start();
    let mut visited = vec![false; inst.node_count()];
    visited[start] = true;
    let mut walk = vec![start];
    let mut stack = vec![start];
    while let Some(&cur) = stack.last() {
        if inst.is_terminal(cur) {
            return Ok(Path::new(walk).expect("nonempty"));
        }
        let next = inst
            .neighbors(cur)
            .iter()
            .map(|&(u, _)| u)
            .filter(|&u| !visited[u])
            .fold(None, |best: Option<NodeId>, u| match best {
                Some(b) if inst.success_prob(b) >= inst.success_prob(u) => Some(b),
                _ => Some(u),
            });
        match next {
            Some(u) => {
                visited[u] = true;
                stack.push(u);
                walk.push(u);
            }
            None => {
                stack.pop();
                if let Some(&back) = stack.last() {
                    walk.push(back);
                }
            }
        }
    }
    // A connected graph with a terminal is always explored up to it.
    Err(SolveError::NoProperPolicy)
}

/// Shortest path to the nearest terminal, lowest id among equally near ones.
pub fn closest_terminal(inst: &ProblemInstance) -> Result<Path, SolveError> {
    let dist = dijkstra(inst, inst.start());
    let target = inst
        .terminals()
        .iter()
        .copied()
        .fold(None, |best: Option<NodeId>, t| match best {
            Some(b) if dist[b] <= dist[t] => Some(b),
            _ => Some(t),
        })
        .ok_or(SolveError::NoTerminal)?;
    Ok(Path::new(shortest_path(inst, inst.start(), target)).expect("nonempty"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnealingConfig {
    /// `None` derives it from the spread of random-state energies.
    pub initial_temperature: Option<f64>,
    /// Geometric factor per temperature level; `1.0` keeps the temperature fixed.
    pub cooling_rate: f64,
    pub moves_per_temperature: usize,
    /// Total proposed moves.
    pub max_moves: usize,
    pub reversal_weight: f64,
    pub insertion_weight: f64,
    pub seed: u64,
}

impl Default for AnnealingConfig {
    fn default() -> Self {
        AnnealingConfig {
            initial_temperature: None,
            cooling_rate: 0.995,
            moves_per_temperature: 100,
            max_moves: 100_000,
            reversal_weight: 0.5,
            insertion_weight: 0.5,
            seed: 0,
        }
    }
}

impl AnnealingConfig {
    fn check(&self) {
        assert!(self.cooling_rate > 0.0 && self.cooling_rate <= 1.0, "cooling rate in (0,1]");
        assert!(self.moves_per_temperature > 0, "moves per temperature must be positive");
        assert!(self.reversal_weight >= 0.0 && self.insertion_weight >= 0.0);
        assert!(
            (self.reversal_weight + self.insertion_weight - 1.0).abs() < 1e-12,
            "move weights must sum to one"
        );
        if let Some(t) = self.initial_temperature {
            assert!(t > 0.0, "initial temperature must be positive");
        }
    }
}

/// Metropolis sampler over visiting orders of the non-terminal nodes other
/// than the start. A state's energy is the expected cost of the closure path
/// start, order..., nearest terminal.
pub struct Annealer<'a> {
    inst: &'a ProblemInstance,
    table: &'a ShortestPathTable,
    nearest: Vec<(NodeId, f64)>,
    cfg: AnnealingConfig,
    rng: Rng,
    order: Vec<NodeId>,
    energy: f64,
    temperature: f64,
    best_order: Vec<NodeId>,
    best_energy: f64,
    moves: usize,
}

impl<'a> Annealer<'a> {
    pub fn new(inst: &'a ProblemInstance, table: &'a ShortestPathTable, cfg: AnnealingConfig) -> Self {
        cfg.check();
        assert!(!inst.terminals().is_empty(), "annealing needs a terminal");
        let nearest = (0..inst.node_count())
            .map(|v| {
                inst.terminals()
                    .iter()
                    .map(|&t| (t, table.dist(v, t)))
                    .fold((NodeId::MAX, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a })
            })
            .collect();
        let mut rng = rng::stream(cfg.seed, "annealing");
        let start = inst.start();
        let mut order: Vec<NodeId> =
            inst.nonterminals().iter().copied().filter(|&v| v != start).collect();
        let mut this = Annealer {
            inst,
            table,
            nearest,
            cfg: cfg.clone(),
            rng: rng.clone(),
            order: Vec::new(),
            energy: 0.0,
            temperature: 1.0,
            best_order: Vec::new(),
            best_energy: f64::INFINITY,
            moves: 0,
        };
        let temperature = cfg.initial_temperature.unwrap_or_else(|| {
            let samples: Vec<f64> = (0..100)
                .map(|_| {
                    order.shuffle(&mut rng);
                    this.energy_of(&order)
                })
                .collect();
            let mean = samples.iter().sum::<f64>() / samples.len() as f64;
            let var = samples.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / samples.len() as f64;
            if var > 0.0 {
                var.sqrt()
            } else {
                1.0
            }
        });
        order.shuffle(&mut rng);
        this.rng = rng;
        this.energy = this.energy_of(&order);
        this.best_energy = this.energy;
        this.best_order = order.clone();
        this.order = order;
        this.temperature = temperature;
        this
    }

    /// Closure-path expected cost of visiting `order` after the start.
    pub fn energy_of(&self, order: &[NodeId]) -> f64 {
        let mut at = self.inst.start();
        let mut survival = 1.0 - self.inst.success_prob(at);
        let mut total = 0.0;
        for &v in order {
            total += survival * self.table.dist(at, v);
            survival *= 1.0 - self.inst.success_prob(v);
            at = v;
        }
        total + survival * self.nearest[at].1
    }

    pub fn order(&self) -> &[NodeId] {
        &self.order
    }

    pub fn energy(&self) -> f64 {
        self.energy
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn moves(&self) -> usize {
        self.moves
    }

    pub fn best_energy(&self) -> f64 {
        self.best_energy
    }

    /// Proposes one move and accepts it by the Metropolis rule.
    pub fn step(&mut self) {
        let k = self.order.len();
        self.moves += 1;
        if k >= 2 {
            let mut candidate = self.order.clone();
            if self.rng.random::<f64>() < self.cfg.reversal_weight {
                let i = self.rng.random_range(0..k);
                let mut j = self.rng.random_range(0..k - 1);
                if j >= i {
                    j += 1;
                }
                let (a, b) = (i.min(j), i.max(j));
                candidate[a..=b].reverse();
            } else {
                let i = self.rng.random_range(0..k);
                let mut j = self.rng.random_range(0..k - 1);
                if j >= i {
                    j += 1;
                }
                let v = candidate.remove(i);
                candidate.insert(j, v);
            }
            let e = self.energy_of(&candidate);
            let delta = e - self.energy;
            if delta <= 0.0 || self.rng.random::<f64>() < (-delta / self.temperature).exp() {
                self.order = candidate;
                self.energy = e;
                if e < self.best_energy {
                    self.best_energy = e;
                    self.best_order = self.order.clone();
                }
            }
        }
        if self.moves % self.cfg.moves_per_temperature == 0 {
            self.temperature *= self.cfg.cooling_rate;
        }
    }

    /// Best order seen, as a base-graph path cut at the first terminal.
    pub fn best_path(&self) -> Path {
        let mut comp = vec![self.inst.start()];
        comp.extend(&self.best_order);
        let last = *comp.last().expect("nonempty");
        comp.push(self.nearest[last].0);
        let mut nodes = vec![comp[0]];
        for w in comp.windows(2) {
            nodes.extend(self.table.path(w[0], w[1]).into_iter().skip(1));
        }
        let cut = nodes.iter().position(|&v| self.inst.is_terminal(v)).expect("ends at a terminal");
        nodes.truncate(cut + 1);
        Path::new(nodes).expect("nonempty")
    }
}

#[derive(Debug, Clone)]
pub struct AnnealingResult {
    pub path: Path,
    pub cost: ExtendedCost,
    /// Lowest closure energy seen.
    pub best_energy: f64,
    pub moves: usize,
}

/// Runs the annealer for `cfg.max_moves` proposals.
pub fn simulated_annealing(
    inst: &ProblemInstance,
    cfg: &AnnealingConfig,
) -> Result<AnnealingResult, SolveError> {
    if inst.terminals().is_empty() {
        return Err(SolveError::NoTerminal);
    }
    if inst.is_terminal(inst.start()) {
        return Ok(AnnealingResult {
            path: Path::single(inst.start()),
            cost: ExtendedCost::ZERO,
            best_energy: 0.0,
            moves: 0,
        });
    }
    let table = all_pairs_shortest_paths(inst);
    Ok(simulated_annealing_with_table(inst, &table, cfg))
}

/// As [`simulated_annealing`] with precomputed shortest paths.
pub fn simulated_annealing_with_table(
    inst: &ProblemInstance,
    table: &ShortestPathTable,
    cfg: &AnnealingConfig,
) -> AnnealingResult {
    let mut annealer = Annealer::new(inst, table, cfg.clone());
    for _ in 0..cfg.max_moves {
        annealer.step();
    }
    let path = annealer.best_path();
    let cost = expected_cost(inst, &path).expect("expanded path follows edges");
    AnnealingResult { path, cost, best_energy: annealer.best_energy(), moves: annealer.moves() }
}
