//! Evaluation of planned paths against the true probabilities: analytic
//! expected cost, Monte-Carlo realizations, and method comparison tables.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::Rng as _;
use rayon::prelude::*;
use serde::Serialize;

use crate::baselines::{closest_terminal, nearest_neighbor, simulated_annealing, AnnealingConfig};
use crate::error::SolveError;
use crate::exact::{
    brute_force_optimum, extract_optimal_path, optimal_search, rtdp_solve, value_iteration_exact,
    SearchConfig, DEFAULT_SIZE_CAP,
};
use crate::game::{best_reply_solve, log_linear_solve, BestReplyOrder, GameWeights, LogLinearConfig};
use crate::graph::{
    expected_cost, failure_probability, truncated_expected_cost, ExtendedCost, Path,
    ProblemInstance,
};
use crate::idag::{idag_value_iteration, impose_dag};
use crate::rng;
use crate::transforms::{build_complete_graph, expand_simple_path, nt_reduction};

/// Realizations simulated per parallel work unit.
const CHUNK: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McEstimate {
    pub mean: f64,
    /// Population standard deviation of the per-realization distances.
    pub std: f64,
    pub realizations: usize,
}

/// Distance traveled along `path` until the first success, drawing every
/// first-visited node's outcome independently. A realization without any
/// success travels the whole path. Realization `i` uses its own stream, so
/// the result does not depend on the thread count.
pub fn simulate_realizations(
    truth: &ProblemInstance,
    path: &Path,
    n_realizations: usize,
    seed: u64,
) -> McEstimate {
    let nodes = path.nodes();
    let mut seen = vec![false; truth.node_count()];
    let first_visit: Vec<bool> = nodes.iter().map(|&v| !std::mem::replace(&mut seen[v], true)).collect();
    let steps: Vec<f64> = nodes
        .windows(2)
        .map(|w| truth.edge_cost(w[0], w[1]).expect("path follows edges"))
        .collect();

    let walk = |i: usize| -> f64 {
        let mut rng = rng::indexed_stream(seed, "realization", i as u64);
        let mut traveled = 0.0;
        for (k, &v) in nodes.iter().enumerate() {
            if first_visit[k] {
                let p = truth.success_prob(v);
                if p >= 1.0 || (p > 0.0 && rng.random::<f64>() < p) {
                    return traveled;
                }
            }
            if k < steps.len() {
                traveled += steps[k];
            }
        }
        traveled
    };

    let chunks: Vec<(f64, f64)> = (0..n_realizations.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let range = c * CHUNK..((c + 1) * CHUNK).min(n_realizations);
            range.map(walk).fold((0.0, 0.0), |(s, q), d| (s + d, q + d * d))
        })
        .collect();
    let (sum, sum_sq) = chunks.iter().fold((0.0, 0.0), |(s, q), &(a, b)| (s + a, q + b));
    if n_realizations == 0 {
        return McEstimate { mean: 0.0, std: 0.0, realizations: 0 };
    }
    let n = n_realizations as f64;
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean).max(0.0);
    McEstimate { mean, std: var.sqrt(), realizations: n_realizations }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Exact,
    Brute,
    Search,
    BestReply,
    LogLinear,
    Idag,
    Nn,
    Closest,
    Sa,
    Rtdp,
}

impl Method {
    pub const ALL: [Method; 10] = [
        Method::Exact,
        Method::Brute,
        Method::Search,
        Method::BestReply,
        Method::LogLinear,
        Method::Idag,
        Method::Nn,
        Method::Closest,
        Method::Sa,
        Method::Rtdp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Exact => "exact",
            Method::Brute => "brute",
            Method::Search => "search",
            Method::BestReply => "bestreply",
            Method::LogLinear => "loglinear",
            Method::Idag => "idag",
            Method::Nn => "nn",
            Method::Closest => "closest",
            Method::Sa => "sa",
            Method::Rtdp => "rtdp",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown method `{s}`"))
    }
}

/// Which graph the game solvers play on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum GameGraph {
    #[default]
    Base,
    /// The metric closure; the resulting path is expanded back.
    Complete,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodParams {
    pub graph: GameGraph,
    pub order: BestReplyOrder,
    pub eps_prime: f64,
    pub tau0: f64,
    pub tau_exponent: f64,
    /// Log-linear iterations, annealing moves and RTDP trials.
    pub budget: usize,
    pub exact_cap: usize,
    pub search: SearchConfig,
    pub annealing: AnnealingConfig,
}

impl Default for MethodParams {
    fn default() -> Self {
        MethodParams {
            graph: GameGraph::Base,
            order: BestReplyOrder::RoundRobin,
            eps_prime: crate::game::DEFAULT_EPS_PRIME,
            tau0: 1.0,
            tau_exponent: 0.75,
            budget: 100_000,
            exact_cap: DEFAULT_SIZE_CAP,
            search: SearchConfig::default(),
            annealing: AnnealingConfig::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct MethodOutput {
    pub path: Path,
    /// Objective of the path on the instance it was planned on.
    pub cost: ExtendedCost,
    pub wall_time_s: f64,
}

/// Runs one solver. Instances without terminals are solved through their
/// terminal reduction and the added terminal is dropped from the path.
pub fn run_method(
    inst: &ProblemInstance,
    method: Method,
    params: &MethodParams,
    seed: u64,
) -> Result<MethodOutput, SolveError> {
    let clock = Instant::now();
    let path = if inst.terminals().is_empty() {
        let red = nt_reduction(inst)?;
        let mut nodes = solve_path(&red.instance, method, params, seed)?.into_nodes();
        if nodes.last() == Some(&red.terminal) {
            nodes.pop();
        }
        Path::new(nodes).expect("reduced path keeps the start")
    } else {
        solve_path(inst, method, params, seed)?
    };
    let wall_time_s = clock.elapsed().as_secs_f64();
    let cost = objective(inst, &path);
    Ok(MethodOutput { path, cost, wall_time_s })
}

/// Expected cost of a path, or its truncated form when it never reaches a
/// terminal (the total-failure event then pays for the whole path).
pub fn objective(inst: &ProblemInstance, path: &Path) -> ExtendedCost {
    if path.reaches_terminal(inst) {
        expected_cost(inst, path).expect("solver paths follow edges")
    } else {
        ExtendedCost::finite(truncated_expected_cost(inst, path).expect("solver paths follow edges"))
    }
}

fn solve_path(
    inst: &ProblemInstance,
    method: Method,
    params: &MethodParams,
    seed: u64,
) -> Result<Path, SolveError> {
    match method {
        Method::Exact => {
            let vt = value_iteration_exact(inst, params.exact_cap)?;
            extract_optimal_path(&vt, inst)
        }
        Method::Brute => Ok(brute_force_optimum(inst)?.path),
        Method::Search => Ok(optimal_search(inst, &params.search)?.path),
        Method::BestReply => on_game_graph(inst, params.graph, |g| {
            let w = GameWeights::new(params.eps_prime, g.start());
            best_reply_solve(g, params.order, seed, &w).path
        }),
        Method::LogLinear => on_game_graph(inst, params.graph, |g| {
            let cfg = LogLinearConfig {
                tau0: params.tau0,
                decay_exponent: params.tau_exponent,
                iterations: params.budget,
                seed,
                eps_prime: params.eps_prime,
            };
            log_linear_solve(g, &cfg).path
        }),
        Method::Idag => Ok(idag_value_iteration(inst, &impose_dag(inst))?.path),
        Method::Nn => nearest_neighbor(inst),
        Method::Closest => closest_terminal(inst),
        Method::Sa => {
            let cfg = AnnealingConfig { max_moves: params.budget, seed, ..params.annealing.clone() };
            Ok(simulated_annealing(inst, &cfg)?.path)
        }
        Method::Rtdp => rtdp_solve(inst, params.budget, seed)?
            .solution()
            .map(|s| s.path.clone())
            .ok_or(SolveError::BudgetExhausted(params.budget)),
    }
}

fn on_game_graph(
    inst: &ProblemInstance,
    graph: GameGraph,
    solve: impl Fn(&ProblemInstance) -> Option<Path>,
) -> Result<Path, SolveError> {
    match graph {
        GameGraph::Base => solve(inst).ok_or(SolveError::NoProperPolicy),
        GameGraph::Complete => {
            let ci = build_complete_graph(inst);
            let comp_path = solve(&ci.comp).ok_or(SolveError::NoProperPolicy)?;
            Ok(expand_simple_path(&ci, &comp_path))
        }
    }
}

/// One method on one instance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalRow {
    pub method: String,
    pub instance_id: String,
    pub expected_cost_plan: Option<f64>,
    pub expected_cost_truth: Option<f64>,
    pub mc_mean: Option<f64>,
    pub mc_std: Option<f64>,
    pub fail_prob: Option<f64>,
    pub wall_time_s: Option<f64>,
    pub seed: u64,
    /// Solver failure, empty on success.
    pub error: String,
}

/// Runs every method on `planning` and scores its path on `truth`. Each
/// method gets the same seed, and realizations share one stream family so
/// methods are compared on common random numbers.
pub fn compare_methods(
    planning: &ProblemInstance,
    truth: &ProblemInstance,
    methods: &[Method],
    params: &MethodParams,
    realizations: usize,
    seed: u64,
    instance_id: &str,
) -> Vec<EvalRow> {
    assert_eq!(planning.node_count(), truth.node_count(), "instances must share node ids");
    let mc_seed = rng::derive_seed(seed, "realizations");
    methods
        .iter()
        .map(|&method| match run_method(planning, method, params, seed) {
            Ok(out) => {
                let mc = (realizations > 0)
                    .then(|| simulate_realizations(truth, &out.path, realizations, mc_seed));
                EvalRow {
                    method: method.to_string(),
                    instance_id: instance_id.to_string(),
                    expected_cost_plan: out.cost.finite_value(),
                    expected_cost_truth: objective(truth, &out.path).finite_value(),
                    mc_mean: mc.map(|m| m.mean),
                    mc_std: mc.map(|m| m.std),
                    fail_prob: Some(failure_probability(truth, &out.path).expect("valid path")),
                    wall_time_s: Some(out.wall_time_s),
                    seed,
                    error: String::new(),
                }
            }
            Err(e) => EvalRow {
                method: method.to_string(),
                instance_id: instance_id.to_string(),
                expected_cost_plan: None,
                expected_cost_truth: None,
                mc_mean: None,
                mc_std: None,
                fail_prob: None,
                wall_time_s: None,
                seed,
                error: e.to_string(),
            },
        })
        .collect()
}

/// Per-method aggregate over instances.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodSummary {
    pub method: String,
    pub instances: usize,
    pub failures: usize,
    pub mean_truth: f64,
    /// Spread of the truth-map expected cost across instances.
    pub std_truth: f64,
    pub mean_mc: Option<f64>,
    /// Spread of the realization distances, pooled over instances.
    pub std_mc_pooled: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
}

impl EvalReport {
    pub fn extend(&mut self, rows: impl IntoIterator<Item = EvalRow>) {
        self.rows.extend(rows);
    }

    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| !r.error.is_empty()).count()
    }

    /// CSV with a header row. Without wall times the column is left empty so
    /// that reruns are byte-identical.
    pub fn to_csv(&self, wall_time: bool) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        for row in &self.rows {
            let mut row = row.clone();
            if !wall_time {
                row.wall_time_s = None;
            }
            w.serialize(row).expect("write to memory");
        }
        if self.rows.is_empty() {
            w.write_record([
                "method",
                "instance_id",
                "expected_cost_plan",
                "expected_cost_truth",
                "mc_mean",
                "mc_std",
                "fail_prob",
                "wall_time_s",
                "seed",
                "error",
            ])
            .expect("write to memory");
        }
        String::from_utf8(w.into_inner().expect("flush to memory")).expect("utf8")
    }

    pub fn to_json(&self, wall_time: bool) -> serde_json::Value {
        let rows: Vec<EvalRow> = self
            .rows
            .iter()
            .cloned()
            .map(|mut r| {
                if !wall_time {
                    r.wall_time_s = None;
                }
                r
            })
            .collect();
        serde_json::json!({ "rows": rows, "summary": self.summarize() })
    }

    /// Aggregates in first-appearance order of the methods.
    pub fn summarize(&self) -> Vec<MethodSummary> {
        let mut order: Vec<&str> = Vec::new();
        for r in &self.rows {
            if !order.contains(&r.method.as_str()) {
                order.push(&r.method);
            }
        }
        order
            .into_iter()
            .map(|method| {
                let rows: Vec<&EvalRow> = self.rows.iter().filter(|r| r.method == method).collect();
                let truth: Vec<f64> = rows.iter().filter_map(|r| r.expected_cost_truth).collect();
                let (mean_truth, std_truth) = mean_std(&truth);
                let mc: Vec<(f64, f64)> =
                    rows.iter().filter_map(|r| Some((r.mc_mean?, r.mc_std?))).collect();
                let (mean_mc, std_mc_pooled) = if mc.is_empty() {
                    (None, None)
                } else {
                    // equal realization counts per instance: pool second moments
                    let k = mc.len() as f64;
                    let mean = mc.iter().map(|m| m.0).sum::<f64>() / k;
                    let second = mc.iter().map(|m| m.1 * m.1 + m.0 * m.0).sum::<f64>() / k;
                    (Some(mean), Some((second - mean * mean).max(0.0).sqrt()))
                };
                MethodSummary {
                    method: method.to_string(),
                    instances: rows.len(),
                    failures: rows.iter().filter(|r| !r.error.is_empty()).count(),
                    mean_truth,
                    std_truth,
                    mean_mc,
                    std_mc_pooled,
                }
            })
            .collect()
    }
}

/// Mean and population standard deviation; zeros for an empty slice.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}
