#![allow(dead_code)]

use std::collections::VecDeque;
use std::ops::Range;

use expcost::game::SuccessorProfile;
use expcost::rng::{self, Rng};
use expcost::{NodeId, ProblemInstance};
use rand::seq::SliceRandom;
use rand::Rng as _;

/// Random connected instance with a node count and a terminal count drawn
/// from the given ranges. About a quarter of the non-terminal probabilities
/// are zero.
pub fn random_instance(rng: &mut Rng, nodes: Range<usize>, terminals: Range<usize>) -> ProblemInstance {
    let n = rng.random_range(nodes);
    let terminals = rng.random_range(terminals).min(n - 1);
    let mut edges = Vec::new();
    for v in 1..n {
        let u = rng.random_range(0..v);
        edges.push((u, v, rng.random_range(0.5..3.0)));
    }
    for u in 0..n {
        for v in u + 1..n {
            if rng.random::<f64>() < 0.25 && !edges.iter().any(|&(a, b, _)| a == u && b == v) {
                edges.push((u, v, rng.random_range(0.5..3.0)));
            }
        }
    }
    let mut ids: Vec<NodeId> = (0..n).collect();
    ids.shuffle(rng);
    let mut p: Vec<f64> = (0..n)
        .map(|_| if rng.random::<f64>() < 0.25 { 0.0 } else { rng.random_range(0.0..0.9) })
        .collect();
    for &t in &ids[..terminals] {
        p[t] = 1.0;
    }
    let start = ids[terminals..][rng.random_range(0..n - terminals)];
    ProblemInstance::new(p, edges, start).unwrap()
}

/// Random instance with at most `max_nonterminals` non-terminal nodes.
pub fn small_instance(seed: u64, max_nonterminals: usize) -> ProblemInstance {
    let mut rng = rng::stream(seed, "test-instance");
    let terminals = rng.random_range(1..=2);
    let m = rng.random_range(1..=max_nonterminals);
    random_instance(&mut rng, m + terminals..m + terminals + 1, terminals..terminals + 1)
}

/// A random profile whose successor graph is a forest rooted at terminals,
/// grown outward from the terminals in random order.
pub fn random_asg_profile(inst: &ProblemInstance, rng: &mut Rng) -> SuccessorProfile {
    let n = inst.node_count();
    let mut choice = vec![None; n];
    let mut in_forest = vec![false; n];
    let mut frontier: Vec<NodeId> = inst.terminals().to_vec();
    for &t in &frontier {
        in_forest[t] = true;
    }
    let mut queue: VecDeque<NodeId> = frontier.drain(..).collect();
    while let Some(x) = queue.pop_front() {
        let mut nbrs: Vec<NodeId> = inst.neighbors(x).iter().map(|&(u, _)| u).collect();
        nbrs.shuffle(rng);
        for u in nbrs {
            if !in_forest[u] {
                in_forest[u] = true;
                // attach to a random neighbor already in the forest
                let anchors: Vec<NodeId> =
                    inst.neighbors(u).iter().map(|&(a, _)| a).filter(|&a| in_forest[a] && a != u).collect();
                choice[u] = Some(anchors[rng.random_range(0..anchors.len())]);
                queue.push_back(u);
            }
        }
    }
    SuccessorProfile::from_choices(inst, choice).expect("forest profile is well formed")
}

/// Uniformly random choices, null with probability 0.15.
pub fn random_profile(inst: &ProblemInstance, rng: &mut Rng) -> SuccessorProfile {
    let choice = (0..inst.node_count())
        .map(|v| {
            if inst.is_terminal(v) || rng.random::<f64>() < 0.15 {
                None
            } else {
                let nbrs = inst.neighbors(v);
                Some(nbrs[rng.random_range(0..nbrs.len())].0)
            }
        })
        .collect();
    SuccessorProfile::from_choices(inst, choice).expect("neighbors only")
}

/// 4-neighbor unit grid with the given probabilities.
pub fn grid(n: usize, p: Vec<f64>, start: NodeId) -> ProblemInstance {
    ProblemInstance::new(p, expcost::scenarios::grid_edges(n, 1.0), start).unwrap()
}

pub fn line4() -> ProblemInstance {
    ProblemInstance::new(vec![0.9, 0.1, 0.1, 1.0], [(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0)], 1).unwrap()
}
