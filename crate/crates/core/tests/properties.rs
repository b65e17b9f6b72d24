mod common;

use common::{random_asg_profile, random_instance, random_profile, small_instance};
use expcost::baselines::{closest_terminal, nearest_neighbor};
use expcost::exact::{
    brute_force_optimum, extract_optimal_path, optimal_search, value_iteration_exact, SearchConfig,
};
use expcost::game::{
    best_reply_solve, feasible_actions, local_cost, potential, profile_costs, BestReplyOrder,
    GameState, GameWeights, SuccessorProfile,
};
use expcost::graph::{expected_cost_closed_form, truncated_expected_cost};
use expcost::idag::{idag_value_iteration, idag_value_iteration_synchronous, impose_dag};
use expcost::rng;
use expcost::scenarios::{gen_grid, GridSpec, GRID_MAX_PROB};
use expcost::transforms::{
    all_pairs_shortest_paths, build_complete_graph, compress_path, expand_simple_path, nt_reduction,
};
use expcost::{expected_cost, failure_probability, Path, ProblemInstance};
use proptest::prelude::*;
use rand::Rng as _;

fn random_walk(inst: &ProblemInstance, rng: &mut rng::Rng, len: usize) -> Path {
    let mut nodes = vec![inst.start()];
    for _ in 1..len {
        let nbrs = inst.neighbors(*nodes.last().unwrap());
        nodes.push(nbrs[rng.random_range(0..nbrs.len())].0);
    }
    Path::new(nodes).unwrap()
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn recursion_matches_closed_form(seed in any::<u64>(), len in 1usize..20) {
        let mut rng = rng::stream(seed, "walk");
        let inst = random_instance(&mut rng, 2..12, 0..2);
        let path = random_walk(&inst, &mut rng, len);
        let rec = expected_cost(&inst, &path).unwrap();
        let closed = expected_cost_closed_form(&inst, &path).unwrap();
        prop_assert_eq!(rec.is_infinite(), closed.is_infinite());
        if rec.is_finite() {
            prop_assert!(close(rec.value(), closed.value(), 1e-12));
        }
        let fail = failure_probability(&inst, &path).unwrap();
        prop_assert_eq!(rec.is_infinite(), fail > 0.0);
    }

    #[test]
    fn inserted_revisits_only_add_cost(seed in any::<u64>(), len in 2usize..15) {
        let mut rng = rng::stream(seed, "revisit");
        let inst = random_instance(&mut rng, 3..10, 1..2);
        let path = random_walk(&inst, &mut rng, len);
        let nodes = path.nodes();
        // insert a back-and-forth over an edge already walked, before any terminal
        let first_terminal = nodes.iter().position(|&v| inst.is_terminal(v)).unwrap_or(nodes.len());
        prop_assume!(first_terminal >= 2);
        let k = rng.random_range(1..first_terminal);
        let mut longer = nodes[..=k].to_vec();
        longer.push(nodes[k - 1]);
        longer.extend_from_slice(&nodes[k..]);
        let longer = Path::new(longer).unwrap();
        prop_assert_eq!(compress_path(&inst, &path), compress_path(&inst, &longer));
        let survival: f64 = compress_path(&inst, &Path::new(nodes[..=k].to_vec()).unwrap())
            .nodes()
            .iter()
            .map(|&v| 1.0 - inst.success_prob(v))
            .product();
        let before = truncated_expected_cost(&inst, &path).unwrap();
        let after = truncated_expected_cost(&inst, &longer).unwrap();
        if survival > 0.0 {
            prop_assert!(after > before);
        } else {
            prop_assert!(after >= before);
        }
    }

    #[test]
    fn shortest_path_table_is_a_metric(seed in any::<u64>()) {
        let mut rng = rng::stream(seed, "apsp");
        let inst = random_instance(&mut rng, 2..15, 1..2);
        let t = all_pairs_shortest_paths(&inst);
        let n = inst.node_count();
        for u in 0..n {
            prop_assert_eq!(t.dist(u, u), 0.0);
            for v in 0..n {
                prop_assert_eq!(t.dist(u, v), t.dist(v, u));
                let walked = Path::new(t.path(u, v)).unwrap().length(&inst).unwrap();
                prop_assert!(close(walked, t.dist(u, v), 1e-12));
                for w in 0..n {
                    prop_assert!(t.dist(u, w) <= t.dist(u, v) + t.dist(v, w) + 1e-9);
                }
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn exact_oracles_agree(seed in any::<u64>()) {
        let inst = small_instance(seed, 7);
        let vt = value_iteration_exact(&inst, 20).unwrap();
        let brute = brute_force_optimum(&inst).unwrap();
        let search = optimal_search(&inst, &SearchConfig::default()).unwrap();
        let v = vt.start_value().value();
        prop_assert!(close(v, brute.cost.value(), 1e-9));
        prop_assert!(close(v, search.cost.value(), 1e-9));
        let path = extract_optimal_path(&vt, &inst).unwrap();
        prop_assert!(close(expected_cost(&inst, &path).unwrap().value(), v, 1e-9));
        prop_assert!(vt.bellman_residual() <= 1e-12);
        prop_assert!(vt.values_monotone());
        prop_assert!((vt.sweeps() as u128) <= vt.sweep_bound());
    }

    #[test]
    fn compress_then_expand_keeps_first_visits(seed in any::<u64>()) {
        let inst = small_instance(seed, 7);
        let best = brute_force_optimum(&inst).unwrap();
        let ci = build_complete_graph(&inst);
        let comp = compress_path(&inst, &best.path);
        let again = expand_simple_path(&ci, &comp);
        prop_assert_eq!(compress_path(&inst, &again), comp.clone());
        let comp_cost = expected_cost(&ci.comp, &comp).unwrap().value();
        prop_assert!(close(comp_cost, best.cost.value(), 1e-9));
        prop_assert!(close(expected_cost(&inst, &again).unwrap().value(), best.cost.value(), 1e-9));
    }

    #[test]
    fn terminal_free_optimum_visits_every_positive_node(seed in any::<u64>()) {
        let mut rng = rng::stream(seed, "nt");
        let n = rng.random_range(2..=7);
        let base = random_instance(&mut rng, n + 1..n + 2, 1..2);
        // drop the terminal by zeroing it out to a plain node
        let p: Vec<f64> = base.probabilities().iter().map(|&p| if p == 1.0 { 0.5 } else { p }).collect();
        let inst = ProblemInstance::new(p, base.edges().collect::<Vec<_>>(), base.start()).unwrap();
        prop_assume!(inst.probabilities().iter().any(|&p| p > 0.0));
        let red = nt_reduction(&inst).unwrap();
        let best = brute_force_optimum(&red.instance).unwrap();
        let nodes = best.path.nodes();
        let before_terminal = &nodes[..nodes.len() - 1];
        prop_assert_eq!(*nodes.last().unwrap(), red.terminal);
        for v in 0..inst.node_count() {
            if inst.success_prob(v) > 0.0 {
                prop_assert!(before_terminal.contains(&v), "node {} skipped in {}", v, best.path);
            }
        }
    }

    #[test]
    fn exact_dominates_heuristics(seed in any::<u64>()) {
        let inst = small_instance(seed, 8);
        let opt = value_iteration_exact(&inst, 20).unwrap().start_value().value();
        let w = GameWeights::for_instance(&inst);
        let mut costs = vec![
            best_reply_solve(&inst, BestReplyOrder::RoundRobin, 0, &w).cost.value(),
            expected_cost(&inst, &nearest_neighbor(&inst).unwrap()).unwrap().value(),
            expected_cost(&inst, &closest_terminal(&inst).unwrap()).unwrap().value(),
        ];
        if let Ok(sol) = idag_value_iteration(&inst, &impose_dag(&inst)) {
            costs.push(sol.cost.value());
        }
        for c in costs {
            prop_assert!(opt <= c + 1e-9, "{} > {}", opt, c);
        }
    }

    #[test]
    fn potential_tracks_unilateral_deviations(seed in any::<u64>()) {
        let mut rng = rng::stream(seed, "potential");
        let inst = random_instance(&mut rng, 3..14, 1..3);
        let w = GameWeights::new(10f64.powf(-rng.random_range(1.0..6.0)), inst.start());
        let profile = random_asg_profile(&inst, &mut rng);
        let m = inst.nonterminals();
        let v = m[rng.random_range(0..m.len())];
        let actions = feasible_actions(&inst, &profile, v);
        prop_assert!(!actions.is_empty());
        let u = actions[rng.random_range(0..actions.len())];
        let mut deviated = profile.clone();
        deviated.set(v, Some(u));
        let dj = local_cost(&inst, &deviated, v, &w).value() - local_cost(&inst, &profile, v, &w).value();
        let dphi = potential(&inst, &deviated, &w).value() - potential(&inst, &profile, &w).value();
        prop_assert!((dj - dphi).abs() <= 1e-9, "{} vs {}", dj, dphi);
    }

    #[test]
    fn best_replies_never_raise_costs(seed in any::<u64>()) {
        let mut rng = rng::stream(seed, "monotone");
        let inst = random_instance(&mut rng, 3..25, 1..3);
        let mut state = GameState::new(&inst, GameWeights::for_instance(&inst));
        let m = inst.nonterminals().to_vec();
        for _ in 0..5 * m.len() {
            let before = state.costs().to_vec();
            state.best_reply(m[rng.random_range(0..m.len())]);
            for (a, b) in state.costs().iter().zip(&before) {
                prop_assert!(a <= b);
            }
        }
    }

    #[test]
    fn round_robin_within_quadratic_bound(seed in any::<u64>()) {
        let mut rng = rng::stream(seed, "rr");
        let inst = random_instance(&mut rng, 3..40, 1..4);
        let m = inst.nonterminals().len();
        let r = best_reply_solve(&inst, BestReplyOrder::RoundRobin, 0, &GameWeights::for_instance(&inst));
        prop_assert!(r.converged);
        prop_assert!(r.iterations <= m * m);
        prop_assert!(r.cost.is_finite());
    }

    #[test]
    fn log_linear_never_leaves_forests(seed in any::<u64>()) {
        let mut rng = rng::stream(seed, "absorb");
        let inst = random_instance(&mut rng, 3..12, 1..2);
        let w = GameWeights::for_instance(&inst);
        let mut state = GameState::new(&inst, w);
        let m = inst.nonterminals().to_vec();
        let mut absorbed = false;
        for _ in 0..400 {
            let v = m[rng.random_range(0..m.len())];
            state.log_linear(v, 0.5, &mut rng);
            let all_chosen = m.iter().all(|&x| state.choice(x).is_some());
            if absorbed {
                prop_assert!(all_chosen);
                prop_assert!(state.is_acyclic_forest());
            }
            absorbed |= all_chosen;
        }
        let profile = state.profile();
        let reference = profile_costs(&inst, &profile);
        for v in 0..inst.node_count() {
            let (a, b) = (state.cost(v), reference.cost[v]);
            prop_assert!(a.is_infinite() == b.is_infinite());
            if a.is_finite() {
                prop_assert!(close(a.value(), b.value(), 1e-9));
            }
        }
    }

    #[test]
    fn random_profiles_cost_consistently(seed in any::<u64>()) {
        let mut rng = rng::stream(seed, "profiles");
        let inst = random_instance(&mut rng, 2..12, 1..2);
        let profile = random_profile(&inst, &mut rng);
        let costs = profile_costs(&inst, &profile);
        for &v in inst.nonterminals() {
            let chain = SuccessorProfile::chain(&profile, &inst, v);
            let reaches = chain.last().is_some_and(|&x| inst.is_terminal(x));
            prop_assert_eq!(costs.cost[v].is_finite(), reaches);
            if reaches {
                let c = expected_cost(&inst, &Path::new(chain).unwrap()).unwrap();
                prop_assert!(close(c.value(), costs.cost[v].value(), 1e-12));
            }
        }
    }

    #[test]
    fn idag_paths_move_outward(seed in any::<u64>()) {
        let mut rng = rng::stream(seed, "idag");
        let inst = random_instance(&mut rng, 2..30, 1..3);
        let dag = impose_dag(&inst);
        prop_assert!(dag.topological_order().is_some());
        let sol = idag_value_iteration(&inst, &dag).unwrap();
        for w in sol.path.nodes().windows(2) {
            prop_assert!(dag.dist[w[1]] > dag.dist[w[0]]);
        }
        let sync = idag_value_iteration_synchronous(&inst, &dag).unwrap();
        prop_assert!(sync.sweeps <= inst.nonterminals().len());
        prop_assert_eq!(sync.values, sol.values);
    }

    #[test]
    fn baselines_reach_terminals(seed in any::<u64>()) {
        let mut rng = rng::stream(seed, "baselines");
        let inst = random_instance(&mut rng, 2..30, 1..3);
        for path in [nearest_neighbor(&inst).unwrap(), closest_terminal(&inst).unwrap()] {
            path.validate_on(&inst).unwrap();
            prop_assert!(inst.is_terminal(path.last()));
            prop_assert!(expected_cost(&inst, &path).unwrap().is_finite());
        }
        prop_assert_eq!(nearest_neighbor(&inst).unwrap(), nearest_neighbor(&inst).unwrap());
    }

    #[test]
    fn grid_probabilities_in_range(seed in any::<u64>(), n in 2usize..20, n_t in 0usize..=4) {
        let inst = gen_grid(&GridSpec { n, n_t, seed }).unwrap();
        for v in 0..inst.node_count() {
            let p = inst.success_prob(v);
            prop_assert!(p == 1.0 || (0.0..=GRID_MAX_PROB).contains(&p));
        }
        prop_assert!(inst.terminals().len() <= n_t);
    }
}
