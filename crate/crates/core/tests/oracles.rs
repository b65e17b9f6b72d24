mod common;

use std::collections::HashMap;

use common::{line4, small_instance};
use expcost::baselines::{AnnealingConfig, Annealer};
use expcost::eval::{compare_methods, simulate_realizations, Method, MethodParams};
use expcost::exact::{rtdp_solve, value_iteration_exact};
use expcost::scenarios::{
    gen_channel_field, generate_channel_scenario, grid_node, predict_connectivity, ChannelSpec,
};
use expcost::transforms::all_pairs_shortest_paths;
use expcost::{expected_cost, Path, ProblemInstance};

/// Every permutation of `items`.
fn permutations(items: &[usize]) -> Vec<Vec<usize>> {
    if items.len() <= 1 {
        return vec![items.to_vec()];
    }
    let mut out = Vec::new();
    for i in 0..items.len() {
        let mut rest = items.to_vec();
        let head = rest.remove(i);
        for mut tail in permutations(&rest) {
            tail.insert(0, head);
            out.push(tail);
        }
    }
    out
}

#[test]
fn annealer_samples_gibbs_at_fixed_temperature() {
    let inst = ProblemInstance::new(
        vec![0.05, 0.4, 0.2, 0.3, 1.0],
        [(0, 1, 1.0), (0, 2, 2.0), (1, 2, 1.5), (1, 3, 1.0), (2, 3, 2.5), (3, 4, 1.0), (2, 4, 3.0)],
        0,
    )
    .unwrap();
    let table = all_pairs_shortest_paths(&inst);
    let temperature = 0.4;
    let cfg = AnnealingConfig {
        initial_temperature: Some(temperature),
        cooling_rate: 1.0,
        seed: 13,
        ..Default::default()
    };
    let mut annealer = Annealer::new(&inst, &table, cfg);

    let states = permutations(&[1, 2, 3]);
    let weights: Vec<f64> = states.iter().map(|s| (-annealer.energy_of(s) / temperature).exp()).collect();
    let z: f64 = weights.iter().sum();

    for _ in 0..1_000 {
        annealer.step();
    }
    let mut counts: HashMap<Vec<usize>, usize> = HashMap::new();
    let samples = 200_000;
    for _ in 0..samples {
        annealer.step();
        *counts.entry(annealer.order().to_vec()).or_default() += 1;
    }
    assert_eq!(annealer.temperature(), temperature);
    let tv: f64 = states
        .iter()
        .zip(&weights)
        .map(|(s, w)| (counts.get(s).copied().unwrap_or(0) as f64 / samples as f64 - w / z).abs())
        .sum::<f64>()
        / 2.0;
    assert!(tv < 0.1, "total variation {tv}");
}

#[test]
fn monte_carlo_converges_at_root_n() {
    let inst = line4();
    let path = Path::new(vec![1, 0, 1, 2, 3]).unwrap();
    let truth = expected_cost(&inst, &path).unwrap().value();
    for n in [1_000, 10_000, 100_000, 1_000_000] {
        let est = simulate_realizations(&inst, &path, n, 21);
        let se = est.std / (n as f64).sqrt();
        assert!((est.mean - truth).abs() < 4.0 * se, "n={n}: {} vs {truth}", est.mean);
    }
}

#[test]
fn shadowing_matches_its_covariance() {
    let spec = ChannelSpec { multipath: false, ..Default::default() };
    let side = spec.side();
    let sigma2 = spec.sigma_sh_db.powi(2);
    let lag = spec.beta_sh_m.round() as usize;
    let (mut sq, mut cells, mut cross, mut pairs) = (0.0, 0usize, 0.0, 0usize);
    for seed in 0..40 {
        let field = gen_channel_field(&ChannelSpec { seed, ..spec.clone() }).unwrap();
        let sh = &field.shadowing_db;
        sq += sh.iter().map(|x| x * x).sum::<f64>();
        cells += sh.len();
        for r in 0..side {
            for c in 0..side - lag {
                cross += sh[grid_node(side, r, c)] * sh[grid_node(side, r, c + lag)];
                pairs += 1;
            }
        }
    }
    let var = sq / cells as f64;
    assert!(cells >= 10_000);
    assert!((var / sigma2 - 1.0).abs() < 0.15, "variance {var} vs {sigma2}");
    let expected = sigma2 * (-(lag as f64) * spec.cell_m / spec.beta_sh_m).exp();
    let cov = cross / pairs as f64;
    assert!((cov / expected - 1.0).abs() < 0.2, "lag covariance {cov} vs {expected}");
}

#[test]
fn channel_maps_are_bit_reproducible() {
    let spec = ChannelSpec { seed: 77, ..Default::default() };
    let a = generate_channel_scenario(&spec).unwrap();
    let b = generate_channel_scenario(&spec).unwrap();
    assert_eq!(a.field, b.field);
    assert_eq!(a.prediction, b.prediction);
    assert_eq!(a.planning.to_json_string(), b.planning.to_json_string());
    assert!(a.prediction.prob.iter().all(|p| (0.0..=1.0).contains(p)));
}

#[test]
fn kriging_uncertainty_grows_away_from_measurements() {
    let spec = ChannelSpec { noise_free: true, multipath: false, ..Default::default() };
    let field = gen_channel_field(&spec).unwrap();
    let side = spec.side();
    let measured = vec![grid_node(side, 0, 0), grid_node(side, 0, 1), grid_node(side, 1, 0)];
    let pred = predict_connectivity(&field, &measured, &spec).unwrap();
    let along: Vec<f64> = (0..side).map(|c| pred.sd_db[grid_node(side, 0, c)]).collect();
    assert!(along[0] < 1e-3);
    for w in along.windows(2).skip(1) {
        assert!(w[1] >= w[0] - 1e-9);
    }
    assert!(*along.last().unwrap() <= spec.sigma_sh_db + 1e-9);
    assert!(*along.last().unwrap() > 0.9 * spec.sigma_sh_db);
}

#[test]
fn exact_never_loses_to_best_reply_in_reports() {
    for seed in 0..30 {
        let inst = small_instance(seed, 8);
        let rows = compare_methods(
            &inst,
            &inst,
            &[Method::Exact, Method::BestReply],
            &MethodParams::default(),
            0,
            seed,
            "small",
        );
        let exact = rows[0].expected_cost_truth.unwrap();
        let br = rows[1].expected_cost_truth.unwrap();
        assert!(exact <= br + 1e-9, "seed {seed}: {exact} > {br}");
    }
}

#[test]
fn rtdp_reaches_the_optimum_on_small_instances() {
    for seed in 0..20 {
        let inst = small_instance(seed, 5);
        let opt = value_iteration_exact(&inst, 20).unwrap().start_value().value();
        let out = rtdp_solve(&inst, 20_000, seed).unwrap();
        let sol = out.solution().expect("solved within budget");
        assert!(sol.cost.value() >= opt - 1e-9);
        assert!((sol.cost.value() - opt).abs() < 1e-6, "seed {seed}: {} vs {opt}", sol.cost);
    }
}

#[test]
fn fig3_across_the_api() {
    let inst = line4();
    let params = MethodParams { budget: 50_000, ..Default::default() };
    let rows = compare_methods(
        &inst,
        &inst,
        &[Method::Exact, Method::Brute, Method::Closest, Method::Nn],
        &params,
        100_000,
        2,
        "fig3",
    );
    let costs: Vec<f64> = rows.iter().map(|r| r.expected_cost_truth.unwrap()).collect();
    for (c, want) in costs.iter().zip([1.161, 1.161, 1.71, 1.161]) {
        assert!((c - want).abs() < 1e-9);
    }
    for r in &rows {
        let se = r.mc_std.unwrap() / 100_000f64.sqrt();
        assert!((r.mc_mean.unwrap() - r.expected_cost_truth.unwrap()).abs() < 4.0 * se);
        assert_eq!(r.fail_prob, Some(0.0));
    }
}
