use std::sync::OnceLock;

use nalgebra::{DMatrix, SymmetricEigen};

/// Nodes used for expectations over Gaussian predictive densities.
pub const HERMITE_NODES: usize = 64;

/// Gauss-Hermite nodes and weights for the weight `exp(-t^2)`, ascending by
/// node, from the eigen-decomposition of the Jacobi matrix.
pub fn gauss_hermite(count: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(count > 0, "need at least one node");
    let mut jacobi = DMatrix::<f64>::zeros(count, count);
    for k in 1..count {
        let b = (k as f64 / 2.0).sqrt();
        jacobi[(k - 1, k)] = b;
        jacobi[(k, k - 1)] = b;
    }
    let eig = SymmetricEigen::new(jacobi);
    let mut pairs: Vec<(f64, f64)> = (0..count)
        .map(|i| {
            let v0 = eig.eigenvectors[(0, i)];
            (eig.eigenvalues[i], std::f64::consts::PI.sqrt() * v0 * v0)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}

fn default_rule() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_hermite(HERMITE_NODES))
}

/// `E[f(X)]` for `X ~ N(mean, sd^2)` with the 64-node rule.
pub fn gaussian_expectation(mean: f64, sd: f64, f: impl Fn(f64) -> f64) -> f64 {
    if sd <= 0.0 {
        return f(mean);
    }
    let (nodes, weights) = default_rule();
    let scale = std::f64::consts::SQRT_2 * sd;
    let total: f64 = nodes.iter().zip(weights).map(|(t, w)| w * f(mean + scale * t)).sum();
    total / std::f64::consts::PI.sqrt()
}
