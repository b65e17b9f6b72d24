use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::seq::index;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::quadrature::gaussian_expectation;
use crate::error::ScenarioError;
use crate::graph::{NodeId, ProblemInstance};
use crate::rng;
use crate::scenarios::{grid_edges, grid_node};

/// Diagonal jitter added to covariance matrices before factorization.
const COVARIANCE_JITTER: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelSpec {
    /// Side of the square workspace in meters.
    pub workspace_m: f64,
    pub cell_m: f64,
    /// Station position in meters; the workspace spans `[0, workspace_m]^2`.
    pub station: [f64; 2],
    pub n_pl: f64,
    pub sigma_sh_db: f64,
    pub beta_sh_m: f64,
    pub k_ric: f64,
    pub p_th_dbm: f64,
    /// Transmit power. Recorded for reference; received power is anchored by
    /// `k0_dbm`.
    pub p0_dbm: f64,
    /// Received power at 1 m.
    pub k0_dbm: f64,
    pub measurement_fraction: f64,
    pub shadowing: bool,
    pub multipath: bool,
    /// Kriging without a nugget for multipath.
    pub noise_free: bool,
    pub seed: u64,
}

impl Default for ChannelSpec {
    fn default() -> Self {
        ChannelSpec {
            workspace_m: 50.0,
            cell_m: 1.0,
            station: [0.0, 0.0],
            n_pl: 4.2,
            sigma_sh_db: 2.9,
            beta_sh_m: 12.92,
            k_ric: 1.59,
            p_th_dbm: -80.0,
            p0_dbm: 27.0,
            k0_dbm: -20.0,
            measurement_fraction: 0.05,
            shadowing: true,
            multipath: true,
            noise_free: false,
            seed: 0,
        }
    }
}

impl ChannelSpec {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let positive = [
            (self.workspace_m, "workspace_m"),
            (self.cell_m, "cell_m"),
            (self.n_pl, "n_pl"),
            (self.sigma_sh_db, "sigma_sh_db"),
            (self.beta_sh_m, "beta_sh_m"),
            (self.k_ric, "k_ric"),
        ];
        for (value, name) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(ScenarioError::InvalidParameter(name));
            }
        }
        if !(self.measurement_fraction > 0.0 && self.measurement_fraction < 1.0) {
            return Err(ScenarioError::InvalidParameter("measurement_fraction"));
        }
        if self.side() < 2 {
            return Err(ScenarioError::InvalidParameter("workspace_m"));
        }
        if !self.station.iter().all(|x| x.is_finite()) {
            return Err(ScenarioError::InvalidParameter("station"));
        }
        Ok(())
    }

    /// Cells per side.
    pub fn side(&self) -> usize {
        (self.workspace_m / self.cell_m).round() as usize
    }

    pub fn cell_count(&self) -> usize {
        self.side() * self.side()
    }

    /// Center of cell `id` in meters, `(x, y)` with `x` along columns.
    pub fn cell_center(&self, id: usize) -> (f64, f64) {
        let side = self.side();
        let (r, c) = (id / side, id % side);
        ((c as f64 + 0.5) * self.cell_m, (r as f64 + 0.5) * self.cell_m)
    }

    /// Distance from a cell center to the station, at least 1 m.
    pub fn station_distance(&self, id: usize) -> f64 {
        let (x, y) = self.cell_center(id);
        (x - self.station[0]).hypot(y - self.station[1]).max(1.0)
    }

    /// Cell containing (or nearest to) the station.
    pub fn station_cell(&self) -> usize {
        let side = self.side();
        let clamp = |v: f64| ((v / self.cell_m).floor().max(0.0) as usize).min(side - 1);
        grid_node(side, clamp(self.station[1]), clamp(self.station[0]))
    }

    pub fn start_cell(&self) -> usize {
        let side = self.side();
        grid_node(side, side / 2, side / 2)
    }

    /// Deterministic path-loss power at a cell.
    pub fn path_loss_dbm(&self, id: usize) -> f64 {
        self.k0_dbm - 10.0 * self.n_pl * self.station_distance(id).log10()
    }

    /// Probability that multipath fading lifts a mean power of `mean_dbm`
    /// over the threshold.
    pub fn connection_probability(&self, mean_dbm: f64) -> f64 {
        if self.multipath {
            rician_exceedance(self.k_ric, 10f64.powf((self.p_th_dbm - mean_dbm) / 10.0))
        } else if mean_dbm >= self.p_th_dbm {
            1.0
        } else {
            0.0
        }
    }
}

/// `P(G >= gamma)` for unit-mean Rician power `G` with factor `k`, from the
/// Poisson mixture of gamma laws: `(k+1) G` given `j ~ Poisson(k)` is
/// `Gamma(j+1, 1)`.
pub fn rician_exceedance(k: f64, gamma: f64) -> f64 {
    if gamma <= 0.0 {
        return 1.0;
    }
    let x = (k + 1.0) * gamma;
    let ln_x = x.ln();
    let mut total = 0.0;
    // ln of the j-th Poisson weight and of the j-th term of the gamma tail
    let mut ln_poisson = -k;
    let mut ln_term = -x;
    let mut tail = ln_term.exp();
    let mut j = 0usize;
    loop {
        let w = ln_poisson.exp();
        total += w * tail.min(1.0);
        // past the mode the remaining Poisson mass is below a few times w
        if (w < 1e-18 && j as f64 > k) || j > 2000 {
            break;
        }
        j += 1;
        ln_poisson += k.ln() - (j as f64).ln();
        ln_term += ln_x - (j as f64).ln();
        tail += ln_term.exp();
    }
    total.clamp(0.0, 1.0)
}

fn digamma_int(n: usize) -> f64 {
    // psi(n) for positive integer n
    const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
    -EULER_GAMMA + (1..n).map(|j| 1.0 / j as f64).sum::<f64>()
}

fn trigamma_int(n: usize) -> f64 {
    std::f64::consts::PI.powi(2) / 6.0 - (1..n).map(|j| 1.0 / (j as f64).powi(2)).sum::<f64>()
}

/// Variance in dB^2 of unit-mean Rician power with factor `k`.
pub fn multipath_db_variance(k: f64) -> f64 {
    let mut first = 0.0;
    let mut second = 0.0;
    let mut ln_w = -k;
    for j in 0..400usize {
        if j > 0 {
            ln_w += k.ln() - (j as f64).ln();
        }
        let w = ln_w.exp();
        let psi = digamma_int(j + 1);
        first += w * psi;
        second += w * (trigamma_int(j + 1) + psi * psi);
        if w < 1e-18 && j as f64 > k {
            break;
        }
    }
    let db = 10.0 / std::f64::consts::LN_10;
    db * db * (second - first * first)
}

fn rician_gain(k: f64, rng: &mut rng::Rng) -> f64 {
    let los = (k / (k + 1.0)).sqrt();
    let scatter = (0.5 / (k + 1.0)).sqrt();
    let z_re: f64 = StandardNormal.sample(rng);
    let z_im: f64 = StandardNormal.sample(rng);
    let (re, im) = (los + scatter * z_re, scatter * z_im);
    re * re + im * im
}

type FactorKey = (usize, u64, u64);

/// Lower Cholesky factor of the unit-variance shadowing correlation on the
/// cell grid, shared between calls with the same geometry.
fn correlation_factor(spec: &ChannelSpec) -> Result<Arc<DMatrix<f64>>, ScenarioError> {
    static CACHE: OnceLock<Mutex<HashMap<FactorKey, Arc<DMatrix<f64>>>>> = OnceLock::new();
    let key = (spec.side(), spec.cell_m.to_bits(), spec.beta_sh_m.to_bits());
    let cache = CACHE.get_or_init(Default::default);
    if let Some(l) = cache.lock().expect("cache lock").get(&key) {
        return Ok(Arc::clone(l));
    }
    let n = spec.cell_count();
    let centers: Vec<(f64, f64)> = (0..n).map(|i| spec.cell_center(i)).collect();
    let cov = DMatrix::from_fn(n, n, |i, j| {
        let d = (centers[i].0 - centers[j].0).hypot(centers[i].1 - centers[j].1);
        (-d / spec.beta_sh_m).exp() + if i == j { COVARIANCE_JITTER } else { 0.0 }
    });
    let l = Arc::new(Cholesky::new(cov).ok_or(ScenarioError::NotPositiveDefinite)?.unpack());
    cache.lock().expect("cache lock").insert(key, Arc::clone(&l));
    Ok(l)
}

/// One draw of the channel over the cell grid, row-major.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChannelField {
    pub side: usize,
    /// Path loss plus shadowing.
    pub mean_dbm: Vec<f64>,
    /// Shadowing alone.
    pub shadowing_db: Vec<f64>,
    /// Received power including this draw's multipath.
    pub power_dbm: Vec<f64>,
}

/// Samples path loss, correlated shadowing and i.i.d. Rician multipath.
pub fn gen_channel_field(spec: &ChannelSpec) -> Result<ChannelField, ScenarioError> {
    spec.validate()?;
    let n = spec.cell_count();
    let shadowing_db = if spec.shadowing {
        let l = correlation_factor(spec)?;
        let mut rng = rng::stream(spec.seed, "shadowing");
        let z = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
        (l.as_ref() * z).iter().map(|x| spec.sigma_sh_db * x).collect()
    } else {
        vec![0.0; n]
    };
    let mean_dbm: Vec<f64> = (0..n).map(|i| spec.path_loss_dbm(i) + shadowing_db[i]).collect();
    let power_dbm = if spec.multipath {
        let mut rng = rng::stream(spec.seed, "multipath");
        mean_dbm.iter().map(|m| m + 10.0 * rician_gain(spec.k_ric, &mut rng).log10()).collect()
    } else {
        mean_dbm.clone()
    };
    Ok(ChannelField { side: spec.side(), mean_dbm, shadowing_db, power_dbm })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Prediction {
    /// Predictive mean of path loss plus shadowing.
    pub mean_dbm: Vec<f64>,
    pub sd_db: Vec<f64>,
    /// Probability of connectivity per cell.
    pub prob: Vec<f64>,
    pub fitted_k0_dbm: f64,
    pub fitted_n_pl: f64,
}

/// Fits the path-loss line to the measured powers, krigs the residual
/// shadowing, and integrates the multipath exceedance over the Gaussian
/// predictive density at every cell. Measured cells found connected get
/// probability one.
pub fn predict_connectivity(
    field: &ChannelField,
    measured: &[usize],
    spec: &ChannelSpec,
) -> Result<Prediction, ScenarioError> {
    spec.validate()?;
    let m = measured.len();
    if m < 3 {
        return Err(ScenarioError::TooFewMeasurements(m));
    }
    let n = spec.cell_count();
    let xs: Vec<f64> = measured.iter().map(|&i| -10.0 * spec.station_distance(i).log10()).collect();
    let ys: Vec<f64> = measured.iter().map(|&i| field.power_dbm[i]).collect();
    let (fitted_k0_dbm, fitted_n_pl) = fit_path_loss(&xs, &ys, spec.n_pl);
    let trend = |i: usize| fitted_k0_dbm - 10.0 * fitted_n_pl * spec.station_distance(i).log10();
    let residuals = DVector::from_iterator(m, measured.iter().zip(&ys).map(|(&i, y)| y - trend(i)));

    let sigma2 = if spec.shadowing { spec.sigma_sh_db.powi(2) } else { 0.0 };
    let nugget = if spec.multipath && !spec.noise_free { multipath_db_variance(spec.k_ric) } else { 0.0 };
    let centers: Vec<(f64, f64)> = (0..n).map(|i| spec.cell_center(i)).collect();
    let corr = |a: usize, b: usize| {
        let d = (centers[a].0 - centers[b].0).hypot(centers[a].1 - centers[b].1);
        sigma2 * (-d / spec.beta_sh_m).exp()
    };

    let (mean_dbm, sd_db): (Vec<f64>, Vec<f64>) = if sigma2 > 0.0 {
        let a = DMatrix::from_fn(m, m, |i, j| {
            corr(measured[i], measured[j])
                + if i == j { nugget + COVARIANCE_JITTER * sigma2 } else { 0.0 }
        });
        let chol = Cholesky::new(a).ok_or(ScenarioError::NotPositiveDefinite)?;
        let weights = chol.solve(&residuals);
        let cross = DMatrix::from_fn(m, n, |i, c| corr(measured[i], c));
        let solved = chol.solve(&cross);
        (0..n)
            .map(|c| {
                let k = cross.column(c);
                let mean = trend(c) + k.dot(&weights);
                let var = (sigma2 - k.dot(&solved.column(c))).max(0.0);
                (mean, var.sqrt())
            })
            .unzip()
    } else {
        ((0..n).map(trend).collect(), vec![0.0; n])
    };

    let mut prob: Vec<f64> = mean_dbm
        .iter()
        .zip(&sd_db)
        .map(|(&mu, &sd)| {
            gaussian_expectation(mu, sd, |x| spec.connection_probability(x)).clamp(0.0, 1.0)
        })
        .collect();
    for &i in measured {
        if field.power_dbm[i] >= spec.p_th_dbm {
            prob[i] = 1.0;
        }
    }
    Ok(Prediction { mean_dbm, sd_db, prob, fitted_k0_dbm, fitted_n_pl })
}

/// Least-squares intercept and slope of `y = k0 + n x`; falls back to the
/// given slope when the abscissae do not vary.
fn fit_path_loss(xs: &[f64], ys: &[f64], fallback_slope: f64) -> (f64, f64) {
    let len = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / len;
    let my = ys.iter().sum::<f64>() / len;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = if sxx > 1e-12 { sxy / sxx } else { fallback_slope };
    (my - slope * mx, slope)
}

/// Expected distance walked from the center of cell `from` straight to the
/// station until the first success, with a success test on entering each
/// new cell along the way. Cells outside the workspace never succeed.
pub fn line_expected_distance(prob: &[f64], spec: &ChannelSpec, from: usize) -> f64 {
    let side = spec.side();
    let (x0, y0) = spec.cell_center(from);
    let (x1, y1) = (spec.station[0], spec.station[1]);
    let length = (x1 - x0).hypot(y1 - y0);
    if length == 0.0 {
        return 0.0;
    }
    // parameters where the segment crosses a grid line
    let mut cuts = vec![0.0, 1.0];
    for (a, b) in [(x0, x1), (y0, y1)] {
        if a != b {
            let (lo, hi) = (a.min(b), a.max(b));
            let mut k = (lo / spec.cell_m).ceil();
            while k * spec.cell_m <= hi {
                let t = (k * spec.cell_m - a) / (b - a);
                if t > 0.0 && t < 1.0 {
                    cuts.push(t);
                }
                k += 1.0;
            }
        }
    }
    cuts.sort_by(f64::total_cmp);
    cuts.dedup_by(|a, b| (*a - *b).abs() < 1e-12);

    let cell_at = |x: f64, y: f64| -> Option<usize> {
        let c = (x / spec.cell_m).floor();
        let r = (y / spec.cell_m).floor();
        (c >= 0.0 && r >= 0.0 && (c as usize) < side && (r as usize) < side)
            .then(|| grid_node(side, r as usize, c as usize))
    };
    let mut survival = 1.0;
    let mut current = Some(from);
    let mut total = 0.0;
    for w in cuts.windows(2) {
        let mid = 0.5 * (w[0] + w[1]);
        let cell = cell_at(x0 + mid * (x1 - x0), y0 + mid * (y1 - y0));
        if cell != current {
            if let Some(c) = cell {
                survival *= 1.0 - prob[c].clamp(0.0, 1.0);
            }
            current = cell;
        }
        total += survival * (w[1] - w[0]) * length;
    }
    total
}

/// Grid graph over the cells plus a terminal for the station, attached to
/// the station's cell by the straight-line expected distance.
pub fn channel_instance(prob: &[f64], spec: &ChannelSpec) -> ProblemInstance {
    let side = spec.side();
    let n = side * side;
    assert_eq!(prob.len(), n, "one probability per cell");
    let mut p: Vec<f64> = prob.iter().map(|x| x.clamp(0.0, 1.0)).collect();
    p.push(1.0);
    let station: NodeId = n;
    let anchor = spec.station_cell();
    // a zero-length edge is not allowed, and only arises for a station at a
    // cell center
    let cost = line_expected_distance(prob, spec, anchor).max(1e-9 * spec.cell_m);
    let mut edges = grid_edges(side, spec.cell_m);
    edges.push((anchor, station, cost));
    ProblemInstance::new(p, edges, spec.start_cell()).expect("channel graph is a valid instance")
}

/// A generated channel with its measurements, prediction and the two
/// instances: planning uses predicted probabilities, truth the exceedance at
/// the true mean power.
#[derive(Debug, Clone)]
pub struct ChannelScenario {
    pub spec: ChannelSpec,
    pub field: ChannelField,
    pub measured: Vec<usize>,
    pub prediction: Prediction,
    pub truth_prob: Vec<f64>,
    pub planning: ProblemInstance,
    pub truth: ProblemInstance,
}

pub fn generate_channel_scenario(spec: &ChannelSpec) -> Result<ChannelScenario, ScenarioError> {
    let field = gen_channel_field(spec)?;
    let n = spec.cell_count();
    let count = ((spec.measurement_fraction * n as f64).round() as usize).clamp(1, n);
    let mut rng = rng::stream(spec.seed, "measurements");
    let mut measured = index::sample(&mut rng, n, count).into_vec();
    measured.sort_unstable();
    let prediction = predict_connectivity(&field, &measured, spec)?;
    let truth_prob: Vec<f64> = field.mean_dbm.iter().map(|&m| spec.connection_probability(m)).collect();
    let planning = channel_instance(&prediction.prob, spec);
    let truth = channel_instance(&truth_prob, spec);
    Ok(ChannelScenario { spec: spec.clone(), field, measured, prediction, truth_prob, planning, truth })
}

impl ChannelScenario {
    /// Notes attached to serialized instances.
    pub fn metadata(&self) -> serde_json::Map<String, serde_json::Value> {
        let mut meta = serde_json::Map::new();
        meta.insert("scenario".into(), "channel".into());
        meta.insert("seed".into(), self.spec.seed.into());
        meta.insert("station_edge".into(), "straight-line expected distance over predicted cells".into());
        meta.insert("measurements".into(), self.measured.len().into());
        meta
    }
}

/// Row-major grid of values as CSV, one grid row per line.
pub fn grid_csv(side: usize, values: &[f64]) -> String {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    for row in values.chunks(side) {
        w.write_record(row.iter().map(|v| v.to_string())).expect("write to memory");
    }
    String::from_utf8(w.into_inner().expect("flush to memory")).expect("utf8")
}
