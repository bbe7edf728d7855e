//! Sparse event detection in a sensor field.
//!
//! Event sources and sensors sit in a square field. A sensor hears every
//! source within its sensing radius through a path-loss gain, so the sensor
//! readings are a sparse weighted measurement of the binary event vector and
//! can be decoded with either decoder of this crate.

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use statrs::function::factorial::ln_binomial;
use thiserror::Error;

use crate::bp::{self, BpConfig, BpError};
use crate::measure::{
    add_awgn, sigma_for_snr, BinarySignal, MeasureError, MeasurementGraph, SnrConvention,
};
use crate::seed::{self, tag};
use crate::sumverify::{self, SvError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WsnError {
    #[error("uniform deployment needs a perfect-square sensor count, got {0}")]
    NotPerfectSquare(usize),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error(transparent)]
    Bp(#[from] BpError),
    #[error(transparent)]
    SumVerify(#[from] SvError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Deployment {
    /// Sensors drawn uniformly at random over the field.
    Random,
    /// Sensors on a centred `sqrt(m) x sqrt(m)` lattice.
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WsnParams {
    /// Side of the square field, metres.
    pub field_side: f64,
    pub n_events: usize,
    pub m_sensors: usize,
    /// Sensing radius, metres.
    pub radius: f64,
    pub deployment: Deployment,
    /// Path-loss exponent.
    pub alpha: f64,
    /// Gain at the reference distance.
    pub eta: f64,
    /// Distances below this are clamped to it.
    pub d_floor: f64,
    /// When set, events sit at the centres of an `n_x x n_y` grid of cells.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<(usize, usize)>,
}

impl WsnParams {
    pub fn new(field_side: f64, n_events: usize, m_sensors: usize, radius: f64, deployment: Deployment) -> Self {
        Self {
            field_side,
            n_events,
            m_sensors,
            radius,
            deployment,
            alpha: 3.0,
            eta: 1.0,
            d_floor: 1.0,
            grid: None,
        }
    }

    pub fn area(&self) -> f64 {
        self.field_side * self.field_side
    }

    /// Probability that a uniformly placed point lies in one sensor's disc,
    /// ignoring the field boundary.
    pub fn coverage_fraction(&self) -> f64 {
        std::f64::consts::PI * self.radius * self.radius / self.area()
    }

    pub fn validate(&self) -> Result<(), WsnError> {
        let bad = |msg: String| Err(WsnError::InvalidParameter(msg));
        if !(self.field_side.is_finite() && self.field_side > 0.0) {
            return bad(format!("field side must be positive, got {}", self.field_side));
        }
        if !(self.radius.is_finite() && self.radius >= 0.0) {
            return bad(format!("radius must be non-negative, got {}", self.radius));
        }
        if !(self.alpha.is_finite() && self.alpha > 0.0 && self.eta.is_finite() && self.eta > 0.0) {
            return bad("alpha and eta must be positive".into());
        }
        if !(self.d_floor.is_finite() && self.d_floor > 0.0) {
            return bad("distance floor must be positive".into());
        }
        if let Some((nx, ny)) = self.grid {
            if nx * ny != self.n_events {
                return bad(format!("grid {nx}x{ny} does not hold {} events", self.n_events));
            }
        }
        if self.deployment == Deployment::Uniform && perfect_sqrt(self.m_sensors).is_none() {
            return Err(WsnError::NotPerfectSquare(self.m_sensors));
        }
        Ok(())
    }
}

fn perfect_sqrt(m: usize) -> Option<usize> {
    let r = (m as f64).sqrt().round() as usize;
    (r * r == m).then_some(r)
}

/// Path-loss gain `eta / max(d, d_floor)^(alpha / 2)` inside the closed disc
/// of radius `radius`, `None` outside it.
pub fn gain(distance: f64, radius: f64, alpha: f64, eta: f64, d_floor: f64) -> Option<f64> {
    (distance <= radius).then(|| eta / distance.max(d_floor).powf(alpha / 2.0))
}

fn distance(a: &[f64; 2], b: &[f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WsnScenario {
    pub params: WsnParams,
    pub sensors: Vec<[f64; 2]>,
    pub events: Vec<[f64; 2]>,
}

/// Place sensors and events.
pub fn deploy(params: &WsnParams, rng_seed: u64) -> Result<WsnScenario, WsnError> {
    params.validate()?;
    let side = params.field_side;
    let mut rng = seed::rng(rng_seed);
    let sensors = match params.deployment {
        Deployment::Uniform => {
            let k = perfect_sqrt(params.m_sensors).ok_or(WsnError::NotPerfectSquare(params.m_sensors))?;
            let spacing = side / k as f64;
            let mut s = Vec::with_capacity(params.m_sensors);
            for ix in 0..k {
                for iy in 0..k {
                    s.push([(ix as f64 + 0.5) * spacing, (iy as f64 + 0.5) * spacing]);
                }
            }
            s
        }
        Deployment::Random => (0..params.m_sensors)
            .map(|_| [rng.random::<f64>() * side, rng.random::<f64>() * side])
            .collect(),
    };
    let events = match params.grid {
        Some((nx, ny)) => {
            let (wx, wy) = (side / nx as f64, side / ny as f64);
            let mut e = Vec::with_capacity(nx * ny);
            for iy in 0..ny {
                for ix in 0..nx {
                    e.push([(ix as f64 + 0.5) * wx, (iy as f64 + 0.5) * wy]);
                }
            }
            e
        }
        None => (0..params.n_events)
            .map(|_| [rng.random::<f64>() * side, rng.random::<f64>() * side])
            .collect(),
    };
    Ok(WsnScenario {
        params: *params,
        sensors,
        events,
    })
}

impl WsnScenario {
    /// One row per sensor listing `(event, gain)` for every covered event.
    pub fn channel_matrix(&self) -> MeasurementGraph {
        let p = &self.params;
        let rows = self
            .sensors
            .iter()
            .map(|s| {
                self.events
                    .iter()
                    .enumerate()
                    .filter_map(|(i, e)| {
                        gain(distance(s, e), p.radius, p.alpha, p.eta, p.d_floor).map(|h| (i, h))
                    })
                    .collect()
            })
            .collect();
        MeasurementGraph::from_rows(self.events.len(), rows).expect("gains are positive and indices distinct")
    }

    fn covers(&self, s: &[f64; 2], e: &[f64; 2]) -> bool {
        distance(s, e) <= self.params.radius
    }

    /// Number of events inside each sensor's disc.
    pub fn sensor_degrees(&self) -> Vec<usize> {
        self.sensors
            .iter()
            .map(|s| self.events.iter().filter(|e| self.covers(s, e)).count())
            .collect()
    }

    /// Number of sensors covering each event.
    pub fn event_degrees(&self) -> Vec<usize> {
        self.events
            .iter()
            .map(|e| self.sensors.iter().filter(|s| self.covers(s, e)).count())
            .collect()
    }

    pub fn uncovered_events(&self) -> usize {
        self.event_degrees().iter().filter(|&&d| d == 0).count()
    }
}

/// `Binomial(trials, p)` pmf over `0..=trials`.
pub fn binomial_pmf(trials: usize, p: f64) -> Vec<f64> {
    (0..=trials)
        .map(|d| {
            if p <= 0.0 {
                return if d == 0 { 1.0 } else { 0.0 };
            }
            if p >= 1.0 {
                return if d == trials { 1.0 } else { 0.0 };
            }
            (ln_binomial(trials as u64, d as u64)
                + d as f64 * p.ln()
                + (trials - d) as f64 * (1.0 - p).ln())
            .exp()
        })
        .collect()
}

/// Analytical sensor-degree pmf over `0..=n`.
///
/// Random deployment: `Binomial(n, P)`. Uniform deployment: interior,
/// corner and edge sensors see `P`, `P/4` and `P/2` of a disc, mixed in
/// proportion to their counts.
pub fn sensor_degree_pmf(params: &WsnParams) -> Result<Vec<f64>, WsnError> {
    let p = params.coverage_fraction();
    let n = params.n_events;
    match params.deployment {
        Deployment::Random => Ok(binomial_pmf(n, p)),
        Deployment::Uniform => {
            let m = params.m_sensors;
            let r = perfect_sqrt(m).ok_or(WsnError::NotPerfectSquare(m))?;
            if r < 2 {
                return Ok(binomial_pmf(n, p));
            }
            let mf = m as f64;
            let corner = 4.0 / mf;
            let edge = 4.0 * (r as f64 - 2.0) / mf;
            let interior = 1.0 - corner - edge;
            let (a, b, c) = (binomial_pmf(n, p), binomial_pmf(n, p / 4.0), binomial_pmf(n, p / 2.0));
            Ok((0..=n)
                .map(|d| interior * a[d] + corner * b[d] + edge * c[d])
                .collect())
        }
    }
}

/// Analytical event-degree pmf over `0..=m`: `Binomial(m, P)`.
pub fn event_degree_pmf(params: &WsnParams) -> Vec<f64> {
    binomial_pmf(params.m_sensors, params.coverage_fraction())
}

pub fn total_variation(a: &[f64], b: &[f64]) -> f64 {
    let len = a.len().max(b.len());
    0.5 * (0..len)
        .map(|i| (a.get(i).unwrap_or(&0.0) - b.get(i).unwrap_or(&0.0)).abs())
        .sum::<f64>()
}

/// Normalised histogram of `values` over `0..=max`.
pub fn empirical_pmf(values: impl IntoIterator<Item = usize>, max: usize) -> Vec<f64> {
    let mut h = vec![0.0; max + 1];
    let mut total = 0.0;
    for v in values {
        h[v.min(max)] += 1.0;
        total += 1.0;
    }
    if total > 0.0 {
        h.iter_mut().for_each(|x| *x /= total);
    }
    h
}

/// Minimum sensor counts for full coverage: the lattice bound
/// `ceil(a)^2 + (floor(a) + 1)^2` with `a = sqrt(S) / (2 R_s)`, and the random
/// bound `ceil(ln(zeta) / ln(1 - P))`.
pub fn coverage_lower_bounds(area: f64, radius: f64, zeta: f64) -> Result<(u64, u64), WsnError> {
    if !(zeta > 0.0 && zeta < 1.0) {
        return Err(WsnError::InvalidParameter(format!("zeta must lie in (0, 1), got {zeta}")));
    }
    if !(area > 0.0 && radius > 0.0) {
        return Err(WsnError::InvalidParameter("area and radius must be positive".into()));
    }
    let a = area.sqrt() / (2.0 * radius);
    let uniform = (a.ceil() as u64).pow(2) + (a.floor() as u64 + 1).pow(2);
    let p = std::f64::consts::PI * radius * radius / area;
    let random = if p >= 1.0 {
        1
    } else {
        (zeta.ln() / (1.0 - p).ln()).ceil() as u64
    };
    Ok((uniform, random))
}

/// Standard Gaussian tail probability.
pub fn q_function(x: f64) -> f64 {
    0.5 * erfc(x / std::f64::consts::SQRT_2)
}

/// `Q( sqrt(m P (1 - P) R_s^(-3/4)) / (2 sigma) )` with `P = pi R_s^2 / S`.
pub fn pfd_upper_bound(m: usize, radius: f64, area: f64, sigma: f64) -> f64 {
    let p = std::f64::consts::PI * radius * radius / area;
    let arg = (m as f64 * p * (1.0 - p) * radius.powf(-0.75)).sqrt() / (2.0 * sigma);
    q_function(arg)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Decoder {
    Bp { iters: usize },
    SumVerify { t: usize, epsilon: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionConfig {
    pub params: WsnParams,
    pub k: usize,
    /// `None` means noiseless readings.
    pub gamma_db: Option<f64>,
    #[serde(default)]
    pub snr_convention: SnrConvention,
    pub decoder: Decoder,
    pub trials: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialMetrics {
    pub trial: usize,
    pub pcd: f64,
    pub pfd: f64,
    /// Events the decoder could not resolve (sum verification) or that no
    /// sensor covers (belief propagation).
    pub unresolved: usize,
    /// Noise standard deviation used in this trial (0 when noiseless).
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionMetrics {
    pub pcd: f64,
    pub pfd: f64,
    pub trials: Vec<TrialMetrics>,
}

/// Run `trials` independent detections, each with a fresh deployment, a fresh
/// set of `k` active events and fresh noise.
pub fn simulate_detection(cfg: &DetectionConfig) -> Result<DetectionMetrics, WsnError> {
    cfg.params.validate()?;
    if cfg.k > cfg.params.n_events {
        return Err(WsnError::InvalidParameter(format!(
            "{} active events exceed {} sources",
            cfg.k, cfg.params.n_events
        )));
    }
    if matches!(cfg.decoder, Decoder::SumVerify { .. }) && cfg.gamma_db.is_some() {
        return Err(WsnError::InvalidParameter(
            "sum verification needs noiseless readings".into(),
        ));
    }
    if matches!(cfg.decoder, Decoder::Bp { .. }) && cfg.gamma_db.is_none() {
        return Err(WsnError::InvalidParameter("belief propagation needs a finite SNR".into()));
    }
    let trials: Vec<TrialMetrics> = (0..cfg.trials)
        .into_par_iter()
        .map(|trial| detection_trial(cfg, trial))
        .collect::<Result<_, _>>()?;
    let count = trials.len().max(1) as f64;
    Ok(DetectionMetrics {
        pcd: trials.iter().map(|t| t.pcd).sum::<f64>() / count,
        pfd: trials.iter().map(|t| t.pfd).sum::<f64>() / count,
        trials,
    })
}

fn detection_trial(cfg: &DetectionConfig, trial: usize) -> Result<TrialMetrics, WsnError> {
    let ts = seed::derive(cfg.seed, &[trial as u64]);
    let sc = deploy(&cfg.params, seed::derive(ts, &[tag::DEPLOY]))?;
    let h = sc.channel_matrix();
    let n = cfg.params.n_events;
    let mut rng = seed::rng(seed::derive(ts, &[tag::SIGNAL]));
    let support = index::sample(&mut rng, n, cfg.k).into_vec();
    let truth = BinarySignal::from_support(n, &support)?;
    let clean = h.encode(&truth)?;

    let (decision, unresolved, sigma) = match cfg.decoder {
        Decoder::SumVerify { t, epsilon } => {
            let r = sumverify::decode_sv(&h, &clean, t, epsilon)?;
            let unresolved = r.unresolved.len();
            (r.signal, unresolved, 0.0)
        }
        Decoder::Bp { iters } => {
            let gamma_db = cfg.gamma_db.expect("checked above");
            let sigma = match sigma_for_snr(&clean.values, gamma_db, cfg.snr_convention) {
                Ok(s) => s,
                Err(MeasureError::ZeroSignal) => expected_sigma(&h, cfg.k, gamma_db, cfg.snr_convention),
                Err(e) => return Err(e.into()),
            };
            let y = add_awgn(&clean, sigma, seed::derive(ts, &[tag::NOISE]))?;
            let prior = (cfg.k as f64 / n as f64).clamp(1e-6, 1.0 - 1e-6);
            let bp_cfg = BpConfig {
                max_iters: iters,
                prior_one: prior,
                sigma,
            };
            let r = bp::decode_bp(&h, &y, &bp_cfg)?;
            let uncovered = h.column_degrees().iter().filter(|&&d| d == 0).count();
            (r.hard_decision, uncovered, sigma)
        }
    };
    Ok(TrialMetrics {
        trial,
        pcd: bp::pcd(&truth, &decision),
        pfd: bp::pfd(&truth, &decision),
        unresolved,
        sigma,
    })
}

// Noise level from the expected reading energy when the drawn events are all
// out of range, so the SNR still refers to a typical reading.
fn expected_sigma(h: &MeasurementGraph, k: usize, gamma_db: f64, convention: SnrConvention) -> f64 {
    let n = h.n().max(1) as f64;
    let m = h.m().max(1) as f64;
    let energy: f64 = h
        .rows()
        .iter()
        .map(|row| row.iter().map(|&(_, g)| g * g).sum::<f64>())
        .sum::<f64>()
        * k as f64
        / n;
    let reference = match convention {
        SnrConvention::Total => energy,
        SnrConvention::PerMeasurement => energy / m,
    };
    if reference > 0.0 {
        (reference / 10f64.powf(gamma_db / 10.0)).sqrt()
    } else {
        1.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lattice_geometry() {
        let p = WsnParams::new(200.0, 10, 64, 20.0, Deployment::Uniform);
        let sc = deploy(&p, 1).unwrap();
        assert_eq!(sc.sensors[0], [12.5, 12.5]);
        assert_eq!(sc.sensors[1], [12.5, 37.5]);
        assert_eq!(sc.sensors.len(), 64);
        assert_eq!(deploy(&p, 1).unwrap(), sc);
        let bad = WsnParams::new(200.0, 10, 60, 20.0, Deployment::Uniform);
        assert_eq!(deploy(&bad, 1), Err(WsnError::NotPerfectSquare(60)));
    }

    #[test]
    fn gain_boundary_and_clamp() {
        assert_eq!(gain(50.0, 50.0, 2.0, 1.0, 1.0), Some(1.0 / 50.0));
        assert_eq!(gain(50.0f64.next_up(), 50.0, 2.0, 1.0, 1.0), None);
        assert_eq!(gain(1.0, 10.0, 2.0, 60.0, 1.0), Some(60.0));
        assert_eq!(gain(0.0, 10.0, 3.0, 2.5, 1.0), Some(2.5));
        assert_eq!(gain(0.3, 10.0, 3.0, 2.5, 1.0), Some(2.5));
    }

    #[test]
    fn coverage_bounds_examples() {
        assert_eq!(coverage_lower_bounds(500.0 * 500.0, 50.0, 0.01).unwrap(), (61, 145));
        let (u, _) = coverage_lower_bounds(100.0 * 100.0, 50.0, 0.5).unwrap();
        assert_eq!(u, 1 + 4);
        let (u, r) = coverage_lower_bounds(100.0 * 100.0, 80.0, 0.5).unwrap();
        assert_eq!((u, r), (2, 1));
    }

    #[test]
    fn pfd_bound_limits() {
        assert!(pfd_upper_bound(50, 50.0, 250_000.0, 1e-9) < 1e-300);
        assert!((pfd_upper_bound(50, 50.0, 250_000.0, 1e12) - 0.5).abs() < 1e-9);
        let q1 = q_function(1.0);
        assert!((q1 - 0.158_655_253_931_457).abs() < 1e-10, "{q1}");
    }

    #[test]
    fn pmfs_normalise() {
        let p = WsnParams::new(200.0, 256, 64, 20.0, Deployment::Uniform);
        assert!((sensor_degree_pmf(&p).unwrap().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((event_degree_pmf(&p)[0] - (1.0 - p.coverage_fraction()).powi(64)).abs() < 1e-12);
        let tiny = WsnParams::new(200.0, 256, 64, 1e-6, Deployment::Random);
        assert!(sensor_degree_pmf(&tiny).unwrap()[0] > 0.999_999);
    }

    #[test]
    fn grid_events_sit_at_cell_centres() {
        let mut p = WsnParams::new(100.0, 4, 4, 30.0, Deployment::Uniform);
        p.grid = Some((2, 2));
        let sc = deploy(&p, 0).unwrap();
        assert_eq!(sc.events, vec![[25.0, 25.0], [75.0, 25.0], [25.0, 75.0], [75.0, 75.0]]);
        // Lattice sensors coincide with the cell centres: gain clamps to eta.
        let h = sc.channel_matrix();
        assert_eq!(h.row(0), &[(0, 1.0)]);
    }

    #[test]
    fn no_active_events() {
        let p = WsnParams::new(500.0, 256, 64, 50.0, Deployment::Uniform);
        let cfg = DetectionConfig {
            params: p,
            k: 0,
            gamma_db: None,
            snr_convention: SnrConvention::PerMeasurement,
            decoder: Decoder::SumVerify { t: 2, epsilon: 1e-9 },
            trials: 3,
            seed: 4,
        };
        let r = simulate_detection(&cfg).unwrap();
        assert_eq!((r.pcd, r.pfd), (1.0, 0.0));
    }
}
