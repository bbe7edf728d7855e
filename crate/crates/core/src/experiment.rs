//! Seeded parameter sweeps producing CSV tables and JSON manifests.
//!
//! Every random draw in a run is made from a seed derived from the master
//! seed, the grid-point index and the trial index, so a configuration fully
//! determines its output regardless of thread count.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{self, DeConfig, QUpdate};
use crate::bp::{self, MinRatioConfig, SuccessCriterion};
use crate::measure::{BinarySignal, MeasurementGraph, SnrConvention};
use crate::seed::{self, tag};
use crate::sumverify::{self, SvDecodeResult};
use crate::weightset::WeightSet;
use crate::wsn::{self, Decoder, Deployment, DetectionConfig, WsnParams};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("could not parse config: {0}")]
    Parse(String),
    #[error("invalid config:\n  {}", .0.join("\n  "))]
    Range(Vec<String>),
}

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Run(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

fn run_err(e: impl std::fmt::Display) -> ExperimentError {
    ExperimentError::Run(e.to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    /// Noiseless error rate versus sampling ratio.
    Fig6,
    /// Noiseless minimum sampling ratio versus sparsity.
    Fig7,
    /// Noisy minimum sampling ratio versus SNR.
    Fig8,
    /// Optimal degree and measurement bracket versus sparsity.
    Lopt,
    /// Density-evolution fixed points.
    De,
    /// Sensor-network detection rates.
    WsnPcd,
    /// Smallest sensor count reaching the target detection rate.
    WsnMinbeta,
    /// Recovery sweep over a user grid: noiseless when `gamma_db` is empty,
    /// belief propagation otherwise.
    Custom,
}

/// Parameter grid. Each experiment reads the lists it needs and sweeps their
/// Cartesian product in the field order below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    #[serde(default = "default_n")]
    pub n: Vec<usize>,
    #[serde(default)]
    pub s: Vec<f64>,
    #[serde(default)]
    pub k: Vec<usize>,
    #[serde(default, rename = "L")]
    pub degree: Vec<usize>,
    #[serde(default, rename = "T")]
    pub t: Vec<usize>,
    #[serde(default)]
    pub beta: Vec<f64>,
    #[serde(default)]
    pub gamma_db: Vec<f64>,
    #[serde(default)]
    pub snr_convention: SnrConvention,
    #[serde(default)]
    pub deployment: Vec<Deployment>,
    #[serde(default)]
    pub radius: Vec<f64>,
    #[serde(default)]
    pub sensors: Vec<usize>,
    #[serde(default = "default_field")]
    pub field: f64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_eta")]
    pub eta: f64,
    /// Weight-set size; defaults to `L`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight_set_size: Option<usize>,
    /// Fraction of trials that must succeed in minimum-ratio searches.
    #[serde(default = "default_success")]
    pub success_fraction: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_iters")]
    pub bp_iters: usize,
    #[serde(default)]
    pub q_update: QUpdate,
}

fn default_n() -> Vec<usize> {
    vec![1000]
}
fn default_field() -> f64 {
    500.0
}
fn default_alpha() -> f64 {
    3.0
}
fn default_eta() -> f64 {
    1.0
}
fn default_success() -> f64 {
    0.95
}
fn default_epsilon() -> f64 {
    sumverify::DEFAULT_EPSILON
}
fn default_iters() -> usize {
    bp::DEFAULT_ITERS
}

impl Default for Grid {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults deserialize")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    #[serde(default)]
    pub grid: Grid,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
}

fn default_trials() -> usize {
    100
}
fn default_seed() -> u64 {
    1
}

fn range(start: f64, stop: f64, step: f64) -> Vec<f64> {
    let count = ((stop - start) / step + 1e-9).floor() as usize;
    (0..=count)
        .map(|i| ((start + i as f64 * step) * 1e6).round() / 1e6)
        .collect()
}

impl ExperimentConfig {
    /// Default grid for each experiment, at the scale of the original study.
    pub fn preset(kind: ExperimentKind) -> Self {
        let mut grid = Grid::default();
        let mut trials = 100;
        match kind {
            ExperimentKind::Fig6 => {
                grid.s = vec![0.1];
                grid.degree = vec![20, 25, 30];
                grid.t = vec![1];
                grid.beta = range(0.05, 0.30, 0.01);
                trials = 200;
            }
            ExperimentKind::Fig7 => {
                grid.s = range(0.02, 0.2, 0.02);
                grid.t = vec![0, 1, 2];
                grid.beta = range(0.02, 0.6, 0.01);
            }
            ExperimentKind::Fig8 => {
                grid.k = vec![100];
                grid.degree = vec![8, 10, 12];
                grid.gamma_db = vec![15.0, 20.0, 25.0, 30.0];
                grid.beta = range(0.10, 0.40, 0.02);
                grid.success_fraction = 1.0;
                trials = 50;
            }
            ExperimentKind::Lopt => {
                grid.s = range(0.01, 0.3, 0.01);
                grid.t = vec![0, 1, 2];
            }
            ExperimentKind::De => {
                grid.s = vec![0.1];
                grid.degree = vec![20, 25, 30];
                grid.t = vec![1, 2];
                grid.beta = range(0.05, 0.30, 0.01);
            }
            ExperimentKind::WsnPcd => {
                grid.n = vec![256];
                grid.k = vec![10];
                grid.deployment = vec![Deployment::Uniform];
                grid.radius = vec![30.0, 40.0, 50.0, 60.0];
                grid.sensors = vec![36, 49, 64, 81, 100, 121];
                trials = 200;
            }
            ExperimentKind::WsnMinbeta => {
                grid.n = vec![256];
                grid.k = vec![4];
                grid.deployment = vec![Deployment::Uniform, Deployment::Random];
                grid.radius = vec![50.0];
                grid.gamma_db = vec![10.0, 15.0, 20.0, 25.0, 30.0];
                grid.sensors = (4..=16).map(|r| r * r).collect();
                grid.success_fraction = 0.99;
            }
            ExperimentKind::Custom => {}
        }
        Self {
            experiment: kind,
            grid,
            trials,
            seed: 1,
            output: None,
        }
    }

    fn violations(&self) -> Vec<String> {
        let g = &self.grid;
        let mut v = Vec::new();
        if self.trials == 0 {
            v.push("trials: must be at least 1".to_string());
        }
        if g.n.contains(&0) {
            v.push("grid.n: entries must be positive".into());
        }
        for &s in &g.s {
            if !(s > 0.0 && s < 1.0) {
                v.push(format!("grid.s: {s} is outside (0, 1)"));
            }
        }
        for &b in &g.beta {
            if !(b.is_finite() && b > 0.0) {
                v.push(format!("grid.beta: {b} must be positive"));
            }
        }
        for &gm in &g.gamma_db {
            if !gm.is_finite() {
                v.push(format!("grid.gamma_db: {gm} is not finite"));
            }
        }
        for &l in &g.degree {
            if l == 0 {
                v.push("grid.L: entries must be positive".into());
            }
            for &t in &g.t {
                if t > l {
                    v.push(format!("grid.T: T={t} exceeds L={l}"));
                }
            }
            for &n in &g.n {
                if l > n {
                    v.push(format!("grid.L: L={l} exceeds n={n}"));
                }
            }
            if let Some(d) = g.weight_set_size {
                if l > d {
                    v.push(format!("grid.L: L={l} exceeds weight_set_size={d}"));
                }
            }
            let noisy = matches!(self.experiment, ExperimentKind::Fig8)
                || (self.experiment == ExperimentKind::Custom && !g.gamma_db.is_empty());
            if noisy && l > bp::MAX_ROW_DEGREE {
                v.push(format!("grid.L: L={l} exceeds the belief-propagation limit {}", bp::MAX_ROW_DEGREE));
            }
        }
        for &k in &g.k {
            for &n in &g.n {
                if k > n {
                    v.push(format!("grid.k: k={k} exceeds n={n}"));
                }
            }
        }
        for &r in &g.radius {
            if !(r.is_finite() && r > 0.0) {
                v.push(format!("grid.radius: {r} must be positive"));
            }
        }
        if !(g.field.is_finite() && g.field > 0.0) {
            v.push(format!("grid.field: {} must be positive", g.field));
        }
        if !(g.alpha > 0.0 && g.eta > 0.0) {
            v.push("grid.alpha, grid.eta: must be positive".into());
        }
        if g.deployment.contains(&Deployment::Uniform) {
            for &m in &g.sensors {
                let r = (m as f64).sqrt().round() as usize;
                if r * r != m {
                    v.push(format!("grid.sensors: {m} is not a perfect square (uniform deployment)"));
                }
            }
        }
        if !(g.success_fraction > 0.0 && g.success_fraction <= 1.0) {
            v.push(format!("grid.success_fraction: {} is outside (0, 1]", g.success_fraction));
        }
        if !(g.epsilon.is_finite() && g.epsilon > 0.0) {
            v.push(format!("grid.epsilon: {} must be positive", g.epsilon));
        }
        if g.bp_iters == 0 {
            v.push("grid.bp_iters: must be at least 1".into());
        }
        if self.experiment == ExperimentKind::Fig8 && self.trials < 20 {
            v.push("trials: minimum-ratio searches need at least 20 trials".into());
        }
        v
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Range(v))
        }
    }
}

/// Parse and range-check a JSON configuration, reporting every violation.
pub fn validate_config(raw: &str) -> Result<ExperimentConfig, ConfigError> {
    let cfg: ExperimentConfig =
        serde_json::from_str(raw).map_err(|e| ConfigError::Parse(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

/// Rows of strings under a header, in grid order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl ResultTable {
    fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn to_csv(&self) -> Result<String, ExperimentError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row)?;
        }
        let bytes = w.into_inner().map_err(|e| run_err(e.error()))?;
        String::from_utf8(bytes).map_err(run_err)
    }
}

/// Plain decimal, switching to scientific notation below `1e-3` in magnitude.
pub fn fmt_float(v: f64) -> String {
    if v.is_nan() {
        "NA".into()
    } else if v != 0.0 && v.abs() < 1e-3 {
        format!("{v:e}")
    } else {
        format!("{v}")
    }
}

fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn sparsity_k(n: usize, s: f64) -> usize {
    (s * n as f64).round() as usize
}

fn measurements(n: usize, beta: f64) -> usize {
    (beta * n as f64).round() as usize
}

/// One noiseless trial: fresh weights, graph and signal, decoded by sum
/// verification.
#[allow(clippy::too_many_arguments)]
pub fn noiseless_trial(
    n: usize,
    k: usize,
    m: usize,
    degree: usize,
    weight_set_size: usize,
    t: usize,
    epsilon: f64,
    trial_seed: u64,
) -> Result<(BinarySignal, SvDecodeResult), ExperimentError> {
    let ws = WeightSet::sample_gaussian(weight_set_size, seed::derive(trial_seed, &[tag::WEIGHTS]))
        .map_err(run_err)?;
    let g = MeasurementGraph::build(n, m, degree, &ws, seed::derive(trial_seed, &[tag::GRAPH, m as u64]))
        .map_err(run_err)?;
    let b = BinarySignal::random(n, k, seed::derive(trial_seed, &[tag::SIGNAL])).map_err(run_err)?;
    let c = g.encode(&b).map_err(run_err)?;
    let r = sumverify::decode_sv(&g, &c, t, epsilon).map_err(run_err)?;
    Ok((b, r))
}

fn product<A: Clone, B: Clone>(a: &[A], b: &[B]) -> Vec<(A, B)> {
    a.iter()
        .flat_map(|x| b.iter().map(move |y| (x.clone(), y.clone())))
        .collect()
}

/// Run an experiment and return its table.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ResultTable, ExperimentError> {
    cfg.validate()?;
    match cfg.experiment {
        ExperimentKind::Fig6 => sv_error_sweep(cfg),
        ExperimentKind::Custom if cfg.grid.gamma_db.is_empty() => sv_error_sweep(cfg),
        ExperimentKind::Custom => bp_recovery_sweep(cfg),
        ExperimentKind::Fig7 => sv_min_ratio(cfg),
        ExperimentKind::Fig8 => bp_min_ratio(cfg),
        ExperimentKind::Lopt => lopt_table(cfg),
        ExperimentKind::De => de_table(cfg),
        ExperimentKind::WsnPcd => wsn_pcd(cfg),
        ExperimentKind::WsnMinbeta => wsn_min_sensors(cfg),
    }
}

fn sv_error_sweep(cfg: &ExperimentConfig) -> Result<ResultTable, ExperimentError> {
    let g = &cfg.grid;
    let mut table = ResultTable::new(&[
        "point", "n", "s", "L", "T", "beta", "m", "trials", "error_rate", "error_stderr",
        "complete_fraction",
    ]);
    let points: Vec<_> = product(&g.n, &g.s)
        .into_iter()
        .flat_map(|(n, s)| product(&g.degree, &g.t).into_iter().map(move |(l, t)| (n, s, l, t)))
        .flat_map(|(n, s, l, t)| g.beta.iter().map(move |&b| (n, s, l, t, b)))
        .collect();
    for (point, &(n, s, l, t, beta)) in points.iter().enumerate() {
        let m = measurements(n, beta);
        let k = sparsity_k(n, s);
        let d = g.weight_set_size.unwrap_or(l);
        let results: Vec<SvDecodeResult> = (0..cfg.trials)
            .into_par_iter()
            .map(|trial| {
                noiseless_trial(n, k, m, l, d, t, g.epsilon, seed::trial_seed(cfg.seed, point, trial))
                    .map(|r| r.1)
            })
            .collect::<Result<_, _>>()?;
        let errs: Vec<f64> = results.iter().map(SvDecodeResult::unresolved_fraction).collect();
        let (mean, se) = mean_stderr(&errs);
        let complete = results.iter().filter(|r| r.is_complete()).count() as f64 / results.len() as f64;
        table.rows.push(vec![
            point.to_string(),
            n.to_string(),
            fmt_float(s),
            l.to_string(),
            t.to_string(),
            fmt_float(beta),
            m.to_string(),
            cfg.trials.to_string(),
            fmt_float(mean),
            fmt_float(se),
            fmt_float(complete),
        ]);
    }
    Ok(table)
}

/// Smallest `beta` (scanned upward) at which at least `success_fraction`
/// of the trials decode completely, using the closed-form degree when `L`
/// is not given.
fn sv_min_ratio(cfg: &ExperimentConfig) -> Result<ResultTable, ExperimentError> {
    let g = &cfg.grid;
    let mut table = ResultTable::new(&["point", "n", "s", "T", "L", "beta_min", "m_min", "m_lower", "m_upper"]);
    let mut betas = g.beta.clone();
    betas.sort_by(f64::total_cmp);
    let points: Vec<_> = product(&g.n, &g.s)
        .into_iter()
        .flat_map(|(n, s)| g.t.iter().map(move |&t| (n, s, t)))
        .collect();
    for (point, &(n, s, t)) in points.iter().enumerate() {
        let bounds = analysis::measurement_bounds(n, s, t).map_err(run_err)?;
        let degrees = if g.degree.is_empty() { vec![bounds.l_opt.min(n)] } else { g.degree.clone() };
        for l in degrees {
            let d = g.weight_set_size.unwrap_or(l);
            let k = sparsity_k(n, s);
            let mut found = None;
            for &beta in &betas {
                let m = measurements(n, beta);
                let ok = min_fraction_complete(cfg.trials, g.success_fraction, |trial| {
                    noiseless_trial(n, k, m, l, d, t, g.epsilon, seed::trial_seed(cfg.seed, point, trial))
                        .map(|r| r.1.is_complete())
                })?;
                if ok {
                    found = Some((beta, m));
                    break;
                }
            }
            let (b, m) = found.map_or(("NA".to_string(), "NA".to_string()), |(b, m)| {
                (fmt_float(b), m.to_string())
            });
            table.rows.push(vec![
                point.to_string(),
                n.to_string(),
                fmt_float(s),
                t.to_string(),
                l.to_string(),
                b,
                m,
                bounds.m_lower.to_string(),
                bounds.m_upper.to_string(),
            ]);
        }
    }
    Ok(table)
}

/// Run trials in order until the success requirement is decided.
fn min_fraction_complete(
    trials: usize,
    fraction: f64,
    mut run: impl FnMut(usize) -> Result<bool, ExperimentError>,
) -> Result<bool, ExperimentError> {
    let allowed = trials - (fraction * trials as f64 - 1e-9).ceil() as usize;
    let mut failures = 0;
    for trial in 0..trials {
        if !run(trial)? {
            failures += 1;
            if failures > allowed {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

fn bp_min_ratio(cfg: &ExperimentConfig) -> Result<ResultTable, ExperimentError> {
    let g = &cfg.grid;
    let mut table = ResultTable::new(&["point", "n", "k", "L", "gamma_db", "beta_min", "m_min", "exact_fraction"]);
    let ks: Vec<(usize, usize)> = g
        .n
        .iter()
        .flat_map(|&n| {
            let from_s = g.s.iter().map(move |&s| (n, sparsity_k(n, s)));
            let from_k = g.k.iter().map(move |&k| (n, k));
            from_s.chain(from_k)
        })
        .collect();
    let points: Vec<_> = ks
        .into_iter()
        .flat_map(|(n, k)| product(&g.degree, &g.gamma_db).into_iter().map(move |(l, gm)| (n, k, l, gm)))
        .collect();
    for (point, &(n, k, l, gamma_db)) in points.iter().enumerate() {
        let mr = MinRatioConfig {
            n,
            k,
            degree: l,
            gamma_db,
            snr_convention: g.snr_convention,
            betas: g.beta.clone(),
            trials: cfg.trials,
            required_fraction: g.success_fraction,
            criterion: SuccessCriterion::AllNonzeros,
            weight_set_size: g.weight_set_size,
            max_iters: g.bp_iters,
            seed: seed::derive(cfg.seed, &[point as u64]),
        };
        let (beta, m, exact) = match bp::min_sampling_ratio(&mr) {
            Ok(o) => {
                let last = o.scanned.last().expect("a passing ratio was scanned");
                (fmt_float(o.beta_min), o.m.to_string(), fmt_float(last.exact as f64 / last.attempted as f64))
            }
            Err(bp::BpError::NotAchieved) => ("NA".into(), "NA".into(), "NA".into()),
            Err(e) => return Err(run_err(e)),
        };
        table.rows.push(vec![
            point.to_string(),
            n.to_string(),
            k.to_string(),
            l.to_string(),
            fmt_float(gamma_db),
            beta,
            m,
            exact,
        ]);
    }
    Ok(table)
}

fn bp_recovery_sweep(cfg: &ExperimentConfig) -> Result<ResultTable, ExperimentError> {
    let g = &cfg.grid;
    let mut table = ResultTable::new(&[
        "point", "n", "k", "L", "gamma_db", "beta", "m", "trials", "pcd", "pcd_stderr", "pfd",
        "pfd_stderr", "exact_fraction",
    ]);
    let ks: Vec<(usize, usize)> = g
        .n
        .iter()
        .flat_map(|&n| g.s.iter().map(move |&s| (n, sparsity_k(n, s))).chain(g.k.iter().map(move |&k| (n, k))))
        .collect();
    let points: Vec<_> = ks
        .into_iter()
        .flat_map(|(n, k)| product(&g.degree, &g.gamma_db).into_iter().map(move |(l, gm)| (n, k, l, gm)))
        .flat_map(|(n, k, l, gm)| g.beta.iter().map(move |&b| (n, k, l, gm, b)))
        .collect();
    for (point, &(n, k, l, gamma_db, beta)) in points.iter().enumerate() {
        let m = measurements(n, beta);
        let d = g.weight_set_size.unwrap_or(l);
        let outcomes: Vec<(f64, f64, bool)> = (0..cfg.trials)
            .into_par_iter()
            .map(|trial| {
                let t = bp::run_noisy_trial(
                    n,
                    k,
                    m,
                    l,
                    d,
                    gamma_db,
                    g.snr_convention,
                    g.bp_iters,
                    seed::derive(cfg.seed, &[point as u64]),
                    trial,
                )
                .map_err(run_err)?;
                let dec = &t.decision.hard_decision;
                Ok((bp::pcd(&t.truth, dec), bp::pfd(&t.truth, dec), &t.truth == dec))
            })
            .collect::<Result<_, ExperimentError>>()?;
        let pcds: Vec<f64> = outcomes.iter().map(|o| o.0).collect();
        let pfds: Vec<f64> = outcomes.iter().map(|o| o.1).collect();
        let exact = outcomes.iter().filter(|o| o.2).count() as f64 / outcomes.len().max(1) as f64;
        let (pcd, pcd_se) = mean_stderr(&pcds);
        let (pfd, pfd_se) = mean_stderr(&pfds);
        table.rows.push(vec![
            point.to_string(),
            n.to_string(),
            k.to_string(),
            l.to_string(),
            fmt_float(gamma_db),
            fmt_float(beta),
            m.to_string(),
            cfg.trials.to_string(),
            fmt_float(pcd),
            fmt_float(pcd_se),
            fmt_float(pfd),
            fmt_float(pfd_se),
            fmt_float(exact),
        ]);
    }
    Ok(table)
}

fn lopt_table(cfg: &ExperimentConfig) -> Result<ResultTable, ExperimentError> {
    let g = &cfg.grid;
    let mut table = ResultTable::new(&[
        "point", "n", "s", "T", "L_exact", "L_approx", "m_lower", "m_upper", "closed_lower", "closed_upper",
    ]);
    let points: Vec<_> = product(&g.n, &g.s)
        .into_iter()
        .flat_map(|(n, s)| g.t.iter().map(move |&t| (n, s, t)))
        .collect();
    for (point, &(n, s, t)) in points.iter().enumerate() {
        let (exact, approx) = analysis::optimal_degree(t, s, analysis::DEFAULT_L_MAX).map_err(run_err)?;
        let b = analysis::measurement_bounds(n, s, t).map_err(run_err)?;
        table.rows.push(vec![
            point.to_string(),
            n.to_string(),
            fmt_float(s),
            t.to_string(),
            exact.to_string(),
            approx.to_string(),
            b.m_lower.to_string(),
            b.m_upper.to_string(),
            fmt_float(b.closed_lower),
            fmt_float(b.closed_upper),
        ]);
    }
    Ok(table)
}

fn de_table(cfg: &ExperimentConfig) -> Result<ResultTable, ExperimentError> {
    let g = &cfg.grid;
    let mut table = ResultTable::new(&["point", "s", "L", "T", "beta", "iterations", "p", "unresolved"]);
    let points: Vec<_> = product(&g.s, &g.degree)
        .into_iter()
        .flat_map(|(s, l)| g.t.iter().map(move |&t| (s, l, t)))
        .flat_map(|(s, l, t)| g.beta.iter().map(move |&b| (s, l, t, b)))
        .collect();
    for (point, &(s, l, t, beta)) in points.iter().enumerate() {
        let mut de = DeConfig::new(l, t, s, beta);
        de.q_update = g.q_update;
        let (iters, p, unresolved) = match analysis::density_evolution(&de) {
            Ok(traj) => {
                let last = traj.last().expect("non-empty trajectory");
                (last.iter.to_string(), fmt_float(last.p), fmt_float(last.unresolved))
            }
            Err(analysis::AnalysisError::InvalidParameter(_)) => ("NA".into(), "NA".into(), "NA".into()),
            Err(e) => return Err(run_err(e)),
        };
        table.rows.push(vec![
            point.to_string(),
            fmt_float(s),
            l.to_string(),
            t.to_string(),
            fmt_float(beta),
            iters,
            p,
            unresolved,
        ]);
    }
    Ok(table)
}

fn wsn_points(g: &Grid) -> Vec<(usize, usize, Deployment, f64, usize, Option<f64>)> {
    let gammas: Vec<Option<f64>> = if g.gamma_db.is_empty() {
        vec![None]
    } else {
        g.gamma_db.iter().map(|&x| Some(x)).collect()
    };
    let mut out = Vec::new();
    for &n in &g.n {
        for &k in &g.k {
            for &dep in &g.deployment {
                for &r in &g.radius {
                    for &gm in &gammas {
                        for &m in &g.sensors {
                            out.push((n, k, dep, r, m, gm));
                        }
                    }
                }
            }
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn wsn_detection(
    g: &Grid,
    n: usize,
    k: usize,
    dep: Deployment,
    radius: f64,
    m: usize,
    gamma_db: Option<f64>,
    trials: usize,
    seed: u64,
) -> Result<wsn::DetectionMetrics, ExperimentError> {
    let mut params = WsnParams::new(g.field, n, m, radius, dep);
    params.alpha = g.alpha;
    params.eta = g.eta;
    let decoder = match gamma_db {
        None => Decoder::SumVerify {
            t: g.t.first().copied().unwrap_or(2),
            epsilon: g.epsilon,
        },
        Some(_) => Decoder::Bp { iters: g.bp_iters },
    };
    wsn::simulate_detection(&DetectionConfig {
        params,
        k,
        gamma_db,
        snr_convention: g.snr_convention,
        decoder,
        trials,
        seed,
    })
    .map_err(run_err)
}

fn wsn_pcd(cfg: &ExperimentConfig) -> Result<ResultTable, ExperimentError> {
    let g = &cfg.grid;
    let mut table = ResultTable::new(&[
        "point", "n", "k", "deployment", "radius", "gamma_db", "m", "beta", "trials", "pcd", "pcd_stderr",
        "pfd", "pfd_stderr",
    ]);
    for (point, &(n, k, dep, r, m, gm)) in wsn_points(g).iter().enumerate() {
        let res = wsn_detection(g, n, k, dep, r, m, gm, cfg.trials, seed::derive(cfg.seed, &[point as u64]))?;
        let pcds: Vec<f64> = res.trials.iter().map(|t| t.pcd).collect();
        let pfds: Vec<f64> = res.trials.iter().map(|t| t.pfd).collect();
        let (pcd, pcd_se) = mean_stderr(&pcds);
        let (pfd, pfd_se) = mean_stderr(&pfds);
        table.rows.push(vec![
            point.to_string(),
            n.to_string(),
            k.to_string(),
            deployment_name(dep).into(),
            fmt_float(r),
            gm.map_or("inf".into(), fmt_float),
            m.to_string(),
            fmt_float(m as f64 / n as f64),
            cfg.trials.to_string(),
            fmt_float(pcd),
            fmt_float(pcd_se),
            fmt_float(pfd),
            fmt_float(pfd_se),
        ]);
    }
    Ok(table)
}

fn deployment_name(d: Deployment) -> &'static str {
    match d {
        Deployment::Random => "random",
        Deployment::Uniform => "uniform",
    }
}

/// Smallest sensor count (scanned upward) whose mean detection rate reaches
/// `success_fraction`.
fn wsn_min_sensors(cfg: &ExperimentConfig) -> Result<ResultTable, ExperimentError> {
    let g = &cfg.grid;
    let mut table = ResultTable::new(&["point", "n", "k", "deployment", "radius", "gamma_db", "m_min", "beta_min", "pcd"]);
    let mut sensors = g.sensors.clone();
    sensors.sort_unstable();
    let mut point = 0usize;
    let gammas: Vec<Option<f64>> = if g.gamma_db.is_empty() {
        vec![None]
    } else {
        g.gamma_db.iter().map(|&x| Some(x)).collect()
    };
    for &n in &g.n {
        for &k in &g.k {
            for &dep in &g.deployment {
                for &r in &g.radius {
                    for &gm in &gammas {
                        let mut found = None;
                        for &m in &sensors {
                            if dep == Deployment::Uniform {
                                let q = (m as f64).sqrt().round() as usize;
                                if q * q != m {
                                    continue;
                                }
                            }
                            let res = wsn_detection(g, n, k, dep, r, m, gm, cfg.trials, seed::derive(cfg.seed, &[point as u64]))?;
                            if res.pcd >= g.success_fraction {
                                found = Some((m, res.pcd));
                                break;
                            }
                        }
                        let (mm, bm, pcd) = found.map_or(("NA".into(), "NA".into(), "NA".into()), |(m, p)| {
                            (m.to_string(), fmt_float(m as f64 / n as f64), fmt_float(p))
                        });
                        table.rows.push(vec![
                            point.to_string(),
                            n.to_string(),
                            k.to_string(),
                            deployment_name(dep).into(),
                            fmt_float(r),
                            gm.map_or("inf".into(), fmt_float),
                            mm,
                            bm,
                            pcd,
                        ]);
                        point += 1;
                    }
                }
            }
        }
    }
    Ok(table)
}

/// Everything needed to re-run a table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub config: ExperimentConfig,
    pub columns: Vec<String>,
    pub rows: usize,
    pub csv: String,
}

pub fn manifest(cfg: &ExperimentConfig, table: &ResultTable, csv_name: &str) -> Manifest {
    Manifest {
        tool: "afcs".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config: cfg.clone(),
        columns: table.header.clone(),
        rows: table.rows.len(),
        csv: csv_name.into(),
    }
}

/// Write `<path>` (CSV) and `<path>.manifest.json`.
pub fn write_outputs(cfg: &ExperimentConfig, table: &ResultTable, path: &Path) -> Result<(), ExperimentError> {
    std::fs::write(path, table.to_csv()?)?;
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let mut mpath = path.as_os_str().to_owned();
    mpath.push(".manifest.json");
    let mut text = serde_json::to_string_pretty(&manifest(cfg, table, &name))?;
    let _ = writeln!(text);
    std::fs::write(mpath, text)?;
    Ok(())
}
