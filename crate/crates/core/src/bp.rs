//! Belief propagation for binary signals observed through a weighted sparse
//! graph in additive white Gaussian noise.
//!
//! Messages are kept as log-likelihood ratios `ln p(1) - ln p(0)`. Each check
//! message is computed exactly by enumerating all `2^d` assignments of the
//! row's neighbours, so rows are limited to [`MAX_ROW_DEGREE`] neighbours.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::measure::{
    add_awgn, BinarySignal, MeasureError, MeasurementGraph, MeasurementVector, SnrConvention,
};
use crate::seed::{self, tag};
use crate::weightset::{WeightSet, WeightSetError};

/// Largest row degree handled by exact enumeration.
pub const MAX_ROW_DEGREE: usize = 21;

pub const DEFAULT_ITERS: usize = 30;

/// Prior used when the number of ones is unknown.
pub const DEFAULT_PRIOR: f64 = 0.05;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BpError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("row {row} has degree {degree}; exact enumeration supports at most {MAX_ROW_DEGREE}")]
    DegreeTooLargeForExactEnumeration { row: usize, degree: usize },
    #[error("graph has {expected} rows but {actual} measurements were given")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("no sampling ratio in the grid met the success criterion")]
    NotAchieved,
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error(transparent)]
    Weights(#[from] WeightSetError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BpConfig {
    pub max_iters: usize,
    pub prior_one: f64,
    pub sigma: f64,
}

impl BpConfig {
    pub fn new(sigma: f64, prior_one: f64) -> Self {
        Self {
            max_iters: DEFAULT_ITERS,
            prior_one,
            sigma,
        }
    }

    pub fn validate(&self) -> Result<(), BpError> {
        if self.max_iters == 0 {
            return Err(BpError::InvalidConfig("max_iters must be at least 1".into()));
        }
        if !(self.prior_one > 0.0 && self.prior_one < 1.0) {
            return Err(BpError::InvalidConfig(format!(
                "prior_one must lie in (0, 1), got {}",
                self.prior_one
            )));
        }
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(BpError::InvalidConfig(format!(
                "sigma must be finite and positive, got {}",
                self.sigma
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorResult {
    pub posterior_one: Vec<f64>,
    pub hard_decision: BinarySignal,
    pub iterations_run: usize,
}

/// Run `cfg.max_iters` flooding iterations and return the posteriors.
pub fn decode_bp(
    g: &MeasurementGraph,
    y: &MeasurementVector,
    cfg: &BpConfig,
) -> Result<PosteriorResult, BpError> {
    let mut dec = BpDecoder::new(g, y, cfg)?;
    for _ in 0..cfg.max_iters {
        dec.step();
    }
    Ok(dec.result())
}

/// Iteration-level access to the decoder state.
pub struct BpDecoder<'a> {
    g: &'a MeasurementGraph,
    y: &'a [f64],
    inv_two_var: f64,
    prior_llr: f64,
    offsets: Vec<usize>,
    // (row, position) of every edge, grouped by variable.
    columns: Vec<Vec<usize>>,
    var_llr: Vec<f64>,
    check_llr: Vec<f64>,
    iterations: usize,
}

impl<'a> BpDecoder<'a> {
    pub fn new(
        g: &'a MeasurementGraph,
        y: &'a MeasurementVector,
        cfg: &BpConfig,
    ) -> Result<Self, BpError> {
        cfg.validate()?;
        if y.len() != g.m() {
            return Err(BpError::DimensionMismatch {
                expected: g.m(),
                actual: y.len(),
            });
        }
        let mut offsets = Vec::with_capacity(g.m() + 1);
        offsets.push(0);
        for (row, entries) in g.rows().iter().enumerate() {
            if entries.len() > MAX_ROW_DEGREE {
                return Err(BpError::DegreeTooLargeForExactEnumeration {
                    row,
                    degree: entries.len(),
                });
            }
            offsets.push(offsets[row] + entries.len());
        }
        let edges = *offsets.last().unwrap_or(&0);
        let mut columns = vec![Vec::new(); g.n()];
        for (row, entries) in g.rows().iter().enumerate() {
            for (pos, &(j, _)) in entries.iter().enumerate() {
                columns[j].push(offsets[row] + pos);
            }
        }
        let prior_llr = (cfg.prior_one / (1.0 - cfg.prior_one)).ln();
        Ok(Self {
            g,
            y: &y.values,
            inv_two_var: 1.0 / (2.0 * cfg.sigma * cfg.sigma),
            prior_llr,
            offsets,
            columns,
            var_llr: vec![prior_llr; edges],
            check_llr: vec![0.0; edges],
            iterations: 0,
        })
    }

    /// One check update followed by one variable update.
    pub fn step(&mut self) {
        let g = self.g;
        let y = self.y;
        let inv_two_var = self.inv_two_var;
        let offsets = &self.offsets;
        let var_llr = &self.var_llr;
        let updates: Vec<Vec<f64>> = (0..g.m())
            .into_par_iter()
            .map_init(RowScratch::default, |scratch, i| {
                let incoming = &var_llr[offsets[i]..offsets[i + 1]];
                scratch.check_row(g.row(i), incoming, y[i], inv_two_var)
            })
            .collect();
        for (i, msgs) in updates.into_iter().enumerate() {
            self.check_llr[self.offsets[i]..self.offsets[i + 1]].copy_from_slice(&msgs);
        }
        for edges in &self.columns {
            let total = self.prior_llr + edges.iter().map(|&e| self.check_llr[e]).sum::<f64>();
            for &e in edges {
                self.var_llr[e] = total - self.check_llr[e];
            }
        }
        self.iterations += 1;
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    /// Variable-to-check messages as `(q(0), q(1))`, edges in row-major order.
    pub fn variable_messages(&self) -> Vec<(f64, f64)> {
        self.var_llr.iter().map(|&l| llr_to_pair(l)).collect()
    }

    /// Check-to-variable messages scaled so the larger entry is one.
    pub fn check_messages(&self) -> Vec<(f64, f64)> {
        self.check_llr
            .iter()
            .map(|&l| if l >= 0.0 { ((-l).exp(), 1.0) } else { (1.0, l.exp()) })
            .collect()
    }

    pub fn check_llrs(&self) -> &[f64] {
        &self.check_llr
    }

    pub fn posterior_llr(&self) -> Vec<f64> {
        self.columns
            .iter()
            .map(|edges| self.prior_llr + edges.iter().map(|&e| self.check_llr[e]).sum::<f64>())
            .collect()
    }

    pub fn result(&self) -> PosteriorResult {
        let posterior_one: Vec<f64> = self.posterior_llr().into_iter().map(sigmoid).collect();
        let bits = posterior_one.iter().map(|&p| u8::from(p > 0.5)).collect();
        PosteriorResult {
            posterior_one,
            hard_decision: BinarySignal::new(bits).expect("bits are binary"),
            iterations_run: self.iterations,
        }
    }
}

#[derive(Default)]
struct RowScratch {
    sum: Vec<f64>,
    logp: Vec<f64>,
    score: Vec<f64>,
}

impl RowScratch {
    fn check_row(
        &mut self,
        row: &[(usize, f64)],
        incoming: &[f64],
        y: f64,
        inv_two_var: f64,
    ) -> Vec<f64> {
        let d = row.len();
        let configs = 1usize << d;
        self.sum.resize(configs, 0.0);
        self.logp.resize(configs, 0.0);
        self.score.resize(configs, 0.0);
        let lq0: Vec<f64> = incoming.iter().map(|&l| -softplus(l)).collect();
        let lq1: Vec<f64> = incoming.iter().map(|&l| -softplus(-l)).collect();

        self.sum[0] = 0.0;
        self.logp[0] = lq0.iter().sum();
        for c in 1..configs {
            let bit = c.trailing_zeros() as usize;
            let prev = c & (c - 1);
            self.sum[c] = self.sum[prev] + row[bit].1;
            self.logp[c] = self.logp[prev] + lq1[bit] - lq0[bit];
        }
        let mut peak = f64::NEG_INFINITY;
        for c in 0..configs {
            let r = y - self.sum[c];
            let v = self.logp[c] - r * r * inv_two_var;
            self.score[c] = v;
            peak = peak.max(v);
        }

        let mut s0 = vec![0.0; d];
        let mut s1 = vec![0.0; d];
        for c in 0..configs {
            let shifted = self.score[c] - peak;
            if shifted < -700.0 {
                continue;
            }
            let e = shifted.exp();
            for j in 0..d {
                if c >> j & 1 == 1 {
                    s1[j] += e;
                } else {
                    s0[j] += e;
                }
            }
        }

        (0..d)
            .map(|j| {
                let l1 = self.bucket_log(j, true, s1[j], peak);
                let l0 = self.bucket_log(j, false, s0[j], peak);
                (l1 - lq1[j]) - (l0 - lq0[j])
            })
            .collect()
    }

    // ln of the sum of exp(score) over configurations with bit `j` equal to
    // `one`, recomputed with a dedicated maximum when the shared one underflows.
    fn bucket_log(&self, j: usize, one: bool, shared: f64, peak: f64) -> f64 {
        if shared > 1e-250 {
            return shared.ln() + peak;
        }
        let member = |c: &usize| (c >> j & 1 == 1) == one;
        let configs = self.score.len();
        let local = (0..configs)
            .filter(member)
            .map(|c| self.score[c])
            .fold(f64::NEG_INFINITY, f64::max);
        let total: f64 = (0..configs)
            .filter(member)
            .map(|c| (self.score[c] - local).exp())
            .sum();
        total.ln() + local
    }
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn llr_to_pair(l: f64) -> (f64, f64) {
    let p1 = sigmoid(l);
    (1.0 - p1, p1)
}

/// What counts as a successful noisy recovery.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "value")]
pub enum SuccessCriterion {
    /// Hard decision equals the signal.
    ExactRecovery,
    /// Every nonzero entry is detected; false alarms are allowed.
    AllNonzeros,
    /// Fraction of detected nonzeros is at least the given value.
    PcdAtLeast(f64),
}

impl SuccessCriterion {
    pub fn accepts(&self, truth: &BinarySignal, decision: &BinarySignal) -> bool {
        match *self {
            SuccessCriterion::ExactRecovery => truth == decision,
            SuccessCriterion::AllNonzeros => truth.support().iter().all(|&j| decision.get(j)),
            SuccessCriterion::PcdAtLeast(level) => pcd(truth, decision) >= level,
        }
    }
}

/// Fraction of the ones in `truth` that are ones in `decision` (1 if none).
pub fn pcd(truth: &BinarySignal, decision: &BinarySignal) -> f64 {
    let support = truth.support();
    if support.is_empty() {
        return 1.0;
    }
    support.iter().filter(|&&j| decision.get(j)).count() as f64 / support.len() as f64
}

/// Fraction of the zeros in `truth` that are ones in `decision` (0 if none).
pub fn pfd(truth: &BinarySignal, decision: &BinarySignal) -> f64 {
    let zeros = truth.len() - truth.k();
    if zeros == 0 {
        return 0.0;
    }
    (0..truth.len())
        .filter(|&j| !truth.get(j) && decision.get(j))
        .count() as f64
        / zeros as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinRatioConfig {
    pub n: usize,
    pub k: usize,
    /// Row degree `L`.
    pub degree: usize,
    pub gamma_db: f64,
    #[serde(default)]
    pub snr_convention: SnrConvention,
    /// Candidate sampling ratios, scanned in increasing order.
    pub betas: Vec<f64>,
    pub trials: usize,
    /// Fraction of trials that must succeed (1.0 or 0.99).
    pub required_fraction: f64,
    pub criterion: SuccessCriterion,
    /// Weight-set size; `None` uses `degree`.
    pub weight_set_size: Option<usize>,
    pub max_iters: usize,
    pub seed: u64,
}

/// Per-ratio tally from a sampling-ratio scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioTrial {
    pub beta: f64,
    pub m: usize,
    pub successes: usize,
    pub exact: usize,
    pub attempted: usize,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinRatioOutcome {
    pub beta_min: f64,
    pub m: usize,
    pub scanned: Vec<RatioTrial>,
}

/// Outcome of one noisy trial at `m` measurements.
pub struct NoisyTrial {
    pub truth: BinarySignal,
    pub decision: PosteriorResult,
}

/// Draw a fresh graph, signal and noise for trial `trial` and decode it.
#[allow(clippy::too_many_arguments)]
pub fn run_noisy_trial(
    n: usize,
    k: usize,
    m: usize,
    degree: usize,
    weight_set_size: usize,
    gamma_db: f64,
    snr_convention: SnrConvention,
    max_iters: usize,
    master: u64,
    trial: usize,
) -> Result<NoisyTrial, BpError> {
    let ts = seed::derive(master, &[trial as u64]);
    let ws = WeightSet::sample_gaussian(weight_set_size, seed::derive(ts, &[tag::WEIGHTS]))?;
    let g = MeasurementGraph::build(n, m, degree, &ws, seed::derive(ts, &[tag::GRAPH, m as u64]))?;
    let truth = BinarySignal::random(n, k, seed::derive(ts, &[tag::SIGNAL]))?;
    let clean = g.encode(&truth)?;
    let sigma = g.snr_to_sigma(&truth, gamma_db, snr_convention)?;
    let y = add_awgn(&clean, sigma, seed::derive(ts, &[tag::NOISE, m as u64]))?;
    let cfg = BpConfig {
        max_iters,
        prior_one: k as f64 / n as f64,
        sigma,
    };
    let decision = decode_bp(&g, &y, &cfg)?;
    Ok(NoisyTrial { truth, decision })
}

/// Smallest grid ratio at which the required fraction of trials succeed.
/// A ratio is abandoned as soon as too many of its trials fail.
pub fn min_sampling_ratio(cfg: &MinRatioConfig) -> Result<MinRatioOutcome, BpError> {
    if cfg.k == 0 || cfg.k >= cfg.n {
        return Err(BpError::InvalidConfig("need 0 < k < n".into()));
    }
    if cfg.trials < 20 {
        return Err(BpError::InvalidConfig("need at least 20 trials per ratio".into()));
    }
    if !(cfg.required_fraction > 0.0 && cfg.required_fraction <= 1.0) {
        return Err(BpError::InvalidConfig("required_fraction must lie in (0, 1]".into()));
    }
    let mut betas = cfg.betas.clone();
    betas.sort_by(f64::total_cmp);
    let allowed_failures =
        cfg.trials - (cfg.required_fraction * cfg.trials as f64 - 1e-9).ceil() as usize;
    let weight_set_size = cfg.weight_set_size.unwrap_or(cfg.degree);
    let mut scanned = Vec::new();
    for beta in betas {
        let m = (beta * cfg.n as f64).round() as usize;
        let mut tally = RatioTrial {
            beta,
            m,
            successes: 0,
            exact: 0,
            attempted: 0,
            passed: false,
        };
        if m > 0 {
            for trial in 0..cfg.trials {
                let t = run_noisy_trial(
                    cfg.n,
                    cfg.k,
                    m,
                    cfg.degree,
                    weight_set_size,
                    cfg.gamma_db,
                    cfg.snr_convention,
                    cfg.max_iters,
                    cfg.seed,
                    trial,
                )?;
                tally.attempted += 1;
                if cfg.criterion.accepts(&t.truth, &t.decision.hard_decision) {
                    tally.successes += 1;
                }
                if t.truth == t.decision.hard_decision {
                    tally.exact += 1;
                }
                if tally.attempted - tally.successes > allowed_failures {
                    break;
                }
            }
            tally.passed = tally.attempted == cfg.trials
                && tally.attempted - tally.successes <= allowed_failures;
        }
        let passed = tally.passed;
        scanned.push(tally);
        if passed {
            return Ok(MinRatioOutcome {
                beta_min: beta,
                m,
                scanned,
            });
        }
    }
    Err(BpError::NotAchieved)
}
