//! Density evolution for the sum-verification decoder, the measurement
//! degree that maximises single-shot verification, and the resulting
//! measurement-count bracket.

use serde::{Deserialize, Serialize};
use statrs::distribution::{Binomial, DiscreteCDF};
use thiserror::Error;

pub const DEFAULT_MAX_ITERS: usize = 500;
pub const DEFAULT_TOLERANCE: f64 = 1e-10;
pub const DEFAULT_L_MAX: usize = 200;

/// States may stray this far outside `[0, 1]` before it counts as an error.
const RANGE_SLACK: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("{quantity} left [0, 1] at iteration {iter}: {value}")]
    NumericalRange {
        iter: usize,
        quantity: &'static str,
        value: f64,
    },
}

/// Variable-node degrees when every row has degree `L` and the load per
/// variable is `beta * L`: a fraction `v1` at `d_v`, the rest at `d_v - 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeDegreeDist {
    pub beta: f64,
    pub degree: usize,
    pub d_v: usize,
    pub v1: f64,
    pub v2: f64,
}

impl EdgeDegreeDist {
    pub fn new(beta: f64, degree: usize) -> Result<Self, AnalysisError> {
        let load = beta * degree as f64;
        if !(load.is_finite() && load >= 1.0 - 1e-12) {
            return Err(AnalysisError::InvalidParameter(format!(
                "beta * L must be at least 1, got {load}"
            )));
        }
        // Absorb rounding so that e.g. 0.2 * 25 counts as an integer.
        let d_v = (load - 1e-9).ceil().max(1.0) as usize;
        let v1 = 1.0 - d_v as f64 + load;
        let v2 = d_v as f64 - load;
        let (v1, v2) = if v2.abs() < 1e-9 { (1.0, 0.0) } else { (v1, v2) };
        Ok(Self {
            beta,
            degree,
            d_v,
            v1,
            v2,
        })
    }

    pub fn load(&self) -> f64 {
        self.v1 * self.d_v as f64 + self.v2 * (self.d_v as f64 - 1.0)
    }

    /// Node-perspective degree generating function.
    pub fn node(&self, x: f64) -> f64 {
        self.v1 * x.powi(self.d_v as i32) + self.v2 * x.powi(self.d_v as i32 - 1)
    }

    /// Edge-perspective degree generating function.
    pub fn edge(&self, x: f64) -> f64 {
        let d = self.d_v as f64;
        let hi = self.v1 * d * x.powi(self.d_v as i32 - 1);
        let lo = if self.v2 > 0.0 {
            self.v2 * (d - 1.0) * x.powi(self.d_v as i32 - 2)
        } else {
            0.0
        };
        (hi + lo) / self.load()
    }

    /// Coefficients of the edge-perspective polynomial, index = power of x.
    pub fn edge_coefficients(&self) -> Vec<f64> {
        let mut c = vec![0.0; self.d_v];
        let d = self.d_v as f64;
        c[self.d_v - 1] += self.v1 * d / self.load();
        if self.d_v >= 2 {
            c[self.d_v - 2] += self.v2 * (d - 1.0) / self.load();
        }
        c
    }
}

/// How the zero/one mix of unresolved variables is tracked between iterations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QUpdate {
    /// Track the unresolved probability of zero- and one-valued variables
    /// separately; the mix follows from the two.
    #[default]
    TypeResolved,
    /// `q1 = (s - f1) / (1 - p)` after every iteration.
    Appendix,
    /// `q1 = s` throughout.
    Static,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeConfig {
    pub degree: usize,
    pub t: usize,
    pub s: f64,
    pub beta: f64,
    pub max_iters: usize,
    pub tolerance: f64,
    pub q_update: QUpdate,
}

impl DeConfig {
    pub fn new(degree: usize, t: usize, s: f64, beta: f64) -> Self {
        Self {
            degree,
            t,
            s,
            beta,
            max_iters: DEFAULT_MAX_ITERS,
            tolerance: DEFAULT_TOLERANCE,
            q_update: QUpdate::default(),
        }
    }
}

/// One iteration of density evolution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeState {
    pub iter: usize,
    /// Probability an edge into a variable carries its value (edge perspective).
    pub p: f64,
    /// Probability a check verifies its parent; `f = f0 + f1`.
    pub f: f64,
    pub f0: f64,
    pub f1: f64,
    /// Zero/one mix of unresolved variables after this iteration.
    pub q0: f64,
    pub q1: f64,
    pub lambda: f64,
    /// Expected fraction of variables still unresolved (node perspective).
    pub unresolved: f64,
}

/// `P(Binomial(d, u) <= t)`, zero for negative `t`.
fn binomial_cdf(d: usize, u: f64, t: i64) -> f64 {
    if t < 0 {
        return 0.0;
    }
    if t as usize >= d {
        return 1.0;
    }
    let u = u.clamp(0.0, 1.0);
    Binomial::new(u, d as u64)
        .expect("probability clamped to [0, 1]")
        .cdf(t as u64)
}

fn check_range(iter: usize, quantity: &'static str, value: f64) -> Result<f64, AnalysisError> {
    if !(-RANGE_SLACK..=1.0 + RANGE_SLACK).contains(&value) {
        return Err(AnalysisError::NumericalRange {
            iter,
            quantity,
            value,
        });
    }
    Ok(value.clamp(0.0, 1.0))
}

/// Probabilities that a check of degree `d + 1` verifies a zero / one parent,
/// given the siblings are resolved with probability `p` and unresolved
/// siblings are one with probability `q1`.
pub fn verify_probabilities(d: usize, t: usize, p: f64, q1: f64) -> (f64, f64) {
    let u1 = (1.0 - p) * q1;
    let f0 = (1.0 - q1) * binomial_cdf(d, u1, t as i64);
    let f1 = q1 * binomial_cdf(d, u1, t as i64 - 1);
    (f0, f1)
}

/// Iterate density evolution from `p = 0` until `p` moves by less than the
/// tolerance or the iteration budget runs out. The first entry is the
/// initial state.
pub fn density_evolution(cfg: &DeConfig) -> Result<Vec<DeState>, AnalysisError> {
    if cfg.degree == 0 {
        return Err(AnalysisError::InvalidParameter("L must be positive".into()));
    }
    if cfg.t > cfg.degree {
        return Err(AnalysisError::InvalidParameter(format!(
            "T = {} exceeds L = {}",
            cfg.t, cfg.degree
        )));
    }
    if !(0.0..1.0).contains(&cfg.s) {
        return Err(AnalysisError::InvalidParameter(format!(
            "s must lie in [0, 1), got {}",
            cfg.s
        )));
    }
    if cfg.max_iters == 0 {
        return Err(AnalysisError::InvalidParameter("iters must be positive".into()));
    }
    let dist = EdgeDegreeDist::new(cfg.beta, cfg.degree)?;
    let d = cfg.degree - 1;
    let t = cfg.t;
    let s = cfg.s;

    let mut traj = vec![DeState {
        iter: 0,
        p: 0.0,
        f: 0.0,
        f0: 0.0,
        f1: 0.0,
        q0: 1.0 - s,
        q1: s,
        lambda: s / (1.0 - s),
        unresolved: 1.0,
    }];
    // Probability that an edge message from a one-valued variable is unresolved.
    let mut x1 = 1.0f64;

    for iter in 1..=cfg.max_iters {
        let prev = *traj.last().expect("trajectory is never empty");
        let state = match cfg.q_update {
            QUpdate::TypeResolved => {
                let u1 = s * x1;
                let g0 = binomial_cdf(d, u1, t as i64);
                let g1 = binomial_cdf(d, u1, t as i64 - 1);
                let q1 = prev.q1;
                let (f0, f1) = ((1.0 - q1) * g0, q1 * g1);
                let x0 = dist.edge(1.0 - g0);
                x1 = dist.edge(1.0 - g1);
                let p = check_range(iter, "p", 1.0 - (1.0 - s) * x0 - s * x1)?;
                let open = (1.0 - s) * x0 + s * x1;
                let q1_next = if open > 0.0 { s * x1 / open } else { q1 };
                let unresolved = (1.0 - s) * dist.node(1.0 - g0) + s * dist.node(1.0 - g1);
                DeState {
                    iter,
                    p,
                    f: check_range(iter, "f", f0 + f1)?,
                    f0,
                    f1,
                    q0: 1.0 - q1_next,
                    q1: q1_next,
                    lambda: q1_next / (1.0 - q1_next),
                    unresolved: check_range(iter, "unresolved", unresolved)?,
                }
            }
            QUpdate::Appendix | QUpdate::Static => {
                let (f0, f1) = verify_probabilities(d, t, prev.p, prev.q1);
                let f = check_range(iter, "f", f0 + f1)?;
                let p = check_range(iter, "p", 1.0 - dist.edge(1.0 - f))?;
                let q1_next = match cfg.q_update {
                    QUpdate::Static => s,
                    _ if p >= 1.0 => prev.q1,
                    _ => check_range(iter, "q1", (s - f1) / (1.0 - p))?,
                };
                DeState {
                    iter,
                    p,
                    f,
                    f0,
                    f1,
                    q0: 1.0 - q1_next,
                    q1: q1_next,
                    lambda: q1_next / (1.0 - q1_next),
                    unresolved: dist.node(1.0 - f),
                }
            }
        };
        let moved = (state.p - prev.p).abs();
        traj.push(state);
        if moved < cfg.tolerance {
            break;
        }
    }
    Ok(traj)
}

/// Smallest `beta` in `betas` whose fixed point leaves at most `target` of
/// the variables unresolved.
pub fn de_threshold(
    degree: usize,
    t: usize,
    s: f64,
    q_update: QUpdate,
    betas: &[f64],
    target: f64,
) -> Result<Option<f64>, AnalysisError> {
    let mut sorted = betas.to_vec();
    sorted.sort_by(f64::total_cmp);
    for beta in sorted {
        if beta * (degree as f64) < 1.0 {
            continue;
        }
        let mut cfg = DeConfig::new(degree, t, s, beta);
        cfg.q_update = q_update;
        let traj = density_evolution(&cfg)?;
        if traj.last().map_or(1.0, |st| st.unresolved) <= target {
            return Ok(Some(beta));
        }
    }
    Ok(None)
}

/// Expected number of variables a fresh degree-`L` measurement verifies:
/// `L * P(Binomial(L, s) <= T)`.
pub fn expected_verified(degree: usize, t: usize, s: f64) -> f64 {
    degree as f64 * binomial_cdf(degree, s, t as i64)
}

/// Closed-form degree `ceil(-(T + 2) / (2 ln(1 - s)))`.
pub fn approximate_optimal_degree(t: usize, s: f64) -> usize {
    (-(t as f64 + 2.0) / (2.0 * (1.0 - s).ln())).ceil() as usize
}

/// `(L_exact, L_approx)`: the argmax of [`expected_verified`] over
/// `1..=l_max` (smallest on ties) and the closed-form approximation.
pub fn optimal_degree(t: usize, s: f64, l_max: usize) -> Result<(usize, usize), AnalysisError> {
    if !(s > 0.0 && s < 1.0) {
        return Err(AnalysisError::InvalidParameter(format!(
            "s must lie in (0, 1), got {s}"
        )));
    }
    if l_max == 0 {
        return Err(AnalysisError::InvalidParameter("L_max must be positive".into()));
    }
    let exact = argmax_first((1..=l_max).map(|l| (l, expected_verified(l, t, s))));
    Ok((exact, approximate_optimal_degree(t, s)))
}

fn argmax_first(values: impl Iterator<Item = (usize, f64)>) -> usize {
    let mut best = (0usize, f64::NEG_INFINITY);
    for (l, r) in values {
        if r > best.1 {
            best = (l, r);
        }
    }
    best.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasurementBounds {
    pub l_opt: usize,
    /// `ceil(n / L_opt)`.
    pub m_lower: usize,
    /// `ceil(e * n / L_opt)`.
    pub m_upper: usize,
    /// `-2 n ln(1 - s) / (T + 2)`.
    pub closed_lower: f64,
    /// `-2 e n ln(1 - s) / (T + 2)`.
    pub closed_upper: f64,
}

pub fn measurement_bounds(n: usize, s: f64, t: usize) -> Result<MeasurementBounds, AnalysisError> {
    if !(s > 0.0 && s < 1.0) {
        return Err(AnalysisError::InvalidParameter(format!(
            "s must lie in (0, 1), got {s}"
        )));
    }
    let l_opt = approximate_optimal_degree(t, s);
    let nf = n as f64;
    let e = std::f64::consts::E;
    let closed_lower = -2.0 * nf * (1.0 - s).ln() / (t as f64 + 2.0);
    Ok(MeasurementBounds {
        l_opt,
        m_lower: (nf / l_opt as f64 - 1e-9).ceil() as usize,
        m_upper: (e * nf / l_opt as f64 - 1e-9).ceil() as usize,
        closed_lower,
        closed_upper: e * closed_lower,
    })
}
