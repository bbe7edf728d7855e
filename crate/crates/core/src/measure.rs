//! Balanced sparse measurement graphs and the linear measurements they produce.

use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seed;
use crate::weightset::WeightSet;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeasureError {
    #[error("measurement degree {degree} exceeds signal length {n} or weight-set size {weights}")]
    DegreeTooLarge {
        degree: usize,
        n: usize,
        weights: usize,
    },
    #[error("invalid dimensions: {0}")]
    InvalidDimensions(String),
    #[error("length mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("signal entries must be 0 or 1 (entry {index} is {value})")]
    NotBinary { index: usize, value: u8 },
    #[error("row {row} is malformed: {reason}")]
    BadRow { row: usize, reason: String },
    #[error("measurement vector is identically zero; SNR is undefined")]
    ZeroSignal,
    #[error("noise level must be finite and non-negative, got {0}")]
    InvalidNoise(f64),
}

/// A length-`n` vector over `{0, 1}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawSignal")]
pub struct BinarySignal {
    bits: Vec<u8>,
}

#[derive(Deserialize)]
struct RawSignal {
    bits: Vec<u8>,
}

impl TryFrom<RawSignal> for BinarySignal {
    type Error = MeasureError;

    fn try_from(raw: RawSignal) -> Result<Self, Self::Error> {
        BinarySignal::new(raw.bits)
    }
}

impl BinarySignal {
    pub fn new(bits: Vec<u8>) -> Result<Self, MeasureError> {
        if let Some((index, &value)) = bits.iter().enumerate().find(|(_, &b)| b > 1) {
            return Err(MeasureError::NotBinary { index, value });
        }
        Ok(Self { bits })
    }

    pub fn zeros(n: usize) -> Self {
        Self { bits: vec![0; n] }
    }

    pub fn from_support(n: usize, support: &[usize]) -> Result<Self, MeasureError> {
        let mut bits = vec![0u8; n];
        for &j in support {
            if j >= n {
                return Err(MeasureError::InvalidDimensions(format!(
                    "support index {j} out of range for length {n}"
                )));
            }
            bits[j] = 1;
        }
        Ok(Self { bits })
    }

    /// Exactly `k` ones at uniformly random positions.
    pub fn random(n: usize, k: usize, rng_seed: u64) -> Result<Self, MeasureError> {
        if k > n {
            return Err(MeasureError::InvalidDimensions(format!(
                "sparsity {k} exceeds length {n}"
            )));
        }
        let mut rng = seed::rng(rng_seed);
        let support = index::sample(&mut rng, n, k).into_vec();
        Self::from_support(n, &support)
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn get(&self, j: usize) -> bool {
        self.bits[j] == 1
    }

    /// Number of ones.
    pub fn k(&self) -> usize {
        self.bits.iter().filter(|&&b| b == 1).count()
    }

    pub fn support(&self) -> Vec<usize> {
        (0..self.bits.len()).filter(|&j| self.bits[j] == 1).collect()
    }
}

/// Measurement values plus the variance of the noise added to them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementVector {
    pub values: Vec<f64>,
    #[serde(default)]
    pub noise_variance: f64,
}

impl MeasurementVector {
    pub fn noiseless(values: Vec<f64>) -> Self {
        Self {
            values,
            noise_variance: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn energy(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }
}

/// Weighted bipartite graph between `n` variables and `m` measurements.
///
/// Row `i` lists `(variable, weight)` pairs sorted by variable index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGraph")]
pub struct MeasurementGraph {
    n: usize,
    rows: Vec<Vec<(usize, f64)>>,
}

#[derive(Deserialize)]
struct RawGraph {
    n: usize,
    rows: Vec<Vec<(usize, f64)>>,
}

impl TryFrom<RawGraph> for MeasurementGraph {
    type Error = MeasureError;

    fn try_from(raw: RawGraph) -> Result<Self, Self::Error> {
        MeasurementGraph::from_rows(raw.n, raw.rows)
    }
}

impl MeasurementGraph {
    /// Build `m` rows of degree `degree`, each drawing its variables from the
    /// currently least-connected ones and its weights from `ws` without
    /// repetition.
    pub fn build(
        n: usize,
        m: usize,
        degree: usize,
        ws: &WeightSet,
        rng_seed: u64,
    ) -> Result<Self, MeasureError> {
        if n == 0 || degree == 0 {
            return Err(MeasureError::InvalidDimensions(format!(
                "n and L must be positive (n={n}, L={degree})"
            )));
        }
        if degree > n || degree > ws.len() {
            return Err(MeasureError::DegreeTooLarge {
                degree,
                n,
                weights: ws.len(),
            });
        }
        let mut rng = seed::rng(rng_seed);
        // Variables at the current minimum degree, and those one above it.
        let mut low: Vec<usize> = (0..n).collect();
        let mut high: Vec<usize> = Vec::with_capacity(n);
        let mut rows = Vec::with_capacity(m);
        for _ in 0..m {
            let mut chosen: Vec<usize> = Vec::with_capacity(degree);
            if low.len() >= degree {
                take_random(&mut rng, &mut low, degree, &mut chosen);
                high.extend_from_slice(&chosen);
                if low.is_empty() {
                    std::mem::swap(&mut low, &mut high);
                }
            } else {
                let spill = degree - low.len();
                chosen.append(&mut low);
                let promoted_from_low = chosen.len();
                take_random(&mut rng, &mut high, spill, &mut chosen);
                // Spilled variables are now two above the old minimum, the
                // rest of `high` and the old `low` sit one above it.
                low = std::mem::take(&mut high);
                low.extend_from_slice(&chosen[..promoted_from_low]);
                high.extend_from_slice(&chosen[promoted_from_low..]);
                if low.is_empty() {
                    std::mem::swap(&mut low, &mut high);
                }
            }
            let weight_idx = index::sample(&mut rng, ws.len(), degree);
            let mut row: Vec<(usize, f64)> = chosen
                .into_iter()
                .zip(weight_idx.iter())
                .map(|(j, w)| (j, ws.weights()[w]))
                .collect();
            row.sort_by_key(|e| e.0);
            rows.push(row);
        }
        Ok(Self { n, rows })
    }

    /// Wrap explicit rows. Rows may have any length (including zero), but
    /// indices must be in range and distinct within a row and weights must be
    /// finite and positive.
    pub fn from_rows(n: usize, mut rows: Vec<Vec<(usize, f64)>>) -> Result<Self, MeasureError> {
        for (r, row) in rows.iter_mut().enumerate() {
            row.sort_by_key(|e| e.0);
            for (pos, &(j, w)) in row.iter().enumerate() {
                if j >= n {
                    return Err(MeasureError::BadRow {
                        row: r,
                        reason: format!("variable {j} out of range for n={n}"),
                    });
                }
                if !(w.is_finite() && w > 0.0) {
                    return Err(MeasureError::BadRow {
                        row: r,
                        reason: format!("weight {w} is not finite and positive"),
                    });
                }
                if pos > 0 && row[pos - 1].0 == j {
                    return Err(MeasureError::BadRow {
                        row: r,
                        reason: format!("variable {j} repeated"),
                    });
                }
            }
        }
        Ok(Self { n, rows })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &[Vec<(usize, f64)>] {
        &self.rows
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    /// Largest row degree (`L` for generated graphs).
    pub fn degree(&self) -> usize {
        self.rows.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn edge_count(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn column_degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.n];
        for row in &self.rows {
            for &(j, _) in row {
                deg[j] += 1;
            }
        }
        deg
    }

    /// For each variable, the `(row, position in row)` pairs it appears at.
    pub fn columns(&self) -> Vec<Vec<(usize, usize)>> {
        let mut cols = vec![Vec::new(); self.n];
        for (i, row) in self.rows.iter().enumerate() {
            for (pos, &(j, _)) in row.iter().enumerate() {
                cols[j].push((i, pos));
            }
        }
        cols
    }

    /// Noiseless measurements `c = G b`.
    pub fn encode(&self, b: &BinarySignal) -> Result<MeasurementVector, MeasureError> {
        if b.len() != self.n {
            return Err(MeasureError::DimensionMismatch {
                expected: self.n,
                actual: b.len(),
            });
        }
        let values = self
            .rows
            .iter()
            .map(|row| {
                row.iter()
                    .filter(|&&(j, _)| b.get(j))
                    .map(|&(_, w)| w)
                    .sum()
            })
            .collect();
        Ok(MeasurementVector::noiseless(values))
    }

    /// Noise standard deviation giving an SNR of `gamma_db` for the
    /// noiseless measurements of `b`.
    pub fn snr_to_sigma(
        &self,
        b: &BinarySignal,
        gamma_db: f64,
        convention: SnrConvention,
    ) -> Result<f64, MeasureError> {
        sigma_for_snr(&self.encode(b)?.values, gamma_db, convention)
    }
}

/// How the measurement energy is compared with the per-entry noise variance.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SnrConvention {
    /// `gamma = ||c||^2 / (m sigma^2)`: mean measurement energy over the
    /// noise variance.
    #[default]
    PerMeasurement,
    /// `gamma = ||c||^2 / sigma^2`.
    Total,
}

/// Noise standard deviation for SNR `gamma_db` under `convention`.
pub fn sigma_for_snr(clean: &[f64], gamma_db: f64, convention: SnrConvention) -> Result<f64, MeasureError> {
    let energy: f64 = clean.iter().map(|v| v * v).sum();
    if clean.is_empty() || energy == 0.0 {
        return Err(MeasureError::ZeroSignal);
    }
    let reference = match convention {
        SnrConvention::Total => energy,
        SnrConvention::PerMeasurement => energy / clean.len() as f64,
    };
    Ok((reference / 10f64.powf(gamma_db / 10.0)).sqrt())
}

/// Add i.i.d. `N(0, sigma^2)` noise to every measurement.
pub fn add_awgn(
    c: &MeasurementVector,
    sigma: f64,
    rng_seed: u64,
) -> Result<MeasurementVector, MeasureError> {
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(MeasureError::InvalidNoise(sigma));
    }
    if sigma == 0.0 {
        return Ok(c.clone());
    }
    let mut rng = seed::rng(rng_seed);
    let values = c
        .values
        .iter()
        .map(|&v| v + sigma * rng.sample::<f64, _>(StandardNormal))
        .collect();
    Ok(MeasurementVector {
        values,
        noise_variance: c.noise_variance + sigma * sigma,
    })
}

fn take_random(
    rng: &mut impl Rng,
    pool: &mut Vec<usize>,
    count: usize,
    out: &mut Vec<usize>,
) {
    let mut positions = index::sample(rng, pool.len(), count).into_vec();
    positions.sort_unstable_by(|a, b| b.cmp(a));
    for p in positions {
        out.push(pool.swap_remove(p));
    }
}
