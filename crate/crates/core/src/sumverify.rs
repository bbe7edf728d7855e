//! Noiseless sum-verification (peeling) decoder.
//!
//! A measurement whose residual equals the sum of at most `T` of its
//! unresolved neighbours' weights pins those neighbours to one and the rest to
//! zero. Resolved values are subtracted from every other measurement they touch
//! and the process repeats until no measurement can verify anything new.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::measure::{BinarySignal, MeasurementGraph, MeasurementVector};

/// Residual matching tolerance.
pub const DEFAULT_EPSILON: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SvError {
    #[error("sum verification needs noiseless measurements (noise variance {0})")]
    NoisyInput(f64),
    #[error("graph has {expected} rows but {actual} measurements were given")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("row {row} matches two different neighbour subsets; tolerance too large or weight set not verified")]
    AmbiguousMatch { row: usize },
    #[error("tolerance must be finite and positive, got {0}")]
    BadEpsilon(f64),
    #[error("scan order must be a permutation of the {0} rows")]
    BadOrder(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VarState {
    Unknown,
    Zero,
    One,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecodeStatus {
    Complete,
    Stalled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvDecodeResult {
    /// Recovered bits; unresolved positions read as zero.
    pub signal: BinarySignal,
    pub status: DecodeStatus,
    /// Number of successful row verifications.
    pub iterations: usize,
    pub unresolved: Vec<usize>,
    pub states: Vec<VarState>,
}

impl SvDecodeResult {
    pub fn is_complete(&self) -> bool {
        self.status == DecodeStatus::Complete
    }

    /// Fraction of the signal left unresolved.
    pub fn unresolved_fraction(&self) -> f64 {
        if self.states.is_empty() {
            0.0
        } else {
            self.unresolved.len() as f64 / self.states.len() as f64
        }
    }
}

/// Decode scanning rows in index order.
pub fn decode_sv(
    g: &MeasurementGraph,
    c: &MeasurementVector,
    t: usize,
    epsilon: f64,
) -> Result<SvDecodeResult, SvError> {
    let order: Vec<usize> = (0..g.m()).collect();
    decode_sv_ordered(g, c, t, epsilon, &order)
}

/// Decode with an explicit initial scan order (a permutation of the rows).
/// Rows touched by a peel are revisited in the order they were touched.
pub fn decode_sv_ordered(
    g: &MeasurementGraph,
    c: &MeasurementVector,
    t: usize,
    epsilon: f64,
    order: &[usize],
) -> Result<SvDecodeResult, SvError> {
    if c.noise_variance > 0.0 {
        return Err(SvError::NoisyInput(c.noise_variance));
    }
    if c.len() != g.m() {
        return Err(SvError::DimensionMismatch {
            expected: g.m(),
            actual: c.len(),
        });
    }
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(SvError::BadEpsilon(epsilon));
    }
    let m = g.m();
    let mut seen = vec![false; m];
    if order.len() != m || order.iter().any(|&i| i >= m || std::mem::replace(&mut seen[i], true)) {
        return Err(SvError::BadOrder(m));
    }

    let n = g.n();
    let columns = g.columns();
    let mut states = vec![VarState::Unknown; n];
    let mut residual = c.values.clone();
    let mut open: Vec<usize> = g.rows().iter().map(Vec::len).collect();
    let mut queue: VecDeque<usize> = order.iter().copied().collect();
    let mut queued = vec![true; m];
    let mut iterations = 0;
    let mut candidates: Vec<(usize, f64)> = Vec::new();
    let mut picked: Vec<usize> = Vec::new();

    while let Some(i) = queue.pop_front() {
        queued[i] = false;
        if open[i] == 0 {
            continue;
        }
        candidates.clear();
        candidates.extend(
            g.row(i)
                .iter()
                .filter(|&&(j, _)| states[j] == VarState::Unknown)
                .copied(),
        );
        candidates.sort_by(|a, b| a.1.total_cmp(&b.1));

        let mut search = SubsetSearch {
            items: &candidates,
            target: residual[i],
            epsilon,
            current: Vec::new(),
            first: None,
            matches: 0,
        };
        search.run(0, t, 0.0);
        match search.matches {
            0 => continue,
            1 => {}
            _ => return Err(SvError::AmbiguousMatch { row: i }),
        }
        picked.clear();
        picked.extend(search.first.unwrap_or_default());
        iterations += 1;

        for (pos, &(j, _)) in candidates.iter().enumerate() {
            let one = picked.contains(&pos);
            states[j] = if one { VarState::One } else { VarState::Zero };
            for &(r, slot) in &columns[j] {
                open[r] -= 1;
                if one {
                    residual[r] -= g.row(r)[slot].1;
                }
                if open[r] > 0 && !queued[r] {
                    queued[r] = true;
                    queue.push_back(r);
                }
            }
        }
    }

    let unresolved: Vec<usize> = (0..n).filter(|&j| states[j] == VarState::Unknown).collect();
    let bits = states.iter().map(|s| u8::from(*s == VarState::One)).collect();
    Ok(SvDecodeResult {
        signal: BinarySignal::new(bits).expect("bits are binary"),
        status: if unresolved.is_empty() {
            DecodeStatus::Complete
        } else {
            DecodeStatus::Stalled
        },
        iterations,
        unresolved,
        states,
    })
}

/// Mean fraction of unresolved entries over a batch of decodes.
pub fn error_rate(results: &[SvDecodeResult]) -> Option<f64> {
    if results.is_empty() {
        return None;
    }
    let total: f64 = results.iter().map(SvDecodeResult::unresolved_fraction).sum();
    Some(total / results.len() as f64)
}

// Depth-first search over subsets of at most `t` items (sorted by weight) whose
// sum is within `epsilon` of `target`. Stops after the second match.
struct SubsetSearch<'a> {
    items: &'a [(usize, f64)],
    target: f64,
    epsilon: f64,
    current: Vec<usize>,
    first: Option<Vec<usize>>,
    matches: usize,
}

impl SubsetSearch<'_> {
    fn run(&mut self, start: usize, budget: usize, sum: f64) {
        if (sum - self.target).abs() <= self.epsilon {
            self.matches += 1;
            if self.first.is_none() {
                self.first = Some(self.current.clone());
            }
            if self.matches >= 2 {
                return;
            }
        }
        if budget == 0 {
            return;
        }
        for idx in start..self.items.len() {
            let next = sum + self.items[idx].1;
            if next > self.target + self.epsilon {
                break;
            }
            self.current.push(idx);
            self.run(idx + 1, budget - 1, next);
            self.current.pop();
            if self.matches >= 2 {
                return;
            }
        }
    }
}
