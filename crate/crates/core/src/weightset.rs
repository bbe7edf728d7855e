//! Weight sets: the finite pool of positive reals that measurement rows draw
//! their coefficients from.
//!
//! A weight set is only useful for noiseless recovery if no nonzero
//! `{-1, 0, 1}` combination of its members sums to zero. Equivalently, every
//! subset of the weights has a sum distinct from every other subset, so a
//! measurement value identifies which of its neighbours are ones.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seed;

/// Absolute tolerance for treating a weighted sum as zero.
pub const DEFAULT_EPSILON: f64 = 1e-9;

/// Largest set checked by direct enumeration of all `3^D` sign vectors.
pub const EXHAUSTIVE_MAX_SIZE: usize = 16;

/// Largest set the meet-in-the-middle check accepts.
pub const MITM_MAX_SIZE: usize = 30;

/// Largest half-table (entries) the meet-in-the-middle check will allocate.
/// `3^15` covers every set up to `D = 30`.
pub const DEFAULT_MITM_BUDGET: usize = 14_348_907;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WeightSetError {
    #[error("weight set is empty")]
    Empty,
    #[error("weight {index} is not a finite positive real: {value}")]
    NonPositive { index: usize, value: f64 },
    #[error("weights {first} and {second} are equal ({value})")]
    Duplicate { first: usize, second: usize, value: f64 },
    #[error("tolerance must be a finite positive real, got {0}")]
    BadEpsilon(f64),
    #[error("weight set of size {size} is too large to verify (meet-in-the-middle needs {needed} table entries, budget {budget})")]
    SetTooLarge {
        size: usize,
        needed: u128,
        budget: usize,
    },
}

/// An ordered list of distinct positive weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawWeightSet")]
pub struct WeightSet {
    weights: Vec<f64>,
    verified: bool,
    epsilon: f64,
}

#[derive(Deserialize)]
struct RawWeightSet {
    weights: Vec<f64>,
    #[serde(default)]
    verified: bool,
    #[serde(default = "default_epsilon")]
    epsilon: f64,
}

fn default_epsilon() -> f64 {
    DEFAULT_EPSILON
}

impl TryFrom<RawWeightSet> for WeightSet {
    type Error = WeightSetError;

    fn try_from(raw: RawWeightSet) -> Result<Self, Self::Error> {
        let mut ws = WeightSet::new(raw.weights)?;
        if !(raw.epsilon.is_finite() && raw.epsilon > 0.0) {
            return Err(WeightSetError::BadEpsilon(raw.epsilon));
        }
        ws.verified = raw.verified;
        ws.epsilon = raw.epsilon;
        Ok(ws)
    }
}

/// How a uniqueness check was carried out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VerifyMethod {
    Exhaustive,
    MeetInTheMiddle,
}

/// Outcome of checking the uniqueness condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionCheck {
    pub holds: bool,
    /// A nonzero sign vector whose weighted sum is within tolerance of zero.
    pub witness: Option<Vec<i8>>,
    pub method: VerifyMethod,
}

impl WeightSet {
    /// Wrap a list of weights, rejecting non-positive or repeated values.
    /// The result is unverified.
    pub fn new(weights: Vec<f64>) -> Result<Self, WeightSetError> {
        if weights.is_empty() {
            return Err(WeightSetError::Empty);
        }
        for (index, &value) in weights.iter().enumerate() {
            if !(value.is_finite() && value > 0.0) {
                return Err(WeightSetError::NonPositive { index, value });
            }
        }
        let mut order: Vec<usize> = (0..weights.len()).collect();
        order.sort_by(|&a, &b| weights[a].total_cmp(&weights[b]));
        for pair in order.windows(2) {
            if weights[pair[0]] == weights[pair[1]] {
                let (first, second) = (pair[0].min(pair[1]), pair[0].max(pair[1]));
                return Err(WeightSetError::Duplicate {
                    first,
                    second,
                    value: weights[first],
                });
            }
        }
        Ok(Self {
            weights,
            verified: false,
            epsilon: DEFAULT_EPSILON,
        })
    }

    /// Draw `size` weights as absolute values of standard normal samples.
    /// Zero or repeated draws are discarded and redrawn.
    pub fn sample_gaussian(size: usize, rng_seed: u64) -> Result<Self, WeightSetError> {
        if size == 0 {
            return Err(WeightSetError::Empty);
        }
        let mut rng = seed::rng(rng_seed);
        let mut weights: Vec<f64> = Vec::with_capacity(size);
        while weights.len() < size {
            let draw: f64 = rng.sample::<f64, _>(StandardNormal).abs();
            if draw > 0.0 && !weights.contains(&draw) {
                weights.push(draw);
            }
        }
        Self::new(weights)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn is_verified(&self) -> bool {
        self.verified
    }

    /// Tolerance the set was verified against (meaningful when verified).
    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Check the uniqueness condition with the default budgets.
    pub fn verify_condition(&self, epsilon: f64) -> Result<ConditionCheck, WeightSetError> {
        check_epsilon(epsilon)?;
        if self.len() <= EXHAUSTIVE_MAX_SIZE {
            Ok(self.verify_exhaustive(epsilon))
        } else {
            self.verify_meet_in_middle(epsilon, DEFAULT_MITM_BUDGET)
        }
    }

    /// Run the check and record the result on the set.
    pub fn verified(mut self, epsilon: f64) -> Result<(Self, ConditionCheck), WeightSetError> {
        let check = self.verify_condition(epsilon)?;
        self.verified = check.holds;
        self.epsilon = epsilon;
        Ok((self, check))
    }

    /// Enumerate every sign vector whose first nonzero entry is `+1`.
    pub fn verify_exhaustive(&self, epsilon: f64) -> ConditionCheck {
        let mut signs = vec![0i8; self.len()];
        let found = exhaustive_search(&self.weights, epsilon, 0, 0.0, false, &mut signs);
        ConditionCheck {
            holds: !found,
            witness: found.then_some(signs),
            method: VerifyMethod::Exhaustive,
        }
    }

    /// Split the set in two, tabulate all `3^b` signed sums of the second
    /// half, sort them, and look up the negation of every signed sum of the
    /// first half.
    pub fn verify_meet_in_middle(
        &self,
        epsilon: f64,
        budget: usize,
    ) -> Result<ConditionCheck, WeightSetError> {
        check_epsilon(epsilon)?;
        let size = self.len();
        let left_len = size.div_ceil(2);
        let right = &self.weights[left_len..];
        let needed = 3u128.pow(right.len() as u32);
        if size > MITM_MAX_SIZE || needed > budget as u128 {
            return Err(WeightSetError::SetTooLarge {
                size,
                needed,
                budget,
            });
        }

        let mut table: Vec<(f64, u32)> = Vec::with_capacity(needed as usize);
        signed_sums(right, &mut table);
        table.sort_by(|a, b| a.0.total_cmp(&b.0));
        let values: Vec<f64> = table.iter().map(|e| e.0).collect();

        let left = &self.weights[..left_len];
        let mut left_signs = vec![0i8; left.len()];
        let mut found: Option<u32> = None;
        let mut probe = |sum: f64, signs: &[i8]| -> bool {
            let target = -sum;
            let start = values.partition_point(|&v| v < target - epsilon);
            let left_zero = signs.iter().all(|&s| s == 0);
            for idx in start..values.len() {
                if values[idx] > target + epsilon {
                    break;
                }
                if left_zero && table[idx].1 == 0 {
                    continue;
                }
                found = Some(table[idx].1);
                return true;
            }
            false
        };
        if walk_signed(left, 0, 0.0, &mut left_signs, &mut probe) {
            let mut witness = left_signs;
            witness.extend(decode_trits(found.expect("match recorded"), right.len()));
            return Ok(ConditionCheck {
                holds: false,
                witness: Some(witness),
                method: VerifyMethod::MeetInTheMiddle,
            });
        }
        Ok(ConditionCheck {
            holds: true,
            witness: None,
            method: VerifyMethod::MeetInTheMiddle,
        })
    }
}

fn check_epsilon(epsilon: f64) -> Result<(), WeightSetError> {
    if epsilon.is_finite() && epsilon > 0.0 {
        Ok(())
    } else {
        Err(WeightSetError::BadEpsilon(epsilon))
    }
}

fn exhaustive_search(
    weights: &[f64],
    epsilon: f64,
    index: usize,
    sum: f64,
    started: bool,
    signs: &mut [i8],
) -> bool {
    if index == weights.len() {
        return started && sum.abs() <= epsilon;
    }
    signs[index] = 0;
    if exhaustive_search(weights, epsilon, index + 1, sum, started, signs) {
        return true;
    }
    signs[index] = 1;
    if exhaustive_search(weights, epsilon, index + 1, sum + weights[index], true, signs) {
        return true;
    }
    if started {
        signs[index] = -1;
        if exhaustive_search(weights, epsilon, index + 1, sum - weights[index], true, signs) {
            return true;
        }
    }
    signs[index] = 0;
    false
}

// Visits every signed sum of `weights`, stopping (with `signs` holding the
// current vector) as soon as `visit` returns true.
fn walk_signed(
    weights: &[f64],
    index: usize,
    sum: f64,
    signs: &mut [i8],
    visit: &mut impl FnMut(f64, &[i8]) -> bool,
) -> bool {
    if index == weights.len() {
        return visit(sum, signs);
    }
    for (sign, delta) in [(0i8, 0.0), (1, weights[index]), (-1, -weights[index])] {
        signs[index] = sign;
        if walk_signed(weights, index + 1, sum + delta, signs, visit) {
            return true;
        }
    }
    signs[index] = 0;
    false
}

// Trit code: digit 0 -> 0, 1 -> +1, 2 -> -1, least significant digit first.
fn signed_sums(weights: &[f64], out: &mut Vec<(f64, u32)>) {
    out.clear();
    out.push((0.0, 0));
    let mut place = 1u32;
    for &w in weights {
        let len = out.len();
        for i in 0..len {
            let (s, code) = out[i];
            out.push((s + w, code + place));
            out.push((s - w, code + 2 * place));
        }
        place *= 3;
    }
}

fn decode_trits(mut code: u32, len: usize) -> Vec<i8> {
    (0..len)
        .map(|_| {
            let digit = code % 3;
            code /= 3;
            match digit {
                0 => 0,
                1 => 1,
                _ => -1,
            }
        })
        .collect()
}
