//! Core value types: validated probability vectors and moment summaries.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeric::compensated_sum;

/// Entries below this floor are rejected: subset sums built from them
/// lose all relative precision in the inclusion-exclusion terms.
pub const MIN_PROBABILITY: f64 = 1e-12;

/// Maximum allowed distance of the entry sum from 1 when the caller does
/// not ask for renormalization.
pub const SUM_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("probability list is empty")]
    EmptyInput,
    #[error("entry {index} is {value}; every probability must be a positive finite number")]
    NonPositiveEntry { index: usize, value: f64 },
    #[error("entries sum to {sum}, more than {SUM_TOLERANCE} away from 1 (pass renormalize to rescale)")]
    SumOutOfTolerance { sum: f64 },
    #[error("entry {index} is {value}, below the {MIN_PROBABILITY} floor")]
    EntryTooSmall { index: usize, value: f64 },
    #[error("a collection needs at least one coupon type")]
    InvalidCount,
}

impl ModelError {
    /// Stable identifier used on the CLI diagnostic stream.
    pub fn name(&self) -> &'static str {
        match self {
            ModelError::EmptyInput => "EmptyInput",
            ModelError::NonPositiveEntry { .. } => "NonPositiveEntry",
            ModelError::SumOutOfTolerance { .. } => "SumOutOfTolerance",
            ModelError::EntryTooSmall { .. } => "EntryTooSmall",
            ModelError::InvalidCount => "InvalidCount",
        }
    }
}

/// A validated categorical distribution over coupon types.
///
/// Construction is the only way to obtain one, so every consumer may rely
/// on: at least one entry, all entries in `[MIN_PROBABILITY, 1]` range and
/// finite, and the total within `SUM_TOLERANCE` of 1. The vector is
/// immutable after construction and safe to share across threads.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbabilityVector {
    probs: Vec<f64>,
}

impl ProbabilityVector {
    /// Validates `values` as given. Rescaling is never applied silently;
    /// use [`ProbabilityVector::renormalized`] to opt in.
    pub fn new(values: Vec<f64>) -> Result<Self, ModelError> {
        Self::build(values, false)
    }

    /// Divides the entries by their sum, then validates.
    pub fn renormalized(values: Vec<f64>) -> Result<Self, ModelError> {
        Self::build(values, true)
    }

    fn build(mut values: Vec<f64>, renormalize: bool) -> Result<Self, ModelError> {
        if values.is_empty() {
            return Err(ModelError::EmptyInput);
        }
        for (index, &value) in values.iter().enumerate() {
            // `!(value > 0.0)` also catches NaN.
            if !(value > 0.0) || !value.is_finite() {
                return Err(ModelError::NonPositiveEntry { index, value });
            }
        }
        if renormalize {
            let total = compensated_sum(values.iter().copied());
            for v in &mut values {
                *v /= total;
            }
        }
        for (index, &value) in values.iter().enumerate() {
            if value < MIN_PROBABILITY {
                return Err(ModelError::EntryTooSmall { index, value });
            }
        }
        let sum = compensated_sum(values.iter().copied());
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(ModelError::SumOutOfTolerance { sum });
        }
        Ok(Self { probs: values })
    }

    /// The equal-probability vector with `n` coupon types.
    pub fn uniform(n: usize) -> Result<Self, ModelError> {
        if n == 0 {
            return Err(ModelError::InvalidCount);
        }
        Ok(Self {
            probs: vec![1.0 / n as f64; n],
        })
    }

    pub fn n(&self) -> usize {
        self.probs.len()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn min_prob(&self) -> f64 {
        self.probs.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// True when every entry is within `eps` of `1/n`.
    pub fn is_uniform(&self, eps: f64) -> bool {
        let target = 1.0 / self.n() as f64;
        self.probs.iter().all(|&p| (p - target).abs() <= eps)
    }
}

/// Tag identifying which route produced a moment summary.
#[derive(Clone, Copy, Debug, Eq, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    ClosedForm,
    InclusionExclusion,
    Recurrence,
    Integration,
    Oracle,
    Simulation,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::ClosedForm => "closed-form",
            Method::InclusionExclusion => "inclusion-exclusion",
            Method::Recurrence => "recurrence",
            Method::Integration => "integration",
            Method::Oracle => "oracle",
            Method::Simulation => "simulation",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Mean and variance of the draw count, with the Poissonized second moment
/// when the producing route computes one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentSummary {
    pub mean: f64,
    pub variance: f64,
    pub poissonized_second_moment: Option<f64>,
    pub method: Method,
}

impl MomentSummary {
    pub fn new(
        mean: f64,
        variance: f64,
        poissonized_second_moment: Option<f64>,
        method: Method,
    ) -> Self {
        // Quadrature-based routes can undershoot the exact lower bound
        // E(N) >= 1 by rounding, so leave a hair of slack.
        debug_assert!(mean >= 1.0 - 1e-6, "a collection takes at least one draw");
        debug_assert!(variance >= 0.0);
        Self {
            mean,
            variance,
            poissonized_second_moment,
            method,
        }
    }
}

/// One inclusion-exclusion term: `sign / subset_sum` contributes to the
/// mean, `sign / subset_sum^2` to the Poissonized second moment.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SubsetTerm {
    /// `+1` for odd cardinality, `-1` for even.
    pub sign: i8,
    /// Number of coupon types in the subset, in `1..=n`.
    pub cardinality: u32,
    /// Sum of the subset's probabilities, in `(0, 1 + SUM_TOLERANCE]`.
    pub subset_sum: f64,
}
