//! Exact moments for arbitrary coupon probabilities.
//!
//! Two independent routes live here:
//!
//! * **Inclusion-exclusion** over all `2^n - 1` nonempty subsets `J`:
//!   the mean is `sum_J (-1)^(|J|-1) / P(J)` and the Poissonized second
//!   moment is `2 * sum_J (-1)^(|J|-1) / P(J)^2`, where `P(J)` is the
//!   subset's probability mass. Subsets are enumerated in binary-reflected
//!   Gray-code order so each step updates the running subset sum with a
//!   single signed add.
//! * **Integration** of the Poissonized survival function
//!   `S(t) = 1 - prod_j (1 - e^(-p_j t))`: the mean is `int_0^inf S(t) dt`
//!   and the second moment `int_0^inf 2 t S(t) dt`, evaluated by adaptive
//!   quadrature on `[0, t_max]` plus an analytic bound on the truncated
//!   tail.
//!
//! The variance of the draw count follows from either route as
//! `E(X^2) - E(X) - E(X)^2`.

use rayon::prelude::*;
use thiserror::Error;

use crate::model::{MomentSummary, Method, ProbabilityVector, SubsetTerm};
use crate::numeric::KahanSum;
use crate::quadrature;

#[derive(Clone, Debug, Error, PartialEq)]
pub enum GeneralError {
    #[error("n = {n} exceeds the enumeration cap {max_n}; 2^n subset terms would be required")]
    UniverseTooLarge { n: u32, max_n: u32 },
    #[error("partitions must be a power of two between 1 and 2^n, got {partitions}")]
    InvalidPartitions { partitions: u32 },
    #[error("quadrature spec needs positive finite abs_tol and t_max, got abs_tol = {abs_tol}, t_max = {t_max}")]
    InvalidQuadratureSpec { abs_tol: f64, t_max: f64 },
    #[error("variance evaluated to {value}, beyond the cancellation-noise band of {bound}")]
    StabilityError { value: f64, bound: f64 },
    #[error("quadrature error estimate {achieved} did not reach {requested} within the segment budget")]
    ToleranceNotReached { requested: f64, achieved: f64 },
}

impl GeneralError {
    /// Stable identifier used on the CLI diagnostic stream.
    pub fn name(&self) -> &'static str {
        match self {
            GeneralError::UniverseTooLarge { .. } => "UniverseTooLarge",
            GeneralError::InvalidPartitions { .. } => "InvalidPartitions",
            GeneralError::InvalidQuadratureSpec { .. } => "InvalidQuadratureSpec",
            GeneralError::StabilityError { .. } => "StabilityError",
            GeneralError::ToleranceNotReached { .. } => "ToleranceNotReached",
        }
    }
}

/// How an inclusion-exclusion pass is carved up.
///
/// Results are bit-identical for a fixed plan no matter how many worker
/// threads execute it: the shard boundaries depend only on `n` and
/// `partitions`, and shard partials are reduced in index order. Changing
/// `partitions` regroups the compensated partial sums and may move the
/// result by a few ulps (well inside 1e-12 relative).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnumerationPlan {
    n: u32,
    partitions: u32,
    max_n: u32,
}

impl EnumerationPlan {
    /// Default cap on `n`: 2^25 terms enumerate in about a second.
    pub const DEFAULT_MAX_N: u32 = 25;
    /// Absolute cap. 2^30 terms take minutes; beyond that the term count
    /// and the accumulated rounding both stop being reasonable.
    pub const HARD_MAX_N: u32 = 30;

    pub fn new(n: u32) -> Result<Self, GeneralError> {
        Self::with_max_n(n, Self::DEFAULT_MAX_N)
    }

    /// A plan with a caller-chosen cap (at most [`Self::HARD_MAX_N`]).
    pub fn with_max_n(n: u32, max_n: u32) -> Result<Self, GeneralError> {
        assert!(n >= 1, "enumeration needs at least one coupon type");
        assert!(
            max_n <= Self::HARD_MAX_N,
            "enumeration cap may not exceed {}",
            Self::HARD_MAX_N
        );
        if n > max_n {
            return Err(GeneralError::UniverseTooLarge { n, max_n });
        }
        // Sharding only pays off once the subset count dwarfs the
        // per-shard setup; 64 fixed shards keeps results independent of
        // the worker count.
        let partitions = if n >= 18 { 64 } else { 1 };
        Ok(Self {
            n,
            partitions,
            max_n,
        })
    }

    /// Overrides the shard count. Must be a power of two in `[1, 2^n]`.
    pub fn with_partitions(mut self, partitions: u32) -> Result<Self, GeneralError> {
        if partitions == 0
            || !partitions.is_power_of_two()
            || u64::from(partitions) > (1u64 << self.n)
        {
            return Err(GeneralError::InvalidPartitions { partitions });
        }
        self.partitions = partitions;
        Ok(self)
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn partitions(&self) -> u32 {
        self.partitions
    }

    pub fn max_n(&self) -> u32 {
        self.max_n
    }
}

fn gray(i: u64) -> u64 {
    i ^ (i >> 1)
}

/// Streaming enumeration of all nonempty subsets in Gray-code order.
///
/// Consecutive subsets differ in exactly one element, so the running
/// subset sum is maintained by one compensated add or subtract per step;
/// no sum is ever rebuilt from scratch mid-stream.
#[derive(Debug)]
pub struct SubsetTerms<'a> {
    probs: &'a [f64],
    next_index: u64,
    end: u64,
    mask: u64,
    cardinality: u32,
    sum: KahanSum,
}

impl<'a> SubsetTerms<'a> {
    /// Iterator over subset indices `lo..hi` (Gray order positions in
    /// `[1, 2^n)`), with the starting subset sum re-derived directly.
    fn over_range(probs: &'a [f64], lo: u64, hi: u64) -> Self {
        debug_assert!(lo >= 1);
        let mask = gray(lo - 1);
        let mut sum = KahanSum::new();
        let mut cardinality = 0u32;
        for (j, &p) in probs.iter().enumerate() {
            if mask >> j & 1 == 1 {
                sum.add(p);
                cardinality += 1;
            }
        }
        Self {
            probs,
            next_index: lo,
            end: hi,
            mask,
            cardinality,
            sum,
        }
    }

    /// Bitmask of the most recently yielded subset.
    pub fn mask(&self) -> u64 {
        self.mask
    }
}

impl Iterator for SubsetTerms<'_> {
    type Item = SubsetTerm;

    #[inline]
    fn next(&mut self) -> Option<SubsetTerm> {
        if self.next_index >= self.end {
            return None;
        }
        // Moving from Gray position i-1 to i flips bit trailing_zeros(i).
        let bit = self.next_index.trailing_zeros();
        let flag = 1u64 << bit;
        self.mask ^= flag;
        if self.mask & flag != 0 {
            self.sum.add(self.probs[bit as usize]);
            self.cardinality += 1;
        } else {
            self.sum.add(-self.probs[bit as usize]);
            self.cardinality -= 1;
        }
        self.next_index += 1;
        Some(SubsetTerm {
            sign: if self.cardinality % 2 == 1 { 1 } else { -1 },
            cardinality: self.cardinality,
            subset_sum: self.sum.value(),
        })
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = (self.end - self.next_index) as usize;
        (left, Some(left))
    }
}

/// All `2^n - 1` inclusion-exclusion terms of `pv`, in Gray-code order.
pub fn subset_terms(pv: &ProbabilityVector) -> Result<SubsetTerms<'_>, GeneralError> {
    let plan = EnumerationPlan::new(pv.n() as u32)?;
    Ok(SubsetTerms::over_range(pv.probs(), 1, 1u64 << plan.n()))
}

/// Shard partials: positive and negative magnitudes of `1/s` and `1/s^2`,
/// kept apart so the alternating sum is differenced exactly once.
type ShardSums = [f64; 4];

fn scan_range(probs: &[f64], lo: u64, hi: u64) -> ShardSums {
    let mut pos_recip = KahanSum::new();
    let mut neg_recip = KahanSum::new();
    let mut pos_square = KahanSum::new();
    let mut neg_square = KahanSum::new();
    let mut terms = SubsetTerms::over_range(probs, lo, hi);
    while let Some(term) = terms.next() {
        let inv = 1.0 / term.subset_sum;
        let inv_sq = inv * inv;
        if term.sign > 0 {
            pos_recip.add(inv);
            pos_square.add(inv_sq);
        } else {
            neg_recip.add(inv);
            neg_square.add(inv_sq);
        }
    }
    [
        pos_recip.value(),
        neg_recip.value(),
        pos_square.value(),
        neg_square.value(),
    ]
}

struct PassSums {
    mean: f64,
    second_moment: f64,
}

fn enumeration_pass(probs: &[f64], plan: &EnumerationPlan) -> PassSums {
    debug_assert_eq!(probs.len(), plan.n() as usize);
    let end = 1u64 << plan.n();
    let shards: Vec<ShardSums> = if plan.partitions() == 1 {
        vec![scan_range(probs, 1, end)]
    } else {
        let step = end / u64::from(plan.partitions());
        (0..u64::from(plan.partitions()))
            .into_par_iter()
            .map(|k| scan_range(probs, (k * step).max(1), (k + 1) * step))
            .collect()
    };
    // Shards reduce in index order, one compensated column per magnitude.
    let mut columns = [KahanSum::new(), KahanSum::new(), KahanSum::new(), KahanSum::new()];
    for shard in &shards {
        for (column, &value) in columns.iter_mut().zip(shard.iter()) {
            column.add(value);
        }
    }
    PassSums {
        mean: columns[0].value() - columns[1].value(),
        second_moment: 2.0 * (columns[2].value() - columns[3].value()),
    }
}

/// Expected draws to complete the collection, by inclusion-exclusion.
pub fn mean_general(pv: &ProbabilityVector) -> Result<f64, GeneralError> {
    let plan = EnumerationPlan::new(pv.n() as u32)?;
    Ok(mean_general_with_plan(pv, &plan))
}

pub fn mean_general_with_plan(pv: &ProbabilityVector, plan: &EnumerationPlan) -> f64 {
    assert_eq!(plan.n() as usize, pv.n(), "plan was built for a different n");
    enumeration_pass(pv.probs(), plan).mean
}

/// Poissonized second moment `E(X^2)`, by inclusion-exclusion.
pub fn second_moment_poissonized_general(pv: &ProbabilityVector) -> Result<f64, GeneralError> {
    let plan = EnumerationPlan::new(pv.n() as u32)?;
    Ok(second_moment_poissonized_general_with_plan(pv, &plan))
}

pub fn second_moment_poissonized_general_with_plan(
    pv: &ProbabilityVector,
    plan: &EnumerationPlan,
) -> f64 {
    assert_eq!(plan.n() as usize, pv.n(), "plan was built for a different n");
    enumeration_pass(pv.probs(), plan).second_moment
}

/// Relative width of the band (scaled by `mean^2`) inside which a
/// negative variance is treated as cancellation noise and clamped to 0.
pub const VARIANCE_NOISE_BAND: f64 = 1e-9;

fn finish_variance(mean: f64, second_moment: f64) -> Result<f64, GeneralError> {
    let variance = second_moment - mean - mean * mean;
    if variance >= 0.0 {
        return Ok(variance);
    }
    let bound = -VARIANCE_NOISE_BAND * mean * mean;
    if variance >= bound {
        log::warn!(
            "variance {variance} is negative but within the noise band {bound}; clamping to 0"
        );
        Ok(0.0)
    } else {
        Err(GeneralError::StabilityError {
            value: variance,
            bound,
        })
    }
}

/// Variance of the draw count: `E(X^2) - E(X) - E(X)^2`.
pub fn variance_general(pv: &ProbabilityVector) -> Result<f64, GeneralError> {
    let plan = EnumerationPlan::new(pv.n() as u32)?;
    variance_general_with_plan(pv, &plan)
}

pub fn variance_general_with_plan(
    pv: &ProbabilityVector,
    plan: &EnumerationPlan,
) -> Result<f64, GeneralError> {
    let sums = enumeration_pass(pv.probs(), plan);
    finish_variance(sums.mean, sums.second_moment)
}

/// Mean, variance, and Poissonized second moment from one enumeration.
pub fn moments_general(pv: &ProbabilityVector) -> Result<MomentSummary, GeneralError> {
    let plan = EnumerationPlan::new(pv.n() as u32)?;
    moments_general_with_plan(pv, &plan)
}

pub fn moments_general_with_plan(
    pv: &ProbabilityVector,
    plan: &EnumerationPlan,
) -> Result<MomentSummary, GeneralError> {
    assert_eq!(plan.n() as usize, pv.n(), "plan was built for a different n");
    let sums = enumeration_pass(pv.probs(), plan);
    let variance = finish_variance(sums.mean, sums.second_moment)?;
    Ok(MomentSummary::new(
        sums.mean,
        variance,
        Some(sums.second_moment),
        Method::InclusionExclusion,
    ))
}

/// Factors below this threshold push the survival product into log space.
const LOG_SPACE_FLOOR: f64 = 1e-300;

/// `P(X > t) = 1 - prod_j (1 - e^(-p_j t))` for the Poissonized process.
///
/// Panics if `t` is negative or NaN.
pub fn survival_poissonized(pv: &ProbabilityVector, t: f64) -> f64 {
    assert!(t >= 0.0, "survival_poissonized needs t >= 0, got {t}");
    let mut product = 1.0;
    let mut underflow_risk = false;
    for &p in pv.probs() {
        // 1 - e^(-pt) via expm1 keeps small-t factors at full precision.
        let factor = -(-p * t).exp_m1();
        if factor < LOG_SPACE_FLOOR {
            underflow_risk = true;
            break;
        }
        product *= factor;
    }
    if underflow_risk {
        let mut log_sum = KahanSum::new();
        let mut zero_factor = false;
        for &p in pv.probs() {
            let factor = -(-p * t).exp_m1();
            if factor == 0.0 {
                // An exactly-zero factor (t = 0, or p t below the subnormal
                // range) forces the product to 0; ln(0) would poison the sum.
                zero_factor = true;
                break;
            }
            log_sum.add(factor.ln());
        }
        product = if zero_factor {
            0.0
        } else {
            log_sum.value().exp()
        };
    }
    (1.0 - product).clamp(0.0, 1.0)
}

/// Tolerance and truncation point for the integration route.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadratureSpec {
    abs_tol: f64,
    t_max: f64,
}

impl QuadratureSpec {
    pub fn new(abs_tol: f64, t_max: f64) -> Result<Self, GeneralError> {
        if !(abs_tol > 0.0) || !abs_tol.is_finite() || !(t_max > 0.0) || !t_max.is_finite() {
            return Err(GeneralError::InvalidQuadratureSpec { abs_tol, t_max });
        }
        Ok(Self { abs_tol, t_max })
    }

    /// Truncation from the union bound `P(X > t) <= n e^(-p_min t)`:
    /// `t_max = ln(n / abs_tol) / p_min` pushes the neglected mass below
    /// `abs_tol` scale before the analytic tail term is even added.
    pub fn for_vector(pv: &ProbabilityVector, abs_tol: f64) -> Result<Self, GeneralError> {
        if !(abs_tol > 0.0) || !abs_tol.is_finite() {
            return Err(GeneralError::InvalidQuadratureSpec {
                abs_tol,
                t_max: f64::NAN,
            });
        }
        let t_max = (pv.n() as f64 / abs_tol).ln() / pv.min_prob();
        Self::new(abs_tol, t_max)
    }

    pub fn abs_tol(&self) -> f64 {
        self.abs_tol
    }

    pub fn t_max(&self) -> f64 {
        self.t_max
    }
}

const MAX_QUADRATURE_SEGMENTS: usize = 4096;

fn integrate_survival(
    pv: &ProbabilityVector,
    spec: &QuadratureSpec,
    weight_by_2t: bool,
) -> Result<f64, GeneralError> {
    let requested = spec.abs_tol() / 2.0;
    let quad = quadrature::integrate(
        |t| {
            let s = survival_poissonized(pv, t);
            if weight_by_2t {
                2.0 * t * s
            } else {
                s
            }
        },
        0.0,
        spec.t_max(),
        requested,
        MAX_QUADRATURE_SEGMENTS,
    )
    .map_err(|achieved| GeneralError::ToleranceNotReached {
        requested,
        achieved,
    })?;
    log::debug!(
        "survival integral used {} segments, error estimate {:.3e}",
        quad.segments,
        quad.error_estimate
    );
    // First-order tail: int_{t_max}^inf of the union bound. It equals the
    // true tail up to pair terms e^(-(p_i+p_j) t_max), which are at
    // abs_tol^2 scale at this t_max.
    let t_max = spec.t_max();
    let mut tail = KahanSum::new();
    for &p in pv.probs() {
        let head = (-p * t_max).exp();
        if weight_by_2t {
            tail.add(2.0 * head * (t_max / p + 1.0 / (p * p)));
        } else {
            tail.add(head / p);
        }
    }
    Ok(quad.value + tail.value())
}

/// Mean via `E(X) = int_0^inf P(X > t) dt`, accurate to about `abs_tol`.
pub fn mean_via_integration(
    pv: &ProbabilityVector,
    spec: &QuadratureSpec,
) -> Result<f64, GeneralError> {
    integrate_survival(pv, spec, false)
}

/// Second moment via `E(X^2) = int_0^inf 2 t P(X > t) dt`.
pub fn second_moment_via_integration(
    pv: &ProbabilityVector,
    spec: &QuadratureSpec,
) -> Result<f64, GeneralError> {
    integrate_survival(pv, spec, true)
}

/// Mean, variance, and second moment from the integration route.
pub fn moments_via_integration(
    pv: &ProbabilityVector,
    spec: &QuadratureSpec,
) -> Result<MomentSummary, GeneralError> {
    let mean = mean_via_integration(pv, spec)?;
    let second = second_moment_via_integration(pv, spec)?;
    let variance = finish_variance(mean, second)?;
    Ok(MomentSummary::new(
        mean,
        variance,
        Some(second),
        Method::Integration,
    ))
}
