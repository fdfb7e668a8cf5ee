//! Finite alternating-sum identities used as numerical cross-checks.
//!
//! The central identity connects the binomial alternating sum to an
//! ordered nested harmonic sum:
//!
//! ```text
//! sum_{k=1}^n (-1)^(k-1) C(n,k) / k^r
//!   = sum_{1 <= i_1 <= i_2 <= ... <= i_r <= n} 1 / (i_1 i_2 ... i_r)
//! ```
//!
//! (non-strict ordering on the right; with strict ordering the two sides
//! already disagree at `n = r = 2`, 0.5 versus 1.75). The left side is
//! exactly the shape of the inclusion-exclusion moment sums for equal
//! probabilities, with violent cancellation between huge terms; the right
//! side is a tame all-positive sum. Agreement between the two is a sharp
//! probe of the compensated-summation machinery.
//!
//! For `r = 2` the nested sum also has a closed form,
//! `(H_n^2 + H_n^(2)) / 2`, checked separately.

use serde::Serialize;
use thiserror::Error;

use crate::exact_equal::harmonic_number;
use crate::numeric::KahanSum;

/// Largest `n` accepted on the binomial side: every `C(n,k)` with
/// `n <= 56` is exactly representable in an f64 (`C(56,28) < 2^53`), so
/// the alternating sum carries no representation error at all.
pub const BINOMIAL_MAX_N: u64 = 56;
/// Largest `n` accepted for the all-positive nested sums, a plain
/// runtime guard.
pub const NESTED_MAX_N: u64 = 10_000_000;
/// Largest exponent `r` accepted.
pub const MAX_POWER: u32 = 3;

#[derive(Clone, Debug, Error, PartialEq)]
pub enum IdentityError {
    #[error("identity checks support n in [1, {max}], got {n}")]
    UniverseOutOfRange { n: u64, max: u64 },
    #[error("identity checks support r in [1, {max}], got {r}")]
    PowerOutOfRange { r: u32, max: u32 },
}

impl IdentityError {
    /// Stable identifier used on the CLI diagnostic stream.
    pub fn name(&self) -> &'static str {
        match self {
            IdentityError::UniverseOutOfRange { .. } => "UniverseOutOfRange",
            IdentityError::PowerOutOfRange { .. } => "PowerOutOfRange",
        }
    }
}

fn validate(n: u64, n_max: u64, r: u32) -> Result<(), IdentityError> {
    if n == 0 || n > n_max {
        return Err(IdentityError::UniverseOutOfRange { n, max: n_max });
    }
    if r == 0 || r > MAX_POWER {
        return Err(IdentityError::PowerOutOfRange { r, max: MAX_POWER });
    }
    Ok(())
}

/// `sum_{k=1}^n (-1)^(k-1) C(n,k) / k^r`.
///
/// Binomial coefficients are carried as exact u64 integers
/// (`C(n,k) = C(n,k-1) (n-k+1) / k` divides exactly at every step) and
/// each division by `k^r` is split into a rounded quotient plus its exact
/// residual via a fused multiply-add, so the only rounding left is in the
/// compensated accumulation itself.
pub fn binomial_alternating_sum(n: u64, r: u32) -> Result<f64, IdentityError> {
    validate(n, BINOMIAL_MAX_N, r)?;
    let mut sum = KahanSum::new();
    let mut coefficient = 1u64;
    for k in 1..=n {
        coefficient = coefficient * (n - k + 1) / k;
        let c = coefficient as f64;
        debug_assert_eq!(c as u64, coefficient, "binomial coefficient not exact in f64");
        let divisor = (k as f64).powi(r as i32);
        let quotient = c / divisor;
        // fma(-q, d, c) recovers c - q*d exactly: the division residual.
        let residual = f64::mul_add(-quotient, divisor, c) / divisor;
        if k % 2 == 1 {
            sum.add(quotient);
            sum.add(residual);
        } else {
            sum.add(-quotient);
            sum.add(-residual);
        }
    }
    Ok(sum.value())
}

/// `sum over 1 <= i_1 <= ... <= i_r <= n of 1/(i_1 ... i_r)` in one
/// forward pass, layering one compensated accumulator per level.
pub fn nested_harmonic_sum(n: u64, r: u32) -> Result<f64, IdentityError> {
    validate(n, NESTED_MAX_N, r)?;
    let mut level1 = KahanSum::new();
    let mut level2 = KahanSum::new();
    let mut level3 = KahanSum::new();
    for i in 1..=n {
        let inv = 1.0 / i as f64;
        level1.add(inv);
        if r >= 2 {
            level2.add(level1.value() * inv);
        }
        if r >= 3 {
            level3.add(level2.value() * inv);
        }
    }
    Ok(match r {
        1 => level1.value(),
        2 => level2.value(),
        _ => level3.value(),
    })
}

/// Outcome of one identity evaluation, both sides reported verbatim.
#[derive(Clone, Debug, Serialize)]
pub struct IdentityReport {
    pub name: &'static str,
    pub n: u64,
    pub r: u32,
    pub lhs: f64,
    pub rhs: f64,
    pub abs_diff: f64,
    pub rel_diff: f64,
    pub passed: bool,
}

fn report(name: &'static str, n: u64, r: u32, lhs: f64, rhs: f64, rel_tol: f64) -> IdentityReport {
    let abs_diff = (lhs - rhs).abs();
    let rel_diff = abs_diff / rhs.abs().max(1.0);
    IdentityReport {
        name,
        n,
        r,
        lhs,
        rhs,
        abs_diff,
        rel_diff,
        passed: rel_diff <= rel_tol,
    }
}

/// Checks the binomial alternating sum against the nested harmonic sum.
pub fn check_binomial_identity(n: u64, r: u32, rel_tol: f64) -> Result<IdentityReport, IdentityError> {
    let lhs = binomial_alternating_sum(n, r)?;
    let rhs = nested_harmonic_sum(n, r)?;
    Ok(report("binomial-alternating", n, r, lhs, rhs, rel_tol))
}

/// Checks `sum_{i<=j} 1/(ij) = (H_n^2 + H_n^(2)) / 2`.
pub fn check_harmonic_square_identity(n: u64, rel_tol: f64) -> Result<IdentityReport, IdentityError> {
    let lhs = nested_harmonic_sum(n, 2)?;
    let h1 = harmonic_number(n, 1);
    let h2 = harmonic_number(n, 2);
    let rhs = (h1 * h1 + h2) / 2.0;
    Ok(report("harmonic-square", n, 2, lhs, rhs, rel_tol))
}
