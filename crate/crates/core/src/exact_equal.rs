//! Closed-form moments for equally likely coupons.
//!
//! With `n` types of equal probability `1/n`, the number of draws `N`
//! needed to complete the collection has
//!
//! ```text
//! E(N) = n * H_n                 H_n   = sum_{m=1..n} 1/m
//! V(N) = n^2 * H2_n - n * H_n    H2_n  = sum_{m=1..n} 1/m^2
//! ```
//!
//! [`variance_equal_via_recurrence`] evaluates the same variance from the
//! stage-recurrence derivation instead, so the two code paths check each
//! other rather than refactoring one formula.

use crate::numeric::KahanSum;

/// Generalized harmonic number `H_n^(r) = sum_{m=1..n} 1/m^r`.
///
/// Terms are accumulated from `m = n` down to `1`, smallest magnitude
/// first, under compensated summation.
///
/// Panics if `n == 0` or `r == 0`.
pub fn harmonic_number(n: u64, r: u32) -> f64 {
    assert!(n >= 1, "harmonic_number needs n >= 1");
    assert!(r >= 1, "harmonic_number needs r >= 1");
    let mut acc = KahanSum::new();
    for m in (1..=n).rev() {
        let mf = m as f64;
        let denom = match r {
            1 => mf,
            2 => mf * mf,
            _ => mf.powi(r as i32),
        };
        acc.add(1.0 / denom);
    }
    acc.value()
}

/// Expected draws to complete a collection of `n` equal coupons: `n * H_n`.
pub fn mean_equal(n: u64) -> f64 {
    n as f64 * harmonic_number(n, 1)
}

/// Variance of the draw count: `n^2 * H_n^(2) - n * H_n`.
pub fn variance_equal(n: u64) -> f64 {
    let nf = n as f64;
    nf * nf * harmonic_number(n, 2) - nf * harmonic_number(n, 1)
}

/// Second moment `E(X^2)` of the Poissonized completion time:
/// `2 n^2 sum_{1 <= k <= j <= n} 1/(j k)`, evaluated in `O(n)` by carrying
/// the partial harmonic sum `H_j` along the outer index.
pub fn second_moment_poissonized_equal(n: u64) -> f64 {
    assert!(n >= 1, "second_moment_poissonized_equal needs n >= 1");
    let nf = n as f64;
    let mut partial = KahanSum::new(); // H_j after the j-th step
    let mut nested = KahanSum::new(); // sum_j H_j / j
    for j in 1..=n {
        let inv = 1.0 / j as f64;
        partial.add(inv);
        nested.add(partial.value() * inv);
    }
    2.0 * nf * nf * nested.value()
}

/// Variance evaluated from the recurrence-derived expression
/// `2 n^2 sum_{1 <= k <= j <= n} 1/(jk) - n H_n - (n H_n)^2`.
///
/// Deliberately self-contained: it shares no code with
/// [`variance_equal`], so agreement between the two is a real check of
/// the underlying identity, not of a common implementation.
pub fn variance_equal_via_recurrence(n: u64) -> f64 {
    assert!(n >= 1, "variance_equal_via_recurrence needs n >= 1");
    let nf = n as f64;
    let mut harmonic = KahanSum::new();
    let mut nested = KahanSum::new();
    for j in 1..=n {
        let inv = 1.0 / j as f64;
        harmonic.add(inv);
        nested.add(harmonic.value() * inv);
    }
    let second_moment = 2.0 * nf * nf * nested.value();
    let mean = nf * harmonic.value();
    second_moment - mean - mean * mean
}
