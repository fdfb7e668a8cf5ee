//! Brute-force reference over the full collection-state lattice.
//!
//! Every subset `S` of coupon types is a state; `T_S` is the number of
//! further draws needed to finish the collection starting from `S`. With
//! `fresh = sum_{j not in S} p_j`, conditioning on one draw gives
//!
//! ```text
//! E(T_S)   = (1 + sum_{j not in S} p_j E(T_{S+j})) / fresh
//! E(T_S^2) = (2 E(T_S) - 1 + sum_{j not in S} p_j E(T_{S+j}^2)) / fresh
//! ```
//!
//! solved by one sweep from the full state down to the empty state. This
//! shares no mathematics with the inclusion-exclusion and integration
//! routes (no alternating sums, no Poissonization), which is exactly what
//! makes it a useful referee between them. Cost is `O(2^n * n)` time and
//! `O(2^n)` memory, so `n` is capped low.

use serde::Serialize;
use thiserror::Error;

use crate::model::ProbabilityVector;
use crate::numeric::KahanSum;

/// Cap on the universe size: 2^20 states is about the point where the
/// oracle stops being instant.
pub const ORACLE_MAX_N: usize = 20;

#[derive(Clone, Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("the brute-force oracle supports n <= {max}, got {n}")]
    UniverseTooLarge { n: usize, max: usize },
}

impl OracleError {
    /// Stable identifier used on the CLI diagnostic stream.
    pub fn name(&self) -> &'static str {
        match self {
            OracleError::UniverseTooLarge { .. } => "UniverseTooLarge",
        }
    }
}

/// Moments of the actual draw count `N`, solved state by state.
///
/// `second_moment` is the ordinary `E(N^2)`; the Poissonized second
/// moment reported by the other routes equals `E(N^2) + E(N)`.
#[derive(Clone, Debug, Serialize)]
pub struct OracleResult {
    pub mean: f64,
    pub second_moment: f64,
    pub variance: f64,
    pub states_solved: u64,
}

/// Next-larger integer with the same popcount (Gosper's hack).
fn next_same_popcount(v: u64) -> u64 {
    let lowest = v & v.wrapping_neg();
    let ripple = v + lowest;
    (((ripple ^ v) >> 2) / lowest) | ripple
}

pub fn exact_moments_bruteforce(pv: &ProbabilityVector) -> Result<OracleResult, OracleError> {
    solve(pv, false)
}

/// `reverse_within_level` flips the visit order inside each cardinality
/// level; every state only reads states of strictly larger cardinality,
/// so the answer must be bit-identical either way (checked in tests).
fn solve(pv: &ProbabilityVector, reverse_within_level: bool) -> Result<OracleResult, OracleError> {
    let n = pv.n();
    if n > ORACLE_MAX_N {
        return Err(OracleError::UniverseTooLarge {
            n,
            max: ORACLE_MAX_N,
        });
    }
    let probs = pv.probs();
    let full: u64 = (1u64 << n) - 1;
    let states = 1usize << n;
    let mut mean_table = vec![0.0f64; states];
    let mut second_table = vec![0.0f64; states];

    let solve_state = |mask: u64, mean_table: &mut Vec<f64>, second_table: &mut Vec<f64>| {
        let mut fresh = KahanSum::new();
        let mut mean_feed = KahanSum::new();
        let mut second_feed = KahanSum::new();
        let mut missing = full & !mask;
        while missing != 0 {
            let j = missing.trailing_zeros() as usize;
            missing &= missing - 1;
            let p = probs[j];
            let successor = (mask | (1u64 << j)) as usize;
            fresh.add(p);
            mean_feed.add(p * mean_table[successor]);
            second_feed.add(p * second_table[successor]);
        }
        // fresh is summed directly from the missing coupons, never as
        // 1 - (collected mass): near-complete states keep full precision.
        let fresh = fresh.value();
        let mean = (1.0 + mean_feed.value()) / fresh;
        mean_table[mask as usize] = mean;
        second_table[mask as usize] = (2.0 * mean - 1.0 + second_feed.value()) / fresh;
    };

    for cardinality in (0..n).rev() {
        if cardinality == 0 {
            solve_state(0, &mut mean_table, &mut second_table);
            continue;
        }
        let mut masks: Vec<u64> = Vec::new();
        let mut mask = (1u64 << cardinality) - 1;
        while mask <= full {
            masks.push(mask);
            mask = next_same_popcount(mask);
        }
        if reverse_within_level {
            masks.reverse();
        }
        for mask in masks {
            solve_state(mask, &mut mean_table, &mut second_table);
        }
    }

    let mean = mean_table[0];
    let second_moment = second_table[0];
    Ok(OracleResult {
        mean,
        second_moment,
        variance: second_moment - mean * mean,
        states_solved: states as u64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact_equal;
    use crate::exact_general;
    use rand::prelude::*;

    fn pv(values: &[f64]) -> ProbabilityVector {
        ProbabilityVector::new(values.to_vec()).unwrap()
    }

    fn assert_rel_close(actual: f64, expected: f64, tol: f64) {
        assert!(
            (actual - expected).abs() <= tol * expected.abs().max(1.0),
            "actual {actual} vs expected {expected} (tol {tol})"
        );
    }

    #[test]
    fn single_coupon_is_deterministic() {
        let r = exact_moments_bruteforce(&pv(&[1.0])).unwrap();
        assert_eq!(r.mean, 1.0);
        assert_eq!(r.second_moment, 1.0);
        assert_eq!(r.variance, 0.0);
        assert_eq!(r.states_solved, 2);
    }

    #[test]
    fn two_equal_coupons() {
        let r = exact_moments_bruteforce(&pv(&[0.5, 0.5])).unwrap();
        assert_rel_close(r.mean, 3.0, 1e-14);
        // E(N^2) = 11, so Var = 11 - 9 = 2.
        assert_rel_close(r.second_moment, 11.0, 1e-14);
        assert_rel_close(r.variance, 2.0, 1e-13);
        assert_eq!(r.states_solved, 4);
    }

    #[test]
    fn three_equal_coupons() {
        let r = exact_moments_bruteforce(&pv(&[1.0 / 3.0; 3])).unwrap();
        assert_rel_close(r.mean, 5.5, 1e-13);
        assert_rel_close(r.second_moment, 37.0, 1e-13);
        assert_rel_close(r.variance, 6.75, 1e-13);
    }

    #[test]
    fn skewed_fixtures() {
        let r = exact_moments_bruteforce(&pv(&[2.0 / 3.0, 1.0 / 3.0])).unwrap();
        assert_rel_close(r.mean, 3.5, 1e-14);
        assert_rel_close(r.second_moment, 17.0, 1e-14);
        assert_rel_close(r.variance, 4.75, 1e-13);

        let r = exact_moments_bruteforce(&pv(&[0.5, 0.3, 0.2])).unwrap();
        assert_rel_close(r.mean, 559.0 / 84.0, 1e-13);
        assert_rel_close(r.variance, 16.0749716553288, 1e-12);
    }

    #[test]
    fn matches_closed_forms_on_uniform_vectors() {
        for n in 1..=12usize {
            let v = ProbabilityVector::uniform(n).unwrap();
            let r = exact_moments_bruteforce(&v).unwrap();
            assert_rel_close(r.mean, exact_equal::mean_equal(n as u64), 1e-12);
            assert_rel_close(r.variance, exact_equal::variance_equal(n as u64), 1e-11);
            // Poissonized E(X^2) = E(N^2) + E(N).
            assert_rel_close(
                r.second_moment + r.mean,
                exact_equal::second_moment_poissonized_equal(n as u64),
                1e-12,
            );
        }
    }

    #[test]
    fn referees_the_inclusion_exclusion_route_on_random_vectors() {
        let mut rng = StdRng::seed_from_u64(987654321);
        for _ in 0..40 {
            let n = rng.random_range(2..=10usize);
            let weights: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
            let v = ProbabilityVector::renormalized(weights).unwrap();
            let oracle = exact_moments_bruteforce(&v).unwrap();
            let mean_ie = exact_general::mean_general(&v).unwrap();
            let var_ie = exact_general::variance_general(&v).unwrap();
            let second_ie = exact_general::second_moment_poissonized_general(&v).unwrap();
            assert_rel_close(oracle.mean, mean_ie, 1e-10);
            assert_rel_close(oracle.variance, var_ie, 1e-9);
            assert_rel_close(oracle.second_moment + oracle.mean, second_ie, 1e-10);
        }
    }

    #[test]
    fn visit_order_within_a_level_is_immaterial() {
        let v = pv(&[0.35, 0.25, 0.2, 0.12, 0.08]);
        let forward = solve(&v, false).unwrap();
        let backward = solve(&v, true).unwrap();
        assert_eq!(forward.mean.to_bits(), backward.mean.to_bits());
        assert_eq!(
            forward.second_moment.to_bits(),
            backward.second_moment.to_bits()
        );
    }

    #[test]
    fn cap_is_enforced() {
        let v = ProbabilityVector::uniform(21).unwrap();
        let e = exact_moments_bruteforce(&v).unwrap_err();
        assert_eq!(e, OracleError::UniverseTooLarge { n: 21, max: 20 });
        assert_eq!(e.name(), "UniverseTooLarge");
    }

    #[test]
    fn result_serializes() {
        let r = exact_moments_bruteforce(&pv(&[0.5, 0.5])).unwrap();
        let json = serde_json::to_value(&r).unwrap();
        assert_eq!(json["states_solved"], 4);
        assert!(json["mean"].as_f64().unwrap() > 0.0);
    }

    mod proptests {
        use super::*;
        use proptest::prelude::*;

        fn arb_pv(max_n: usize) -> impl Strategy<Value = ProbabilityVector> {
            proptest::collection::vec(0.1..1.0f64, 1..=max_n)
                .prop_map(|w| ProbabilityVector::renormalized(w).unwrap())
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(48))]

            #[test]
            fn oracle_agrees_with_inclusion_exclusion(v in arb_pv(8)) {
                let oracle = exact_moments_bruteforce(&v).unwrap();
                let mean_ie = exact_general::mean_general(&v).unwrap();
                prop_assert!((oracle.mean - mean_ie).abs() <= 1e-10 * mean_ie.abs().max(1.0));
            }

            #[test]
            fn variance_is_nonnegative_and_mean_exceeds_n(v in arb_pv(8)) {
                let r = exact_moments_bruteforce(&v).unwrap();
                prop_assert!(r.variance >= -1e-12);
                prop_assert!(r.mean >= v.n() as f64 - 1e-12);
            }
        }
    }
}
