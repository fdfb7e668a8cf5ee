//! Moments of the coupon collector process.
//!
//! Given a collection of `n` coupon types drawn i.i.d. with probabilities
//! `p_1..p_n`, this crate computes the mean and variance of the number of
//! draws needed to see every type at least once, by several independent
//! routes that cross-check each other:
//!
//! * [`exact_equal`] — closed forms in harmonic numbers for equally likely
//!   coupons, plus a second formula derived from the draw-count recurrence.
//! * [`exact_general`] — inclusion-exclusion over all `2^n - 1` nonempty
//!   subsets for arbitrary probabilities, and a Poissonized route that
//!   integrates the survival function numerically.
//! * [`identities`] — the combinatorial identities connecting those routes,
//!   checkable on their own.
//! * [`oracle`] — a brute-force absorbing-chain solve over all `2^n`
//!   collection states, used as the ground truth in tests.
//! * [`simulator`] — deterministic parallel Monte Carlo.
//!
//! ```
//! use ccp_core::{exact_equal, exact_general, ProbabilityVector};
//!
//! // Ten equally likely coupons: closed form.
//! let mean = exact_equal::mean_equal(10);
//! assert!((mean - 29.289682539682538).abs() < 1e-12);
//!
//! // Arbitrary probabilities: inclusion-exclusion.
//! let pv = ProbabilityVector::new(vec![0.5, 0.3, 0.2]).unwrap();
//! let mean = exact_general::mean_general(&pv).unwrap();
//! assert!((mean - 6.654761904761905).abs() < 1e-12);
//! ```

pub mod exact_equal;
pub mod exact_general;
pub mod identities;
pub mod model;
pub mod numeric;
pub mod oracle;
pub mod simulator;

mod quadrature;

pub use model::{Method, ModelError, MomentSummary, ProbabilityVector, SubsetTerm};
