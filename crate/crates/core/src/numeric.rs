//! Compensated floating-point summation.

/// Running sum with Neumaier's compensation.
///
/// Each `add` folds the rounding error of the addition into a carry term,
/// so the pair `(sum, carry)` represents the running total to roughly twice
/// working precision. The branch picks which operand lost low bits, which
/// keeps the compensation valid when terms of mixed sign and magnitude are
/// accumulated (unlike Kahan's original form, which can lose the carry when
/// a term exceeds the running sum).
#[derive(Clone, Copy, Debug, Default)]
pub struct KahanSum {
    sum: f64,
    carry: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

/// Compensated sum of an iterator of terms.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(terms: I) -> f64 {
    let mut acc = KahanSum::new();
    for x in terms {
        acc.add(x);
    }
    acc.value()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_cancelled_small_term() {
        // Naive summation returns 0 here; the carry keeps the 1.0.
        let mut acc = KahanSum::new();
        acc.add(1.0);
        acc.add(1e100);
        acc.add(-1e100);
        assert_eq!(acc.value(), 1.0);
    }

    #[test]
    fn tenths_sum_to_one() {
        let v = compensated_sum(std::iter::repeat(0.1).take(10));
        assert_eq!(v, 1.0);
    }

    #[test]
    fn matches_naive_on_benign_input() {
        let v = compensated_sum((1..=100).map(|k| k as f64));
        assert_eq!(v, 5050.0);
    }

    #[test]
    fn alternating_large_terms() {
        // sum_{k=1..40} (-1)^(k-1) * 2^k collapses pairwise; compensation
        // must not corrupt a sum that repeatedly changes sign.
        let mut acc = KahanSum::new();
        for k in 1..=40u32 {
            let t = (2f64).powi(k as i32);
            acc.add(if k % 2 == 1 { t } else { -t });
        }
        let exact: f64 = (1..=40u32)
            .map(|k| {
                let t = (2f64).powi(k as i32);
                if k % 2 == 1 {
                    t
                } else {
                    -t
                }
            })
            .sum();
        assert_eq!(acc.value(), exact);
    }
}
