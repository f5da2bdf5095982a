//! Scalar helpers shared by the numerical modules.
//!
//! Transcendental functions go through `libm` so that results do not depend
//! on whether the crate is built with `std`.

#[inline]
pub fn exp(x: f64) -> f64 {
    libm::exp(x)
}

#[inline]
pub fn ln(x: f64) -> f64 {
    libm::log(x)
}

#[inline]
pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

/// Neumaier's variant of Kahan summation.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

impl core::iter::FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = CompensatedSum::new();
        for x in iter {
            acc.add(x);
        }
        acc
    }
}

/// Compensated sum of an iterator of terms.
pub fn sum<I: IntoIterator<Item = f64>>(terms: I) -> f64 {
    terms.into_iter().collect::<CompensatedSum>().value()
}

/// `log Σ exp(a_i)` with max-shift. Terms equal to `-inf` are ignored; an
/// empty or all `-inf` input yields `-inf`.
pub fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY || !max.is_finite() {
        return max;
    }
    let s = sum(terms.iter().map(|&a| exp(a - max)));
    max + ln(s)
}

/// Uniform draw in `[0, 1)` with 53 random bits.
#[inline]
pub fn unit_f64<R: rand_core::RngCore + ?Sized>(rng: &mut R) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Index drawn by inverse CDF from a nondecreasing cumulative array whose
/// last entry is the total weight.
pub fn inverse_cdf(cdf: &[f64], u: f64) -> usize {
    let total = *cdf.last().expect("empty cdf");
    let target = u * total;
    let idx = cdf.partition_point(|&c| c <= target);
    // u < 1 keeps target < total except for rounding at the top end.
    idx.min(cdf.len() - 1)
}

/// Cumulative sums built with compensated accumulation.
pub fn cumulative(weights: &[f64]) -> alloc::vec::Vec<f64> {
    let mut acc = CompensatedSum::new();
    weights
        .iter()
        .map(|&w| {
            acc.add(w);
            acc.value()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let mut terms = alloc::vec![1.0e16];
        terms.extend(core::iter::repeat_n(1.0, 1000));
        terms.push(-1.0e16);
        assert_eq!(sum(terms.iter().copied()), 1000.0);
    }

    #[test]
    fn log_sum_exp_handles_large_and_empty() {
        let v = log_sum_exp(&[1000.0, 1000.0]);
        assert!((v - (1000.0 + core::f64::consts::LN_2)).abs() < 1e-12);
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY, 0.0]), 0.0);
    }

    #[test]
    fn inverse_cdf_skips_zero_weights() {
        let cdf = cumulative(&[0.0, 0.5, 0.0, 0.5]);
        assert_eq!(inverse_cdf(&cdf, 0.0), 1);
        assert_eq!(inverse_cdf(&cdf, 0.49), 1);
        assert_eq!(inverse_cdf(&cdf, 0.5), 3);
        assert_eq!(inverse_cdf(&cdf, 0.999_999), 3);
    }
}
