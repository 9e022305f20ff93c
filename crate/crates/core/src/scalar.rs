//! Numeric abstraction for probability computations.

use std::fmt::Debug;

use num_traits::{FromPrimitive, Num, ToPrimitive};

/// A field-like scalar: `f32`, `f64`, or an exact rational.
///
/// Only the operations needed for hypergeometric and binomial bookkeeping are
/// required, so exact rationals can stand in for floats wherever an oracle
/// needs bit-exact agreement.
pub trait Scalar: Num + Clone + PartialOrd + FromPrimitive + ToPrimitive + Debug {
    fn from_count(n: u64) -> Self {
        Self::from_u64(n).expect("count representable in scalar")
    }

    fn ratio(num: u64, den: u64) -> Self {
        Self::from_count(num) / Self::from_count(den)
    }

    fn to_f64_lossy(&self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl<T> Scalar for T where T: Num + Clone + PartialOrd + FromPrimitive + ToPrimitive + Debug {}

/// Probability mass function of a unimodal distribution on `0..len` given by
/// its successive ratios `ratio(i) = p(i + 1) / p(i)`, all positive.
///
/// Weights grow outward from `mode` with value 1 there, so floating point
/// never overflows; the result is normalized to sum to one.
pub(crate) fn pmf_from_ratios<S: Scalar>(
    len: usize,
    mode: usize,
    ratio: impl Fn(usize) -> S,
) -> Vec<S> {
    let mut w = vec![S::zero(); len];
    w[mode] = S::one();
    for i in mode..len - 1 {
        w[i + 1] = w[i].clone() * ratio(i);
    }
    for i in (0..mode).rev() {
        w[i] = w[i + 1].clone() / ratio(i);
    }
    let total = w.iter().fold(S::zero(), |acc, x| acc + x.clone());
    w.into_iter().map(|x| x / total.clone()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::BigRational;

    #[test]
    fn ratio_matches_across_scalars() {
        assert_eq!(<f64 as Scalar>::ratio(1, 4), 0.25);
        assert_eq!(<f32 as Scalar>::ratio(3, 4), 0.75f32);
        let exact = <BigRational as Scalar>::ratio(2, 6);
        assert_eq!(exact.to_f64_lossy(), 1.0 / 3.0);
    }

    #[test]
    fn pmf_from_ratios_recovers_binomial() {
        // Bin(3, 1/2): 1/8, 3/8, 3/8, 1/8.
        let ratio = |i: usize| BigRational::ratio(3 - i as u64, i as u64 + 1);
        for mode in 0..4 {
            let p = pmf_from_ratios(4, mode, ratio);
            assert_eq!(p[0], BigRational::ratio(1, 8));
            assert_eq!(p[1], BigRational::ratio(3, 8));
        }
    }
}
