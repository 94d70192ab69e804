//! Exact floating-point accumulation.
//!
//! [`ExactSum`] keeps the running total as a fixed-point integer wide enough to
//! hold any sum of finite `f64` values without rounding. The final value
//! depends only on the multiset of added terms, never on their order, so
//! configuration sums are bit-reproducible under any enumeration order or
//! parallel split.

const LIMB_BITS: u32 = 32;
const LIMBS: usize = 72;
/// Exponent of the least significant representable bit (smallest subnormal).
const MIN_EXP: i32 = -1074;
/// Limbs can absorb this many raw additions before carries must be propagated.
const FLUSH_EVERY: u32 = 1 << 29;

#[derive(Clone, Debug)]
pub struct ExactSum {
    limbs: [i64; LIMBS],
    pending: u32,
    non_finite: f64,
}

impl Default for ExactSum {
    fn default() -> Self {
        Self::new()
    }
}

impl ExactSum {
    pub fn new() -> Self {
        Self {
            limbs: [0; LIMBS],
            pending: 0,
            non_finite: 0.0,
        }
    }

    pub fn add(&mut self, x: f64) {
        if !x.is_finite() {
            self.non_finite += x;
            return;
        }
        if x == 0.0 {
            return;
        }
        let bits = x.to_bits();
        let negative = bits >> 63 == 1;
        let exp_bits = ((bits >> 52) & 0x7ff) as i32;
        let frac = bits & ((1u64 << 52) - 1);
        let (mantissa, exp) = if exp_bits == 0 {
            (frac, MIN_EXP)
        } else {
            (frac | (1u64 << 52), exp_bits - 1075)
        };
        let shift = (exp - MIN_EXP) as u32;
        let idx = (shift / LIMB_BITS) as usize;
        let wide = (mantissa as u128) << (shift % LIMB_BITS);
        let mask = (1u128 << LIMB_BITS) - 1;
        for k in 0..3 {
            let part = ((wide >> (k as u32 * LIMB_BITS)) & mask) as i64;
            if part != 0 {
                if negative {
                    self.limbs[idx + k] -= part;
                } else {
                    self.limbs[idx + k] += part;
                }
            }
        }
        self.pending += 1;
        if self.pending >= FLUSH_EVERY {
            self.normalize();
        }
    }

    /// Adds the exact total of `other` into `self`.
    pub fn merge(&mut self, other: &ExactSum) {
        let mut other = other.clone();
        other.normalize();
        self.normalize();
        for (a, b) in self.limbs.iter_mut().zip(other.limbs.iter()) {
            *a += *b;
        }
        self.non_finite += other.non_finite;
        self.normalize();
    }

    fn normalize(&mut self) {
        for i in 0..LIMBS - 1 {
            let carry = self.limbs[i] >> LIMB_BITS;
            self.limbs[i] -= carry << LIMB_BITS;
            self.limbs[i + 1] += carry;
        }
        self.pending = 0;
    }

    /// Rounded value of the exact total.
    pub fn value(&self) -> f64 {
        if self.non_finite != 0.0 || self.non_finite.is_nan() {
            return self.non_finite;
        }
        let mut canon = self.clone();
        canon.normalize();
        let negative = canon.limbs[LIMBS - 1] < 0;
        if negative {
            for limb in canon.limbs.iter_mut() {
                *limb = -*limb;
            }
            canon.normalize();
        }
        // Limbs are now canonical and non-negative, so the summation below is
        // a pure function of the exact total.
        let mut sum = 0.0f64;
        let mut comp = 0.0f64;
        for i in (0..LIMBS).rev() {
            let limb = canon.limbs[i];
            if limb == 0 {
                continue;
            }
            let term = limb as f64 * pow2(i as i32 * LIMB_BITS as i32 + MIN_EXP);
            let t = sum + term;
            if sum.abs() >= term.abs() {
                comp += (sum - t) + term;
            } else {
                comp += (term - t) + sum;
            }
            sum = t;
        }
        let magnitude = sum + comp;
        if negative {
            -magnitude
        } else {
            magnitude
        }
    }
}

impl Extend<f64> for ExactSum {
    fn extend<I: IntoIterator<Item = f64>>(&mut self, iter: I) {
        for x in iter {
            self.add(x);
        }
    }
}

impl FromIterator<f64> for ExactSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = ExactSum::new();
        acc.extend(iter);
        acc
    }
}

fn pow2(k: i32) -> f64 {
    if k > 1023 {
        f64::INFINITY
    } else if k >= -1022 {
        f64::from_bits(((k + 1023) as u64) << 52)
    } else {
        f64::from_bits(1u64 << (k - MIN_EXP))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn cancellation_is_exact() {
        let acc: ExactSum = [1e100, 1.0, -1e100, 1e-300].into_iter().collect();
        assert_eq!(acc.value(), 1.0);
        let acc: ExactSum = [0.1, 0.2, -0.3].into_iter().collect();
        // 0.1 + 0.2 - 0.3 in exact binary arithmetic.
        assert_eq!(acc.value(), 2.7755575615628914e-17);
    }

    #[test]
    fn subnormals_and_signs() {
        let tiny = f64::from_bits(1);
        let acc: ExactSum = [tiny, tiny, -tiny * 3.0].into_iter().collect();
        assert_eq!(acc.value(), -tiny);
        let acc: ExactSum = [-2.5, -0.5].into_iter().collect();
        assert_eq!(acc.value(), -3.0);
    }

    #[test]
    fn merge_matches_single_pass() {
        let xs: Vec<f64> = (1..500).map(|k| (k as f64).sin() * 10f64.powi(k % 30 - 15)).collect();
        let whole: ExactSum = xs.iter().copied().collect();
        let mut left: ExactSum = xs[..200].iter().copied().collect();
        let right: ExactSum = xs[200..].iter().copied().collect();
        left.merge(&right);
        assert_eq!(whole.value().to_bits(), left.value().to_bits());
    }

    proptest! {
        #[test]
        fn order_independent(mut xs in prop::collection::vec(-1e6f64..1e6, 1..60), seed in any::<u64>()) {
            let forward: ExactSum = xs.iter().copied().collect();
            // deterministic shuffle
            let mut state = seed | 1;
            for i in (1..xs.len()).rev() {
                state ^= state << 13; state ^= state >> 7; state ^= state << 17;
                xs.swap(i, (state % (i as u64 + 1)) as usize);
            }
            let shuffled: ExactSum = xs.iter().copied().collect();
            prop_assert_eq!(forward.value().to_bits(), shuffled.value().to_bits());
        }
    }
}
