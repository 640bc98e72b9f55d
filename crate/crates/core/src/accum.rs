//! Order-independent, correctly rounded summation of non-negative floats.
//!
//! Squared magnitudes are added into a fixed-point integer wide enough to
//! hold any finite `f64` exactly, so the rounded total is the same no matter
//! how the inputs are ordered or partitioned.

const LIMBS: usize = 35;
const SUBNORMAL_SHIFT: i32 = 1074;

#[derive(Debug, Clone)]
pub struct ExactSum {
    limbs: [u64; LIMBS],
    infinite: bool,
    nan: bool,
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
            infinite: false,
            nan: false,
        }
    }

    /// Adds a non-negative value. Negative inputs are a logic error.
    pub fn add(&mut self, x: f64) {
        if x.is_nan() {
            self.nan = true;
            return;
        }
        debug_assert!(x >= 0.0, "ExactSum only accepts non-negative values");
        if x.is_infinite() {
            self.infinite = true;
            return;
        }
        if x == 0.0 {
            return;
        }
        let bits = x.to_bits();
        let biased = ((bits >> 52) & 0x7ff) as i32;
        let frac = bits & ((1u64 << 52) - 1);
        let (mant, exp) = if biased == 0 {
            (frac, -SUBNORMAL_SHIFT)
        } else {
            (frac | (1u64 << 52), biased - 1075)
        };
        let shift = (exp + SUBNORMAL_SHIFT) as usize;
        let limb = shift / 64;
        let wide = u128::from(mant) << (shift % 64);
        self.add_at(limb, wide as u64);
        self.add_at(limb + 1, (wide >> 64) as u64);
    }

    fn add_at(&mut self, mut limb: usize, mut v: u64) {
        while v != 0 {
            let (sum, carry) = self.limbs[limb].overflowing_add(v);
            self.limbs[limb] = sum;
            v = u64::from(carry);
            limb += 1;
        }
    }

    pub fn merge(&mut self, other: &ExactSum) {
        self.nan |= other.nan;
        self.infinite |= other.infinite;
        for (i, &v) in other.limbs.iter().enumerate() {
            self.add_at(i, v);
        }
    }

    fn bit(&self, k: usize) -> bool {
        (self.limbs[k / 64] >> (k % 64)) & 1 == 1
    }

    /// Bits `lo..lo+64` as an integer.
    fn window(&self, lo: usize) -> u64 {
        let i = lo / 64;
        let off = lo % 64;
        let low = self.limbs[i] >> off;
        if off == 0 || i + 1 >= LIMBS {
            low
        } else {
            low | (self.limbs[i + 1] << (64 - off))
        }
    }

    fn any_below(&self, k: usize) -> bool {
        let i = k / 64;
        if self.limbs[..i].iter().any(|&l| l != 0) {
            return true;
        }
        let mask = (1u64 << (k % 64)) - 1;
        self.limbs[i] & mask != 0
    }

    /// The exact total rounded to nearest, ties to even.
    pub fn value(&self) -> f64 {
        if self.nan {
            return f64::NAN;
        }
        if self.infinite {
            return f64::INFINITY;
        }
        let Some(top_limb) = self.limbs.iter().rposition(|&l| l != 0) else {
            return 0.0;
        };
        let top = top_limb * 64 + 63 - self.limbs[top_limb].leading_zeros() as usize;
        if top <= 52 {
            // Below 2^53 units of 2^-1074 the raw integer is the bit pattern.
            return f64::from_bits(self.limbs[0]);
        }
        let mut exp_pos = top;
        let lo = top - 52;
        let mut mant = self.window(lo) & ((1u64 << 53) - 1);
        let round = self.bit(lo - 1);
        let sticky = lo >= 2 && self.any_below(lo - 1);
        if round && (sticky || mant & 1 == 1) {
            mant += 1;
            if mant == 1u64 << 53 {
                mant >>= 1;
                exp_pos += 1;
            }
        }
        let biased = exp_pos as u64 - 51;
        if biased >= 0x7ff {
            return f64::INFINITY;
        }
        f64::from_bits((biased << 52) | (mant & ((1u64 << 52) - 1)))
    }
}

impl FromIterator<f64> for ExactSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = ExactSum::new();
        for x in iter {
            acc.add(x);
        }
        acc
    }
}

/// Correctly rounded sum of squares.
pub fn sum_of_squares<'a, I: IntoIterator<Item = &'a f64>>(values: I) -> f64 {
    values.into_iter().map(|v| v * v).collect::<ExactSum>().value()
}
