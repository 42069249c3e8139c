//! Log-domain arithmetic.

/// `ln(e^a + e^b)` without overflow; `-inf` is the additive identity.
#[inline]
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if hi == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    hi + (lo - hi).exp().ln_1p()
}

pub fn log_sum_exp(values: impl IntoIterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().into_iter().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    let sum: f64 = values.into_iter().map(|v| (v - max).exp()).sum();
    max + sum.ln()
}

/// A real number stored as `(ln|x|, sign)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SignedLog {
    pub ln_abs: f64,
    pub negative: bool,
}

impl SignedLog {
    pub const ZERO: SignedLog = SignedLog {
        ln_abs: f64::NEG_INFINITY,
        negative: false,
    };
    pub const ONE: SignedLog = SignedLog {
        ln_abs: 0.0,
        negative: false,
    };

    pub fn from_ln(ln_abs: f64) -> Self {
        SignedLog {
            ln_abs,
            negative: false,
        }
    }

    /// `e^a - e^b`.
    pub fn diff_exp(a: f64, b: f64) -> Self {
        if a == b {
            return Self::ZERO;
        }
        let (hi, lo, negative) = if a > b { (a, b, false) } else { (b, a, true) };
        SignedLog {
            ln_abs: hi + (-(lo - hi).exp()).ln_1p(),
            negative,
        }
    }

    pub fn is_zero(self) -> bool {
        self.ln_abs == f64::NEG_INFINITY
    }

    pub fn value(self) -> f64 {
        let m = self.ln_abs.exp();
        if self.negative {
            -m
        } else {
            m
        }
    }
}

impl std::ops::Mul for SignedLog {
    type Output = SignedLog;
    fn mul(self, rhs: SignedLog) -> SignedLog {
        if self.is_zero() || rhs.is_zero() {
            return SignedLog::ZERO;
        }
        SignedLog {
            ln_abs: self.ln_abs + rhs.ln_abs,
            negative: self.negative != rhs.negative,
        }
    }
}
