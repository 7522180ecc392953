//! Log-domain arithmetic for tail quantities.
//!
//! The breakpoint sequences grow doubly exponentially, so tail values and
//! segment integrals underflow `f64` after a handful of breakpoints. `Mag`
//! stores a nonnegative quantity by its natural logarithm and performs sums
//! and differences through `ln_1p`, which keeps relative accuracy near
//! machine epsilon at any representable exponent.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Div, Mul};

/// A nonnegative quantity stored as its natural log.
#[derive(Clone, Copy, PartialEq)]
pub struct Mag {
    ln: f64,
}

impl Mag {
    pub const ZERO: Mag = Mag { ln: f64::NEG_INFINITY };
    pub const ONE: Mag = Mag { ln: 0.0 };
    pub const INFINITY: Mag = Mag { ln: f64::INFINITY };

    #[inline]
    pub fn from_f64(v: f64) -> Mag {
        debug_assert!(v >= 0.0 || v.is_nan(), "Mag::from_f64 on negative value {v}");
        Mag { ln: v.ln() }
    }

    /// Builds the value `e^ln`.
    #[inline]
    pub fn from_ln(ln: f64) -> Mag {
        Mag { ln }
    }

    #[inline]
    pub fn ln(self) -> f64 {
        self.ln
    }

    /// Log base 10, convenient for reports.
    #[inline]
    pub fn log10(self) -> f64 {
        self.ln / std::f64::consts::LN_10
    }

    /// Converts back to `f64`; underflows to 0 and overflows to infinity.
    #[inline]
    pub fn to_f64(self) -> f64 {
        self.ln.exp()
    }

    #[inline]
    pub fn is_zero(self) -> bool {
        self.ln == f64::NEG_INFINITY
    }

    #[inline]
    pub fn is_finite(self) -> bool {
        self.ln < f64::INFINITY
    }

    #[inline]
    pub fn powi(self, k: i32) -> Mag {
        Mag { ln: self.ln * k as f64 }
    }

    #[inline]
    pub fn powf(self, k: f64) -> Mag {
        Mag { ln: self.ln * k }
    }

    #[inline]
    pub fn recip(self) -> Mag {
        Mag { ln: -self.ln }
    }

    #[inline]
    pub fn sqrt(self) -> Mag {
        Mag { ln: 0.5 * self.ln }
    }

    /// `self - rhs`, clamped at zero when `rhs >= self`.
    ///
    /// The clamp makes the caller's intent explicit: differences of tail
    /// values are only meaningful when the minuend dominates.
    #[inline]
    pub fn sub_or_zero(self, rhs: Mag) -> Mag {
        if rhs.ln >= self.ln {
            return Mag::ZERO;
        }
        // ln(a - b) = ln a + ln(1 - e^{ln b - ln a})
        Mag { ln: self.ln + (-((rhs.ln - self.ln).exp())).ln_1p() }
    }

    #[inline]
    pub fn max(self, rhs: Mag) -> Mag {
        if self.ln >= rhs.ln { self } else { rhs }
    }

    #[inline]
    pub fn min(self, rhs: Mag) -> Mag {
        if self.ln <= rhs.ln { self } else { rhs }
    }

    /// Ratio as plain `f64`; same caveats as `to_f64`.
    #[inline]
    pub fn ratio(self, denom: Mag) -> f64 {
        (self.ln - denom.ln).exp()
    }

    /// Sum of many magnitudes with a single rescaling.
    pub fn sum(values: &[Mag]) -> Mag {
        let mx = values.iter().fold(f64::NEG_INFINITY, |m, v| m.max(v.ln));
        if mx == f64::NEG_INFINITY {
            return Mag::ZERO;
        }
        if mx == f64::INFINITY {
            return Mag::INFINITY;
        }
        let s: f64 = values.iter().map(|v| (v.ln - mx).exp()).sum();
        Mag { ln: mx + s.ln() }
    }
}

impl Add for Mag {
    type Output = Mag;
    #[inline]
    fn add(self, rhs: Mag) -> Mag {
        let (hi, lo) = if self.ln >= rhs.ln { (self.ln, rhs.ln) } else { (rhs.ln, self.ln) };
        if lo == f64::NEG_INFINITY {
            return Mag { ln: hi };
        }
        Mag { ln: hi + (lo - hi).exp().ln_1p() }
    }
}

impl Mul for Mag {
    type Output = Mag;
    #[inline]
    fn mul(self, rhs: Mag) -> Mag {
        if self.is_zero() || rhs.is_zero() {
            // avoid -inf + inf = NaN
            return Mag::ZERO;
        }
        Mag { ln: self.ln + rhs.ln }
    }
}

impl Mul<f64> for Mag {
    type Output = Mag;
    #[inline]
    fn mul(self, rhs: f64) -> Mag {
        self * Mag::from_f64(rhs)
    }
}

impl Div for Mag {
    type Output = Mag;
    #[inline]
    fn div(self, rhs: Mag) -> Mag {
        if self.is_zero() {
            return Mag::ZERO;
        }
        Mag { ln: self.ln - rhs.ln }
    }
}

impl PartialOrd for Mag {
    #[inline]
    fn partial_cmp(&self, other: &Mag) -> Option<Ordering> {
        self.ln.partial_cmp(&other.ln)
    }
}

impl fmt::Debug for Mag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Mag(1e{:.6})", self.log10())
    }
}

impl fmt::Display for Mag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let l10 = self.log10();
        if l10.abs() < 300.0 {
            write!(f, "{:.12e}", self.to_f64())
        } else {
            let e = l10.floor();
            let m = 10f64.powf(l10 - e);
            write!(f, "{:.12}e{}", m, e as i64)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn roundtrip_and_products() {
        let a = Mag::from_f64(3.5e-200);
        let b = Mag::from_f64(2.0e-180);
        let p = a * b;
        assert_relative_eq!(p.ln(), (3.5e-200f64).ln() + (2.0e-180f64).ln(), max_relative = 1e-15);
        assert!(p.to_f64() == 0.0, "product underflows f64 but Mag keeps it");
        assert_relative_eq!((p / b).to_f64(), 3.5e-200, max_relative = 1e-12);
    }

    #[test]
    fn add_sub_stability() {
        let a = Mag::from_f64(1.0);
        let b = Mag::from_f64(1e-14);
        let s = a + b;
        assert_relative_eq!(s.to_f64(), 1.0 + 1e-14, max_relative = 1e-15);
        let d = s.sub_or_zero(a);
        assert_relative_eq!(d.to_f64(), 1e-14, max_relative = 1e-10);
    }

    #[test]
    fn sub_clamps_at_zero() {
        let a = Mag::from_f64(2.0);
        assert!(a.sub_or_zero(a).is_zero());
        assert!(Mag::from_f64(1.0).sub_or_zero(a).is_zero());
    }

    #[test]
    fn sum_matches_sequential() {
        let vals = [1e-3, 2e-3, 5e-300, 7.0, 1e-310];
        let mags: Vec<Mag> = vals.iter().map(|&v| Mag::from_f64(v)).collect();
        let total = Mag::sum(&mags);
        let expect: f64 = vals.iter().sum();
        assert_relative_eq!(total.to_f64(), expect, max_relative = 1e-14);
    }

    #[test]
    fn deep_tail_ratio() {
        // ratio of two quantities far below f64 underflow; precision is
        // |ln| * eps, which at ln ~ 1e4 leaves ~1e-12 relative
        let a = Mag::from_ln(-9000.0);
        let b = Mag::from_ln(-9000.0 + 2f64.ln());
        assert_relative_eq!(b.ratio(a), 2.0, max_relative = 1e-11);
    }
}
