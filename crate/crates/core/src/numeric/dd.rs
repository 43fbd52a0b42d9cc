//! Double-double scalar for finite-difference oracles.
//!
//! Arithmetic comes from [`twofloat::TwoFloat`] except division, which
//! there computes its residual `1 - b·(1/b)` without a fused multiply-add
//! and is only `f64` accurate. [`Dd`] divides by three rounds of quotient
//! refinement instead.

use std::cmp::Ordering;
use std::fmt;
use std::num::FpCategory;
use std::ops::{Add, AddAssign, Div, DivAssign, Mul, MulAssign, Neg, Rem, RemAssign, Sub, SubAssign};

use num_traits::{Float, FromPrimitive, Num, NumCast, One, ToPrimitive, Zero};
use twofloat::TwoFloat;

use super::Real;

#[derive(Clone, Copy, Debug, Default, PartialEq, PartialOrd)]
pub struct Dd(pub TwoFloat);

impl Dd {
    fn quotient(a: TwoFloat, b: TwoFloat) -> TwoFloat {
        let q1 = a.hi() / b.hi();
        let r = a - b * q1;
        let q2 = r.hi() / b.hi();
        let r = r - b * q2;
        let q3 = r.hi() / b.hi();
        TwoFloat::from_f64(q1) + q2 + q3
    }
}

impl Real for Dd {
    const NAME: &'static str = "f64x2";

    fn of(v: f64) -> Self {
        Dd(TwoFloat::from_f64(v))
    }

    fn as_f64(self) -> f64 {
        self.0.hi() + self.0.lo()
    }
}

impl fmt::Display for Dd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(&self.0, f)
    }
}

macro_rules! binop {
    ($tr:ident $m:ident $atr:ident $am:ident, |$a:ident, $b:ident| $e:expr) => {
        impl $tr for Dd {
            type Output = Dd;
            fn $m(self, rhs: Dd) -> Dd {
                let ($a, $b) = (self.0, rhs.0);
                Dd($e)
            }
        }
        impl $atr for Dd {
            fn $am(&mut self, rhs: Dd) {
                *self = $tr::$m(*self, rhs);
            }
        }
    };
}

binop!(Add add AddAssign add_assign, |a, b| a + b);
binop!(Sub sub SubAssign sub_assign, |a, b| a - b);
binop!(Mul mul MulAssign mul_assign, |a, b| a * b);
binop!(Div div DivAssign div_assign, |a, b| if b.hi().is_finite() && b.hi() != 0.0 && a.hi().is_finite() {
    Dd::quotient(a, b)
} else {
    a / b
});
binop!(Rem rem RemAssign rem_assign, |a, b| a % b);

impl Neg for Dd {
    type Output = Dd;
    fn neg(self) -> Dd {
        Dd(-self.0)
    }
}

impl Zero for Dd {
    fn zero() -> Self {
        Dd(TwoFloat::zero())
    }
    fn is_zero(&self) -> bool {
        self.0.is_zero()
    }
}

impl One for Dd {
    fn one() -> Self {
        Dd(TwoFloat::one())
    }
}

impl Num for Dd {
    type FromStrRadixErr = <TwoFloat as Num>::FromStrRadixErr;
    fn from_str_radix(s: &str, radix: u32) -> Result<Self, Self::FromStrRadixErr> {
        TwoFloat::from_str_radix(s, radix).map(Dd)
    }
}

impl ToPrimitive for Dd {
    fn to_i64(&self) -> Option<i64> {
        self.0.to_i64()
    }
    fn to_u64(&self) -> Option<u64> {
        self.0.to_u64()
    }
    fn to_f64(&self) -> Option<f64> {
        Some(self.as_f64())
    }
}

impl FromPrimitive for Dd {
    fn from_i64(n: i64) -> Option<Self> {
        TwoFloat::from_i64(n).map(Dd)
    }
    fn from_u64(n: u64) -> Option<Self> {
        TwoFloat::from_u64(n).map(Dd)
    }
    fn from_f64(n: f64) -> Option<Self> {
        Some(Dd::of(n))
    }
}

impl NumCast for Dd {
    fn from<T: ToPrimitive>(n: T) -> Option<Self> {
        <TwoFloat as NumCast>::from(n).map(Dd)
    }
}

macro_rules! unary {
    ($($m:ident)*) => { $(fn $m(self) -> Self { Dd(Float::$m(self.0)) })* };
}
macro_rules! predicate {
    ($($m:ident)*) => { $(fn $m(self) -> bool { Float::$m(self.0) })* };
}
macro_rules! constant {
    ($($m:ident)*) => { $(fn $m() -> Self { Dd(<TwoFloat as Float>::$m()) })* };
}

impl Float for Dd {
    constant!(nan infinity neg_infinity neg_zero min_value min_positive_value max_value epsilon);
    predicate!(is_nan is_infinite is_finite is_normal is_sign_positive is_sign_negative);
    unary!(floor ceil round trunc fract abs signum sqrt exp exp2 ln log2 log10 cbrt sin cos tan asin acos atan exp_m1 ln_1p sinh cosh tanh asinh acosh atanh);

    fn classify(self) -> FpCategory {
        self.0.classify()
    }
    fn mul_add(self, a: Self, b: Self) -> Self {
        self * a + b
    }
    fn recip(self) -> Self {
        Dd::one() / self
    }
    fn powi(self, n: i32) -> Self {
        Dd(self.0.powi(n))
    }
    fn powf(self, n: Self) -> Self {
        Dd(Float::powf(self.0, n.0))
    }
    fn log(self, base: Self) -> Self {
        self.ln() / base.ln()
    }
    fn max(self, other: Self) -> Self {
        match self.partial_cmp(&other) {
            Some(Ordering::Less) => other,
            _ if self.is_nan() => other,
            _ => self,
        }
    }
    fn min(self, other: Self) -> Self {
        match self.partial_cmp(&other) {
            Some(Ordering::Greater) => other,
            _ if self.is_nan() => other,
            _ => self,
        }
    }
    fn abs_sub(self, other: Self) -> Self {
        if self <= other {
            Dd::zero()
        } else {
            self - other
        }
    }
    fn hypot(self, other: Self) -> Self {
        (self * self + other * other).sqrt()
    }
    fn atan2(self, other: Self) -> Self {
        Dd(Float::atan2(self.0, other.0))
    }
    fn sin_cos(self) -> (Self, Self) {
        (self.sin(), self.cos())
    }
    fn integer_decode(self) -> (u64, i16, i8) {
        Float::integer_decode(self.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn residual(x: Dd) -> f64 {
        x.0.hi() + x.0.lo()
    }

    #[test]
    fn division_is_double_double_accurate() {
        for (a, b) in [(1.0, 3.0), (2.0, 7.0), (-5.5, 0.3), (1e-3, 1.1e4)] {
            let (a, b) = (Dd::of(a), Dd::of(b));
            let q = a / b;
            assert!(residual(q * b - a).abs() < 1e-30 * residual(a).abs(), "{a} / {b}");
        }
        assert_eq!(Dd::one().recip(), Dd::one());
        assert!(residual(Dd::of(3.0).recip() * Dd::of(3.0) - Dd::one()).abs() < 1e-31);
    }

    #[test]
    fn sqrt_and_ordering() {
        let two = Dd::of(2.0);
        assert!(residual(two.sqrt() * two.sqrt() - two).abs() < 1e-30);
        assert_eq!(Float::max(Dd::of(1.0), Dd::of(2.0)), Dd::of(2.0));
        assert_eq!(Float::min(Dd::of(1.0), Dd::of(2.0)), Dd::of(1.0));
        assert!(Dd::of(f64::NAN).is_nan());
    }
}
