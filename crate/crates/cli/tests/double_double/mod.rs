//! Double-double scalar (about 32 significant digits) for finite-difference
//! oracles. Wraps `twofloat::TwoFloat` so the local crate can implement
//! ndarray's `ScalarOperand` for it.

use std::fmt;
use std::iter::Sum;
use std::num::FpCategory;
use std::ops::{Add, Div, Mul, Neg, Rem, Sub};
use std::str::FromStr;

use num_traits::{Float, FromPrimitive, Num, NumCast, One, ToPrimitive, Zero};
use protonet::Scalar;
use twofloat::TwoFloat;

#[derive(Clone, Copy, Debug, Default, PartialEq, PartialOrd)]
pub struct Dd(pub TwoFloat);

impl Dd {
    /// Every `f64` is exactly representable.
    pub fn exact(x: f64) -> Self {
        Dd(<TwoFloat as From<f64>>::from(x))
    }
}

macro_rules! binary_op {
    ($($trait:ident $method:ident),*) => {$(
        impl $trait for Dd {
            type Output = Dd;
            fn $method(self, rhs: Dd) -> Dd {
                Dd($trait::$method(self.0, rhs.0))
            }
        }
    )*};
}
binary_op!(Add add, Sub sub, Mul mul, Div div, Rem rem);

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
        self.0.to_f64()
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
        Some(Dd::exact(n))
    }
}

impl NumCast for Dd {
    fn from<N: ToPrimitive>(n: N) -> Option<Self> {
        <TwoFloat as NumCast>::from(n).map(Dd)
    }
}

macro_rules! forward {
    (const $($name:ident),*) => {$(
        fn $name() -> Self { Dd(<TwoFloat as Float>::$name()) }
    )*};
    (test $($name:ident),*) => {$(
        fn $name(self) -> bool { <TwoFloat as Float>::$name(self.0) }
    )*};
    (unary $($name:ident),*) => {$(
        fn $name(self) -> Self { Dd(<TwoFloat as Float>::$name(self.0)) }
    )*};
    (binary $($name:ident),*) => {$(
        fn $name(self, other: Self) -> Self { Dd(<TwoFloat as Float>::$name(self.0, other.0)) }
    )*};
}

impl Float for Dd {
    forward!(const nan, infinity, neg_infinity, neg_zero, min_value, min_positive_value, max_value, epsilon);
    forward!(test is_nan, is_infinite, is_finite, is_normal, is_sign_positive, is_sign_negative);
    forward!(unary floor, ceil, round, trunc, fract, abs, signum, recip, sqrt, exp, exp2, ln, log2, log10, cbrt,
        sin, cos, tan, asin, acos, atan, exp_m1, ln_1p, sinh, cosh, tanh, asinh, acosh, atanh);
    forward!(binary powf, log, max, min, abs_sub, hypot, atan2);

    fn classify(self) -> FpCategory {
        Float::classify(self.0)
    }
    fn mul_add(self, a: Self, b: Self) -> Self {
        Dd(Float::mul_add(self.0, a.0, b.0))
    }
    fn powi(self, n: i32) -> Self {
        Dd(Float::powi(self.0, n))
    }
    fn sin_cos(self) -> (Self, Self) {
        let (s, c) = Float::sin_cos(self.0);
        (Dd(s), Dd(c))
    }
    fn integer_decode(self) -> (u64, i16, i8) {
        Float::integer_decode(self.0)
    }
}

impl Sum for Dd {
    fn sum<I: Iterator<Item = Dd>>(iter: I) -> Dd {
        iter.fold(Dd::zero(), |a, b| a + b)
    }
}

impl fmt::Display for Dd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl FromStr for Dd {
    type Err = std::num::ParseFloatError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.parse::<f64>().map(Dd::exact)
    }
}

impl ndarray::ScalarOperand for Dd {}

impl Scalar for Dd {}
