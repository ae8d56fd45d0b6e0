use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

/// Ordered field the metrics are evaluated in: `f32`, `f64`, or exact
/// [`BigRational`].
pub trait Real:
    Clone
    + Debug
    + PartialOrd
    + Zero
    + One
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    /// Nearest value for floats, the exact binary value for rationals.
    fn from_f64(v: f64) -> Self;

    /// `num / den`, exact for rationals and correctly rounded for floats.
    fn from_ratio(num: i64, den: i64) -> Self;

    fn from_u64(v: u64) -> Self;

    fn to_f64(&self) -> f64;

    /// Exact value, `None` for non-finite floats.
    fn to_exact(&self) -> Option<BigRational>;

    fn cube(&self) -> Self {
        self.clone() * self.clone() * self.clone()
    }
}

macro_rules! float_real {
    ($t:ty) => {
        impl Real for $t {
            fn from_f64(v: f64) -> Self {
                v as $t
            }

            fn from_ratio(num: i64, den: i64) -> Self {
                (num as f64 / den as f64) as $t
            }

            fn from_u64(v: u64) -> Self {
                v as $t
            }

            fn to_f64(&self) -> f64 {
                *self as f64
            }

            fn to_exact(&self) -> Option<BigRational> {
                BigRational::from_float(*self as f64)
            }
        }
    };
}

float_real!(f32);
float_real!(f64);

impl Real for BigRational {
    /// Panics on non-finite input, which has no rational value.
    fn from_f64(v: f64) -> Self {
        BigRational::from_float(v).expect("finite f64")
    }

    fn from_ratio(num: i64, den: i64) -> Self {
        BigRational::new(BigInt::from(num), BigInt::from(den))
    }

    fn from_u64(v: u64) -> Self {
        BigRational::from_integer(BigInt::from(v))
    }

    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }

    fn to_exact(&self) -> Option<BigRational> {
        Some(self.clone())
    }
}
