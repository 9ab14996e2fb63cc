use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point element type accepted by the tensor engine and everything built on it.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Short name used in file headers.
    const NAME: &'static str;

    fn erf(self) -> Self;

    /// Converts an `f64` literal. Never fails for the supported float types.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("float converts to f64")
    }
}

impl Scalar for f64 {
    const NAME: &'static str = "f64";

    #[inline]
    fn erf(self) -> Self {
        libm::erf(self)
    }
}

impl Scalar for f32 {
    const NAME: &'static str = "f32";

    #[inline]
    fn erf(self) -> Self {
        libm::erff(self)
    }
}

const FRAC_1_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;
// 1 / sqrt(2π)
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Exact GELU, `x · Φ(x)`.
#[inline]
pub fn gelu<T: Scalar>(x: T) -> T {
    let half = T::lit(0.5);
    half * x * (T::one() + (x * T::lit(FRAC_1_SQRT_2)).erf())
}

/// Derivative of the exact GELU: `Φ(x) + x · φ(x)`.
#[inline]
pub fn gelu_grad<T: Scalar>(x: T) -> T {
    let cdf = T::lit(0.5) * (T::one() + (x * T::lit(FRAC_1_SQRT_2)).erf());
    let pdf = T::lit(INV_SQRT_2PI) * (-(x * x) * T::lit(0.5)).exp();
    cdf + x * pdf
}
