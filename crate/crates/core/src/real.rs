//! Scalar abstraction shared by the plain `f64` simulator and the taped
//! reverse-mode path.
//!
//! Every numeric routine in the crate is written once against [`Real`].
//! Instantiated with `f64` it is an ordinary fast simulator; instantiated
//! with [`crate::autodiff::Var`] every arithmetic operation is recorded so
//! a loss can be differentiated with respect to the learnable parameters.

use std::fmt::Debug;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

pub trait Real:
    Copy
    + Debug
    + Send
    + Sync
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign<f64>
{
    /// True when values may be computed on worker threads. Taped scalars
    /// record into a thread-local tape and must stay on one thread.
    const PARALLEL: bool;

    fn cst(v: f64) -> Self;
    fn val(self) -> f64;
    fn ln(self) -> Self;
    fn ln_1p(self) -> Self;
    fn exp(self) -> Self;
    fn sqrt(self) -> Self;
    fn tanh(self) -> Self;

    #[inline]
    fn zero() -> Self {
        Self::cst(0.0)
    }

    #[inline]
    fn is_finite(self) -> bool {
        self.val().is_finite()
    }

    /// `ln(1 + e^x)`, evaluated without overflow.
    fn softplus(self) -> Self {
        let v = self.val();
        if v > 30.0 {
            self
        } else if v < -30.0 {
            self.exp()
        } else {
            self.exp().ln_1p()
        }
    }

    #[inline]
    fn relu(self) -> Self {
        if self.val() > 0.0 {
            self
        } else {
            Self::zero()
        }
    }
}

impl Real for f64 {
    const PARALLEL: bool = true;

    #[inline]
    fn cst(v: f64) -> Self {
        v
    }
    #[inline]
    fn val(self) -> f64 {
        self
    }
    #[inline]
    fn ln(self) -> Self {
        f64::ln(self)
    }
    #[inline]
    fn ln_1p(self) -> Self {
        f64::ln_1p(self)
    }
    #[inline]
    fn exp(self) -> Self {
        f64::exp(self)
    }
    #[inline]
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    #[inline]
    fn tanh(self) -> Self {
        f64::tanh(self)
    }
}

/// Inverse of [`Real::softplus`] for plain values; used to seed raw
/// parameters from physical ones.
pub fn softplus_inv(y: f64) -> f64 {
    assert!(y > 0.0, "softplus is strictly positive, got {y}");
    if y > 30.0 {
        y
    } else {
        y.exp_m1().ln()
    }
}
