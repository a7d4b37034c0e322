//! Minimal 2-vector and 2×2 matrix types over any [`Real`].

use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};

use crate::real::Real;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct V2<T> {
    pub x: T,
    pub y: T,
}

impl<T: Real> V2<T> {
    #[inline]
    pub fn new(x: T, y: T) -> Self {
        V2 { x, y }
    }

    #[inline]
    pub fn zero() -> Self {
        V2 { x: T::zero(), y: T::zero() }
    }

    #[inline]
    pub fn cst(x: f64, y: f64) -> Self {
        V2 { x: T::cst(x), y: T::cst(y) }
    }

    #[inline]
    pub fn from_f64(v: V2<f64>) -> Self {
        V2::cst(v.x, v.y)
    }

    #[inline]
    pub fn val(self) -> V2<f64> {
        V2 { x: self.x.val(), y: self.y.val() }
    }

    #[inline]
    pub fn dot(self, o: V2<T>) -> T {
        self.x * o.x + self.y * o.y
    }

    #[inline]
    pub fn norm2(self) -> T {
        self.dot(self)
    }

    #[inline]
    pub fn scale(self, s: T) -> Self {
        V2 { x: self.x * s, y: self.y * s }
    }

    #[inline]
    pub fn scale_f(self, s: f64) -> Self {
        V2 { x: self.x * s, y: self.y * s }
    }

    /// Outer product `self · oᵀ`.
    #[inline]
    pub fn outer(self, o: V2<T>) -> M2<T> {
        M2 { m: [[self.x * o.x, self.x * o.y], [self.y * o.x, self.y * o.y]] }
    }

    #[inline]
    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl V2<f64> {
    #[inline]
    pub fn norm(self) -> f64 {
        self.norm2().sqrt()
    }

    /// Lifts a plain vector onto a vector with constant entries of type `T`.
    #[inline]
    pub fn lift<T: Real>(self) -> V2<T> {
        V2::cst(self.x, self.y)
    }
}

impl<T: Real> Add for V2<T> {
    type Output = V2<T>;
    #[inline]
    fn add(self, o: V2<T>) -> V2<T> {
        V2 { x: self.x + o.x, y: self.y + o.y }
    }
}

impl<T: Real> Sub for V2<T> {
    type Output = V2<T>;
    #[inline]
    fn sub(self, o: V2<T>) -> V2<T> {
        V2 { x: self.x - o.x, y: self.y - o.y }
    }
}

impl<T: Real> Neg for V2<T> {
    type Output = V2<T>;
    #[inline]
    fn neg(self) -> V2<T> {
        V2 { x: -self.x, y: -self.y }
    }
}

impl<T: Real> AddAssign for V2<T> {
    #[inline]
    fn add_assign(&mut self, o: V2<T>) {
        self.x += o.x;
        self.y += o.y;
    }
}

impl<T: Real> SubAssign for V2<T> {
    #[inline]
    fn sub_assign(&mut self, o: V2<T>) {
        self.x -= o.x;
        self.y -= o.y;
    }
}

/// Row-major 2×2 matrix: `m[row][col]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct M2<T> {
    pub m: [[T; 2]; 2],
}

impl<T: Real> M2<T> {
    #[inline]
    pub fn zero() -> Self {
        M2 { m: [[T::zero(); 2]; 2] }
    }

    #[inline]
    pub fn identity() -> Self {
        M2 { m: [[T::cst(1.0), T::zero()], [T::zero(), T::cst(1.0)]] }
    }

    #[inline]
    pub fn cst(m: [[f64; 2]; 2]) -> Self {
        M2 { m: [[T::cst(m[0][0]), T::cst(m[0][1])], [T::cst(m[1][0]), T::cst(m[1][1])]] }
    }

    #[inline]
    pub fn val(&self) -> M2<f64> {
        M2 { m: [[self.m[0][0].val(), self.m[0][1].val()], [self.m[1][0].val(), self.m[1][1].val()]] }
    }

    #[inline]
    pub fn det(&self) -> T {
        self.m[0][0] * self.m[1][1] - self.m[0][1] * self.m[1][0]
    }

    #[inline]
    pub fn mul_vec(&self, v: V2<T>) -> V2<T> {
        V2 { x: self.m[0][0] * v.x + self.m[0][1] * v.y, y: self.m[1][0] * v.x + self.m[1][1] * v.y }
    }

    #[inline]
    pub fn scale(&self, s: T) -> Self {
        M2 { m: [[self.m[0][0] * s, self.m[0][1] * s], [self.m[1][0] * s, self.m[1][1] * s]] }
    }

    #[inline]
    pub fn scale_f(&self, s: f64) -> Self {
        M2 { m: [[self.m[0][0] * s, self.m[0][1] * s], [self.m[1][0] * s, self.m[1][1] * s]] }
    }

    #[inline]
    pub fn is_finite(&self) -> bool {
        self.m.iter().flatten().all(|v| v.is_finite())
    }
}

impl M2<f64> {
    pub fn lift<T: Real>(&self) -> M2<T> {
        M2::cst(self.m)
    }

    pub fn frobenius(&self) -> f64 {
        self.m.iter().flatten().map(|v| v * v).sum::<f64>().sqrt()
    }
}

impl<T: Real> Add for M2<T> {
    type Output = M2<T>;
    #[inline]
    fn add(self, o: M2<T>) -> M2<T> {
        M2 {
            m: [
                [self.m[0][0] + o.m[0][0], self.m[0][1] + o.m[0][1]],
                [self.m[1][0] + o.m[1][0], self.m[1][1] + o.m[1][1]],
            ],
        }
    }
}

impl<T: Real> AddAssign for M2<T> {
    #[inline]
    fn add_assign(&mut self, o: M2<T>) {
        *self = *self + o;
    }
}

impl<T: Real> Mul for M2<T> {
    type Output = M2<T>;
    #[inline]
    fn mul(self, o: M2<T>) -> M2<T> {
        let a = &self.m;
        let b = &o.m;
        M2 {
            m: [
                [a[0][0] * b[0][0] + a[0][1] * b[1][0], a[0][0] * b[0][1] + a[0][1] * b[1][1]],
                [a[1][0] * b[0][0] + a[1][1] * b[1][0], a[1][0] * b[0][1] + a[1][1] * b[1][1]],
            ],
        }
    }
}
