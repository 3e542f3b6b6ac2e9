//! Forward-mode dual numbers with a fixed number of tangent directions.
//!
//! The physical models are written once, generically over [`Scalar`], and
//! evaluated with `f64` for simulation and with `Dual<N>` to obtain exact
//! Jacobians with respect to states and parameters in a single pass.

use std::ops::{Add, Div, Mul, Neg, Sub};

pub trait Scalar:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn cst(v: f64) -> Self;
    fn value(&self) -> f64;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn tanh(self) -> Self;
    fn atan(self) -> Self;

    /// Exact `sign(x)` in value; the tangent is that of `tanh(x / width)`.
    fn smooth_sign(self, width: f64) -> Self;

    /// `max(self, lo)`; the tangent is zero when clamped.
    fn clamp_min(self, lo: f64) -> Self;

    fn scale(self, k: f64) -> Self {
        self * Self::cst(k)
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

impl Scalar for f64 {
    fn cst(v: f64) -> Self {
        v
    }
    fn value(&self) -> f64 {
        *self
    }
    fn sin(self) -> Self {
        f64::sin(self)
    }
    fn cos(self) -> Self {
        f64::cos(self)
    }
    fn tanh(self) -> Self {
        f64::tanh(self)
    }
    fn atan(self) -> Self {
        f64::atan(self)
    }
    fn smooth_sign(self, _width: f64) -> Self {
        sign(self)
    }
    fn clamp_min(self, lo: f64) -> Self {
        self.max(lo)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dual<const N: usize> {
    pub v: f64,
    pub d: [f64; N],
}

impl<const N: usize> Dual<N> {
    pub fn constant(v: f64) -> Self {
        Self { v, d: [0.0; N] }
    }

    /// Independent variable seeded along tangent direction `dir`.
    pub fn variable(v: f64, dir: usize) -> Self {
        let mut d = [0.0; N];
        d[dir] = 1.0;
        Self { v, d }
    }

    #[inline]
    fn chain(self, v: f64, dv: f64) -> Self {
        let mut d = self.d;
        for x in &mut d {
            *x *= dv;
        }
        Self { v, d }
    }
}

impl<const N: usize> Add for Dual<N> {
    type Output = Self;
    #[inline]
    fn add(mut self, rhs: Self) -> Self {
        self.v += rhs.v;
        for (a, b) in self.d.iter_mut().zip(rhs.d) {
            *a += b;
        }
        self
    }
}

impl<const N: usize> Sub for Dual<N> {
    type Output = Self;
    #[inline]
    fn sub(mut self, rhs: Self) -> Self {
        self.v -= rhs.v;
        for (a, b) in self.d.iter_mut().zip(rhs.d) {
            *a -= b;
        }
        self
    }
}

impl<const N: usize> Mul for Dual<N> {
    type Output = Self;
    #[inline]
    fn mul(self, rhs: Self) -> Self {
        let mut d = [0.0; N];
        for i in 0..N {
            d[i] = self.d[i] * rhs.v + self.v * rhs.d[i];
        }
        Self {
            v: self.v * rhs.v,
            d,
        }
    }
}

impl<const N: usize> Div for Dual<N> {
    type Output = Self;
    #[inline]
    fn div(self, rhs: Self) -> Self {
        let inv = 1.0 / rhs.v;
        let v = self.v * inv;
        let mut d = [0.0; N];
        for i in 0..N {
            d[i] = (self.d[i] - v * rhs.d[i]) * inv;
        }
        Self { v, d }
    }
}

impl<const N: usize> Neg for Dual<N> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        self.chain(-self.v, -1.0)
    }
}

impl<const N: usize> Scalar for Dual<N> {
    fn cst(v: f64) -> Self {
        Self::constant(v)
    }
    fn value(&self) -> f64 {
        self.v
    }
    fn sin(self) -> Self {
        self.chain(self.v.sin(), self.v.cos())
    }
    fn cos(self) -> Self {
        self.chain(self.v.cos(), -self.v.sin())
    }
    fn tanh(self) -> Self {
        let t = self.v.tanh();
        self.chain(t, 1.0 - t * t)
    }
    fn atan(self) -> Self {
        self.chain(self.v.atan(), 1.0 / (1.0 + self.v * self.v))
    }
    fn smooth_sign(self, width: f64) -> Self {
        let t = (self.v / width).tanh();
        self.chain(sign(self.v), (1.0 - t * t) / width)
    }
    fn clamp_min(self, lo: f64) -> Self {
        if self.v >= lo {
            self
        } else {
            Self::constant(lo)
        }
    }
    fn scale(self, k: f64) -> Self {
        self.chain(self.v * k, k)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn f<S: Scalar>(x: S, y: S) -> S {
        (x * y).sin() / (S::cst(2.0) + y.tanh()) - x.atan().cos()
    }

    #[test]
    fn dual_matches_finite_differences() {
        let (x, y) = (0.7, -1.3);
        let out = f(Dual::<2>::variable(x, 0), Dual::<2>::variable(y, 1));
        assert_eq!(out.v, f(x, y));
        let h = 1e-6;
        let dx = (f(x + h, y) - f(x - h, y)) / (2.0 * h);
        let dy = (f(x, y + h) - f(x, y - h)) / (2.0 * h);
        assert!((out.d[0] - dx).abs() < 1e-8);
        assert!((out.d[1] - dy).abs() < 1e-8);
    }

    #[test]
    fn smooth_sign_keeps_exact_value() {
        let s = Dual::<1>::variable(0.01, 0).smooth_sign(0.05);
        assert_eq!(s.v, 1.0);
        let t = (0.01f64 / 0.05).tanh();
        assert!((s.d[0] - (1.0 - t * t) / 0.05).abs() < 1e-12);
        assert_eq!(Dual::<1>::variable(-2.0, 0).smooth_sign(0.05).v, -1.0);
    }

    #[test]
    fn clamp_min_blocks_tangent() {
        let c = Dual::<1>::variable(0.1, 0).clamp_min(0.3);
        assert_eq!((c.v, c.d[0]), (0.3, 0.0));
        let c = Dual::<1>::variable(1.1, 0).clamp_min(0.3);
        assert_eq!((c.v, c.d[0]), (1.1, 1.0));
    }
}
