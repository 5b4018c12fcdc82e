//! Forward-mode differentiation with hyper-dual numbers.
//!
//! A [`HyperDual`] `a + b·ε₁ + c·ε₂ + d·ε₁ε₂` with `ε₁² = ε₂² = 0` carries two
//! first-order directions and their mixed second derivative. Evaluating an
//! observable along `g·exp(ε₁W₁)·exp(ε₂W₂)` yields `f`, `W₁f`, `W₂f` and
//! `W₁(W₂f)` in one pass; taking `W₁ = W₂` gives the pure second derivative.

use std::ops::{Add, Div, Mul, Neg, Sub};

use crate::hyperbolic::{Direction, GroupElement};

/// The arithmetic needed to evaluate observables generically.
pub trait Scalar:
    Copy + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Div<Output = Self> + Neg<Output = Self>
{
    fn cst(v: f64) -> Self;
    fn value(&self) -> f64;
    fn exp(self) -> Self;
    fn recip(self) -> Self;

    fn scale(self, s: f64) -> Self {
        self * Self::cst(s)
    }
}

impl Scalar for f64 {
    #[inline]
    fn cst(v: f64) -> Self {
        v
    }
    #[inline]
    fn value(&self) -> f64 {
        *self
    }
    #[inline]
    fn exp(self) -> Self {
        f64::exp(self)
    }
    #[inline]
    fn recip(self) -> Self {
        f64::recip(self)
    }
    #[inline]
    fn scale(self, s: f64) -> Self {
        self * s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct HyperDual {
    pub re: f64,
    pub e1: f64,
    pub e2: f64,
    pub e12: f64,
}

impl HyperDual {
    pub const fn new(re: f64, e1: f64, e2: f64, e12: f64) -> Self {
        HyperDual { re, e1, e2, e12 }
    }

    /// Applies a scalar function given its value and first two derivatives.
    #[inline]
    fn chain(self, f: f64, df: f64, d2f: f64) -> Self {
        HyperDual {
            re: f,
            e1: df * self.e1,
            e2: df * self.e2,
            e12: df * self.e12 + d2f * self.e1 * self.e2,
        }
    }
}

impl Add for HyperDual {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        HyperDual::new(self.re + o.re, self.e1 + o.e1, self.e2 + o.e2, self.e12 + o.e12)
    }
}

impl Sub for HyperDual {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        HyperDual::new(self.re - o.re, self.e1 - o.e1, self.e2 - o.e2, self.e12 - o.e12)
    }
}

impl Mul for HyperDual {
    type Output = Self;
    #[inline]
    fn mul(self, o: Self) -> Self {
        HyperDual::new(
            self.re * o.re,
            self.re * o.e1 + self.e1 * o.re,
            self.re * o.e2 + self.e2 * o.re,
            self.re * o.e12 + self.e12 * o.re + self.e1 * o.e2 + self.e2 * o.e1,
        )
    }
}

impl Div for HyperDual {
    type Output = Self;
    #[inline]
    fn div(self, o: Self) -> Self {
        self * o.recip()
    }
}

impl Neg for HyperDual {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        HyperDual::new(-self.re, -self.e1, -self.e2, -self.e12)
    }
}

impl Scalar for HyperDual {
    #[inline]
    fn cst(v: f64) -> Self {
        HyperDual::new(v, 0.0, 0.0, 0.0)
    }
    #[inline]
    fn value(&self) -> f64 {
        self.re
    }
    #[inline]
    fn exp(self) -> Self {
        let e = self.re.exp();
        self.chain(e, e, e)
    }
    #[inline]
    fn recip(self) -> Self {
        let r = self.re.recip();
        self.chain(r, -r * r, 2.0 * r * r * r)
    }
    #[inline]
    fn scale(self, s: f64) -> Self {
        HyperDual::new(self.re * s, self.e1 * s, self.e2 * s, self.e12 * s)
    }
}

/// A 2×2 matrix over a [`Scalar`].
#[derive(Debug, Clone, Copy)]
pub struct Mat2<S> {
    pub a: S,
    pub b: S,
    pub c: S,
    pub d: S,
}

impl<S: Scalar> Mat2<S> {
    pub fn from_element(g: &GroupElement) -> Self {
        Mat2 { a: S::cst(g.a), b: S::cst(g.b), c: S::cst(g.c), d: S::cst(g.d) }
    }

    #[inline]
    pub fn mul(&self, o: &Mat2<S>) -> Mat2<S> {
        Mat2 {
            a: self.a * o.a + self.b * o.c,
            b: self.a * o.b + self.b * o.d,
            c: self.c * o.a + self.d * o.c,
            d: self.c * o.b + self.d * o.d,
        }
    }

    /// Left multiplication by a constant element.
    #[inline]
    pub fn left_mul(g: &GroupElement, m: &Mat2<S>) -> Mat2<S> {
        Mat2 {
            a: m.a.scale(g.a) + m.c.scale(g.b),
            b: m.b.scale(g.a) + m.d.scale(g.b),
            c: m.a.scale(g.c) + m.c.scale(g.d),
            d: m.b.scale(g.c) + m.d.scale(g.d),
        }
    }
}

/// `exp(e·W)` with `e` a hyper-dual infinitesimal.
pub fn exp_jet(e: HyperDual, which: Direction) -> Mat2<HyperDual> {
    let one = HyperDual::cst(1.0);
    let zero = HyperDual::cst(0.0);
    match which {
        Direction::U => Mat2 { a: one, b: e, c: zero, d: one },
        Direction::V => Mat2 { a: one, b: zero, c: e, d: one },
        Direction::X => {
            let half = e.scale(0.5);
            Mat2 { a: half.exp(), b: zero, c: zero, d: (-half).exp() }
        }
    }
}

/// The curve `g·exp(ε₁W₁)·exp(ε₂W₂)` as a hyper-dual matrix.
pub fn jet_curve(g: &GroupElement, first: Direction, second: Direction) -> Mat2<HyperDual> {
    let e1 = exp_jet(HyperDual::new(0.0, 1.0, 0.0, 0.0), first);
    let e2 = exp_jet(HyperDual::new(0.0, 0.0, 1.0, 0.0), second);
    Mat2::left_mul(g, &e1.mul(&e2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn arithmetic_matches_calculus() {
        // f(x, y) = exp(x*y) / (1 + x), derivatives at (0.3, 0.7)
        let x = HyperDual::new(0.3, 1.0, 0.0, 0.0);
        let y = HyperDual::new(0.7, 0.0, 1.0, 0.0);
        let f = (x * y).exp() / (HyperDual::cst(1.0) + x);
        let (xv, yv) = (0.3f64, 0.7f64);
        let e = (xv * yv).exp();
        assert_abs_diff_eq!(f.re, e / (1.0 + xv), epsilon = 1e-15);
        assert_abs_diff_eq!(f.e1, e * yv / (1.0 + xv) - e / (1.0 + xv).powi(2), epsilon = 1e-14);
        assert_abs_diff_eq!(f.e2, e * xv / (1.0 + xv), epsilon = 1e-14);
        let fxy = (e + e * xv * yv) / (1.0 + xv) - e * xv / (1.0 + xv).powi(2);
        assert_abs_diff_eq!(f.e12, fxy, epsilon = 1e-14);
    }

    #[test]
    fn pure_second_derivative_via_equal_directions() {
        // sin-free check: (1/(2+x))'' = 2/(2+x)^3
        let x = HyperDual::new(0.5, 1.0, 1.0, 0.0);
        let f = (HyperDual::cst(2.0) + x).recip();
        assert_abs_diff_eq!(f.e12, 2.0 / 2.5f64.powi(3), epsilon = 1e-15);
    }
}
