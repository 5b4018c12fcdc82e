//! Double-double arithmetic for long horocycle orbits.
//!
//! Under the horocycle flow a perturbation of size ε transverse to the orbit
//! turns into a displacement of order ε·T² after time T, so rounding each
//! intermediate representative to `f64` costs about 1e-8 by `T ≈ 2000`.
//! Orbit checkpoints are therefore carried with about 32 significant digits
//! and rounded only when they are handed to `f64` code.

use std::ops::{Add, Mul, Neg, Sub};

use crate::hyperbolic::GroupElement;

/// An unevaluated sum `hi + lo` with `|lo| ≤ ulp(hi)/2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dd {
    pub hi: f64,
    pub lo: f64,
}

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

#[inline]
fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

impl Dd {
    pub const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };
    pub const ONE: Dd = Dd { hi: 1.0, lo: 0.0 };

    pub fn from_f64(x: f64) -> Self {
        Dd { hi: x, lo: 0.0 }
    }

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    pub fn sqrt(self) -> Self {
        if self.hi <= 0.0 {
            return Dd::ZERO;
        }
        // one Newton step from the f64 root doubles the precision
        let r = self.hi.sqrt();
        let sq = Dd::from_f64(r) * Dd::from_f64(r);
        let corr = (self - sq).to_f64() / (2.0 * r);
        let (hi, lo) = quick_two_sum(r, corr);
        Dd { hi, lo }
    }
}

impl Add for Dd {
    type Output = Dd;
    #[inline]
    fn add(self, o: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, o.hi);
        let (t, f) = two_sum(self.lo, o.lo);
        let (s, e) = quick_two_sum(s, e + t);
        let (hi, lo) = quick_two_sum(s, e + f);
        Dd { hi, lo }
    }
}

impl Neg for Dd {
    type Output = Dd;
    fn neg(self) -> Dd {
        Dd { hi: -self.hi, lo: -self.lo }
    }
}

impl Sub for Dd {
    type Output = Dd;
    #[inline]
    fn sub(self, o: Dd) -> Dd {
        self + (-o)
    }
}

impl Mul for Dd {
    type Output = Dd;
    #[inline]
    fn mul(self, o: Dd) -> Dd {
        let p = self.hi * o.hi;
        let e = self.hi.mul_add(o.hi, -p);
        let (hi, lo) = quick_two_sum(p, e + (self.hi * o.lo + self.lo * o.hi));
        Dd { hi, lo }
    }
}

/// A matrix of `SL(2,R)` with double-double entries.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DdElement {
    pub a: Dd,
    pub b: Dd,
    pub c: Dd,
    pub d: Dd,
}

impl DdElement {
    pub fn from_element(g: &GroupElement) -> Self {
        DdElement { a: Dd::from_f64(g.a), b: Dd::from_f64(g.b), c: Dd::from_f64(g.c), d: Dd::from_f64(g.d) }
    }

    pub fn to_element(&self) -> GroupElement {
        GroupElement { a: self.a.to_f64(), b: self.b.to_f64(), c: self.c.to_f64(), d: self.d.to_f64() }
    }

    pub fn mul(&self, h: &DdElement) -> DdElement {
        DdElement {
            a: self.a * h.a + self.b * h.c,
            b: self.a * h.b + self.b * h.d,
            c: self.c * h.a + self.d * h.c,
            d: self.c * h.b + self.d * h.d,
        }
    }

    /// `self·exp(tU)`.
    pub fn mul_exp_u(&self, t: f64) -> DdElement {
        let t = Dd::from_f64(t);
        DdElement { a: self.a, b: self.a * t + self.b, c: self.c, d: self.c * t + self.d }
    }

    pub fn det(&self) -> Dd {
        self.a * self.d - self.b * self.c
    }
}

/// The eight Bolza side pairings, from the same closed form as their `f64`
/// versions: `[[P + q_r, −q_i], [−q_i, P − q_r]]` with `P = 1 + √2` and
/// `q = √(2 + 2√2)·e^{ikπ/4}`.
pub fn bolza_generators() -> [DdElement; 8] {
    let two = Dd::from_f64(2.0);
    let r2 = two.sqrt();
    let p = Dd::ONE + r2;
    let off = (two + two * r2).sqrt();
    let half_r2 = r2 * Dd::from_f64(0.5);
    std::array::from_fn(|k| {
        let (cos, sin) = match k % 8 {
            0 => (Dd::ONE, Dd::ZERO),
            1 => (half_r2, half_r2),
            2 => (Dd::ZERO, Dd::ONE),
            3 => (-half_r2, half_r2),
            4 => (-Dd::ONE, Dd::ZERO),
            5 => (-half_r2, -half_r2),
            6 => (Dd::ZERO, -Dd::ONE),
            _ => (half_r2, -half_r2),
        };
        let (qr, qi) = (off * cos, off * sin);
        DdElement { a: p + qr, b: -qi, c: -qi, d: p - qr }
    })
}
