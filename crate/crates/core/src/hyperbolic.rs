//! Exact substrate for `PSL(2,R)`: group elements, the Lie basis `{U, V, X}`,
//! one-parameter subgroups, and the disk model of the hyperbolic plane.
//!
//! The basis is realized by
//!
//! ```text
//! U = [[0, 1], [0, 0]],   V = [[0, 0], [1, 0]],   X = [[1/2, 0], [0, -1/2]],
//! ```
//!
//! so that `[U, V] = 2X`, `[X, U] = U` and `[X, V] = -V`. Flows act on the
//! right, the group `Γ` on the left. With this normalization `exp(tX)` moves
//! the base point at unit hyperbolic speed.
//!
//! Points of the hyperbolic plane are carried in the Poincaré disk. An element
//! `g` of `SL(2,R)` (upper half-plane action) corresponds to the `SU(1,1)`
//! matrix `C g C⁻¹` with `C = [[1, -i], [1, i]]`; its base point is `g·0` in
//! the disk and its frame angle is the argument of the derivative of that
//! Möbius map at the origin.

use std::fmt;
use std::ops::Mul;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Drift of the determinant tolerated before renormalizing.
const DET_DRIFT: f64 = 1e-13;

/// Largest `|t|` accepted by `exp(tX)`.
pub const MAX_GEODESIC_TIME: f64 = 1400.0;

/// Closest approach to the unit circle accepted by [`mobius`].
pub const BOUNDARY_MARGIN: f64 = 1e-12;

/// A unit-determinant real 2×2 matrix, an element of `PSL(2,R)` up to sign.
#[derive(Clone, Copy, PartialEq)]
pub struct GroupElement {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl fmt::Debug for GroupElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[[{:.15}, {:.15}], [{:.15}, {:.15}]]", self.a, self.b, self.c, self.d)
    }
}

impl GroupElement {
    pub const IDENTITY: GroupElement = GroupElement { a: 1.0, b: 0.0, c: 0.0, d: 1.0 };

    /// Builds an element from raw entries, rescaling by `√det` when the
    /// determinant has drifted. The determinant must be positive.
    pub fn new(a: f64, b: f64, c: f64, d: f64) -> Self {
        GroupElement { a, b, c, d }.renormalized()
    }

    pub fn det(&self) -> f64 {
        self.a * self.d - self.b * self.c
    }

    pub fn trace(&self) -> f64 {
        self.a + self.d
    }

    #[inline]
    pub fn renormalized(self) -> Self {
        let det = self.det();
        if (det - 1.0).abs() > DET_DRIFT {
            let s = det.sqrt().recip();
            GroupElement { a: self.a * s, b: self.b * s, c: self.c * s, d: self.d * s }
        } else {
            self
        }
    }

    /// Inverse of a unit-determinant matrix.
    pub fn inv(&self) -> Self {
        GroupElement { a: self.d, b: -self.b, c: -self.c, d: self.a }
    }

    /// Raw product without renormalization, for hot loops that renormalize
    /// once at the end.
    #[inline]
    pub fn mul_raw(&self, h: &GroupElement) -> GroupElement {
        GroupElement {
            a: self.a * h.a + self.b * h.c,
            b: self.a * h.b + self.b * h.d,
            c: self.c * h.a + self.d * h.c,
            d: self.c * h.b + self.d * h.d,
        }
    }

    /// Sign representative: the first entry (row-major) that is not
    /// negligible is made positive.
    pub fn canonical(&self) -> Self {
        let scale = self.a.abs().max(self.b.abs()).max(self.c.abs()).max(self.d.abs());
        let eps = 1e-12 * scale;
        let lead = [self.a, self.b, self.c, self.d].into_iter().find(|e| e.abs() > eps).unwrap_or(1.0);
        if lead < 0.0 {
            GroupElement { a: -self.a, b: -self.b, c: -self.c, d: -self.d }
        } else {
            *self
        }
    }

    /// Max-entry distance modulo the global sign.
    pub fn distance_mod_sign(&self, h: &GroupElement) -> f64 {
        let plus = (self.a - h.a).abs().max((self.b - h.b).abs()).max((self.c - h.c).abs()).max((self.d - h.d).abs());
        let minus = (self.a + h.a).abs().max((self.b + h.b).abs()).max((self.c + h.c).abs()).max((self.d + h.d).abs());
        plus.min(minus)
    }

    pub fn approx_eq(&self, h: &GroupElement, tol: f64) -> bool {
        self.distance_mod_sign(h) <= tol
    }

    /// `cosh` of the hyperbolic distance from the origin to `g·0`.
    #[inline]
    pub fn cosh_displacement(&self) -> f64 {
        0.5 * (self.a * self.a + self.b * self.b + self.c * self.c + self.d * self.d)
    }

    /// Hyperbolic distance from the origin to `g·0`.
    pub fn displacement(&self) -> f64 {
        self.cosh_displacement().max(1.0).acosh()
    }

    /// The `(α, β)` entries of the conjugate `SU(1,1)` matrix `[[α, β], [β̄, ᾱ]]`.
    #[inline]
    pub fn su11_entries(&self) -> (Complex64, Complex64) {
        (
            Complex64::new(0.5 * (self.a + self.d), 0.5 * (self.b - self.c)),
            Complex64::new(0.5 * (self.a - self.d), -0.5 * (self.b + self.c)),
        )
    }

    pub fn to_su11(&self) -> Su11 {
        let (alpha, beta) = self.su11_entries();
        Su11 { m: [[alpha, beta], [beta.conj(), alpha.conj()]] }
    }

    /// Base point `g·0` in the disk.
    pub fn basepoint(&self) -> DiskPoint {
        let (alpha, beta) = self.su11_entries();
        let z = beta / alpha.conj();
        DiskPoint { re: z.re, im: z.im }
    }

    /// Angle of the unit tangent vector at the base point, measured against
    /// the real axis of the disk.
    pub fn frame_angle(&self) -> f64 {
        let (alpha, _) = self.su11_entries();
        2.0 * alpha.arg()
    }

    /// The element whose base point is `z` and whose frame angle is `theta`.
    pub fn from_basepoint_frame(z: DiskPoint, theta: f64) -> Self {
        let r2 = z.norm_sqr();
        let scale = (1.0 - r2).sqrt().recip();
        let alpha = Complex64::from_polar(scale, 0.5 * theta);
        let beta = z.to_complex() * alpha.conj();
        GroupElement::new(alpha.re + beta.re, alpha.im - beta.im, -alpha.im - beta.im, alpha.re - beta.re)
    }
}

impl Mul for GroupElement {
    type Output = GroupElement;
    fn mul(self, h: GroupElement) -> GroupElement {
        self.mul_raw(&h).renormalized()
    }
}

impl Mul<&GroupElement> for &GroupElement {
    type Output = GroupElement;
    fn mul(self, h: &GroupElement) -> GroupElement {
        self.mul_raw(h).renormalized()
    }
}

pub fn mul(g: &GroupElement, h: &GroupElement) -> GroupElement {
    g * h
}

/// One of the three basis directions of the Lie algebra.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    U,
    V,
    X,
}

impl Direction {
    pub fn vector(self) -> LieVector {
        match self {
            Direction::U => LieVector::new(1.0, 0.0, 0.0),
            Direction::V => LieVector::new(0.0, 1.0, 0.0),
            Direction::X => LieVector::new(0.0, 0.0, 1.0),
        }
    }
}

/// Coefficients in the basis `{U, V, X}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LieVector {
    pub u: f64,
    pub v: f64,
    pub x: f64,
}

impl LieVector {
    pub const fn new(u: f64, v: f64, x: f64) -> Self {
        LieVector { u, v, x }
    }

    /// Matrix `[[x/2, u], [v, -x/2]]`.
    pub fn matrix(&self) -> [[f64; 2]; 2] {
        [[0.5 * self.x, self.u], [self.v, -0.5 * self.x]]
    }

    /// Lie bracket, computed in closed form on the coefficients:
    /// `[U,V] = 2X`, `[X,U] = U`, `[X,V] = -V`.
    pub fn bracket(&self, o: &LieVector) -> LieVector {
        LieVector {
            u: self.x * o.u - self.u * o.x,
            v: self.v * o.x - self.x * o.v,
            x: 2.0 * (self.u * o.v - self.v * o.u),
        }
    }

    pub fn scale(&self, s: f64) -> LieVector {
        LieVector { u: self.u * s, v: self.v * s, x: self.x * s }
    }

    pub fn norm(&self) -> f64 {
        (self.u * self.u + self.v * self.v + self.x * self.x).sqrt()
    }
}

/// Closed-form one-parameter subgroups.
pub fn exp_basis(t: f64, which: Direction) -> Result<GroupElement> {
    if !t.is_finite() {
        return Err(Error::InvalidArgument(format!("non-finite time {t}")));
    }
    Ok(match which {
        Direction::U => exp_u(t),
        Direction::V => GroupElement { a: 1.0, b: 0.0, c: t, d: 1.0 },
        Direction::X => {
            if t.abs() > MAX_GEODESIC_TIME {
                return Err(Error::RangeExceeded(t));
            }
            exp_x(t)
        }
    })
}

#[inline]
pub fn exp_u(t: f64) -> GroupElement {
    GroupElement { a: 1.0, b: t, c: 0.0, d: 1.0 }
}

#[inline]
pub fn exp_x(t: f64) -> GroupElement {
    let e = (0.5 * t).exp();
    GroupElement { a: e, b: 0.0, c: 0.0, d: e.recip() }
}

/// `exp(t·w)` for a general Lie algebra element, classified by the sign of
/// `-det(t·w)` (hyperbolic, parabolic or elliptic).
pub fn exp_general(w: &LieVector, t: f64) -> GroupElement {
    let [[p, q], [r, _]] = w.matrix();
    let (p, q, r) = (p * t, q * t, r * t);
    // A = [[p, q], [r, -p]] satisfies A² = delta·I.
    let delta = p * p + q * r;
    let (ch, sh) = if delta > 0.0 {
        let s = delta.sqrt();
        (s.cosh(), s.sinh() / s)
    } else if delta < 0.0 {
        let s = (-delta).sqrt();
        (s.cos(), s.sin() / s)
    } else {
        (1.0, 1.0)
    };
    GroupElement::new(ch + sh * p, sh * q, sh * r, ch - sh * p)
}

/// A point of the open unit disk.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiskPoint {
    pub re: f64,
    pub im: f64,
}

impl DiskPoint {
    pub const ORIGIN: DiskPoint = DiskPoint { re: 0.0, im: 0.0 };

    pub fn new(re: f64, im: f64) -> Result<Self> {
        let p = DiskPoint { re, im };
        if !(p.norm_sqr() < 1.0) {
            return Err(Error::NearBoundary(p.norm_sqr().sqrt()));
        }
        Ok(p)
    }

    /// The point at hyperbolic distance `r` from the origin in direction `angle`.
    pub fn from_polar_hyperbolic(r: f64, angle: f64) -> Self {
        let e = (0.5 * r).tanh();
        DiskPoint { re: e * angle.cos(), im: e * angle.sin() }
    }

    pub fn norm_sqr(&self) -> f64 {
        self.re * self.re + self.im * self.im
    }

    pub fn to_complex(&self) -> Complex64 {
        Complex64::new(self.re, self.im)
    }
}

/// Fractional-linear action of `g` on the disk.
pub fn mobius(g: &GroupElement, z: &DiskPoint) -> Result<DiskPoint> {
    let r = z.norm_sqr().sqrt();
    if r > 1.0 - BOUNDARY_MARGIN {
        return Err(Error::NearBoundary(r));
    }
    let (alpha, beta) = g.su11_entries();
    let w = z.to_complex();
    let image = (alpha * w + beta) / (beta.conj() * w + alpha.conj());
    Ok(DiskPoint { re: image.re, im: image.im })
}

/// `cosh` of the hyperbolic distance in the disk model.
#[inline]
pub fn cosh_dist(z: &DiskPoint, w: &DiskPoint) -> f64 {
    let dr = z.re - w.re;
    let di = z.im - w.im;
    1.0 + 2.0 * (dr * dr + di * di) / ((1.0 - z.norm_sqr()) * (1.0 - w.norm_sqr()))
}

/// Hyperbolic distance in the disk model.
pub fn dist(z: &DiskPoint, w: &DiskPoint) -> f64 {
    cosh_dist(z, w).max(1.0).acosh()
}

/// A complex 2×2 matrix, used for `SU(1,1)` elements.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Su11 {
    pub m: [[Complex64; 2]; 2],
}

impl Su11 {
    /// `[[p, q], [q̄, p̄]]`.
    pub fn from_entries(p: Complex64, q: Complex64) -> Self {
        Su11 { m: [[p, q], [q.conj(), p.conj()]] }
    }

    pub fn det(&self) -> Complex64 {
        self.m[0][0] * self.m[1][1] - self.m[0][1] * self.m[1][0]
    }

    /// Largest violation of `m = [[p, q], [q̄, p̄]]`, `det = 1`.
    pub fn su11_residual(&self) -> f64 {
        let [[p, q], [r, s]] = self.m;
        (s - p.conj()).norm().max((r - q.conj()).norm()).max((self.det() - 1.0).norm())
    }
}

/// Transports an `SU(1,1)` matrix to `SL(2,R)` via `g = C⁻¹ m C`.
pub fn cayley_to_sl2r(m: &Su11) -> Result<GroupElement> {
    let residual = m.su11_residual();
    if residual > 1e-10 {
        return Err(Error::NotReal(residual));
    }
    let [[p, q], [r, s]] = m.m;
    let i = Complex64::i();
    // C = [[1, -i], [1, i]],  C⁻¹ = (1/2i)·[[i, i], [-1, 1]].
    let mc = [[p + q, -i * p + i * q], [r + s, -i * r + i * s]];
    let half_inv_i = Complex64::new(0.0, -0.5);
    let g = [
        [half_inv_i * (i * mc[0][0] + i * mc[1][0]), half_inv_i * (i * mc[0][1] + i * mc[1][1])],
        [half_inv_i * (-mc[0][0] + mc[1][0]), half_inv_i * (-mc[0][1] + mc[1][1])],
    ];
    let imag = g.iter().flatten().map(|z| z.im.abs()).fold(0.0, f64::max);
    let scale = g.iter().flatten().map(|z| z.re.abs()).fold(1.0, f64::max);
    if imag > 1e-10 * scale {
        return Err(Error::NotReal(imag));
    }
    Ok(GroupElement::new(g[0][0].re, g[0][1].re, g[1][0].re, g[1][1].re))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn generic() -> GroupElement {
        exp_general(&LieVector::new(0.3, -0.7, 1.1), 1.3) * exp_u(0.4)
    }

    #[test]
    fn identity_and_inverse() {
        let g = generic();
        assert!((GroupElement::IDENTITY * g).approx_eq(&g, 1e-15));
        assert!((g * g.inv()).approx_eq(&GroupElement::IDENTITY, 1e-12));
    }

    #[test]
    fn one_parameter_additivity() {
        assert!((exp_u(1.0) * exp_u(2.0)).approx_eq(&exp_u(3.0), 0.0));
        assert_eq!(exp_basis(0.0, Direction::U).unwrap(), GroupElement::IDENTITY);
        let g = exp_basis(2.5, Direction::U).unwrap();
        assert_eq!((g.a, g.b, g.c, g.d), (1.0, 2.5, 0.0, 1.0));
    }

    #[test]
    fn geodesic_range_is_checked() {
        assert!(matches!(exp_basis(1500.0, Direction::X), Err(Error::RangeExceeded(_))));
        assert!(exp_basis(-1399.0, Direction::X).is_ok());
    }

    #[test]
    fn bracket_relations_are_exact() {
        let (u, v, x) = (Direction::U.vector(), Direction::V.vector(), Direction::X.vector());
        assert_eq!(u.bracket(&v), LieVector::new(0.0, 0.0, 2.0));
        assert_eq!(x.bracket(&u), u);
        assert_eq!(x.bracket(&v), v.scale(-1.0));
    }

    #[test]
    fn bracket_agrees_with_matrix_commutator() {
        let a = LieVector::new(0.3, -1.2, 0.8);
        let b = LieVector::new(-0.5, 0.4, 2.0);
        let (ma, mb) = (a.matrix(), b.matrix());
        let mut comm = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    comm[i][j] += ma[i][k] * mb[k][j] - mb[i][k] * ma[k][j];
                }
            }
        }
        let br = a.bracket(&b).matrix();
        for i in 0..2 {
            for j in 0..2 {
                assert_abs_diff_eq!(comm[i][j], br[i][j], epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn canonical_sign() {
        let g = generic();
        let neg = GroupElement { a: -g.a, b: -g.b, c: -g.c, d: -g.d };
        assert_eq!(neg.canonical(), g.canonical());
        assert!(g.canonical().a > 0.0);
        assert!(g.approx_eq(&neg, 0.0));
    }

    #[test]
    fn basepoint_frame_roundtrip() {
        let z = DiskPoint::new(0.3, -0.55).unwrap();
        let g = GroupElement::from_basepoint_frame(z, 2.1);
        let p = g.basepoint();
        assert_abs_diff_eq!(p.re, z.re, epsilon = 1e-14);
        assert_abs_diff_eq!(p.im, z.im, epsilon = 1e-14);
        assert_abs_diff_eq!(g.frame_angle(), 2.1, epsilon = 1e-13);
        assert_abs_diff_eq!(g.det(), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn cayley_identity_and_rotation() {
        let one = Complex64::new(1.0, 0.0);
        let id = cayley_to_sl2r(&Su11::from_entries(one, Complex64::new(0.0, 0.0))).unwrap();
        assert!(id.approx_eq(&GroupElement::IDENTITY, 1e-15));
        let theta: f64 = 1.2;
        let rot = cayley_to_sl2r(&Su11::from_entries(Complex64::from_polar(1.0, theta / 2.0), Complex64::new(0.0, 0.0)))
            .unwrap();
        assert_abs_diff_eq!(rot.trace(), 2.0 * (theta / 2.0).cos(), epsilon = 1e-14);
        assert_abs_diff_eq!(rot.frame_angle(), theta, epsilon = 1e-14);
    }

    #[test]
    fn cayley_rejects_non_su11() {
        let m = Su11 { m: [[Complex64::new(2.0, 0.0), Complex64::new(0.0, 0.0)], [Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)]] };
        assert!(cayley_to_sl2r(&m).is_err());
    }

    #[test]
    fn su11_roundtrip() {
        let g = generic();
        let back = cayley_to_sl2r(&g.to_su11()).unwrap();
        assert!(back.approx_eq(&g, 1e-13));
    }

    #[test]
    fn mobius_identity_and_inverse() {
        let z = DiskPoint::new(-0.2, 0.61).unwrap();
        let id = mobius(&GroupElement::IDENTITY, &z).unwrap();
        assert_eq!(id, z);
        let g = generic();
        let back = mobius(&g.inv(), &mobius(&g, &z).unwrap()).unwrap();
        assert_abs_diff_eq!(back.re, z.re, epsilon = 1e-12);
        assert_abs_diff_eq!(back.im, z.im, epsilon = 1e-12);
        assert!(mobius(&g, &DiskPoint { re: 1.0 - 1e-13, im: 0.0 }).is_err());
    }

    #[test]
    fn geodesic_moves_at_unit_speed() {
        for &t in &[0.1, 1.0, 3.7, 9.0] {
            let p = mobius(&exp_x(t), &DiskPoint::ORIGIN).unwrap();
            assert_abs_diff_eq!(dist(&DiskPoint::ORIGIN, &p), t, epsilon = 1e-9);
            assert_abs_diff_eq!(p.im, 0.0, epsilon = 1e-15);
            assert!(p.re > 0.0);
            // displacement from the Frobenius norm agrees
            assert_abs_diff_eq!(exp_x(t).displacement(), t, epsilon = 1e-9);
        }
    }

    #[test]
    fn basepoint_is_action_on_origin() {
        let g = generic();
        let p = mobius(&g, &DiskPoint::ORIGIN).unwrap();
        assert_eq!(p, g.basepoint());
        assert_abs_diff_eq!(dist(&DiskPoint::ORIGIN, &p), g.displacement(), epsilon = 1e-12);
    }

    #[test]
    fn distance_basics() {
        let z = DiskPoint::new(0.1, 0.2).unwrap();
        let w = DiskPoint::new(-0.4, 0.3).unwrap();
        assert_eq!(dist(&z, &z), 0.0);
        assert_abs_diff_eq!(dist(&z, &w), dist(&w, &z), epsilon = 0.0);
        // closed form along the real axis: d(0, r) = 2 artanh r
        let r = DiskPoint::new(0.5, 0.0).unwrap();
        assert_abs_diff_eq!(dist(&DiskPoint::ORIGIN, &r), 2.0 * 0.5f64.atanh(), epsilon = 1e-14);
    }

    #[test]
    fn exp_general_matches_basis() {
        for &t in &[-2.0, 0.0, 0.7, 4.0] {
            assert!(exp_general(&Direction::U.vector(), t).approx_eq(&exp_u(t), 1e-14));
            assert!(exp_general(&Direction::V.vector(), t).approx_eq(&exp_basis(t, Direction::V).unwrap(), 1e-14));
            assert!(exp_general(&Direction::X.vector(), t).approx_eq(&exp_x(t), 1e-12));
        }
    }

    /// Scaled-and-squared Taylor oracle for the matrix exponential.
    fn taylor_exp(w: &LieVector, t: f64) -> [[f64; 2]; 2] {
        let m = w.matrix();
        let squarings = 6;
        let s = t / f64::from(1 << squarings);
        let a = [[m[0][0] * s, m[0][1] * s], [m[1][0] * s, m[1][1] * s]];
        let mm = |x: [[f64; 2]; 2], y: [[f64; 2]; 2]| {
            [
                [x[0][0] * y[0][0] + x[0][1] * y[1][0], x[0][0] * y[0][1] + x[0][1] * y[1][1]],
                [x[1][0] * y[0][0] + x[1][1] * y[1][0], x[1][0] * y[0][1] + x[1][1] * y[1][1]],
            ]
        };
        let mut sum = [[1.0, 0.0], [0.0, 1.0]];
        let mut term = [[1.0, 0.0], [0.0, 1.0]];
        for k in 1..=12 {
            term = mm(term, a);
            let inv = 1.0 / k as f64;
            term = [[term[0][0] * inv, term[0][1] * inv], [term[1][0] * inv, term[1][1] * inv]];
            for i in 0..2 {
                for j in 0..2 {
                    sum[i][j] += term[i][j];
                }
            }
        }
        for _ in 0..squarings {
            sum = mm(sum, sum);
        }
        sum
    }

    #[test]
    fn exp_general_matches_taylor_oracle() {
        let cases = [
            LieVector::new(1.0, 2.0, 0.5),  // hyperbolic
            LieVector::new(1.0, -2.0, 0.5), // elliptic
            LieVector::new(1.0, -1.0, 2.0), // parabolic: x²/4 + uv = 0
            LieVector::new(-0.4, 0.9, -1.7),
        ];
        for w in &cases {
            for &t in &[0.3, 1.0, 5.0 / w.norm()] {
                let g = exp_general(w, t);
                let o = taylor_exp(w, t);
                let err = (g.a - o[0][0]).abs().max((g.b - o[0][1]).abs()).max((g.c - o[1][0]).abs()).max((g.d - o[1][1]).abs());
                let scale = o.iter().flatten().fold(1.0f64, |m, v| m.max(v.abs()));
                assert!(err <= 1e-12 * scale, "w={w:?} t={t} err={err}");
            }
        }
    }

    /// Group commutator `e^{hX} e^{hU} e^{-hX} e^{-hU} = I + h²[X,U] + O(h³)`,
    /// extrapolated from two step sizes.
    #[test]
    fn group_commutator_recovers_bracket() {
        let comm = |h: f64, p: Direction, q: Direction| {
            let g = exp_basis(h, p).unwrap() * exp_basis(h, q).unwrap() * exp_basis(-h, p).unwrap() * exp_basis(-h, q).unwrap();
            [(g.a - 1.0) / (h * h), g.b / (h * h), g.c / (h * h), (g.d - 1.0) / (h * h)]
        };
        for (p, q) in [(Direction::X, Direction::U), (Direction::X, Direction::V), (Direction::U, Direction::V)] {
            let c1 = comm(1e-2, p, q);
            let c2 = comm(5e-3, p, q);
            // Richardson: O(h) error term cancels.
            let ext: Vec<f64> = c1.iter().zip(c2.iter()).map(|(a, b)| 2.0 * b - a).collect();
            let expect = p.vector().bracket(&q.vector()).matrix();
            assert_abs_diff_eq!(ext[0], expect[0][0], epsilon = 1e-4);
            assert_abs_diff_eq!(ext[1], expect[0][1], epsilon = 1e-4);
            assert_abs_diff_eq!(ext[2], expect[1][0], epsilon = 1e-4);
            assert_abs_diff_eq!(ext[3], expect[1][1], epsilon = 1e-4);
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn element() -> impl Strategy<Value = GroupElement> {
            (-2.0..2.0f64, -2.0..2.0f64, -2.0..2.0f64, -1.5..1.5f64)
                .prop_map(|(u, v, x, t)| exp_general(&LieVector::new(u, v, x), t) * exp_u(0.3))
        }

        proptest! {
            #[test]
            fn products_keep_unit_determinant(g in element(), h in element()) {
                prop_assert!((mul(&g, &h).det() - 1.0).abs() <= 1e-12);
            }

            #[test]
            fn one_parameter_property(s in -50.0..50.0f64, t in -50.0..50.0f64) {
                for dir in [Direction::U, Direction::V, Direction::X] {
                    let lhs = exp_basis(s + t, dir).unwrap();
                    let rhs = exp_basis(s, dir).unwrap() * exp_basis(t, dir).unwrap();
                    let scale = lhs.a.abs().max(lhs.d.abs()).max(1.0);
                    prop_assert!(lhs.approx_eq(&rhs, 1e-12 * scale), "{:?} {:?}", lhs, rhs);
                }
            }

            #[test]
            fn mobius_is_isometry(g in element(), zr in -0.6..0.6f64, zi in -0.6..0.6f64, wr in -0.6..0.6f64, wi in -0.6..0.6f64) {
                let z = DiskPoint::new(zr, zi).unwrap();
                let w = DiskPoint::new(wr, wi).unwrap();
                let d0 = dist(&z, &w);
                let d1 = dist(&mobius(&g, &z).unwrap(), &mobius(&g, &w).unwrap());
                prop_assert!((d0 - d1).abs() <= 1e-10 * (1.0 + d0));
            }
        }
    }
}
