//! Smooth Γ-invariant functions on `M` built from compactly supported bumps,
//! their derivatives along `U`, `V`, `X`, the time-change `α` and
//! coboundaries `U_α u`.
//!
//! A bump centred at `z₀` with width `w` and frame harmonic `m` is
//! `φ(s)·cos(mθ)` with `s = (cosh d(g·0, z₀) − 1)/w²`, `φ(s) = exp(−1/(1−s))`
//! and `θ` the frame angle. Summing over the Γ-orbit of `z₀` makes it exactly
//! Γ-invariant; only translates within reach of the octagon are stored.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::hyperbolic::{cosh_dist, mobius, DiskPoint, Direction, GroupElement};
use crate::jet::{jet_curve, HyperDual, Mat2, Scalar};
use crate::mc::{self, Estimate};
use crate::surface::{circumradius, systole, FuchsianGroup, SpectralGapParams, SurfacePoint};

/// `∫₀¹ exp(−1/(1−s)) ds = e⁻¹ − E₁(1)`.
pub const BUMP_RADIAL_INTEGRAL: f64 = 0.148_495_506_775_922_05;

/// Bump values below `exp(−700)` are flushed to zero; this also keeps the
/// derivative chain away from `0·∞`.
const PROFILE_CUTOFF: f64 = 1.0 - 1.0 / 700.0;

pub fn bump_profile(s: f64) -> f64 {
    if s < PROFILE_CUTOFF {
        (-1.0 / (1.0 - s)).exp()
    } else {
        0.0
    }
}

/// Real-valued function on `M`.
pub trait Field: Sync {
    fn eval(&self, g: &GroupElement) -> f64;
}

impl<F: Fn(&GroupElement) -> f64 + Sync> Field for F {
    fn eval(&self, g: &GroupElement) -> f64 {
        self(g)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BumpTerm {
    pub center: DiskPoint,
    pub width: f64,
    pub harmonic: i32,
    pub coefficient: f64,
}

impl BumpTerm {
    /// Hyperbolic radius of the support, `arccosh(1 + w²)`.
    pub fn support_radius(&self) -> f64 {
        (1.0 + self.width * self.width).acosh()
    }
}

#[derive(Debug, Clone)]
struct Compiled {
    x0: f64,
    y0: f64,
    inv_scale: f64,
    harmonic: u32,
    coefficient: f64,
    /// `h = γ⁻¹` for every orbit point `γ·z₀` within reach of the octagon.
    translates: Vec<GroupElement>,
    /// Largest number of translates whose supports share a point.
    multiplicity: usize,
}

impl Compiled {
    fn new(term: &BumpTerm, group: &FuchsianGroup) -> Result<Self> {
        let z0 = term.center;
        let d0 = cosh_dist(&DiskPoint::ORIGIN, &z0).acosh();
        let rho = term.support_radius();
        let reach = circumradius() + rho + 1e-6;
        let ball = group.ball(reach + d0 + 1e-6)?;
        let cosh_reach = reach.cosh();
        let cosh_pair = (2.0 * rho).cosh();
        let mut translates = Vec::new();
        let mut multiplicity = 0;
        for gamma in &ball {
            let p = mobius(gamma, &z0)?;
            if cosh_dist(&DiskPoint::ORIGIN, &p) <= cosh_reach {
                translates.push(gamma.inv());
            }
            if cosh_dist(&z0, &p) < cosh_pair {
                multiplicity += 1;
            }
        }
        Ok(Compiled {
            x0: z0.re,
            y0: z0.im,
            inv_scale: 2.0 / ((1.0 - z0.norm_sqr()) * term.width * term.width),
            harmonic: term.harmonic.unsigned_abs(),
            coefficient: term.coefficient,
            translates,
            multiplicity: multiplicity.max(1),
        })
    }

    #[inline]
    fn value<S: Scalar>(&self, k: &Mat2<S>) -> Option<S> {
        let ar = (k.a + k.d).scale(0.5);
        let ai = (k.b - k.c).scale(0.5);
        let br = (k.a - k.d).scale(0.5);
        let bi = -(k.b + k.c).scale(0.5);
        let dr = br - (ar.scale(self.x0) + ai.scale(self.y0));
        let di = bi - (ar.scale(self.y0) - ai.scale(self.x0));
        let s = (dr * dr + di * di).scale(self.inv_scale);
        if s.value() >= PROFILE_CUTOFF {
            return None;
        }
        let phi = (-(S::cst(1.0) - s).recip()).exp();
        if self.harmonic == 0 {
            return Some(phi.scale(self.coefficient));
        }
        // cos(mθ) = Re(α^{2m}) / |α|^{2m}
        let (sr, si) = (ar * ar - ai * ai, (ar * ai).scale(2.0));
        let n2 = ar * ar + ai * ai;
        let (mut pr, mut pi, mut pn) = (sr, si, n2);
        for _ in 1..self.harmonic {
            (pr, pi) = (pr * sr - pi * si, pr * si + pi * sr);
            pn = pn * n2;
        }
        Some((phi * pr / pn).scale(self.coefficient))
    }
}

/// A finite sum of periodized bumps plus a constant.
#[derive(Debug, Clone)]
pub struct Observable {
    group: FuchsianGroup,
    terms: Vec<BumpTerm>,
    compiled: Vec<Compiled>,
    constant_offset: f64,
    offset_stderr: f64,
}

impl Observable {
    pub fn constant(group: &FuchsianGroup, value: f64) -> Self {
        Observable { group: group.clone(), terms: vec![], compiled: vec![], constant_offset: value, offset_stderr: 0.0 }
    }

    pub fn zero(group: &FuchsianGroup) -> Self {
        Self::constant(group, 0.0)
    }

    pub fn bump(group: &FuchsianGroup, center: DiskPoint, width: f64, harmonic: i32) -> Result<Self> {
        Self::from_terms(group, &[BumpTerm { center, width, harmonic, coefficient: 1.0 }], 0.0)
    }

    pub fn from_terms(group: &FuchsianGroup, terms: &[BumpTerm], constant_offset: f64) -> Result<Self> {
        let limit = 0.5 * systole();
        let mut compiled = Vec::with_capacity(terms.len());
        for t in terms {
            if !(t.width > 0.0 && t.width < limit) {
                return Err(Error::WidthTooLarge { width: t.width, limit });
            }
            compiled.push(Compiled::new(t, group)?);
        }
        Ok(Observable {
            group: group.clone(),
            terms: terms.to_vec(),
            compiled,
            constant_offset,
            offset_stderr: 0.0,
        })
    }

    pub fn group(&self) -> &FuchsianGroup {
        &self.group
    }

    pub fn terms(&self) -> &[BumpTerm] {
        &self.terms
    }

    pub fn constant_offset(&self) -> f64 {
        self.constant_offset
    }

    /// Standard error of the constant offset when it came from quadrature.
    pub fn offset_stderr(&self) -> f64 {
        self.offset_stderr
    }

    pub fn is_constant(&self) -> bool {
        self.terms.is_empty()
    }

    /// Whether every bump carries a nonzero frame harmonic.
    pub fn is_purely_oscillatory(&self) -> bool {
        self.terms.iter().all(|t| t.harmonic != 0)
    }

    pub fn is_frame_independent(&self) -> bool {
        self.terms.iter().all(|t| t.harmonic == 0)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        for (t, c) in out.terms.iter_mut().zip(out.compiled.iter_mut()) {
            t.coefficient *= factor;
            c.coefficient *= factor;
        }
        out.constant_offset *= factor;
        out.offset_stderr *= factor.abs();
        out
    }

    pub fn with_offset(&self, constant_offset: f64, offset_stderr: f64) -> Self {
        Observable { constant_offset, offset_stderr, ..self.clone() }
    }

    /// Exact Haar mean: a harmonic-`m` bump integrates to `w²·I_φ/2` when
    /// `m = 0` and to zero otherwise.
    pub fn haar_mean(&self) -> f64 {
        self.constant_offset
            + self
                .terms
                .iter()
                .filter(|t| t.harmonic == 0)
                .map(|t| t.coefficient * t.width * t.width * BUMP_RADIAL_INTEGRAL / 2.0)
                .sum::<f64>()
    }

    /// Upper bound for `sup|f|` from bump heights and support overlaps.
    pub fn sup_bound(&self) -> f64 {
        let peak = (-1.0f64).exp();
        self.constant_offset.abs()
            + self.compiled.iter().map(|c| c.coefficient.abs() * peak * c.multiplicity as f64).sum::<f64>()
    }

    /// Evaluates on an already reduced representative.
    #[inline]
    pub fn eval_reduced(&self, rep: &GroupElement) -> f64 {
        let m = Mat2::<f64>::from_element(rep);
        self.eval_matrix(&m)
    }

    fn eval_matrix<S: Scalar>(&self, m: &Mat2<S>) -> S {
        let mut acc = S::cst(self.constant_offset);
        for c in &self.compiled {
            for h in &c.translates {
                if let Some(v) = c.value(&Mat2::left_mul(h, m)) {
                    acc = acc + v;
                }
            }
        }
        acc
    }

    /// `f(g·exp(ε₁W₁)·exp(ε₂W₂))` as a hyper-dual number: value, `W₁f`,
    /// `W₂f` and `W₁(W₂f)`.
    pub fn jet(&self, g: &GroupElement, first: Direction, second: Direction) -> HyperDual {
        if self.is_constant() {
            return HyperDual::cst(self.constant_offset);
        }
        self.jet_reduced(&self.group.reduce_rep(g), first, second)
    }

    /// [`Observable::jet`] at an already reduced representative.
    pub fn jet_reduced(&self, rep: &GroupElement, first: Direction, second: Direction) -> HyperDual {
        if self.is_constant() {
            return HyperDual::cst(self.constant_offset);
        }
        self.eval_matrix(&jet_curve(rep, first, second))
    }

    pub fn derivative(&self, g: &GroupElement, which: Direction) -> f64 {
        self.jet(g, which, which).e1
    }

    /// `W₁(W₂ f)(g)`.
    pub fn second_derivative(&self, g: &GroupElement, first: Direction, second: Direction) -> f64 {
        self.jet(g, first, second).e12
    }

    pub fn recipe(&self) -> ObservableRecipe {
        ObservableRecipe { bumps: self.terms.clone(), offset: self.constant_offset }
    }
}

impl Field for Observable {
    #[inline]
    fn eval(&self, g: &GroupElement) -> f64 {
        if self.is_constant() {
            return self.constant_offset;
        }
        self.eval_reduced(&self.group.reduce_rep(g))
    }
}

/// A directional derivative of an observable, of order one or two.
#[derive(Debug, Clone, Copy)]
pub struct Derived<'a> {
    f: &'a Observable,
    first: Direction,
    second: Option<Direction>,
}

/// `W f` (order 1) or `W W f` (order 2, only for `U` and `X`).
pub fn derive(f: &Observable, which: Direction, order: u8) -> Result<Derived<'_>> {
    match (order, which) {
        (1, _) => Ok(Derived { f, first: which, second: None }),
        (2, Direction::U | Direction::X) => Ok(Derived { f, first: which, second: Some(which) }),
        _ => Err(Error::InvalidArgument(format!("derivative of order {order} along {which:?}"))),
    }
}

/// The mixed derivative `W₁(W₂ f)`.
pub fn derive_mixed(f: &Observable, first: Direction, second: Direction) -> Derived<'_> {
    Derived { f, first, second: Some(second) }
}

impl Field for Derived<'_> {
    fn eval(&self, g: &GroupElement) -> f64 {
        match self.second {
            None => self.f.derivative(g, self.first),
            Some(w) => self.f.second_derivative(g, self.first, w),
        }
    }
}

/// The time-change function `α = K·(1 + ε f₀)` with `K` chosen so that
/// `∫ α vol = 1`.
#[derive(Debug, Clone)]
pub struct TimeChange {
    base: Observable,
    epsilon: f64,
    norm_constant: f64,
    gap: SpectralGapParams,
    alpha_min: f64,
}

impl TimeChange {
    /// Builds `α` from `f₀`. The normalisation uses the exact Haar mean of
    /// the bumps, so `∫ α vol = 1` holds to rounding.
    pub fn new(base: Observable, epsilon: f64, gap: SpectralGapParams) -> Result<Self> {
        let excursion = epsilon.abs() * base.sup_bound();
        if !(excursion <= 0.5) {
            return Err(Error::NotPositive(excursion));
        }
        let norm_constant = 1.0 / (1.0 + epsilon * base.haar_mean());
        Ok(TimeChange { alpha_min: norm_constant * (1.0 - excursion), base, epsilon, norm_constant, gap })
    }

    /// `α ≡ 1`.
    pub fn unit(group: &FuchsianGroup, gap: SpectralGapParams) -> Self {
        TimeChange { base: Observable::zero(group), epsilon: 0.0, norm_constant: 1.0, gap, alpha_min: 1.0 }
    }

    pub fn base(&self) -> &Observable {
        &self.base
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn norm_constant(&self) -> f64 {
        self.norm_constant
    }

    pub fn gap(&self) -> &SpectralGapParams {
        &self.gap
    }

    pub fn group(&self) -> &FuchsianGroup {
        self.base.group()
    }

    /// Certified lower bound for `α`.
    pub fn alpha_min(&self) -> f64 {
        self.alpha_min
    }

    pub fn alpha_max(&self) -> f64 {
        2.0 * self.norm_constant - self.alpha_min
    }

    pub fn is_unit(&self) -> bool {
        self.epsilon == 0.0 || self.base.is_constant() && self.norm_constant * (1.0 + self.epsilon * self.base.constant_offset()) == 1.0
    }

    pub fn is_constant(&self) -> bool {
        self.epsilon == 0.0 || self.base.is_constant()
    }

    #[inline]
    pub fn eval_reduced(&self, rep: &GroupElement) -> f64 {
        if self.epsilon == 0.0 {
            return self.norm_constant;
        }
        self.norm_constant * (1.0 + self.epsilon * self.base.eval_reduced(rep))
    }

    /// `α` along `g·exp(ε₁W₁)·exp(ε₂W₂)`.
    pub fn jet(&self, g: &GroupElement, first: Direction, second: Direction) -> HyperDual {
        if self.epsilon == 0.0 {
            return HyperDual::cst(self.norm_constant);
        }
        (HyperDual::cst(1.0) + self.base.jet(g, first, second).scale(self.epsilon)).scale(self.norm_constant)
    }

    /// [`TimeChange::jet`] at an already reduced representative.
    pub fn jet_reduced(&self, rep: &GroupElement, first: Direction, second: Direction) -> HyperDual {
        if self.epsilon == 0.0 {
            return HyperDual::cst(self.norm_constant);
        }
        (HyperDual::cst(1.0) + self.base.jet_reduced(rep, first, second).scale(self.epsilon)).scale(self.norm_constant)
    }

    /// `(α, Xα, X²α)` at `g`.
    pub fn x_derivatives(&self, g: &GroupElement) -> (f64, f64, f64) {
        let j = self.jet(g, Direction::X, Direction::X);
        (j.re, j.e1, j.e12)
    }

    pub fn derivative(&self, g: &GroupElement, which: Direction) -> f64 {
        self.jet(g, which, which).e1
    }

    /// `Xα/α − 1`.
    pub fn log_x_minus_one(&self, g: &GroupElement) -> f64 {
        let (a, xa, _) = self.x_derivatives(g);
        xa / a - 1.0
    }

    /// `(Xα/α, X(Xα/α))`.
    pub fn log_x_and_derivative(&self, g: &GroupElement) -> (f64, f64) {
        let (a, xa, xxa) = self.x_derivatives(g);
        let r = xa / a;
        (r, xxa / a - r * r)
    }

    /// Haar draws weighted by `α` (the importance weight for `vol_α`).
    pub fn sample_vol_alpha(&self, n: usize, seed: u64) -> Vec<(SurfacePoint, f64)> {
        self.group().sample_weighted(n, seed, |g| self.eval_reduced(g))
    }
}

impl Field for TimeChange {
    #[inline]
    fn eval(&self, g: &GroupElement) -> f64 {
        if self.epsilon == 0.0 {
            return self.norm_constant;
        }
        self.eval_reduced(&self.group().reduce_rep(g))
    }
}

/// `f = U_α u = (Uu)/α`.
#[derive(Debug, Clone)]
pub struct Coboundary {
    u: Observable,
    alpha: TimeChange,
}

impl Coboundary {
    pub fn new(u: Observable, alpha: TimeChange) -> Self {
        Coboundary { u, alpha }
    }

    pub fn u(&self) -> &Observable {
        &self.u
    }

    pub fn alpha(&self) -> &TimeChange {
        &self.alpha
    }

    pub fn xu(&self, g: &GroupElement) -> f64 {
        self.u.derivative(g, Direction::X)
    }
}

impl Field for Coboundary {
    fn eval(&self, g: &GroupElement) -> f64 {
        if self.u.is_constant() {
            return 0.0;
        }
        let rep = self.u.group().reduce_rep(g);
        self.u.derivative(&rep, Direction::U) / self.alpha.eval_reduced(&rep)
    }
}

/// `∫ f vol_α` by Monte Carlo over Haar points weighted by `α`.
pub fn vol_alpha_mean(f: &impl Field, alpha: &TimeChange, n: usize, seed: u64) -> Estimate {
    let group = alpha.group();
    mc::mean_of(n, |i| {
        let x = group.haar_point(seed, i);
        alpha.eval_reduced(&x.rep) * f.eval(&x.rep)
    })
}

/// The `vol_α` mean of `f` when it is known in closed form: constant `α`
/// (Haar mean), or frame-independent `α` against purely oscillating bumps.
pub fn exact_vol_alpha_mean(f: &Observable, alpha: &TimeChange) -> Option<f64> {
    if alpha.is_constant() {
        Some(alpha.eval(&GroupElement::IDENTITY) * f.haar_mean())
    } else if alpha.base().is_frame_independent() && f.is_purely_oscillatory() {
        Some(f.constant_offset())
    } else {
        None
    }
}

/// `f − ∫ f vol_α`. The mean is exact when available and otherwise a seeded
/// Monte Carlo estimate whose standard error is kept on the result.
pub fn project_zero_average(f: &Observable, alpha: &TimeChange, quad_n: usize, seed: u64) -> Observable {
    match exact_vol_alpha_mean(f, alpha) {
        Some(mean) => f.with_offset(f.constant_offset() - mean, 0.0),
        None => {
            let est = vol_alpha_mean(f, alpha, quad_n, seed);
            f.with_offset(f.constant_offset() - est.mean, est.stderr)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraphNormReport {
    pub l2: f64,
    pub l2_of_x_derivative: f64,
    pub graph_norm: f64,
}

/// Haar `L²` norms of `g` and `Xg` and the graph norm `(‖g‖² + ‖Xg‖²)^{1/2}`.
pub fn graph_norm(g: &Observable, quad_n: usize, seed: u64) -> GraphNormReport {
    let group = g.group();
    let [s0, s1] = mc::sum_samples(quad_n, |i| {
        let x = group.haar_point(seed, i);
        let j = g.jet(&x.rep, Direction::X, Direction::X);
        [j.re * j.re, j.e1 * j.e1]
    });
    let n = quad_n as f64;
    let (a, b) = (s0 / n, s1 / n);
    GraphNormReport { l2: a.sqrt(), l2_of_x_derivative: b.sqrt(), graph_norm: (a + b).sqrt() }
}

/// Text form of an observable in the `key = value` config syntax.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservableRecipe {
    pub bumps: Vec<BumpTerm>,
    pub offset: f64,
}

impl ObservableRecipe {
    pub fn single(center: DiskPoint, width: f64, harmonic: i32) -> Self {
        ObservableRecipe { bumps: vec![BumpTerm { center, width, harmonic, coefficient: 1.0 }], offset: 0.0 }
    }

    pub fn build(&self, group: &FuchsianGroup) -> Result<Observable> {
        Observable::from_terms(group, &self.bumps, self.offset)
    }

    pub fn to_config(&self, prefix: &str) -> String {
        let mut out = String::new();
        for (i, b) in self.bumps.iter().enumerate() {
            let _ = writeln!(out, "{prefix}.bump{i}.center = {:?}, {:?}", b.center.re, b.center.im);
            let _ = writeln!(out, "{prefix}.bump{i}.width = {:?}", b.width);
            let _ = writeln!(out, "{prefix}.bump{i}.harmonic = {}", b.harmonic);
            let _ = writeln!(out, "{prefix}.bump{i}.coefficient = {:?}", b.coefficient);
        }
        let _ = writeln!(out, "{prefix}.offset = {:?}", self.offset);
        out
    }

    /// Reads `prefix.bump<i>.{center,width,harmonic,coefficient}` for
    /// consecutive `i` from 0, and an optional `prefix.offset`.
    pub fn from_config(prefix: &str, entries: &BTreeMap<String, String>) -> Result<Self> {
        let get = |key: String| entries.get(&key).map(|s| s.trim().to_string());
        let num = |key: String| -> Result<f64> {
            let raw = get(key.clone()).ok_or_else(|| Error::InvalidArgument(format!("missing key `{key}`")))?;
            raw.parse::<f64>().map_err(|_| Error::InvalidArgument(format!("`{key}`: cannot parse `{raw}` as a number")))
        };
        let mut bumps = Vec::new();
        for i in 0.. {
            let p = format!("{prefix}.bump{i}");
            let Some(center) = get(format!("{p}.center")) else { break };
            let parts: Vec<f64> = center
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::InvalidArgument(format!("`{p}.center`: expected `re, im`, got `{center}`")))?;
            let [re, im] = parts[..] else {
                return Err(Error::InvalidArgument(format!("`{p}.center`: expected two numbers, got `{center}`")));
            };
            let harmonic_raw = get(format!("{p}.harmonic")).unwrap_or_else(|| "0".into());
            let harmonic = harmonic_raw
                .parse::<i32>()
                .map_err(|_| Error::InvalidArgument(format!("`{p}.harmonic`: expected an integer, got `{harmonic_raw}`")))?;
            let coefficient = if get(format!("{p}.coefficient")).is_some() { num(format!("{p}.coefficient"))? } else { 1.0 };
            bumps.push(BumpTerm { center: DiskPoint::new(re, im)?, width: num(format!("{p}.width"))?, harmonic, coefficient });
        }
        let offset = if get(format!("{prefix}.offset")).is_some() { num(format!("{prefix}.offset"))? } else { 0.0 };
        if bumps.is_empty() && get(format!("{prefix}.offset")).is_none() {
            return Err(Error::InvalidArgument(format!("missing key `{prefix}.bump0.center`")));
        }
        Ok(ObservableRecipe { bumps, offset })
    }
}
