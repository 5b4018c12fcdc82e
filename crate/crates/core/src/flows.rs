//! Homogeneous flows, the time-change cocycle and its inverse, the
//! time-changed horocycle flow, and pushed geodesic arcs.
//!
//! Conventions: flows act by right multiplication, `h^U_t(x) = x·exp(tU)`,
//! `φ^X_s(x) = x·exp(sX)`, and `h^α_𝒯(x) = x·exp(T(x,𝒯)U)` with
//! `τ(x, T(x,𝒯)) = 𝒯`, `τ(x,t) = ∫₀ᵗ α(x·exp(θU)) dθ`.
//!
//! With these conventions the pushed arc `γ(s) = h^α_t(φ^X_s x)` has velocity
//! `X − v·U_α` where `v = v_t(x,s) = ∫₀ᵗ (Xα/α − 1)∘h^α_τ∘φ^X_s(x) dτ`, and
//! `∂v/∂s = −v·(Xα/α)(γ(s)) + ∫₀ᵗ (X²α − Xα)/α ∘h^α_τ∘φ^X_s(x) dτ`.
//! Accordingly `∫_γ f Û_α` is `∫₀^σ f(γ(s))·(−v(s)) ds`.

use crate::cheb::{ChebRule, Piecewise};
use crate::dd::DdElement;
use crate::error::{Error, Result};
use crate::hyperbolic::{exp_basis, exp_u, exp_x, Direction, GroupElement};
use crate::mc::{self, Estimate};
use crate::observables::{Field, Observable, TimeChange};
use crate::surface::{FuchsianGroup, SurfacePoint};

/// Longest single step before a reduction.
pub const MAX_FLOW_STEP: f64 = 50.0;
/// Largest supported homogeneous flow time.
pub const MAX_FLOW_TIME: f64 = 1e6;
/// Bisection depth cap for adaptive Simpson.
pub const SIMPSON_MAX_DEPTH: u32 = 40;
const NEWTON_MAX_ITER: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowConfig {
    pub quad_step: f64,
    pub quad_tol: f64,
    pub newton_tol: f64,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig { quad_step: 1.0 / 64.0, quad_tol: 1e-8, newton_tol: 1e-10 }
    }
}

impl FlowConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.quad_step > 0.0 && self.quad_step <= 0.125 && self.quad_tol > 0.0 && self.newton_tol > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid flow configuration {self:?}")))
        }
    }

    pub fn with_tolerance(self, quad_tol: f64) -> Self {
        FlowConfig { quad_tol, ..self }
    }
}

/// `reduce(x·exp(tW))`, split into steps of length at most 50. The `U`-flow
/// is carried in double-double arithmetic between steps.
pub fn flow_homogeneous(group: &FuchsianGroup, x: &SurfacePoint, t: f64, which: Direction) -> Result<SurfacePoint> {
    if !(t.abs() <= MAX_FLOW_TIME) {
        return Err(Error::RangeExceeded(t));
    }
    let steps = (t.abs() / MAX_FLOW_STEP).ceil().max(1.0) as usize;
    let h = t / steps as f64;
    if which == Direction::U {
        let mut cur = DdElement::from_element(&x.rep);
        for _ in 0..steps {
            cur = group.reduce_precise(&cur.mul_exp_u(h));
        }
        // a last pass in f64 so the result is a fixed point of `reduce`
        let out = group.reduce(&cur.to_element())?;
        return Ok(SurfacePoint { rep: out.rep, last_word_length: out.last_word_length });
    }
    let step = exp_basis(h, which)?;
    let mut cur = *x;
    for _ in 0..steps {
        let next = group.reduce(&(cur.rep * step))?;
        cur = SurfacePoint { rep: next.rep, last_word_length: cur.last_word_length + next.last_word_length };
    }
    Ok(cur)
}

/* ---------- adaptive Simpson ---------- */

fn add<const K: usize>(a: [f64; K], b: [f64; K]) -> [f64; K] {
    std::array::from_fn(|k| a[k] + b[k])
}

fn simpson_rule<const K: usize>(h: f64, fa: &[f64; K], fm: &[f64; K], fb: &[f64; K]) -> [f64; K] {
    std::array::from_fn(|k| h / 6.0 * (fa[k] + 4.0 * fm[k] + fb[k]))
}

/// Vector-valued adaptive Simpson with Richardson correction; at least
/// `2^min_depth` subintervals, at most `2^SIMPSON_MAX_DEPTH`.
pub fn adaptive_simpson<const K: usize>(
    f: &mut impl FnMut(f64) -> [f64; K],
    a: f64,
    b: f64,
    tol: f64,
    min_depth: u32,
) -> [f64; K] {
    let fa = f(a);
    let fb = f(b);
    let fm = f(0.5 * (a + b));
    let whole = simpson_rule(b - a, &fa, &fm, &fb);
    simpson_step(f, a, b, fa, fm, fb, whole, tol, 0, min_depth)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<const K: usize>(
    f: &mut impl FnMut(f64) -> [f64; K],
    a: f64,
    b: f64,
    fa: [f64; K],
    fm: [f64; K],
    fb: [f64; K],
    whole: [f64; K],
    tol: f64,
    depth: u32,
    min_depth: u32,
) -> [f64; K] {
    let m = 0.5 * (a + b);
    let flm = f(0.5 * (a + m));
    let frm = f(0.5 * (m + b));
    let left = simpson_rule(m - a, &fa, &flm, &fm);
    let right = simpson_rule(b - m, &fm, &frm, &fb);
    let both = add(left, right);
    let err = (0..K).map(|k| (both[k] - whole[k]).abs()).fold(0.0, f64::max);
    if depth >= SIMPSON_MAX_DEPTH || (depth >= min_depth && err <= 15.0 * tol) {
        return std::array::from_fn(|k| both[k] + (both[k] - whole[k]) / 15.0);
    }
    add(
        simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth + 1, min_depth),
        simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth + 1, min_depth),
    )
}

/* ---------- orbit anchors ---------- */

const CHECKPOINT: usize = 50;

/// The reduced points `y·exp(k·step·U)`, `k = 0, 1, …`. Checkpoints every 50
/// steps are kept in double-double arithmetic and each point is one short
/// step from a checkpoint, so rounding does not build up along long orbits.
pub struct Anchors<'a> {
    group: &'a FuchsianGroup,
    step: f64,
    checkpoints: Vec<DdElement>,
    points: Vec<GroupElement>,
}

impl<'a> Anchors<'a> {
    pub fn new(group: &'a FuchsianGroup, y: &GroupElement, step: f64) -> Self {
        let start = group.reduce_rep(y);
        Anchors { group, step, checkpoints: vec![DdElement::from_element(&start)], points: vec![start] }
    }

    pub fn get(&mut self, k: usize) -> GroupElement {
        while self.points.len() <= k {
            let j = self.points.len();
            let c = j / CHECKPOINT;
            while self.checkpoints.len() <= c {
                let last = self.checkpoints.last().expect("nonempty");
                let next = self.group.reduce_precise(&last.mul_exp_u(self.step * CHECKPOINT as f64));
                self.checkpoints.push(next);
            }
            let r = (j % CHECKPOINT) as f64;
            let p = if r == 0.0 {
                self.checkpoints[c]
            } else {
                self.group.reduce_precise(&self.checkpoints[c].mul_exp_u(self.step * r))
            };
            self.points.push(self.group.reduce_rep(&p.to_element()));
        }
        self.points[k]
    }

    /// The reduced point at `U`-time `(k + u)·step`.
    pub fn at(&mut self, k: usize, u: f64) -> GroupElement {
        let a = self.get(k);
        if u == 0.0 {
            a
        } else {
            self.group.reduce_rep(&(a * exp_u(self.step * u)))
        }
    }
}

/// `∫₀^θ F(y·exp(ϑU), ϑ) dϑ` over unit panels, each by adaptive Simpson with
/// tolerance `tol·length`. `F` receives reduced points.
pub fn orbit_integral<const K: usize>(
    group: &FuchsianGroup,
    y: &GroupElement,
    theta: f64,
    tol: f64,
    mut f: impl FnMut(&GroupElement, f64) -> [f64; K],
) -> [f64; K] {
    let sign = if theta < 0.0 { -1.0 } else { 1.0 };
    let total = theta.abs();
    let mut anchors = Anchors::new(group, y, sign);
    let mut acc = [0.0; K];
    let mut k = 0usize;
    while (k as f64) < total {
        let len = (total - k as f64).min(1.0);
        let anchor = anchors.get(k);
        let base = k as f64;
        let part = adaptive_simpson(
            &mut |u: f64| f(&group.reduce_rep(&(anchor * exp_u(sign * u))), sign * (base + u)),
            0.0,
            len,
            tol * len,
            2,
        );
        acc = add(acc, part);
        k += 1;
    }
    acc.map(|v| sign * v)
}

/* ---------- the cocycle and its inverse ---------- */

/// Cumulative `τ` at unit panel boundaries along one orbit, so that repeated
/// evaluations share identical panel sums.
struct TauTable<'a> {
    alpha: &'a TimeChange,
    sign: f64,
    tol: f64,
    anchors: Anchors<'a>,
    cum: Vec<f64>,
}

impl<'a> TauTable<'a> {
    fn new(alpha: &'a TimeChange, y: &GroupElement, sign: f64, tol: f64) -> Self {
        TauTable { alpha, sign, tol, anchors: Anchors::new(alpha.group(), y, sign), cum: vec![0.0] }
    }

    fn panel(&self, anchor: &GroupElement, len: f64) -> f64 {
        let group = self.alpha.group();
        let sign = self.sign;
        adaptive_simpson(
            &mut |u: f64| [self.alpha.eval_reduced(&group.reduce_rep(&(*anchor * exp_u(sign * u))))],
            0.0,
            len,
            self.tol * len,
            2,
        )[0]
    }

    fn ensure(&mut self, k: usize) {
        while self.cum.len() <= k {
            let j = self.cum.len() - 1;
            let anchor = self.anchors.get(j);
            let next = self.cum[j] + self.panel(&anchor, 1.0);
            self.cum.push(next);
        }
    }

    /// `τ(y, θ)` for `θ` with the table's sign.
    fn tau(&mut self, theta: f64) -> f64 {
        let a = theta.abs();
        let k = a.floor() as usize;
        self.ensure(k);
        let frac = a - k as f64;
        let partial = if frac > 0.0 {
            let anchor = self.anchors.get(k);
            self.panel(&anchor, frac)
        } else {
            0.0
        };
        self.sign * (self.cum[k] + partial)
    }

    fn point(&mut self, theta: f64) -> GroupElement {
        let a = theta.abs();
        let k = a.floor() as usize;
        self.anchors.at(k, a - k as f64)
    }
}

/// `τ(x, t) = ∫₀ᵗ α(x·exp(θU)) dθ` by adaptive Simpson.
pub fn tau(x: &SurfacePoint, t: f64, alpha: &TimeChange, cfg: &FlowConfig) -> f64 {
    if t == 0.0 {
        return 0.0;
    }
    if alpha.is_unit() {
        return t;
    }
    TauTable::new(alpha, &x.rep, t.signum(), cfg.quad_tol).tau(t)
}

/// Inverse of the cocycle: the `T` with `τ(x, T) = 𝒯`. An RK4 predictor on
/// `dT/d𝒯 = 1/α` at `quad_step` is corrected by Newton iterations.
pub fn big_t(x: &SurfacePoint, script_t: f64, alpha: &TimeChange, cfg: &FlowConfig) -> Result<f64> {
    if script_t == 0.0 {
        return Ok(0.0);
    }
    if alpha.is_unit() {
        return Ok(script_t);
    }
    let group = alpha.group();
    let steps = (script_t.abs() / cfg.quad_step).ceil() as usize;
    let h = script_t / steps as f64;
    let mut t_big = 0.0;
    let mut rep = x.rep;
    let rate = |rep: &GroupElement, d: f64| 1.0 / alpha.eval_reduced(&group.reduce_rep(&(*rep * exp_u(d))));
    for _ in 0..steps {
        let k1 = rate(&rep, 0.0);
        let k2 = rate(&rep, 0.5 * h * k1);
        let k3 = rate(&rep, 0.5 * h * k2);
        let k4 = rate(&rep, h * k3);
        let dt = h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        rep = group.reduce_rep(&(rep * exp_u(dt)));
        t_big += dt;
    }
    let mut table = TauTable::new(alpha, &x.rep, script_t.signum(), cfg.quad_tol);
    let mut residual = f64::INFINITY;
    for _ in 0..NEWTON_MAX_ITER {
        residual = table.tau(t_big) - script_t;
        if residual.abs() <= cfg.newton_tol {
            return Ok(t_big);
        }
        let slope = alpha.eval_reduced(&table.point(t_big));
        t_big -= residual / slope;
    }
    Err(Error::NewtonFailed(residual))
}

/// `h^α_𝒯(x) = h^U_{T(x,𝒯)}(x)`.
pub fn flow_alpha(x: &SurfacePoint, script_t: f64, alpha: &TimeChange, cfg: &FlowConfig) -> Result<SurfacePoint> {
    let t_big = big_t(x, script_t, alpha, cfg)?;
    flow_homogeneous(alpha.group(), x, t_big, Direction::U)
}

/* ---------- fast orbit cursor ---------- */

/// Adaptive Chebyshev panels along orbits: `nodes` points per piece, pieces
/// of length `panel` bisected until the coefficient tail is below `tol`.
#[derive(Debug, Clone)]
pub struct PanelRule {
    pub rule: ChebRule,
    pub panel: f64,
    pub tol: f64,
    pub max_depth: u32,
}

impl PanelRule {
    pub fn new(nodes: usize, panel: f64, tol: f64, max_depth: u32) -> Self {
        PanelRule { rule: ChebRule::new(nodes), panel, tol, max_depth }
    }

    /// Identity checks.
    pub fn precise() -> Self {
        Self::new(16, 1.0, 1e-13, 12)
    }

    /// Ensemble statistics: about 5e-7 error in `T` over 300 time units.
    pub fn fast() -> Self {
        Self::new(12, 1.0, 1e-5, 8)
    }

    fn fit<const K: usize>(&self, f: impl FnMut(f64) -> [f64; K], scale: f64) -> [Piecewise; K] {
        self.rule.fit_adaptive(f, self.tol * scale, self.max_depth)
    }
}

/// State of an [`OrbitCursor`] at a requested time.
#[derive(Debug, Clone, Copy)]
pub struct OrbitState<const K: usize> {
    pub theta: f64,
    pub tau: f64,
    pub rep: GroupElement,
    pub integrals: [f64; K],
}

struct CursorPanel<const K: usize> {
    alpha: Piecewise,
    extras: [Piecewise; K],
}

/// Walks forward along `x·exp(θU)` panel by panel, accumulating `τ` and `K`
/// extra integrals `∫ g(point, α, τ) dθ`. Successive requests must be
/// nondecreasing, which makes long trajectories cost linear in time.
pub struct OrbitCursor<'a, const K: usize, G>
where
    G: Fn(&GroupElement, f64, f64) -> [f64; K],
{
    alpha: &'a TimeChange,
    rule: &'a PanelRule,
    extra: G,
    anchors: Anchors<'a>,
    anchor: GroupElement,
    steps: usize,
    theta0: f64,
    tau0: f64,
    acc0: [f64; K],
    current: Option<CursorPanel<K>>,
}

impl<'a, const K: usize, G> OrbitCursor<'a, K, G>
where
    G: Fn(&GroupElement, f64, f64) -> [f64; K],
{
    pub fn new(alpha: &'a TimeChange, rule: &'a PanelRule, start: &GroupElement, extra: G) -> Self {
        let anchors = Anchors::new(alpha.group(), start, rule.panel);
        OrbitCursor {
            alpha,
            rule,
            extra,
            anchor: alpha.group().reduce_rep(start),
            anchors,
            steps: 0,
            theta0: 0.0,
            tau0: 0.0,
            acc0: [0.0; K],
            current: None,
        }
    }

    fn build_panel(&self) -> CursorPanel<K> {
        let group = self.alpha.group();
        let h = self.rule.panel;
        let [alpha] = self.rule.fit(|u| [self.alpha.eval_reduced(&group.reduce_rep(&(self.anchor * exp_u(u * h))))], 1.0);
        let extras = if K == 0 {
            std::array::from_fn(|_| alpha.clone())
        } else {
            self.rule.fit(
                |u| {
                    let p = group.reduce_rep(&(self.anchor * exp_u(u * h)));
                    (self.extra)(&p, self.alpha.eval_reduced(&p), self.tau0 + h * alpha.integral_to(u))
                },
                1.0,
            )
        };
        CursorPanel { alpha, extras }
    }

    fn next_panel(&mut self) {
        let panel = self.current.take().unwrap_or_else(|| self.build_panel());
        let h = self.rule.panel;
        self.tau0 += h * panel.alpha.total();
        for (k, p) in panel.extras.iter().enumerate() {
            self.acc0[k] += h * p.total();
        }
        self.steps += 1;
        self.theta0 = self.steps as f64 * h;
        self.anchor = self.anchors.get(self.steps);
    }

    fn state_at(&self, panel: &CursorPanel<K>, u: f64) -> OrbitState<K> {
        let h = self.rule.panel;
        OrbitState {
            theta: self.theta0 + u * h,
            tau: self.tau0 + h * panel.alpha.integral_to(u),
            rep: self.alpha.group().reduce_rep(&(self.anchor * exp_u(u * h))),
            integrals: std::array::from_fn(|k| self.acc0[k] + h * panel.extras[k].integral_to(u)),
        }
    }

    /// Advances to the point where `τ = target`.
    pub fn advance_to_tau(&mut self, target: f64) -> OrbitState<K> {
        loop {
            let panel = self.current.take().unwrap_or_else(|| self.build_panel());
            let h = self.rule.panel;
            if self.tau0 + h * panel.alpha.total() >= target {
                let u = panel.alpha.invert_integral((target - self.tau0).max(0.0) / h);
                let state = self.state_at(&panel, u);
                self.current = Some(panel);
                return OrbitState { tau: target, ..state };
            }
            self.current = Some(panel);
            self.next_panel();
        }
    }

    /// Advances to `U`-time `theta`.
    pub fn advance_to_theta(&mut self, theta: f64) -> OrbitState<K> {
        while theta > self.theta0 + self.rule.panel {
            self.next_panel();
        }
        let panel = self.current.take().unwrap_or_else(|| self.build_panel());
        let state = self.state_at(&panel, ((theta - self.theta0) / self.rule.panel).max(0.0));
        self.current = Some(panel);
        state
    }
}

/// A cursor that only tracks `τ`.
pub fn plain_cursor<'a>(
    alpha: &'a TimeChange,
    rule: &'a PanelRule,
    start: &GroupElement,
) -> OrbitCursor<'a, 0, impl Fn(&GroupElement, f64, f64) -> [f64; 0]> {
    OrbitCursor::new(alpha, rule, start, |_: &GroupElement, _: f64, _: f64| [])
}

/* ---------- velocity and tangent flow, reference quadratures ---------- */

/// `(v_t(x,s), ∂v/∂s)` at one `s`, from the inverse cocycle and adaptive
/// Simpson along the orbit of `φ^X_s(x)`.
pub fn velocity_direct(x: &SurfacePoint, t: f64, s: f64, alpha: &TimeChange, cfg: &FlowConfig) -> Result<(f64, f64)> {
    let group = alpha.group();
    let y = group.reduce(&(x.rep * exp_x(s)))?;
    let t_big = big_t(&y, t, alpha, cfg)?;
    let [v, j] = orbit_integral(group, &y.rep, t_big, cfg.quad_tol, |p, _| {
        let j = alpha.jet_reduced(p, Direction::X, Direction::X);
        [j.e1 - j.re, j.e12 - j.e1]
    });
    let end = flow_homogeneous(group, &y, t_big, Direction::U)?;
    let (a, xa, _) = alpha.x_derivatives(&end.rep);
    Ok((v, -v * xa / a + j))
}

/// Components of `Dh^α_t(W)` in the frame `(U_α, V, X)` at `h^α_t(x)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TangentCoefficients {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

/// For `W = X`: `a = −∫₀ᵗ (Xα/α − 1)∘h^α_τ dτ`, `b = 0`, `c = 1`.
/// For `W = V`: `a = ∫₀ᵗ [−Vα/α + 2ϑ(τ)(Xα/α − 1)]∘h^α_τ dτ` with
/// `ϑ(τ) = ∫₀^τ 1/α∘h^α`, `b = 1`, `c = −2∫₀ᵗ 1/α∘h^α_τ dτ`.
pub fn tangent_coefficients(
    x: &SurfacePoint,
    t: f64,
    which: Direction,
    alpha: &TimeChange,
    cfg: &FlowConfig,
) -> Result<TangentCoefficients> {
    let group = alpha.group();
    let t_big = big_t(x, t, alpha, cfg)?;
    match which {
        Direction::X => {
            let [v] = orbit_integral(group, &x.rep, t_big, cfg.quad_tol, |p, _| {
                let j = alpha.jet_reduced(p, Direction::X, Direction::X);
                [j.e1 - j.re]
            });
            Ok(TangentCoefficients { a: -v, b: 0.0, c: 1.0 })
        }
        Direction::V => {
            let [a] = orbit_integral(group, &x.rep, t_big, cfg.quad_tol, |p, theta| {
                let j = alpha.jet_reduced(p, Direction::V, Direction::X);
                [-j.e1 + 2.0 * theta * (j.e2 - j.re)]
            });
            Ok(TangentCoefficients { a, b: 1.0, c: -2.0 * t_big })
        }
        Direction::U => Err(Error::InvalidArgument("tangent coefficients are defined for V and X".into())),
    }
}

/* ---------- pushed geodesic arcs ---------- */

/// Data at one point `γ(s) = h^α_t(φ^X_s x)` of a pushed arc.
#[derive(Debug, Clone, Copy)]
pub struct ArcPoint {
    pub s: f64,
    /// `T(φ^X_s x, t)`.
    pub t_big: f64,
    pub v: f64,
    pub dv: f64,
    pub rep: GroupElement,
    pub alpha: f64,
}

/// Discretization of an arc computation: Chebyshev pieces in `s` for the
/// sheet tables, the orbit rule along `η`, and the rule for integrals in `s`.
#[derive(Debug, Clone)]
pub struct ArcResolution {
    pub piece: f64,
    pub s_nodes: usize,
    pub orbit: PanelRule,
    pub arc: PanelRule,
    /// Whether `v` and `∂v/∂s` are computed; without them arc points carry
    /// NaN there and the sheet needs only values of `α`.
    pub velocity: bool,
}

impl ArcResolution {
    pub fn precise() -> Self {
        ArcResolution {
            piece: 1.0 / 32.0,
            s_nodes: 10,
            orbit: PanelRule::precise(),
            arc: PanelRule::new(16, 1.0, 1e-12, 10),
            velocity: true,
        }
    }

    pub fn fast() -> Self {
        ArcResolution {
            piece: 1.0 / 8.0,
            s_nodes: 8,
            orbit: PanelRule::fast(),
            arc: PanelRule::new(8, 1.0, 1e-7, 6),
            velocity: true,
        }
    }

    /// [`ArcResolution::fast`] without the velocity.
    pub fn positions() -> Self {
        ArcResolution { velocity: false, ..Self::fast() }
    }
}

struct SheetPiece {
    hi: f64,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    /// `[∫α, ∫(Xα − α), ∫(X²α − Xα)]` from 0 to `η = k`, per node and `k`.
    tables: Vec<Vec<[f64; 3]>>,
}

impl SheetPiece {
    fn interp_weights(&self, s: f64) -> Vec<f64> {
        if let Some(j) = self.nodes.iter().position(|&n| n == s) {
            let mut w = vec![0.0; self.nodes.len()];
            w[j] = 1.0;
            return w;
        }
        let raw: Vec<f64> = self.nodes.iter().zip(&self.weights).map(|(n, w)| w / (s - n)).collect();
        let total: f64 = raw.iter().sum();
        raw.iter().map(|r| r / total).collect()
    }

    fn cum(&self, w: &[f64], k: usize) -> [f64; 3] {
        let mut out = [0.0; 3];
        for (tab, wj) in self.tables.iter().zip(w) {
            for c in 0..3 {
                out[c] += wj * tab[k][c];
            }
        }
        out
    }
}

struct PanelFits {
    alpha: Piecewise,
    v: Option<[Piecewise; 2]>,
}

/// All points of a pushed arc, computed from integrals over the sheet
/// `x·exp(ηU)·exp(sX)`: since `exp(sX)exp(θU) = exp(θe^s U)exp(sX)`, the arc is
/// `γ(s) = x·exp(η(s)U)·exp(sX)` with `∫₀^{η(s)} α(x e^{ηU} e^{sX}) dη = t·e^s`.
/// The cumulative integrals at integer `η` are smooth in `s` and are
/// interpolated in `s` on short Chebyshev pieces; the last partial `η`-panel
/// is resolved directly at each `s`.
pub struct ArcSheet<'a> {
    alpha: &'a TimeChange,
    res: ArcResolution,
    t: f64,
    sigma: f64,
    anchors: Anchors<'a>,
    pieces: Vec<SheetPiece>,
}

impl<'a> ArcSheet<'a> {
    pub fn new(x: &SurfacePoint, t: f64, sigma: f64, alpha: &'a TimeChange, res: ArcResolution) -> Result<Self> {
        if !(t >= 0.0 && sigma > 0.0 && sigma <= 1.0) {
            return Err(Error::InvalidArgument(format!("arc needs t ≥ 0 and 0 < σ ≤ 1, got t={t}, σ={sigma}")));
        }
        let n_pieces = (sigma / res.piece).ceil() as usize;
        let len = sigma / n_pieces as f64;
        let m = res.s_nodes - 1;
        let mut sheet =
            ArcSheet { alpha, res, t, sigma, anchors: Anchors::new(alpha.group(), &x.rep, 1.0), pieces: Vec::new() };
        let mut raw = Vec::with_capacity(n_pieces);
        let mut k_max = 0;
        for p in 0..n_pieces {
            let (lo, hi) = (p as f64 * len, if p + 1 == n_pieces { sigma } else { (p + 1) as f64 * len });
            let nodes: Vec<f64> = (0..=m)
                .map(|j| lo + (hi - lo) * 0.5 * (1.0 - (std::f64::consts::PI * j as f64 / m as f64).cos()))
                .collect();
            let weights: Vec<f64> = (0..=m)
                .map(|j| {
                    let sgn = if j % 2 == 0 { 1.0 } else { -1.0 };
                    if j == 0 || j == m { 0.5 * sgn } else { sgn }
                })
                .collect();
            let mut tables = Vec::with_capacity(nodes.len());
            for &s in &nodes {
                let target = t * s.exp();
                let mut tab = vec![[0.0; 3]];
                // two panels beyond the crossing, as slack for interpolation
                let mut extra = 0;
                while extra < 2 {
                    sheet.extend(&mut tab, s);
                    if tab.last().expect("nonempty")[0] > target {
                        extra += 1;
                    }
                }
                k_max = k_max.max(tab.len() - 1);
                tables.push(tab);
            }
            raw.push(SheetPiece { hi, nodes, weights, tables });
        }
        for piece in &mut raw {
            for (tab, &s) in piece.tables.iter_mut().zip(&piece.nodes) {
                while tab.len() <= k_max {
                    sheet.extend(tab, s);
                }
            }
        }
        sheet.pieces = raw;
        Ok(sheet)
    }

    fn extend(&mut self, tab: &mut Vec<[f64; 3]>, s: f64) {
        let k = tab.len() - 1;
        let last = tab[k];
        let fits = self.panel_fits(k, s);
        let tot = [fits.alpha.total(), fits.v.as_ref().map_or(0.0, |v| v[0].total()), fits.v.as_ref().map_or(0.0, |v| v[1].total())];
        tab.push([last[0] + tot[0], last[1] + tot[1], last[2] + tot[2]]);
    }

    /// Fits of `α`, and of `Xα − α`, `X²α − Xα` if needed, on `η ∈ [k, k+1]`
    /// at `s`.
    fn panel_fits(&mut self, k: usize, s: f64) -> PanelFits {
        let group = self.alpha.group();
        let anchor = self.anchors.get(k);
        let shift = exp_x(s);
        let alpha = self.alpha;
        let point = |u: f64| group.reduce_rep(&(anchor * exp_u(u) * shift));
        if self.res.velocity {
            let [a, v, j] = self.res.orbit.fit(
                |u| {
                    let j = alpha.jet_reduced(&point(u), Direction::X, Direction::X);
                    [j.re, j.e1 - j.re, j.e12 - j.e1]
                },
                1.0,
            );
            PanelFits { alpha: a, v: Some([v, j]) }
        } else {
            let [a] = self.res.orbit.fit(|u| [alpha.eval_reduced(&point(u))], 1.0);
            PanelFits { alpha: a, v: None }
        }
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// The arc point at `s ∈ [0, σ]`.
    pub fn point(&mut self, s: f64) -> ArcPoint {
        let s = s.clamp(0.0, self.sigma);
        let group = self.alpha.group();
        if self.t == 0.0 {
            let rep = group.reduce_rep(&(self.anchors.get(0) * exp_x(s)));
            return ArcPoint { s, t_big: 0.0, v: 0.0, dv: 0.0, rep, alpha: self.alpha.eval_reduced(&rep) };
        }
        let p = self.pieces.iter().position(|pc| s <= pc.hi).unwrap_or(self.pieces.len() - 1);
        let w = self.pieces[p].interp_weights(s);
        let target = self.t * s.exp();
        let k_max = self.pieces[p].tables[0].len() - 1;
        // largest k with A_k(s) ≤ target
        let (mut lo, mut hi) = (0usize, k_max);
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if self.pieces[p].cum(&w, mid)[0] <= target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let mut k = lo;
        let mut base = self.pieces[p].cum(&w, k);
        let mut fits = self.panel_fits(k, s);
        while target - base[0] > fits.alpha.total() && k + 1 < k_max {
            k += 1;
            base = self.pieces[p].cum(&w, k);
            fits = self.panel_fits(k, s);
        }
        let u = fits.alpha.invert_integral(target - base[0]);
        let scale = (-s).exp();
        let rep = group.reduce_rep(&(self.anchors.at(k, u) * exp_x(s)));
        let t_big = (k as f64 + u) * scale;
        match &fits.v {
            Some([fv, fj]) => {
                let v = scale * (base[1] + fv.integral_to(u));
                let j = scale * (base[2] + fj.integral_to(u));
                let jet = self.alpha.jet_reduced(&rep, Direction::X, Direction::X);
                ArcPoint { s, t_big, v, dv: -v * jet.e1 / jet.re + j, rep, alpha: jet.re }
            }
            None => ArcPoint { s, t_big, v: f64::NAN, dv: f64::NAN, rep, alpha: self.alpha.eval_reduced(&rep) },
        }
    }
}

/// A pushed arc `γ^σ_{x,t}` with its quadrature panels in `s`.
#[derive(Debug, Clone)]
pub struct GeodesicArc {
    pub base: SurfacePoint,
    pub t: f64,
    pub sigma: f64,
    /// Panel boundaries, from 0 to σ.
    pub grid: Vec<f64>,
}

impl GeodesicArc {
    /// About one panel per unit of arc length (the arc moves at speed ≈ t).
    pub fn new(base: SurfacePoint, t: f64, sigma: f64) -> Self {
        let panels = ((sigma * (t.abs() + 1.0)).ceil() as usize).max(4);
        let grid = (0..=panels).map(|i| sigma * i as f64 / panels as f64).collect();
        GeodesicArc { base, t, sigma, grid }
    }
}

/// A function of `s ∈ [0, σ]` known through piecewise fits on the arc grid.
#[derive(Debug, Clone)]
pub struct ArcFunction {
    grid: Vec<f64>,
    pieces: Vec<Piecewise>,
    cum: Vec<f64>,
}

impl ArcFunction {
    fn new(grid: Vec<f64>, pieces: Vec<Piecewise>) -> Self {
        let mut cum = vec![0.0];
        for (w, p) in grid.windows(2).zip(&pieces) {
            cum.push(cum.last().expect("nonempty") + (w[1] - w[0]) * p.total());
        }
        ArcFunction { grid, pieces, cum }
    }

    fn locate(&self, s: f64) -> (usize, f64) {
        let i = self.grid[1..self.grid.len() - 1].partition_point(|b| *b <= s);
        (i, ((s - self.grid[i]) / (self.grid[i + 1] - self.grid[i])).clamp(0.0, 1.0))
    }

    pub fn eval(&self, s: f64) -> f64 {
        let (i, u) = self.locate(s);
        self.pieces[i].eval(u)
    }

    /// `∫₀^S`.
    pub fn integral_to(&self, s: f64) -> f64 {
        let (i, u) = self.locate(s);
        self.cum[i] + (self.grid[i + 1] - self.grid[i]) * self.pieces[i].integral_to(u)
    }

    pub fn total(&self) -> f64 {
        *self.cum.last().expect("nonempty")
    }

    /// `sup_S |∫₀^S|`, sampled at 8 points per piece.
    pub fn sup_abs_integral(&self) -> f64 {
        self.pieces
            .iter()
            .zip(self.grid.windows(2))
            .zip(&self.cum)
            .map(|((p, w), c)| {
                let h = w[1] - w[0];
                (0..=8).map(|j| (c + h * p.integral_to(j as f64 / 8.0)).abs()).fold(0.0, f64::max)
            })
            .fold(0.0, f64::max)
    }
}

/// Arc points computed on demand and cached, with adaptive integrals in `s`.
pub struct ArcSampling<'a> {
    pub arc: GeodesicArc,
    sheet: ArcSheet<'a>,
    cache: std::collections::HashMap<u64, ArcPoint>,
}

impl<'a> ArcSampling<'a> {
    pub fn new(arc: GeodesicArc, alpha: &'a TimeChange) -> Result<Self> {
        Self::with_resolution(arc, alpha, ArcResolution::precise())
    }

    pub fn with_resolution(arc: GeodesicArc, alpha: &'a TimeChange, res: ArcResolution) -> Result<Self> {
        let sheet = ArcSheet::new(&arc.base, arc.t, arc.sigma, alpha, res)?;
        Ok(ArcSampling { arc, sheet, cache: std::collections::HashMap::new() })
    }

    pub fn point(&mut self, s: f64) -> ArcPoint {
        if let Some(p) = self.cache.get(&s.to_bits()) {
            return *p;
        }
        let p = self.sheet.point(s);
        self.cache.insert(s.to_bits(), p);
        p
    }

    /// Adaptive fits of `K` functions of the arc point, with the tolerance
    /// scaled by `1 + t`.
    pub fn integrate<const K: usize>(&mut self, g: impl Fn(&ArcPoint) -> [f64; K]) -> [ArcFunction; K] {
        let scale = 1.0 + self.arc.t.abs();
        self.integrate_scaled(g, scale)
    }

    /// As [`ArcSampling::integrate`] with an explicit tolerance factor, for
    /// integrands that do not grow with `t`.
    pub fn integrate_scaled<const K: usize>(
        &mut self,
        g: impl Fn(&ArcPoint) -> [f64; K],
        scale: f64,
    ) -> [ArcFunction; K] {
        let grid = self.arc.grid.clone();
        let rule = self.sheet.res.arc.clone();
        let mut per: [Vec<Piecewise>; K] = std::array::from_fn(|_| Vec::with_capacity(grid.len() - 1));
        for w in grid.windows(2) {
            let fits = rule.fit(|u| g(&self.point(w[0] + u * (w[1] - w[0]))), scale);
            for (k, f) in fits.into_iter().enumerate() {
                per[k].push(f);
            }
        }
        per.map(|pieces| ArcFunction::new(grid.clone(), pieces))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VelocityProfile {
    pub s: Vec<f64>,
    pub v: Vec<f64>,
    pub dv: Vec<f64>,
}

/// `v_t(x,s)` and `∂v/∂s` on the arc grid.
pub fn velocity_profile(
    x: &SurfacePoint,
    t: f64,
    sigma: f64,
    alpha: &TimeChange,
    res: ArcResolution,
) -> Result<VelocityProfile> {
    let arc = GeodesicArc::new(*x, t, sigma);
    let mut sheet = ArcSheet::new(x, t, sigma, alpha, res)?;
    let pts: Vec<ArcPoint> = arc.grid.iter().map(|&s| sheet.point(s)).collect();
    Ok(VelocityProfile {
        s: arc.grid.clone(),
        v: pts.iter().map(|p| p.v).collect(),
        dv: pts.iter().map(|p| p.dv).collect(),
    })
}

/// Line integrals along a pushed arc.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArcIntegral {
    /// `∫_γ f Û_α = ∫₀^σ f(γ(s))·(−v(s)) ds`.
    pub integral: f64,
    /// `∫₀^σ f(γ(s)) ds`.
    pub average: f64,
    /// `sup_{S ≤ σ} |∫_{γ^S} f Û_α|`.
    pub sup_integral: f64,
    /// `sup_{S ≤ σ} |∫₀^S f(γ(s)) ds|`.
    pub sup_average: f64,
    /// `∫₀^σ |v| ds`, the `U_α`-length of the arc.
    pub u_length: f64,
}

pub fn arc_integral_on(f: &impl Field, sampling: &mut ArcSampling) -> ArcIntegral {
    let [fu, fa, len] = sampling.integrate(|p| {
        let v = f.eval(&p.rep);
        [-v * p.v, v, p.v.abs()]
    });
    ArcIntegral {
        integral: fu.total(),
        average: fa.total(),
        sup_integral: fu.sup_abs_integral(),
        sup_average: fa.sup_abs_integral(),
        u_length: len.total(),
    }
}

pub fn arc_integral(f: &impl Field, arc: &GeodesicArc, alpha: &TimeChange, res: ArcResolution) -> Result<ArcIntegral> {
    let mut sampling = ArcSampling::with_resolution(arc.clone(), alpha, res)?;
    Ok(arc_integral_on(f, &mut sampling))
}

/// `(∫₀^σ f(γ(s)) ds, sup_S |∫₀^S f(γ(s)) ds|)`; needs no velocity.
pub fn arc_average(f: &impl Field, arc: &GeodesicArc, alpha: &TimeChange, res: ArcResolution) -> Result<(f64, f64)> {
    let mut sampling = ArcSampling::with_resolution(arc.clone(), alpha, res)?;
    let [a] = sampling.integrate_scaled(|p| [f.eval(&p.rep)], 1.0);
    Ok((a.total(), a.sup_abs_integral()))
}

/* ---------- exact identities ---------- */

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdentityResidual {
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
}

impl IdentityResidual {
    fn new(lhs: f64, rhs: f64) -> Self {
        IdentityResidual { lhs, rhs, residual: lhs - rhs }
    }
}

/// Both sides of the coboundary arc identity
/// `∫_γ (U_α u) Û_α = u(γ(σ)) − u(γ(0)) − ∫₀^σ Xu(γ(s)) ds`.
/// The endpoints on the right come from the reference inverse cocycle, the
/// rest from the arc sampling.
pub fn coboundary_arc_identity(
    u: &Observable,
    arc: &GeodesicArc,
    alpha: &TimeChange,
    cfg: &FlowConfig,
) -> Result<IdentityResidual> {
    let group = alpha.group();
    let mut sampling = ArcSampling::new(arc.clone(), alpha)?;
    let [lhs, xu] = sampling.integrate(|p| {
        let j = u.jet_reduced(&p.rep, Direction::U, Direction::X);
        [-j.e1 / p.alpha * p.v, j.e2]
    });
    let start = flow_alpha(&arc.base, arc.t, alpha, cfg)?;
    let shifted = flow_homogeneous(group, &arc.base, arc.sigma, Direction::X)?;
    let end = flow_alpha(&shifted, arc.t, alpha, cfg)?;
    Ok(IdentityResidual::new(lhs.total(), u.eval(&end.rep) - u.eval(&start.rep) - xu.total()))
}

/// The integration-by-parts form of the arc average:
/// `A(σ) = (1/t)∫_γ fÛ_α + (v(σ)/t + 1)A(σ) − (1/t)∫₀^σ ∂v/∂s(S)·A(S) dS`
/// with `A(S) = ∫₀^S f(γ(s)) ds`.
pub fn arc_parts_identity(f: &impl Field, arc: &GeodesicArc, alpha: &TimeChange) -> Result<IdentityResidual> {
    let mut sampling = ArcSampling::new(arc.clone(), alpha)?;
    let [a, fu] = sampling.integrate(|p| {
        let v = f.eval(&p.rep);
        [v, -v * p.v]
    });
    let [dva] = sampling.integrate(|p| [p.dv * a.integral_to(p.s)]);
    let t = arc.t;
    let v_end = sampling.point(arc.sigma).v;
    let lhs = a.total();
    let rhs = fu.total() / t + (v_end / t + 1.0) * lhs - dva.total() / t;
    Ok(IdentityResidual::new(lhs, rhs))
}

/// The closed form of `∂v/∂s` against a central difference of `v` with step
/// `h`, both from [`velocity_direct`].
pub fn velocity_derivative_check(
    x: &SurfacePoint,
    t: f64,
    s: f64,
    alpha: &TimeChange,
    cfg: &FlowConfig,
    h: f64,
) -> Result<IdentityResidual> {
    let (_, dv) = velocity_direct(x, t, s, alpha, cfg)?;
    let (vp, _) = velocity_direct(x, t, s + h, alpha, cfg)?;
    let (vm, _) = velocity_direct(x, t, s - h, alpha, cfg)?;
    Ok(IdentityResidual::new(dv, (vp - vm) / (2.0 * h)))
}

/// [`tangent_coefficients`] and the same coefficients read off a central
/// difference of `h^α_t(x·exp(±εW))`. Both ends are compared on unreduced
/// lifts `y·exp(T(y,t)U)`, so no deck transformation enters.
pub fn tangent_jacobian_check(
    x: &SurfacePoint,
    t: f64,
    which: Direction,
    alpha: &TimeChange,
    cfg: &FlowConfig,
    eps: f64,
) -> Result<(TangentCoefficients, TangentCoefficients)> {
    let lift = |y: &GroupElement| -> Result<GroupElement> {
        let p = SurfacePoint { rep: *y, last_word_length: 0 };
        Ok(*y * exp_u(big_t(&p, t, alpha, cfg)?))
    };
    let base = lift(&x.rep)?;
    let a_end = alpha.eval(&base);
    let plus = base.inv() * lift(&(x.rep * exp_basis(eps, which)?))?;
    let minus = base.inv() * lift(&(x.rep * exp_basis(-eps, which)?))?;
    let d = |e: fn(&GroupElement) -> f64| (e(&plus) - e(&minus)) / (2.0 * eps);
    let fd = TangentCoefficients { a: a_end * d(|m| m.b), b: d(|m| m.c), c: 2.0 * d(|m| m.a) };
    Ok((tangent_coefficients(x, t, which, alpha, cfg)?, fd))
}

/// Monte Carlo report for the integration-by-parts correlation formula
/// `⟨f∘h^α_t, g⟩ = (1/σ)⟨F_σ, g∘φ^X_σ⟩ − (1/σ)∫₀^σ ⟨F_S, (Xg)∘φ^X_S⟩ dS`,
/// `F_S = ∫₀^S f∘h^α_t∘φ^X_s ds`, inner products in `L²(vol)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixingIdentityReport {
    pub lhs: Estimate,
    pub rhs: Estimate,
    pub residual: Estimate,
}

/// Each sample point of the arc is found by its own orbit cursor, so the two
/// sides share no quadrature.
pub fn mixing_identity_check(
    f: &impl Field,
    g: &Observable,
    t: f64,
    sigma: f64,
    alpha: &TimeChange,
    ensemble: usize,
    seed: u64,
) -> MixingIdentityReport {
    let group = alpha.group();
    let orbit = PanelRule::fast();
    let arc_rule = ChebRule::new(8);
    let panels = ((sigma * (t.abs() + 1.0)).ceil() as usize).max(4);
    let h = sigma / panels as f64;
    let [sl, sl2, sr, sr2, sd, sd2] = mc::sum_samples(ensemble, |i| {
        let x = group.haar_point(seed, i).rep;
        let mut acc = 0.0;
        let mut inner = 0.0;
        for p in 0..panels {
            let lo = p as f64 * h;
            let ss: Vec<f64> = arc_rule.nodes().iter().map(|u| lo + u * h).collect();
            let fvals: Vec<f64> = ss
                .iter()
                .map(|s| {
                    let y = group.reduce_rep(&(x * exp_x(*s)));
                    f.eval(&plain_cursor(alpha, &orbit, &y).advance_to_tau(t).rep)
                })
                .collect();
            let poly = arc_rule.fit(&fvals);
            let prod: Vec<f64> = ss
                .iter()
                .zip(arc_rule.nodes())
                .map(|(s, u)| (acc + h * poly.integral_to(*u)) * g.derivative(&(x * exp_x(*s)), Direction::X))
                .collect();
            inner += h * arc_rule.fit(&prod).total();
            acc += h * poly.total();
        }
        let rhs = (acc * g.eval(&(x * exp_x(sigma))) - inner) / sigma;
        let lhs = f.eval(&plain_cursor(alpha, &orbit, &x).advance_to_tau(t).rep) * g.eval(&x);
        let d = rhs - lhs;
        [lhs, lhs * lhs, rhs, rhs * rhs, d, d * d]
    });
    MixingIdentityReport {
        lhs: Estimate::from_moments(sl, sl2, ensemble),
        rhs: Estimate::from_moments(sr, sr2, ensemble),
        residual: Estimate::from_moments(sd, sd2, ensemble),
    }
}

/// Empirical smallness scales for arcs: `sigma_star` is the largest σ in
/// {1/16, 1/8, 1/4, 1/2} with `σ·sup|∂v/∂s|/t + sup|v/t + 1| < 0.9`, and
/// `t_star` the first `t` of the grid with `sup|v/t + 1| < 0.5`.
#[derive(Debug, Clone, PartialEq)]
pub struct ArcScales {
    pub sigma_star: Option<f64>,
    pub t_star: Option<f64>,
    /// `(t, sup|∂v/∂s|/t, sup|v/t + 1|)` per grid time.
    pub rows: Vec<(f64, f64, f64)>,
}

pub fn certify_arc_scales(
    alpha: &TimeChange,
    points: &[SurfacePoint],
    t_grid: &[f64],
    res: &ArcResolution,
) -> Result<ArcScales> {
    let sigmas = [1.0 / 16.0, 1.0 / 8.0, 1.0 / 4.0, 1.0 / 2.0];
    let mut rows = Vec::new();
    let mut dv_sup = [0.0f64; 4];
    let mut vel_sup = [0.0f64; 4];
    for &t in t_grid {
        let mut row_dv = 0.0f64;
        let mut row_vel = 0.0f64;
        for x in points {
            let prof = velocity_profile(x, t, 0.5, alpha, res.clone())?;
            for ((s, v), dv) in prof.s.iter().zip(&prof.v).zip(&prof.dv) {
                let a = dv.abs() / t;
                let b = (v / t + 1.0).abs();
                row_dv = row_dv.max(a);
                row_vel = row_vel.max(b);
                for (i, sig) in sigmas.iter().enumerate() {
                    if *s <= *sig + 1e-12 {
                        dv_sup[i] = dv_sup[i].max(a);
                        vel_sup[i] = vel_sup[i].max(b);
                    }
                }
            }
        }
        rows.push((t, row_dv, row_vel));
    }
    let sigma_star =
        sigmas.iter().enumerate().rev().find(|(i, sig)| *sig * dv_sup[*i] + vel_sup[*i] < 0.9).map(|(_, s)| *s);
    let t_star = rows.iter().find(|r| r.2 < 0.5).map(|r| r.0);
    Ok(ArcScales { sigma_star, t_star, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hyperbolic::{dist, exp_general, mobius, DiskPoint, LieVector};
    use crate::observables::Observable;
    use crate::surface::SpectralGapParams;
    use approx::assert_abs_diff_eq;

    fn setup(eps: f64) -> (FuchsianGroup, TimeChange) {
        let g = FuchsianGroup::bolza();
        let f0 = Observable::bump(&g, DiskPoint::from_polar_hyperbolic(1.0, 2.5), 1.0, 0).unwrap();
        let alpha = TimeChange::new(f0, eps, SpectralGapParams::bolza()).unwrap();
        (g, alpha)
    }

    #[test]
    fn homogeneous_flow_basics() {
        let (g, _) = setup(0.3);
        let x = g.haar_point(1, 0);
        assert!(flow_homogeneous(&g, &x, 0.0, Direction::U).unwrap().rep.approx_eq(&x.rep, 1e-15));
        for w in [Direction::U, Direction::V, Direction::X] {
            let a = flow_homogeneous(&g, &flow_homogeneous(&g, &x, 1.25, w).unwrap(), 2.5, w).unwrap();
            let b = flow_homogeneous(&g, &x, 3.75, w).unwrap();
            assert!(a.rep.approx_eq(&b.rep, 1e-10), "{w:?}");
        }
        let long = flow_homogeneous(&g, &x, 120.0, Direction::U).unwrap();
        assert!(g.is_reduced(&long.rep, 1e-12));
        assert!(flow_homogeneous(&g, &x, 2e6, Direction::U).is_err());
        // unit speed of the geodesic flow, measured on the lift
        for t in [0.1, 0.7, 1.4] {
            let lifted = x.rep * exp_x(t);
            let d = dist(&x.rep.basepoint(), &mobius(&lifted, &DiskPoint::ORIGIN).unwrap());
            assert_abs_diff_eq!(d, t, epsilon = 1e-12);
        }
    }

    #[test]
    fn simpson_is_accurate() {
        let [v] = adaptive_simpson(&mut |x: f64| [x.sin() * x.exp()], 0.0, 3.0, 1e-12, 2);
        let exact = 0.5 * (3.0f64.exp() * (3.0f64.sin() - 3.0f64.cos()) + 1.0);
        assert_abs_diff_eq!(v, exact, epsilon = 1e-11);
    }

    #[test]
    fn cocycle_contracts() {
        let (g, alpha) = setup(0.3);
        let cfg = FlowConfig::default();
        let unit = TimeChange::unit(&g, SpectralGapParams::bolza());
        for i in 0..5 {
            let x = g.haar_point(3, i);
            assert_eq!(tau(&x, 7.5, &unit, &cfg), 7.5);
            let (t1, t2) = (3.3, 5.9);
            let lhs = tau(&x, t1 + t2, &alpha, &cfg);
            let moved = flow_homogeneous(&g, &x, t1, Direction::U).unwrap();
            let rhs = tau(&x, t1, &alpha, &cfg) + tau(&moved, t2, &alpha, &cfg);
            assert!((lhs - rhs).abs() <= 2.0 * cfg.quad_tol * (1.0 + t1 + t2));
            let mut last = 0.0;
            for k in 1..20 {
                let v = tau(&x, 0.5 * k as f64, &alpha, &cfg);
                assert!(v > last);
                last = v;
            }
            // backward time
            let back = tau(&x, -4.0, &alpha, &cfg);
            let start = flow_homogeneous(&g, &x, -4.0, Direction::U).unwrap();
            assert!((back + tau(&start, 4.0, &alpha, &cfg)).abs() < 1e-7);
        }
    }

    #[test]
    fn inverse_cocycle_contracts() {
        let (g, alpha) = setup(0.3);
        let cfg = FlowConfig::default();
        let unit = TimeChange::unit(&g, SpectralGapParams::bolza());
        for i in 0..4 {
            let x = g.haar_point(5, i);
            for st in [0.0, 0.7, 13.0, 150.0] {
                assert!((big_t(&x, st, &unit, &cfg).unwrap() - st).abs() <= 1e-10);
                let t_big = big_t(&x, st, &alpha, &cfg).unwrap();
                assert!((tau(&x, t_big, &alpha, &cfg) - st).abs() <= cfg.newton_tol);
            }
            let t_big = big_t(&x, -6.0, &alpha, &cfg).unwrap();
            assert!(t_big < 0.0);
            assert!((tau(&x, t_big, &alpha, &cfg) + 6.0).abs() <= cfg.newton_tol);
        }
    }

    #[test]
    fn time_changed_flow_contracts() {
        let (g, alpha) = setup(0.3);
        let cfg = FlowConfig::default().with_tolerance(1e-12);
        let unit = TimeChange::unit(&g, SpectralGapParams::bolza());
        let x = g.haar_point(7, 0);
        assert!(flow_alpha(&x, 0.0, &alpha, &cfg).unwrap().rep.approx_eq(&x.rep, 0.0));
        let a = flow_alpha(&x, 9.0, &unit, &cfg).unwrap();
        let b = flow_homogeneous(&g, &x, 9.0, Direction::U).unwrap();
        assert!(a.rep.approx_eq(&b.rep, 1e-12));
        for (s, t) in [(3.0, 4.5), (40.0, 700.0), (1000.0, 1000.0)] {
            let two = flow_alpha(&flow_alpha(&x, s, &alpha, &cfg).unwrap(), t, &alpha, &cfg).unwrap();
            let one = flow_alpha(&x, s + t, &alpha, &cfg).unwrap();
            assert!(two.rep.approx_eq(&one.rep, 1e-8), "{s} {t}: {}", two.rep.distance_mod_sign(&one.rep));
        }
    }

    #[test]
    fn cursor_agrees_with_reference_inverse() {
        let (g, alpha) = setup(0.3);
        let cfg = FlowConfig::default().with_tolerance(1e-12);
        for (rule, tol) in [(PanelRule::precise(), 1e-10), (PanelRule::fast(), 1e-5)] {
            for i in 0..3 {
                let x = g.haar_point(11, i);
                let mut cur = plain_cursor(&alpha, &rule, &x.rep);
                for st in [0.5, 10.0, 80.0] {
                    let s = cur.advance_to_tau(st);
                    let reference = big_t(&x, st, &alpha, &cfg).unwrap();
                    assert!((s.theta - reference).abs() < tol * (1.0 + st), "{st}: {} vs {reference}", s.theta);
                }
            }
        }
        // extra integrals: ∫ α dθ over the orbit equals τ
        let rule = PanelRule::precise();
        let x = g.haar_point(13, 0);
        let mut cur = OrbitCursor::new(&alpha, &rule, &x.rep, |_, a, tau| [a, a * tau]);
        let s = cur.advance_to_tau(20.0);
        assert_abs_diff_eq!(s.integrals[0], 20.0, epsilon = 1e-11);
        assert_abs_diff_eq!(s.integrals[1], 200.0, epsilon = 1e-9);
        let back = cur.advance_to_theta(s.theta + 3.2);
        assert_abs_diff_eq!(back.theta, s.theta + 3.2, epsilon = 1e-12);
    }

    #[test]
    fn velocity_degenerations() {
        let (g, _) = setup(0.3);
        let unit = TimeChange::unit(&g, SpectralGapParams::bolza());
        let x = g.haar_point(17, 0);
        for t in [0.0, 3.0, 40.0] {
            let prof = velocity_profile(&x, t, 0.5, &unit, ArcResolution::precise()).unwrap();
            for (v, dv) in prof.v.iter().zip(&prof.dv) {
                assert!((v + t).abs() <= 1e-10 * (1.0 + t), "{v} vs {}", -t);
                assert!(dv.abs() <= 1e-10 * (1.0 + t));
            }
        }
        let (_, alpha) = setup(0.3);
        let prof = velocity_profile(&x, 0.0, 0.5, &alpha, ArcResolution::precise()).unwrap();
        assert!(prof.v.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn sheet_matches_direct_velocity() {
        let (g, alpha) = setup(0.3);
        let cfg = FlowConfig::default().with_tolerance(1e-12);
        for (i, t) in [(0u64, 5.0), (1, 60.0), (2, 400.0)] {
            let x = g.haar_point(19, i);
            let mut sheet = ArcSheet::new(&x, t, 0.5, &alpha, ArcResolution::precise()).unwrap();
            for s in [0.0, 0.123, 0.37, 0.5] {
                let p = sheet.point(s);
                let (v, dv) = velocity_direct(&x, t, s, &alpha, &cfg).unwrap();
                assert!((p.v - v).abs() < 1e-8 * (1.0 + t), "t={t} s={s}: {} vs {v}", p.v);
                assert!((p.dv - dv).abs() < 1e-7 * (1.0 + t), "t={t} s={s}: {} vs {dv}", p.dv);
                let y = flow_homogeneous(&g, &x, s, Direction::X).unwrap();
                let end = flow_alpha(&y, t, &alpha, &cfg).unwrap();
                assert!(p.rep.approx_eq(&end.rep, 1e-7), "t={t} s={s}");
            }
        }
    }

    #[test]
    fn velocity_derivative_matches_finite_differences() {
        let (g, alpha) = setup(0.3);
        let cfg = FlowConfig::default().with_tolerance(1e-13);
        for i in 0..6u64 {
            let x = g.haar_point(23, i);
            let t = 10.0;
            let s = 0.1 + 0.05 * i as f64;
            let (_, dv) = velocity_direct(&x, t, s, &alpha, &cfg).unwrap();
            let h = 1e-4;
            let (vp, _) = velocity_direct(&x, t, s + h, &alpha, &cfg).unwrap();
            let (vm, _) = velocity_direct(&x, t, s - h, &alpha, &cfg).unwrap();
            let fd = (vp - vm) / (2.0 * h);
            assert!((dv - fd).abs() <= 1e-4 * dv.abs().max(1.0), "{dv} vs {fd}");
        }
    }

    /// `h^α_t(x·exp(εW))` against `h^α_t(x)·exp(ε(aU/α + bV + cX))`, on lifts.
    #[test]
    fn tangent_flow_matches_jacobian() {
        let (g, alpha) = setup(0.3);
        let cfg = FlowConfig::default().with_tolerance(1e-13);
        let t = 5.0;
        let eps = 1e-5;
        for i in 0..3u64 {
            let x = g.haar_point(29, i);
            let lift = |y: &GroupElement| -> GroupElement {
                let p = SurfacePoint { rep: *y, last_word_length: 0 };
                *y * exp_u(big_t(&p, t, &alpha, &cfg).unwrap())
            };
            let base = lift(&x.rep);
            let a_end = alpha.eval(&base);
            for w in [Direction::X, Direction::V] {
                let plus = base.inv() * lift(&(x.rep * exp_basis(eps, w).unwrap()));
                let minus = base.inv() * lift(&(x.rep * exp_basis(-eps, w).unwrap()));
                let d = |e: fn(&GroupElement) -> f64| (e(&plus) - e(&minus)) / (2.0 * eps);
                let fd = TangentCoefficients { a: a_end * d(|m| m.b), b: d(|m| m.c), c: 2.0 * d(|m| m.a) };
                let tc = tangent_coefficients(&x, t, w, &alpha, &cfg).unwrap();
                for (p, q) in [(tc.a, fd.a), (tc.b, fd.b), (tc.c, fd.c)] {
                    assert!((p - q).abs() <= 1e-4 * p.abs().max(1.0), "{w:?}: {tc:?} vs {fd:?}");
                }
            }
        }
    }

    #[test]
    fn tangent_coefficients_degenerate_cases() {
        let (g, _) = setup(0.3);
        let unit = TimeChange::unit(&g, SpectralGapParams::bolza());
        let cfg = FlowConfig::default();
        let x = g.haar_point(31, 0);
        let z = tangent_coefficients(&x, 0.0, Direction::V, &unit, &cfg).unwrap();
        assert_eq!((z.a, z.b, z.c), (0.0, 1.0, 0.0));
        let tx = tangent_coefficients(&x, 4.0, Direction::X, &unit, &cfg).unwrap();
        assert_abs_diff_eq!(tx.a, 4.0, epsilon = 1e-12);
        let tv = tangent_coefficients(&x, 4.0, Direction::V, &unit, &cfg).unwrap();
        // Ad(exp(−tU))V = V − 2tX − t²U
        assert_abs_diff_eq!(tv.a, -16.0, epsilon = 1e-10);
        assert_abs_diff_eq!(tv.c, -8.0, epsilon = 1e-12);
        let w = LieVector::new(tv.a, tv.b, tv.c);
        let direct = exp_u(-4.0) * exp_general(&LieVector::new(0.0, 1.0, 0.0), 1e-6) * exp_u(4.0);
        assert!((direct.b / 1e-6 - w.u).abs() < 1e-4);
    }

    #[test]
    fn coboundary_arc_identity_holds() {
        let (g, alpha) = setup(0.3);
        let cfg = FlowConfig::default().with_tolerance(1e-12);
        let u = Observable::bump(&g, DiskPoint::from_polar_hyperbolic(0.9, -1.0), 1.0, 0).unwrap();
        for (i, t, sigma) in [(0u64, 3.0, 0.5), (1, 100.0, 0.5), (2, 30.0, 0.1)] {
            let arc = GeodesicArc::new(g.haar_point(37, i), t, sigma);
            let r = coboundary_arc_identity(&u, &arc, &alpha, &cfg).unwrap();
            assert!(r.residual.abs() <= 1e-6, "{r:?}");
        }
    }

    #[test]
    fn arc_parts_identity_holds() {
        let (g, alpha) = setup(0.3);
        let f = Observable::bump(&g, DiskPoint::from_polar_hyperbolic(1.3, 0.4), 1.0, 1).unwrap();
        for i in 0..3u64 {
            let arc = GeodesicArc::new(g.haar_point(41, i), 10.0, 0.5);
            let r = arc_parts_identity(&f, &arc, &alpha).unwrap();
            assert!(r.residual.abs() <= 1e-6, "{r:?}");
        }
    }

    #[test]
    fn arc_integral_trivia() {
        let (g, alpha) = setup(0.3);
        let arc = GeodesicArc::new(g.haar_point(43, 0), 20.0, 0.25);
        assert_eq!(arc.grid.first(), Some(&0.0));
        assert_eq!(arc.grid.last(), Some(&0.25));
        assert!(arc.grid.windows(2).all(|w| w[1] > w[0]));
        let zero = arc_integral(&Observable::zero(&g), &arc, &alpha, ArcResolution::precise()).unwrap();
        assert_eq!((zero.integral, zero.average), (0.0, 0.0));
        let one = arc_integral(&Observable::constant(&g, 1.0), &arc, &alpha, ArcResolution::precise()).unwrap();
        assert_abs_diff_eq!(one.average, 0.25, epsilon = 1e-13);
        assert_abs_diff_eq!(one.u_length, one.integral, epsilon = 1e-9);
    }

    #[test]
    fn mixing_identity_small_ensemble() {
        let (g, alpha) = setup(0.3);
        let f = Observable::bump(&g, DiskPoint::from_polar_hyperbolic(1.3, 0.4), 1.0, 1).unwrap();
        let gg = Observable::bump(&g, DiskPoint::from_polar_hyperbolic(0.5, -2.0), 1.0, 1).unwrap();
        let r = mixing_identity_check(&f, &gg, 10.0, 0.5, &alpha, 2000, 3);
        assert!(r.residual.within(0.0, 4.0), "{r:?}");
        let z = mixing_identity_check(&Observable::zero(&g), &gg, 10.0, 0.5, &alpha, 50, 3);
        assert_eq!((z.lhs.mean, z.rhs.mean), (0.0, 0.0));
    }
}
