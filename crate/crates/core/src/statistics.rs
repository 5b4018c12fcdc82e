//! Ensemble estimators: Birkhoff and twisted ergodic integrals, correlation
//! series, spectral densities, and log–log exponent fits.
//!
//! Sample `i` of an ensemble starts at `group.haar_point(seed, i)` and carries
//! the weight `α(x)`, so ensemble means are `vol_α` means. All sums go through
//! the chunked reductions of [`crate::mc`]; results depend only on the inputs
//! and the seed.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::flows::{arc_average, plain_cursor, ArcResolution, GeodesicArc, OrbitCursor, PanelRule};
use crate::mc::{self, Estimate};
use crate::observables::{Coboundary, Field, Observable, TimeChange};
use crate::surface::SurfacePoint;

/// Points with `|value| < 3·stderr` never enter a fit.
pub const NOISE_FLOOR_SIGMAS: f64 = 3.0;
pub const MIN_FIT_POINTS: usize = 4;
/// First sidelobe of the Hann window relative to its main lobe (−31.5 dB).
pub const HANN_SIDELOBE: f64 = 0.0267;

/// `t_k = 2^{k/2}` for `k_min ≤ k ≤ k_max`.
pub fn geometric_grid(k_min: u32, k_max: u32) -> Vec<f64> {
    (k_min..=k_max).map(|k| 2f64.powf(k as f64 / 2.0)).collect()
}

/// `0, dt, 2dt, …, t_max`.
pub fn uniform_grid(dt: f64, t_max: f64) -> Vec<f64> {
    let n = (t_max / dt).round() as usize;
    (0..=n).map(|k| k as f64 * dt).collect()
}

fn check_times(grid: &[f64]) -> Result<()> {
    if grid.iter().any(|t| !t.is_finite()) {
        return Err(Error::InvalidArgument("time grid has non-finite entries".into()));
    }
    Ok(())
}

/* ---------- exponent fits ---------- */

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesPoint {
    pub t: f64,
    pub value: f64,
    pub stderr: f64,
}

fn series_points(t: &[f64], values: &[f64], stderr: &[f64]) -> Vec<SeriesPoint> {
    t.iter().zip(values).zip(stderr).map(|((&t, &value), &stderr)| SeriesPoint { t, value, stderr }).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitWindow {
    pub t_min: f64,
    pub t_max: f64,
}

impl FitWindow {
    pub fn new(t_min: f64, t_max: f64) -> Self {
        FitWindow { t_min, t_max }
    }

    pub fn all() -> Self {
        FitWindow { t_min: 0.0, t_max: f64::INFINITY }
    }
}

/// `log|value| ≈ intercept + slope·log t` with a 95% confidence halfwidth on
/// the slope. `t_min`, `t_max` are the extreme times actually used.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExponentFit {
    pub slope: f64,
    pub intercept: f64,
    pub halfwidth: f64,
    pub t_min: f64,
    pub t_max: f64,
    /// Largest `3·stderr` among the points inside the window.
    pub noise_floor: f64,
    pub used: usize,
}

impl ExponentFit {
    pub fn constant(&self) -> f64 {
        self.intercept.exp()
    }

    pub fn upper(&self) -> f64 {
        self.slope + self.halfwidth
    }
}

/// The pass rule for a fitted exponent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExponentBound {
    /// The fitted slope is at most the bound.
    AtMost(f64),
    /// The upper end of the 95% slope interval is at most the bound.
    ConfidentlyAtMost(f64),
    /// The fitted slope is within `tol` of `target`.
    Within { target: f64, tol: f64 },
}

impl ExponentBound {
    pub fn holds(&self, fit: &ExponentFit) -> bool {
        match *self {
            ExponentBound::AtMost(b) => fit.slope <= b,
            ExponentBound::ConfidentlyAtMost(b) => fit.upper() <= b,
            ExponentBound::Within { target, tol } => (fit.slope - target).abs() <= tol,
        }
    }

    pub fn describe(&self) -> String {
        match *self {
            ExponentBound::AtMost(b) => format!("slope <= {b}"),
            ExponentBound::ConfidentlyAtMost(b) => format!("slope + halfwidth <= {b}"),
            ExponentBound::Within { target, tol } => format!("|slope - {target}| <= {tol}"),
        }
    }
}

/// Weighted least squares on `(log t, log|value|)`.
///
/// Only points inside the window with `t > 0` and `|value| ≥ 3·stderr` are
/// used. Weights are `1/σ²` with `σ = stderr/|value|` when every used point
/// has a positive error, and uniform otherwise. The slope variance is the
/// least-squares covariance scaled by the reduced χ² (not below 1 when the
/// weights come from errors), and the halfwidth uses the Student-t quantile
/// with `n − 2` degrees of freedom.
pub fn fit_loglog(points: &[SeriesPoint], window: FitWindow) -> Result<ExponentFit> {
    let inside: Vec<&SeriesPoint> = points
        .iter()
        .filter(|p| p.t > 0.0 && p.t >= window.t_min && p.t <= window.t_max)
        .filter(|p| p.value.is_finite() && p.stderr.is_finite())
        .collect();
    let noise_floor = inside.iter().map(|p| NOISE_FLOOR_SIGMAS * p.stderr).fold(0.0, f64::max);
    let used: Vec<&SeriesPoint> =
        inside.into_iter().filter(|p| p.value != 0.0 && p.value.abs() >= NOISE_FLOOR_SIGMAS * p.stderr).collect();
    if used.len() < MIN_FIT_POINTS {
        return Err(Error::InsufficientSignal { usable: used.len(), needed: MIN_FIT_POINTS });
    }
    let weighted = used.iter().all(|p| p.stderr > 0.0);
    let rows: Vec<(f64, f64, f64)> = used
        .iter()
        .map(|p| {
            let w = if weighted { (p.value / p.stderr).powi(2) } else { 1.0 };
            (p.t.ln(), p.value.abs().ln(), w)
        })
        .collect();
    let sum = |f: &dyn Fn(&(f64, f64, f64)) -> f64| mc::pairwise_sum(&rows.iter().map(f).collect::<Vec<_>>());
    let s = sum(&|r| r.2);
    let sx = sum(&|r| r.2 * r.0);
    let sy = sum(&|r| r.2 * r.1);
    // centred sums are better conditioned than the raw normal equations
    let (xm, ym) = (sx / s, sy / s);
    let sxx = sum(&|r| r.2 * (r.0 - xm).powi(2));
    let sxy = sum(&|r| r.2 * (r.0 - xm) * (r.1 - ym));
    let slope = sxy / sxx;
    let intercept = ym - slope * xm;
    let chi2 = sum(&|r| r.2 * (r.1 - intercept - slope * r.0).powi(2));
    let dof = (rows.len() - 2) as f64;
    let scale = if weighted { (chi2 / dof).max(1.0) } else { chi2 / dof };
    let quantile = StudentsT::new(0.0, 1.0, dof).expect("positive degrees of freedom").inverse_cdf(0.975);
    Ok(ExponentFit {
        slope,
        intercept,
        halfwidth: quantile * (scale / sxx).sqrt(),
        t_min: used.iter().map(|p| p.t).fold(f64::INFINITY, f64::min),
        t_max: used.iter().map(|p| p.t).fold(0.0, f64::max),
        noise_floor,
        used: used.len(),
    })
}

/// The decreasing upper envelope `E(t_k) = max_{j ≥ k} |value_j|` over the
/// points above the noise floor, carrying the error of the maximizing point.
/// Points after the last one above the floor are dropped. A bound
/// `E(t) ≤ C t^β` implies the same bound for `|value|`, and the envelope is
/// insensitive to sign changes of an oscillating series.
pub fn upper_envelope(points: &[SeriesPoint]) -> Vec<SeriesPoint> {
    let mut sorted: Vec<SeriesPoint> = points.iter().filter(|p| p.t > 0.0).copied().collect();
    sorted.sort_by(|a, b| a.t.total_cmp(&b.t));
    let mut out = Vec::with_capacity(sorted.len());
    let mut best: Option<SeriesPoint> = None;
    for p in sorted.iter().rev() {
        if p.value != 0.0 && p.value.abs() >= NOISE_FLOOR_SIGMAS * p.stderr && best.is_none_or(|b| p.value.abs() > b.value.abs()) {
            best = Some(*p);
        }
        if let Some(b) = best {
            out.push(SeriesPoint { t: p.t, value: b.value.abs(), stderr: b.stderr });
        }
    }
    out.reverse();
    out
}

/* ---------- Birkhoff integrals ---------- */

/// Per-𝒯 statistics of `B(x,𝒯) = ∫₀^𝒯 f∘h^α_τ(x) dτ` and of `T(x,𝒯) − 𝒯`.
#[derive(Debug, Clone, PartialEq)]
pub struct BirkhoffScan {
    pub t: Vec<f64>,
    pub sup: Vec<f64>,
    /// `‖B(·,𝒯)‖_{vol_α}` and its standard error.
    pub rms: Vec<f64>,
    pub rms_stderr: Vec<f64>,
    pub time_sup: Vec<f64>,
    pub time_rms: Vec<f64>,
    pub time_rms_stderr: Vec<f64>,
    pub ensemble: usize,
    pub seed: u64,
}

impl BirkhoffScan {
    pub fn sup_points(&self) -> Vec<SeriesPoint> {
        series_points(&self.t, &self.sup, &vec![0.0; self.t.len()])
    }

    pub fn rms_points(&self) -> Vec<SeriesPoint> {
        series_points(&self.t, &self.rms, &self.rms_stderr)
    }

    pub fn time_sup_points(&self) -> Vec<SeriesPoint> {
        series_points(&self.t, &self.time_sup, &vec![0.0; self.t.len()])
    }
}

/// `sqrt` of a mean-square estimate, with the delta-method error.
fn root(e: Estimate) -> (f64, f64) {
    let r = e.mean.max(0.0).sqrt();
    let se = if r > 0.0 { e.stderr / (2.0 * r) } else { e.stderr.sqrt() };
    (r, se)
}

/// Visits the grid in increasing order of `|t|` along one cursor.
fn sorted_order(grid: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..grid.len()).collect();
    order.sort_by(|&i, &j| grid[i].abs().total_cmp(&grid[j].abs()));
    order
}

pub fn birkhoff_scan(
    f: &impl Field,
    alpha: &TimeChange,
    ensemble: usize,
    t_grid: &[f64],
    seed: u64,
) -> Result<BirkhoffScan> {
    check_times(t_grid)?;
    if t_grid.iter().any(|t| *t < 0.0) {
        return Err(Error::InvalidArgument("Birkhoff times must be nonnegative".into()));
    }
    let group = alpha.group();
    let rule = PanelRule::fast();
    let n = t_grid.len();
    let order = sorted_order(t_grid);
    let stats = mc::row_stats(ensemble, 4 * n, |i| {
        let x = group.haar_point(seed, i);
        let a0 = alpha.eval_reduced(&x.rep);
        let mut cursor = OrbitCursor::new(alpha, &rule, &x.rep, |p, a, _| [f.eval(p) * a]);
        let mut row = vec![0.0; 4 * n];
        for &k in &order {
            let st = cursor.advance_to_tau(t_grid[k]);
            let (b, dev) = (st.integrals[0], st.theta - t_grid[k]);
            row[k] = b;
            row[n + k] = a0 * b * b;
            row[2 * n + k] = dev;
            row[3 * n + k] = a0 * dev * dev;
        }
        row
    });
    let (rms, rms_stderr): (Vec<f64>, Vec<f64>) = (0..n).map(|k| root(stats.estimate(n + k))).unzip();
    let (time_rms, time_rms_stderr): (Vec<f64>, Vec<f64>) = (0..n).map(|k| root(stats.estimate(3 * n + k))).unzip();
    Ok(BirkhoffScan {
        t: t_grid.to_vec(),
        sup: stats.max_abs[..n].to_vec(),
        rms,
        rms_stderr,
        time_sup: stats.max_abs[2 * n..3 * n].to_vec(),
        time_rms,
        time_rms_stderr,
        ensemble,
        seed,
    })
}

/* ---------- correlations ---------- */

/// `⟨f∘h^α_t, g⟩_{vol_α}` on a time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationSeries {
    pub t: Vec<f64>,
    pub values: Vec<f64>,
    pub stderr: Vec<f64>,
    pub ensemble: usize,
    pub seed: u64,
}

/// `∫ c(t)² dt` over `t ≥ 0`: the trapezoid sum over the grid plus a tail
/// `∫_{t_max}^∞ (C t^s)² dt` from a fitted power law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SquareIntegrability {
    pub partial: f64,
    pub tail: f64,
    pub finite: bool,
}

impl CorrelationSeries {
    pub fn points(&self) -> Vec<SeriesPoint> {
        series_points(&self.t, &self.values, &self.stderr)
    }

    /// The tail is finite when the fitted slope is below −1/2.
    pub fn square_integrability(&self, fit: &ExponentFit) -> SquareIntegrability {
        let mut pts: Vec<(f64, f64)> =
            self.t.iter().zip(&self.values).filter(|(t, _)| **t >= 0.0).map(|(t, v)| (*t, *v)).collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let partial = pts.windows(2).map(|w| 0.5 * (w[1].0 - w[0].0) * (w[0].1.powi(2) + w[1].1.powi(2))).sum();
        let t_max = pts.last().map_or(0.0, |p| p.0);
        let e = 2.0 * fit.slope + 1.0;
        let (tail, finite) = if e < 0.0 && t_max > 0.0 {
            (fit.constant().powi(2) * t_max.powf(e) / -e, true)
        } else {
            (f64::INFINITY, false)
        };
        SquareIntegrability { partial, tail, finite }
    }
}

/// `t ≥ 0`: mean of `α(x)·g(x)·f(h^α_t x)`. `t < 0`: mean of
/// `α(x)·f(x)·g(h^α_{|t|} x)`, using invariance of `vol_α`.
pub fn correlation_series(
    f: &impl Field,
    g: &impl Field,
    alpha: &TimeChange,
    ensemble: usize,
    t_grid: &[f64],
    seed: u64,
) -> Result<CorrelationSeries> {
    check_times(t_grid)?;
    let group = alpha.group();
    let rule = PanelRule::fast();
    let order = sorted_order(t_grid);
    let stats = mc::row_stats(ensemble, t_grid.len(), |i| {
        let x = group.haar_point(seed, i);
        let a0 = alpha.eval_reduced(&x.rep);
        let (fx, gx) = (f.eval(&x.rep), g.eval(&x.rep));
        let mut cursor = plain_cursor(alpha, &rule, &x.rep);
        let mut row = vec![0.0; t_grid.len()];
        for &k in &order {
            let t = t_grid[k];
            let p = cursor.advance_to_tau(t.abs()).rep;
            row[k] = if t >= 0.0 { a0 * gx * f.eval(&p) } else { a0 * fx * g.eval(&p) };
        }
        row
    });
    let est: Vec<Estimate> = (0..t_grid.len()).map(|k| stats.estimate(k)).collect();
    Ok(CorrelationSeries {
        t: t_grid.to_vec(),
        values: est.iter().map(|e| e.mean).collect(),
        stderr: est.iter().map(|e| e.stderr).collect(),
        ensemble,
        seed,
    })
}

/// Correlations of the coboundary `f = U_α u` against `g`.
pub fn coboundary_correlation(
    u: &Observable,
    g: &impl Field,
    alpha: &TimeChange,
    ensemble: usize,
    t_grid: &[f64],
    seed: u64,
) -> Result<CorrelationSeries> {
    let f = Coboundary::new(u.clone(), alpha.clone());
    correlation_series(&f, g, alpha, ensemble, t_grid, seed)
}

/// `‖f‖_{vol_α}`.
pub fn vol_alpha_norm(f: &impl Field, alpha: &TimeChange, ensemble: usize, seed: u64) -> (f64, f64) {
    let group = alpha.group();
    root(mc::mean_of(ensemble, |i| {
        let x = group.haar_point(seed, i);
        alpha.eval_reduced(&x.rep) * f.eval(&x.rep).powi(2)
    }))
}

/* ---------- twisted integrals ---------- */

/// A bounded weight `w(t)`.
#[derive(Debug, Clone, PartialEq)]
pub enum Weight {
    /// `e^{iξt}`.
    Exponential { xi: f64 },
    /// Samples at `0, dt, 2dt, …`, linearly interpolated and held constant
    /// past the last one.
    Samples { dt: f64, values: Vec<Complex64> },
}

impl Weight {
    pub fn at(&self, t: f64) -> Complex64 {
        match self {
            Weight::Exponential { xi } => Complex64::from_polar(1.0, xi * t),
            Weight::Samples { dt, values } => {
                let Some(last) = values.last() else { return Complex64::new(0.0, 0.0) };
                let u = (t / dt).max(0.0);
                let k = u.floor() as usize;
                if k + 1 >= values.len() {
                    return *last;
                }
                let r = u - k as f64;
                values[k] * (1.0 - r) + values[k + 1] * r
            }
        }
    }

    pub fn describe(&self) -> String {
        match self {
            Weight::Exponential { xi } => format!("exp(i*{xi}*t)"),
            Weight::Samples { dt, values } => format!("samples(dt={dt}, n={})", values.len()),
        }
    }
}

/// `‖∫₀^𝒯 w(τ) f∘h^α_τ dτ‖_{vol_α}` per 𝒯.
#[derive(Debug, Clone, PartialEq)]
pub struct TwistReport {
    pub t: Vec<f64>,
    pub norm: Vec<f64>,
    pub stderr: Vec<f64>,
    pub weight: Weight,
    pub ensemble: usize,
    pub seed: u64,
}

impl TwistReport {
    pub fn points(&self) -> Vec<SeriesPoint> {
        series_points(&self.t, &self.norm, &self.stderr)
    }
}

pub fn twisted_scan(
    f: &impl Field,
    alpha: &TimeChange,
    weight: &Weight,
    ensemble: usize,
    t_grid: &[f64],
    seed: u64,
) -> Result<TwistReport> {
    check_times(t_grid)?;
    if t_grid.iter().any(|t| *t < 0.0) {
        return Err(Error::InvalidArgument("twisted-integral times must be nonnegative".into()));
    }
    let group = alpha.group();
    let rule = PanelRule::fast();
    let order = sorted_order(t_grid);
    let stats = mc::row_stats(ensemble, t_grid.len(), |i| {
        let x = group.haar_point(seed, i);
        let a0 = alpha.eval_reduced(&x.rep);
        let mut cursor = OrbitCursor::new(alpha, &rule, &x.rep, |p, a, tau| {
            let v = f.eval(p) * a;
            let w = weight.at(tau);
            [w.re * v, w.im * v]
        });
        let mut row = vec![0.0; t_grid.len()];
        for &k in &order {
            let [re, im] = cursor.advance_to_tau(t_grid[k]).integrals;
            row[k] = a0 * (re * re + im * im);
        }
        row
    });
    let (norm, stderr) = (0..t_grid.len()).map(|k| root(stats.estimate(k))).unzip();
    Ok(TwistReport { t: t_grid.to_vec(), norm, stderr, weight: weight.clone(), ensemble, seed })
}

/* ---------- local dimension ---------- */

/// Fejér-window masses `(1/𝒯²)‖∫₀^𝒯 e^{iξτ} f∘h^α_τ dτ‖²` at `𝒯 = 1/δ` for
/// the coboundary `f = U_α u`, and the same masses for `u` itself.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalDimension {
    pub xi: f64,
    pub delta: Vec<f64>,
    pub mass: Vec<f64>,
    pub mass_stderr: Vec<f64>,
    pub mass_u: Vec<f64>,
    pub mass_u_stderr: Vec<f64>,
    pub ensemble: usize,
    pub seed: u64,
}

impl LocalDimension {
    pub fn points(&self) -> Vec<SeriesPoint> {
        series_points(&self.delta, &self.mass, &self.mass_stderr)
    }

    /// Masses of `μ_u` obtained from those of `μ_f` through `dμ_f = ξ² dμ_u`.
    pub fn mass_u_from_f(&self) -> Vec<f64> {
        self.mass.iter().map(|m| m / (self.xi * self.xi)).collect()
    }

    /// `mass_u_from_f / mass_u` per δ.
    pub fn rescaling_ratio(&self) -> Vec<f64> {
        self.mass_u_from_f().iter().zip(&self.mass_u).map(|(a, b)| a / b).collect()
    }
}

pub fn local_dimension(
    u: &Observable,
    alpha: &TimeChange,
    xi: f64,
    deltas: &[f64],
    ensemble: usize,
    seed: u64,
) -> Result<LocalDimension> {
    if xi == 0.0 || !xi.is_finite() {
        return Err(Error::InvalidArgument(format!("frequency must be nonzero, got {xi}")));
    }
    if deltas.iter().any(|d| !(*d > 0.0 && d.is_finite())) {
        return Err(Error::InvalidArgument("window halfwidths must be positive".into()));
    }
    let f = Coboundary::new(u.clone(), alpha.clone());
    let times: Vec<f64> = deltas.iter().map(|d| 1.0 / d).collect();
    let n = times.len();
    let group = alpha.group();
    let rule = PanelRule::fast();
    let order = sorted_order(&times);
    let stats = mc::row_stats(ensemble, 2 * n, |i| {
        let x = group.haar_point(seed, i);
        let a0 = alpha.eval_reduced(&x.rep);
        let mut cursor = OrbitCursor::new(alpha, &rule, &x.rep, |p, a, tau| {
            let w = Complex64::from_polar(a, xi * tau);
            let (fv, uv) = (f.eval(p), u.eval(p));
            [w.re * fv, w.im * fv, w.re * uv, w.im * uv]
        });
        let mut row = vec![0.0; 2 * n];
        for &k in &order {
            let [fr, fi, ur, ui] = cursor.advance_to_tau(times[k]).integrals;
            let t2 = times[k] * times[k];
            row[k] = a0 * (fr * fr + fi * fi) / t2;
            row[n + k] = a0 * (ur * ur + ui * ui) / t2;
        }
        row
    });
    let est: Vec<Estimate> = (0..2 * n).map(|k| stats.estimate(k)).collect();
    Ok(LocalDimension {
        xi,
        delta: deltas.to_vec(),
        mass: est[..n].iter().map(|e| e.mean).collect(),
        mass_stderr: est[..n].iter().map(|e| e.stderr).collect(),
        mass_u: est[n..].iter().map(|e| e.mean).collect(),
        mass_u_stderr: est[n..].iter().map(|e| e.stderr).collect(),
        ensemble,
        seed,
    })
}

/* ---------- spectral densities ---------- */

/// Density of `μ_f` from an even real correlation series on `0, Δt, …, L`:
/// `ρ(ξ) = (1/π) ∫₀^L w(t) c(t) cos(ξt) dt` with the half-Hann window
/// `w(t) = cos²(πt/2L)`, by the trapezoid rule.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralEstimate {
    pub xi: Vec<f64>,
    pub density: Vec<f64>,
    /// Sidelobe leakage: `HANN_SIDELOBE·max|ρ|`.
    pub leakage: f64,
    /// One standard error of `ρ` from the series errors, taken independent.
    pub noise: f64,
    /// Mass of the estimate over the band `|ξ| ≤ π/Δt`.
    pub total_mass: f64,
    /// The series value at `t = 0`.
    pub c0: f64,
    pub method: &'static str,
    times: Vec<f64>,
    coeffs: Vec<f64>,
}

impl SpectralEstimate {
    pub fn density_at(&self, xi: f64) -> f64 {
        self.times.iter().zip(&self.coeffs).map(|(t, a)| a * (xi * t).cos()).sum()
    }

    /// `∫_{ξ−δ}^{ξ+δ} ρ`, exactly for the trigonometric sum.
    pub fn window_mass(&self, xi: f64, delta: f64) -> f64 {
        self.times
            .iter()
            .zip(&self.coeffs)
            .map(|(&t, a)| {
                if t == 0.0 {
                    a * 2.0 * delta
                } else {
                    a * (((xi + delta) * t).sin() - ((xi - delta) * t).sin()) / t
                }
            })
            .sum()
    }

    /// Values of `ρ` above `−tolerance` are consistent with a positive measure.
    pub fn tolerance(&self) -> f64 {
        self.leakage + 3.0 * self.noise
    }

    pub fn is_nonnegative(&self) -> bool {
        self.density.iter().all(|d| *d >= -self.tolerance())
    }
}

pub fn spectral_estimate(series: &CorrelationSeries, xi: &[f64]) -> Result<SpectralEstimate> {
    let t = &series.t;
    if t.len() < 3 {
        return Err(Error::NonUniformGrid);
    }
    let dt = t[1] - t[0];
    let uniform = t[0].abs() <= 1e-12 * dt.abs()
        && dt > 0.0
        && t.iter().enumerate().all(|(k, s)| (s - k as f64 * dt).abs() <= 1e-9 * dt * (k as f64).max(1.0));
    if !uniform {
        return Err(Error::NonUniformGrid);
    }
    let l = *t.last().expect("nonempty");
    let last = t.len() - 1;
    let weight = |k: usize| {
        let q = if k == 0 || k == last { 0.5 * dt } else { dt };
        q * (PI * t[k] / (2.0 * l)).cos().powi(2) / PI
    };
    let coeffs: Vec<f64> = (0..t.len()).map(|k| weight(k) * series.values[k]).collect();
    let noise = (0..t.len()).map(|k| (weight(k) * series.stderr[k]).powi(2)).sum::<f64>().sqrt();
    let mut est = SpectralEstimate {
        xi: xi.to_vec(),
        density: Vec::new(),
        leakage: 0.0,
        noise,
        total_mass: 0.0,
        c0: series.values[0],
        method: "half-Hann windowed cosine transform",
        times: t.clone(),
        coeffs,
    };
    est.density = xi.iter().map(|x| est.density_at(*x)).collect();
    est.leakage = HANN_SIDELOBE * est.density.iter().fold(0.0f64, |m, d| m.max(d.abs()));
    est.total_mass = est.window_mass(0.0, PI / dt);
    Ok(est)
}

/// Halving the window length leaves a bounded density unchanged and halves
/// the height of an atom. `max_ratio` compares the two estimates where the
/// full-length one is above its tolerance.
#[derive(Debug, Clone, PartialEq)]
pub struct AbsoluteContinuity {
    pub band: (f64, f64),
    pub max_density: f64,
    pub min_density: f64,
    pub tolerance: f64,
    pub max_ratio: f64,
    pub bounded: bool,
}

/// Ratio above which the doubling test reports an atom.
pub const ATOM_RATIO: f64 = 1.5;

pub fn absolute_continuity(series: &CorrelationSeries, band: (f64, f64), points: usize) -> Result<AbsoluteContinuity> {
    let points = points.max(2);
    let xi: Vec<f64> = (0..points).map(|k| band.0 + (band.1 - band.0) * k as f64 / (points - 1) as f64).collect();
    let full = spectral_estimate(series, &xi)?;
    let m = (series.t.len() - 1) / 2;
    let half = CorrelationSeries {
        t: series.t[..=m].to_vec(),
        values: series.values[..=m].to_vec(),
        stderr: series.stderr[..=m].to_vec(),
        ..series.clone()
    };
    let half = spectral_estimate(&half, &xi)?;
    let tol = full.tolerance().max(half.tolerance());
    let max_ratio = full
        .density
        .iter()
        .zip(&half.density)
        .filter(|(d, _)| **d > tol)
        .map(|(d, h)| d / h.max(tol))
        .fold(0.0, f64::max);
    let max_density = full.density.iter().fold(f64::NEG_INFINITY, |m, d| m.max(*d));
    let min_density = full.density.iter().fold(f64::INFINITY, |m, d| m.min(*d));
    Ok(AbsoluteContinuity {
        band,
        max_density,
        min_density,
        tolerance: tol,
        max_ratio,
        bounded: max_density.is_finite() && min_density >= -tol && max_ratio < ATOM_RATIO,
    })
}

/* ---------- arc averages of coboundaries ---------- */

/// `sup_x |∫₀^σ U_α u(h^α_t φ^X_s x) ds|` per `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct ArcDecay {
    pub t: Vec<f64>,
    pub sup: Vec<f64>,
    pub sigma: f64,
    pub samples: usize,
}

impl ArcDecay {
    pub fn points(&self) -> Vec<SeriesPoint> {
        series_points(&self.t, &self.sup, &vec![0.0; self.t.len()])
    }

    pub fn fit(&self, window: FitWindow) -> Result<ExponentFit> {
        fit_loglog(&self.points(), window)
    }
}

pub fn arc_average_decay(
    u: &Observable,
    alpha: &TimeChange,
    sigma: f64,
    xs: &[SurfacePoint],
    t_grid: &[f64],
) -> Result<ArcDecay> {
    check_times(t_grid)?;
    if !(sigma > 0.0) {
        return Err(Error::InvalidArgument(format!("arc length must be positive, got {sigma}")));
    }
    let f = Coboundary::new(u.clone(), alpha.clone());
    let jobs: Vec<(usize, &SurfacePoint)> = (0..t_grid.len()).flat_map(|k| xs.iter().map(move |x| (k, x))).collect();
    let values: Vec<f64> = jobs
        .par_iter()
        .map(|&(k, x)| {
            let arc = GeodesicArc::new(*x, t_grid[k], sigma);
            arc_average(&f, &arc, alpha, ArcResolution::positions()).map(|(total, _)| total.abs())
        })
        .collect::<Result<_>>()?;
    let sup = (0..t_grid.len())
        .map(|k| values[k * xs.len()..(k + 1) * xs.len()].iter().fold(0.0, |m: f64, v| m.max(*v)))
        .collect();
    Ok(ArcDecay { t: t_grid.to_vec(), sup, sigma, samples: xs.len() })
}
