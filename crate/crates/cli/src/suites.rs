//! The experiment suites. Each one computes tables and verdicts and touches
//! no files; the coordinator in `lib.rs` writes everything after the joins.

use std::time::Instant;

use horo_core::flows::{
    arc_parts_identity, big_t, coboundary_arc_identity, flow_alpha, flow_homogeneous, mixing_identity_check,
    tangent_jacobian_check, velocity_derivative_check, velocity_profile, ArcResolution, FlowConfig, GeodesicArc,
    TangentCoefficients,
};
use horo_core::hyperbolic::Direction;
use horo_core::observables::{project_zero_average, Coboundary, Observable, TimeChange};
use horo_core::rng::{derive_seed, stream};
use horo_core::statistics::{
    absolute_continuity, arc_average_decay, birkhoff_scan, coboundary_correlation, correlation_series,
    fit_loglog, geometric_grid, local_dimension, spectral_estimate, twisted_scan, uniform_grid, upper_envelope,
    ExponentBound, ExponentFit, FitWindow, SeriesPoint, Weight,
};
use horo_core::surface::FuchsianGroup;
use horo_core::Error;
use rand::Rng;

use crate::config::ExperimentConfig;
use crate::output::{Cell, Table};

/// Outcome of one assertion. The derived order is the severity order used
/// when verdicts are aggregated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Status {
    Pass,
    Inconclusive,
    Fail,
    Error,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Pass => 0,
            Status::Fail => 1,
            Status::Error => 2,
            Status::Inconclusive => 3,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Error => "ERROR",
            Status::Inconclusive => "INCONCLUSIVE",
        }
    }

    fn of(ok: bool) -> Self {
        if ok {
            Status::Pass
        } else {
            Status::Fail
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub experiment: String,
    pub value: f64,
    pub bound: String,
    pub status: Status,
}

/// One row of `fits.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct FitRow {
    pub experiment: String,
    pub fit: Option<ExponentFit>,
    pub bound: ExponentBound,
    pub status: Status,
}

#[derive(Debug, Clone)]
pub struct SuiteReport {
    pub name: &'static str,
    pub tables: Vec<Table>,
    pub fits: Vec<FitRow>,
    pub verdicts: Vec<Verdict>,
    pub seconds: f64,
}

impl SuiteReport {
    fn new(name: &'static str) -> Self {
        SuiteReport { name, tables: Vec::new(), fits: Vec::new(), verdicts: Vec::new(), seconds: 0.0 }
    }

    pub fn status(&self) -> Status {
        self.verdicts.iter().map(|v| v.status).max().unwrap_or(Status::Pass)
    }

    fn check(&mut self, experiment: impl Into<String>, value: f64, bound: impl Into<String>, ok: bool) {
        self.verdicts.push(Verdict { experiment: experiment.into(), value, bound: bound.into(), status: Status::of(ok) });
    }

    /// Fits a log–log slope; too few points above the noise floor make the
    /// verdict inconclusive, never a pass.
    fn fit(&mut self, experiment: &str, points: &[SeriesPoint], window: FitWindow, bound: ExponentBound) {
        let (fit, status) = match fit_loglog(points, window) {
            Ok(fit) => (Some(fit), Status::of(bound.holds(&fit))),
            Err(Error::InsufficientSignal { .. }) => (None, Status::Inconclusive),
            Err(_) => (None, Status::Error),
        };
        self.fits.push(FitRow { experiment: experiment.into(), fit, bound, status });
        self.verdicts.push(Verdict {
            experiment: experiment.into(),
            value: fit.map_or(f64::NAN, |f| f.slope),
            bound: match fit {
                Some(f) => format!("{} (halfwidth {:.3})", bound.describe(), f.halfwidth),
                None => bound.describe(),
            },
            status,
        });
    }
}

/// The suites, in dependency order.
pub const SUITES: [&str; 5] = ["identities", "equidist", "mixing", "twisted", "spectrum"];

const SALT_F: u64 = 1;
const SALT_G: u64 = 2;
const SALT_IDENTITIES: u64 = 10;
const SALT_EQUIDIST: u64 = 20;
const SALT_MIXING: u64 = 30;
const SALT_TWISTED: u64 = 40;
const SALT_SPECTRUM: u64 = 50;

/// Observables shared by the suites. `f` and `g` are projected to
/// `vol_α`-average zero by quadrature.
pub struct Context {
    pub cfg: ExperimentConfig,
    pub alpha: TimeChange,
    pub f: Observable,
    pub g: Observable,
    pub u: Observable,
}

impl Context {
    pub fn new(cfg: ExperimentConfig) -> horo_core::Result<Self> {
        let group = FuchsianGroup::bolza();
        let alpha = cfg.time_change(&group)?;
        let n = cfg.zero_average_n;
        let f = project_zero_average(&cfg.f.build(&group)?, &alpha, n, derive_seed(cfg.seed, SALT_F));
        let g = project_zero_average(&cfg.g.build(&group)?, &alpha, n, derive_seed(cfg.seed, SALT_G));
        let u = cfg.u.build(&group)?;
        Ok(Context { cfg, alpha, f, g, u })
    }

    fn seed(&self, salt: u64) -> u64 {
        derive_seed(self.cfg.seed, salt)
    }

    fn group(&self) -> &FuchsianGroup {
        self.alpha.group()
    }

    pub fn run(&self, suite: &str) -> horo_core::Result<SuiteReport> {
        let start = Instant::now();
        let mut report = match suite {
            "identities" => self.identities(),
            "equidist" => self.equidist(),
            "mixing" => self.mixing(),
            "twisted" => self.twisted(),
            "spectrum" => self.spectrum(),
            other => return Err(Error::InvalidArgument(format!("unknown suite `{other}`"))),
        }?;
        report.seconds = start.elapsed().as_secs_f64();
        Ok(report)
    }

    /* ---------- identities ---------- */

    fn identities(&self) -> horo_core::Result<SuiteReport> {
        let p = &self.cfg.identities;
        let group = self.group();
        let alpha = &self.alpha;
        let seed = self.seed(SALT_IDENTITIES);
        let cfg = FlowConfig::default().with_tolerance(1e-13);
        let mut report = SuiteReport::new("identities");
        let mut table = Table::new("identities.csv", &["identity_id", "t", "sigma", "residual", "tolerance", "pass"]);
        let mut worst: Vec<(String, f64, f64)> = Vec::new();
        let mut row = |id: &str, t: f64, sigma: f64, residual: f64, tol: f64| {
            let ok = residual.abs() <= tol;
            table.push(vec![id.into(), t.into(), sigma.into(), residual.into(), tol.into(), Cell::Text(ok.to_string())]);
            match worst.iter_mut().find(|w| w.0 == id) {
                Some(w) if residual.abs() / tol > w.1 / w.2 => *w = (id.into(), residual.abs(), tol),
                Some(_) => {}
                None => worst.push((id.into(), residual.abs(), tol)),
            }
        };

        // [X,U] = U and [U,V] = 2X on the observable u, by jets.
        for i in 0..p.fd_points as u64 * 25 {
            let x = group.haar_point(seed, i).rep;
            let u = &self.u;
            let uf = u.derivative(&x, Direction::U);
            let xu = u.second_derivative(&x, Direction::X, Direction::U) - u.second_derivative(&x, Direction::U, Direction::X);
            row("bracket_xu", 0.0, 0.0, (xu - uf) / uf.abs().max(1.0), 1e-6);
            let xf = u.derivative(&x, Direction::X);
            let uv = u.second_derivative(&x, Direction::U, Direction::V) - u.second_derivative(&x, Direction::V, Direction::U);
            row("bracket_uv", 0.0, 0.0, (uv - 2.0 * xf) / xf.abs().max(1.0), 1e-6);
        }

        // tangent pushforward and ∂v/∂s against finite differences
        let relative = |a: &TangentCoefficients, b: &TangentCoefficients| {
            [(a.a, b.a), (a.b, b.b), (a.c, b.c)].iter().map(|(p, q)| (p - q).abs() / p.abs().max(1.0)).fold(0.0, f64::max)
        };
        for i in 0..p.fd_points as u64 {
            let x = group.haar_point(derive_seed(seed, 1), i);
            for (id, which) in [("tangent_x", Direction::X), ("tangent_v", Direction::V)] {
                let (formula, fd) = tangent_jacobian_check(&x, p.fd_t, which, alpha, &cfg, 1e-5)?;
                row(id, p.fd_t, 0.0, relative(&formula, &fd), p.fd_tolerance);
            }
            let s = p.sigma * (i as f64 + 0.5) / p.fd_points as f64;
            let r = velocity_derivative_check(&x, p.fd_t, s, alpha, &cfg, 1e-4)?;
            row("velocity_derivative", p.fd_t, s, r.residual / r.lhs.abs().max(1.0), p.fd_tolerance);
        }

        // coboundary arc identity on arcs with t log-uniform in [1, t_max]
        let arcs: Vec<GeodesicArc> = (0..p.arcs as u64)
            .map(|i| {
                let t = (stream(derive_seed(seed, 2), i).random::<f64>() * p.t_max.ln()).exp();
                GeodesicArc::new(group.haar_point(derive_seed(seed, 3), i), t, p.sigma)
            })
            .collect();
        for arc in &arcs {
            let r = coboundary_arc_identity(&self.u, arc, alpha, &cfg)?;
            row("coboundary_arc", arc.t, arc.sigma, r.residual, p.tolerance);
        }
        for arc in arcs.iter().take(p.fd_points) {
            let r = arc_parts_identity(&self.f, arc, alpha)?;
            row("arc_parts", arc.t, arc.sigma, r.residual, p.tolerance);
        }

        let m = mixing_identity_check(
            &self.f,
            &self.g,
            p.mixing_t,
            p.mixing_sigma,
            alpha,
            p.mixing_ensemble,
            derive_seed(seed, 4),
        );
        row("mixing_formula", p.mixing_t, p.mixing_sigma, m.residual.mean, p.mixing_sigmas * m.residual.stderr);

        if self.cfg.epsilon == 0.0 {
            let exact = 1e-10;
            for i in 0..p.degenerate_points as u64 {
                let x = group.haar_point(derive_seed(seed, 5), i);
                for t in [1.0, 10.0, 100.0, p.degenerate_t] {
                    row("degenerate_T", t, 0.0, big_t(&x, t, alpha, &cfg)? - t, exact);
                    let a = flow_alpha(&x, t, alpha, &cfg)?;
                    let h = flow_homogeneous(group, &x, t, Direction::U)?;
                    row("degenerate_flow", t, 0.0, a.rep.distance_mod_sign(&h.rep), exact);
                }
                let t = p.degenerate_t;
                let prof = velocity_profile(&x, t, p.sigma, alpha, ArcResolution::precise())?;
                let dev = prof.v.iter().map(|v| v + t).fold(0.0f64, |m, d| if d.abs() > m.abs() { d } else { m });
                row("degenerate_v", t, p.sigma, dev, exact);
            }
        }

        for (id, residual, tol) in worst {
            report.check(format!("identity_{id}"), residual, format!("|residual| <= {tol:.3e}"), residual <= tol);
        }
        report.tables.push(table);
        Ok(report)
    }

    /* ---------- equidistribution ---------- */

    fn equidist(&self) -> horo_core::Result<SuiteReport> {
        let p = &self.cfg.equidist;
        let scan = birkhoff_scan(&self.f, &self.alpha, p.ensemble, &geometric_grid(p.k_min, p.k_max), self.seed(SALT_EQUIDIST))?;
        let zeros = vec![0.0; scan.t.len()];
        let mut report = SuiteReport::new("equidist");
        report.tables.push(Table::series("equidist_birkhoff_sup.csv", &scan.t, &scan.sup, &zeros));
        report.tables.push(Table::series("equidist_birkhoff_rms.csv", &scan.t, &scan.rms, &scan.rms_stderr));
        report.tables.push(Table::series("equidist_time_sup.csv", &scan.t, &scan.time_sup, &zeros));
        report.tables.push(Table::series("equidist_time_rms.csv", &scan.t, &scan.time_rms, &scan.time_rms_stderr));
        let bound = ExponentBound::ConfidentlyAtMost(p.bound);
        report.fit("equidist_birkhoff_sup", &scan.sup_points(), FitWindow::all(), bound);
        report.fit("equidist_time_sup", &scan.time_sup_points(), FitWindow::all(), bound);
        Ok(report)
    }

    /* ---------- mixing ---------- */

    fn mixing(&self) -> horo_core::Result<SuiteReport> {
        let p = &self.cfg.mixing;
        let alpha = &self.alpha;
        let seed = self.seed(SALT_MIXING);
        let mut grid = vec![0.0];
        grid.extend(geometric_grid(0, p.k_max));
        let window = FitWindow::new(p.t_min, f64::INFINITY);
        let mut report = SuiteReport::new("mixing");

        let generic = correlation_series(&self.f, &self.g, alpha, p.ensemble, &grid, seed)?;
        report.tables.push(Table::series("mixing_generic.csv", &generic.t, &generic.values, &generic.stderr));
        report.fit("mixing_generic", &upper_envelope(&generic.points()), window, ExponentBound::AtMost(p.bound));

        let cob_field = Coboundary::new(self.u.clone(), alpha.clone());
        let mut fine = vec![0.0];
        fine.extend((0..=p.coboundary_k_max).map(|k| 2f64.powf(k as f64 / 4.0)));
        let cob = coboundary_correlation(&self.u, &cob_field, alpha, p.coboundary_ensemble, &fine, derive_seed(seed, 1))?;
        report.tables.push(Table::series("mixing_coboundary.csv", &cob.t, &cob.values, &cob.stderr));
        let envelope = upper_envelope(&cob.points());
        report.fit("mixing_coboundary", &envelope, window, ExponentBound::AtMost(p.coboundary_bound));
        match fit_loglog(&envelope, window) {
            Ok(fit) => {
                let l2 = cob.square_integrability(&fit);
                report.check("mixing_coboundary_tail_l2", l2.partial + l2.tail, "finite", l2.finite);
            }
            Err(_) => report.verdicts.push(Verdict {
                experiment: "mixing_coboundary_tail_l2".into(),
                value: f64::NAN,
                bound: "finite".into(),
                status: Status::Inconclusive,
            }),
        }

        let xs = self.group().sample_haar(p.arc_samples, derive_seed(seed, 2));
        let decay = arc_average_decay(&self.u, alpha, p.arc_sigma, &xs, &geometric_grid(p.arc_k_min, p.arc_k_max))?;
        report.tables.push(Table::series("mixing_arc_decay.csv", &decay.t, &decay.sup, &vec![0.0; decay.t.len()]));
        report.fit("mixing_arc_decay", &decay.points(), FitWindow::all(), ExponentBound::AtMost(p.arc_bound));
        Ok(report)
    }

    /* ---------- twisted integrals ---------- */

    fn twisted(&self) -> horo_core::Result<SuiteReport> {
        let p = &self.cfg.twisted;
        let alpha = &self.alpha;
        let seed = self.seed(SALT_TWISTED);
        let grid = geometric_grid(p.k_min, p.k_max);
        let weight = Weight::Exponential { xi: p.xi };
        let mut report = SuiteReport::new("twisted");

        let generic = twisted_scan(&self.f, alpha, &weight, p.ensemble, &grid, seed)?;
        report.tables.push(Table::series("twisted_generic.csv", &generic.t, &generic.norm, &generic.stderr));
        report.fit("twisted_generic", &generic.points(), FitWindow::all(), ExponentBound::AtMost(p.bound));

        let cob_field = Coboundary::new(self.u.clone(), alpha.clone());
        let cob = twisted_scan(&cob_field, alpha, &weight, p.ensemble, &grid, derive_seed(seed, 1))?;
        report.tables.push(Table::series("twisted_coboundary.csv", &cob.t, &cob.norm, &cob.stderr));
        report.fit("twisted_coboundary", &cob.points(), FitWindow::all(), ExponentBound::AtMost(p.coboundary_bound));
        Ok(report)
    }

    /* ---------- spectrum ---------- */

    fn spectrum(&self) -> horo_core::Result<SuiteReport> {
        let p = &self.cfg.spectrum;
        let alpha = &self.alpha;
        let seed = self.seed(SALT_SPECTRUM);
        let mut report = SuiteReport::new("spectrum");

        let cob_field = Coboundary::new(self.u.clone(), alpha.clone());
        let series = coboundary_correlation(&self.u, &cob_field, alpha, p.ensemble, &uniform_grid(p.dt, p.t_max), seed)?;
        report.tables.push(Table::series("spectrum_autocorrelation.csv", &series.t, &series.values, &series.stderr));

        let points = p.points.max(2);
        let xi: Vec<f64> =
            (0..points).map(|k| p.band.0 + (p.band.1 - p.band.0) * k as f64 / (points - 1) as f64).collect();
        let est = spectral_estimate(&series, &xi)?;
        let mut density = Table::new("spectrum_density.csv", &["xi", "density", "tolerance"]);
        for (x, d) in est.xi.iter().zip(&est.density) {
            density.push(vec![(*x).into(), (*d).into(), est.tolerance().into()]);
        }
        report.tables.push(density);
        let ac = absolute_continuity(&series, p.band, points)?;
        report.check("spectrum_nonnegative", ac.min_density, format!(">= -{:.3e}", ac.tolerance), ac.min_density >= -ac.tolerance);
        report.check("spectrum_absolute_continuity", ac.max_ratio, "doubling ratio < 1.5", ac.bounded);

        let deltas: Vec<f64> = geometric_grid(p.ld_k_min, p.ld_k_max).iter().map(|t| 1.0 / t).collect();
        for (i, &xi) in p.xi.iter().enumerate() {
            let ld = local_dimension(&self.u, alpha, xi, &deltas, p.ld_ensemble, derive_seed(seed, 1 + i as u64))?;
            let name = format!("local_dimension_xi{xi}");
            let ratio = ld.rescaling_ratio();
            let mut table =
                Table::new(format!("{name}.csv"), &["delta", "mass", "stderr", "mass_u", "mass_u_stderr", "rescaling_ratio"]);
            for k in 0..ld.delta.len() {
                table.push(vec![
                    ld.delta[k].into(),
                    ld.mass[k].into(),
                    ld.mass_stderr[k].into(),
                    ld.mass_u[k].into(),
                    ld.mass_u_stderr[k].into(),
                    ratio[k].into(),
                ]);
            }
            report.tables.push(table);
            report.fit(&name, &ld.points(), FitWindow::all(), ExponentBound::Within { target: p.ld_target, tol: p.ld_tolerance });
            // at the narrowest window, where the masses are closest to the densities
            let r = ratio.last().copied().unwrap_or(f64::NAN);
            let tol = p.rescaling_tolerance;
            report.check(format!("rescaling_xi{xi}"), r, format!("|ratio - 1| <= {tol}"), (r - 1.0).abs() <= tol);
        }
        Ok(report)
    }
}
