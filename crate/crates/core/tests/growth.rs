//! Growth and decay exponents on the Bolza surface at reduced cost; the full
//! versions run in the CLI acceptance target.

use horo_core::hyperbolic::DiskPoint;
use horo_core::observables::{project_zero_average, Coboundary, Observable, TimeChange};
use horo_core::statistics::{
    arc_average_decay, fit_loglog, geometric_grid, local_dimension, twisted_scan, FitWindow, Weight,
};
use horo_core::surface::{FuchsianGroup, SpectralGapParams};

fn setup() -> (FuchsianGroup, TimeChange, Observable, Observable) {
    let g = FuchsianGroup::bolza();
    let a = Observable::bump(&g, DiskPoint::from_polar_hyperbolic(1.0, 2.5), 1.0, 0).unwrap();
    let alpha = TimeChange::new(a, 0.3, SpectralGapParams::bolza()).unwrap();
    let f = project_zero_average(&Observable::bump(&g, DiskPoint::ORIGIN, 1.2, 0).unwrap(), &alpha, 20_000, 1);
    let u = Observable::bump(&g, DiskPoint::from_polar_hyperbolic(0.5, -1.0), 1.2, 0).unwrap();
    (g, alpha, f, u)
}

#[test]
fn fejer_masses_have_local_dimension_one() {
    let (_, alpha, _, u) = setup();
    let deltas: Vec<f64> = geometric_grid(8, 16).iter().map(|t| 1.0 / t).collect();
    let ld = local_dimension(&u, &alpha, 1.0, &deltas, 200, 9).unwrap();
    let fit = fit_loglog(&ld.points(), FitWindow::all()).unwrap();
    assert!((fit.slope - 1.0).abs() <= 0.15, "{fit:?}");
    let r = *ld.rescaling_ratio().last().unwrap();
    assert!((r - 1.0).abs() <= 0.3, "rescaling ratio {r}");
}

#[test]
fn twisted_integrals_grow_at_most_like_the_bound() {
    let (_, alpha, f, u) = setup();
    let grid = geometric_grid(12, 20);
    let w = Weight::Exponential { xi: 1.0 };
    let generic = twisted_scan(&f, &alpha, &w, 100, &grid, 5).unwrap();
    let fit = fit_loglog(&generic.points(), FitWindow::all()).unwrap();
    assert!(fit.slope <= 0.85, "{fit:?}");
    let cob = twisted_scan(&Coboundary::new(u, alpha.clone()), &alpha, &w, 100, &grid, 6).unwrap();
    let fit = fit_loglog(&cob.points(), FitWindow::all()).unwrap();
    assert!(fit.slope <= 0.65, "{fit:?}");
}

#[test]
fn coboundary_arc_averages_decay_like_one_over_t() {
    let (g, alpha, _, u) = setup();
    let xs = g.sample_haar(4, 5);
    let decay = arc_average_decay(&u, &alpha, 0.25, &xs, &geometric_grid(14, 26)).unwrap();
    let fit = decay.fit(FitWindow::all()).unwrap();
    assert!(fit.slope <= -0.9, "{fit:?}");
}
