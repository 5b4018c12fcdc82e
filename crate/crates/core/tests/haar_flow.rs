//! Haar measure is invariant under the horocycle flow: a two-sample
//! chi-square test on 64 cells of the unit tangent bundle.

use std::f64::consts::PI;

use horo_core::flows::flow_homogeneous;
use horo_core::hyperbolic::{Direction, GroupElement};
use horo_core::surface::FuchsianGroup;

const N: usize = 100_000;
/// 99th percentile of chi-square with 63 degrees of freedom.
const CHI2_63_99: f64 = 92.01;

struct Cells {
    radial: [f64; 3],
}

impl Cells {
    /// Radial cut points at the quartiles of a reference sample.
    fn new(reference: &[GroupElement]) -> Self {
        let mut r: Vec<f64> = reference.iter().map(|g| g.cosh_displacement()).collect();
        r.sort_by(f64::total_cmp);
        let q = |p: f64| r[(p * r.len() as f64) as usize];
        Cells { radial: [q(0.25), q(0.5), q(0.75)] }
    }

    /// 4 basepoint sectors × 4 radial shells × 4 frame angles.
    fn index(&self, g: &GroupElement) -> usize {
        let z = g.basepoint();
        let sector = ((z.im.atan2(z.re).rem_euclid(2.0 * PI) / (PI / 2.0)) as usize).min(3);
        let shell = self.radial.iter().filter(|c| g.cosh_displacement() > **c).count();
        let frame = ((g.frame_angle().rem_euclid(2.0 * PI) / (PI / 2.0)) as usize).min(3);
        16 * sector + 4 * shell + frame
    }

    fn counts(&self, sample: &[GroupElement]) -> [f64; 64] {
        let mut c = [0.0; 64];
        for g in sample {
            c[self.index(g)] += 1.0;
        }
        c
    }
}

fn two_sample_chi2(a: &[f64; 64], b: &[f64; 64]) -> f64 {
    let (na, nb) = (a.iter().sum::<f64>(), b.iter().sum::<f64>());
    let (ka, kb) = ((nb / na).sqrt(), (na / nb).sqrt());
    a.iter().zip(b).filter(|(x, y)| **x + **y > 0.0).map(|(x, y)| (ka * x - kb * y).powi(2) / (x + y)).sum()
}

#[test]
fn haar_is_invariant_under_the_horocycle_flow() {
    let group = FuchsianGroup::bolza();
    let reference: Vec<GroupElement> = group.sample_haar(N, 101).iter().map(|p| p.rep).collect();
    let cells = Cells::new(&reference);
    let expected = cells.counts(&reference);
    assert!(expected.iter().all(|c| *c > 500.0), "cells are too unbalanced: {expected:?}");

    for t in [0.5, 3.0, 10.0] {
        let moved: Vec<GroupElement> = group
            .sample_haar(N, 202)
            .iter()
            .map(|p| flow_homogeneous(&group, p, t, Direction::U).unwrap().rep)
            .collect();
        let chi2 = two_sample_chi2(&expected, &cells.counts(&moved));
        assert!(chi2 < CHI2_63_99, "t = {t}: chi-square {chi2}");
    }
}

#[test]
fn the_chi_square_test_detects_a_biased_sample() {
    let group = FuchsianGroup::bolza();
    let reference: Vec<GroupElement> = group.sample_haar(N, 101).iter().map(|p| p.rep).collect();
    let cells = Cells::new(&reference);
    // drop every other point whose frame angle lies in the first quadrant
    let biased: Vec<GroupElement> = group
        .sample_haar(N, 303)
        .iter()
        .enumerate()
        .filter(|(i, p)| i % 2 == 0 || p.rep.frame_angle().rem_euclid(2.0 * PI) > PI / 2.0)
        .map(|(_, p)| p.rep)
        .collect();
    let chi2 = two_sample_chi2(&cells.counts(&reference), &cells.counts(&biased));
    assert!(chi2 > 10.0 * CHI2_63_99, "chi-square {chi2}");
}
