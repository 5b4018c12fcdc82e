//! The compact quotient `M = Γ\PSL(2,R)` for the Bolza group: generators,
//! reduction to the regular-octagon Dirichlet domain, group balls and Haar
//! sampling.

use std::collections::HashMap;
use std::f64::consts::{PI, SQRT_2};

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;

use crate::dd::{self, DdElement};
use crate::error::{Error, Result};
use crate::hyperbolic::{cayley_to_sl2r, cosh_dist, DiskPoint, GroupElement, Su11};
use crate::rng;

/// Cap on greedy reduction steps.
pub const REDUCTION_CAP: usize = 10_000;
/// Largest radius accepted by [`FuchsianGroup::ball`].
pub const MAX_BALL_RADIUS: f64 = 12.0;
/// Largest group ball (elements explored) before giving up.
pub const BALL_ELEMENT_CAP: usize = 5_000_000;

/// Bolza systole `2·arccosh(1+√2)`, also the displacement of every generator.
pub fn systole() -> f64 {
    2.0 * (1.0 + SQRT_2).acosh()
}

/// Inradius of the regular octagon: `arccosh(1+√2)`.
pub fn inradius() -> f64 {
    (1.0 + SQRT_2).acosh()
}

/// Circumradius of the regular octagon: `arccosh((1+√2)²)`.
pub fn circumradius() -> f64 {
    ((1.0 + SQRT_2) * (1.0 + SQRT_2)).acosh()
}

/// Hyperbolic area of the surface (genus 2).
pub const SURFACE_AREA: f64 = 4.0 * PI;

/// Spectral-gap data derived from the smallest positive Laplace eigenvalue.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralGapParams {
    pub mu0: f64,
    pub nu0: f64,
    pub eps0: u8,
}

impl SpectralGapParams {
    /// Smallest positive Laplace eigenvalue of the Bolza surface (literature value).
    pub const BOLZA_MU0: f64 = 3.8389;

    pub fn from_mu0(mu0: f64) -> Result<Self> {
        if !(mu0 > 0.0) {
            return Err(Error::InvalidArgument(format!("mu0 must be positive, got {mu0}")));
        }
        let nu0 = if mu0 < 0.25 { (1.0 - 4.0 * mu0).sqrt() } else { 0.0 };
        let eps0 = u8::from((mu0 - 0.25).abs() < 1e-12);
        Ok(SpectralGapParams { mu0, nu0, eps0 })
    }

    pub fn bolza() -> Self {
        Self::from_mu0(Self::BOLZA_MU0).expect("positive literature value")
    }

    /// Equidistribution exponent `(1+ν₀)/2`.
    pub fn equidistribution_exponent(&self) -> f64 {
        0.5 * (1.0 + self.nu0)
    }

    /// Mixing exponent `(1-ν₀)/2`.
    pub fn mixing_exponent(&self) -> f64 {
        0.5 * (1.0 - self.nu0)
    }

    /// Twisted-integral exponent `(3+ν₀)/4`.
    pub fn twisted_exponent(&self) -> f64 {
        0.25 * (3.0 + self.nu0)
    }
}

/// A point of `M`, carried by its representative in the octagon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfacePoint {
    pub rep: GroupElement,
    pub last_word_length: usize,
}

#[derive(Debug, Clone)]
pub struct FuchsianGroup {
    generators: [GroupElement; 8],
    precise: [DdElement; 8],
    /// `cosh` of the inradius; base points within it are already reduced.
    cosh_inradius: f64,
}

impl FuchsianGroup {
    /// The Bolza group: Cayley conjugates of the `SU(1,1)` side pairings with
    /// diagonal `1+√2` and off-diagonal `√(2+2√2)·e^{±ikπ/4}`.
    pub fn bolza() -> Self {
        let diag = Complex64::new(1.0 + SQRT_2, 0.0);
        let off = (2.0 + 2.0 * SQRT_2).sqrt();
        let generators: [GroupElement; 8] = std::array::from_fn(|k| {
            let m = Su11::from_entries(diag, Complex64::from_polar(off, k as f64 * PI / 4.0));
            cayley_to_sl2r(&m).expect("Bolza generators lie in SU(1,1)")
        });
        let group = FuchsianGroup { generators, precise: dd::bolza_generators(), cosh_inradius: inradius().cosh() };
        group.self_check().expect("Bolza group self-check");
        group
    }

    fn self_check(&self) -> Result<()> {
        let target = 2.0 * (1.0 + SQRT_2);
        for (k, g) in self.generators.iter().enumerate() {
            let tr = g.trace().abs();
            if (tr - target).abs() > 1e-10 {
                return Err(Error::InvalidArgument(format!("generator {k} has trace {tr}")));
            }
            let pair = self.generators[(k + 4) % 8] * *g;
            if !pair.approx_eq(&GroupElement::IDENTITY, 1e-10) {
                return Err(Error::InvalidArgument(format!("generator {k} is not paired with {}", (k + 4) % 8)));
            }
            if !self.precise[k].to_element().approx_eq(g, 1e-13) {
                return Err(Error::InvalidArgument(format!("extended-precision generator {k} disagrees")));
            }
        }
        Ok(())
    }

    pub fn generators(&self) -> &[GroupElement; 8] {
        &self.generators
    }

    pub fn generator(&self, k: usize) -> GroupElement {
        self.generators[k % 8]
    }

    /// Greedy descent into the Dirichlet domain at the origin: while some
    /// generator moves the base point closer to the origin by more than
    /// `1e-12`, apply it on the left.
    pub fn reduce(&self, g: &GroupElement) -> Result<SurfacePoint> {
        let mut cur = g.renormalized();
        let mut steps = 0;
        loop {
            let cosh_cur = cur.cosh_displacement();
            if cosh_cur <= self.cosh_inradius {
                break;
            }
            let Some(k) = self.descent_step(&cur, cosh_cur) else { break };
            cur = self.generators[k].mul_raw(&cur).renormalized();
            steps += 1;
            if steps > REDUCTION_CAP {
                return Err(Error::ReductionStalled(REDUCTION_CAP));
            }
        }
        Ok(SurfacePoint { rep: cur, last_word_length: steps })
    }

    /// The generator to apply next, or `None` when no generator moves the
    /// base point closer by more than 1e-12. Among near-equal improvements
    /// the lowest index wins.
    #[inline]
    fn descent_step(&self, cur: &GroupElement, cosh_cur: f64) -> Option<usize> {
        let c: [f64; 8] = std::array::from_fn(|k| self.generators[k].mul_raw(cur).cosh_displacement());
        let best = c.iter().copied().fold(f64::INFINITY, f64::min).max(1.0);
        // distances differ by Δcosh / sinh to first order; only near-ties
        // need the exact comparison
        let sinh_best = (best * best - 1.0).sqrt();
        let gain = cosh_cur - best;
        if gain <= 0.0 || (gain < 1e-9 * cosh_cur && cosh_cur.acosh() - best.acosh() <= 1e-12) {
            return None;
        }
        let slack = 1e-12 * sinh_best;
        c.iter().position(|ck| *ck <= best + slack)
    }
    /// Reduction for hot loops; the iteration cap cannot trigger for the
    /// Bolza group on finite input.
    #[inline]
    pub fn reduce_rep(&self, g: &GroupElement) -> GroupElement {
        if g.cosh_displacement() <= self.cosh_inradius {
            return *g;
        }
        self.reduce(g).map(|p| p.rep).unwrap_or(*g)
    }

    /// [`FuchsianGroup::reduce`] in double-double arithmetic. The descent is
    /// steered by the rounded matrices; the product is kept exact to about
    /// 32 digits.
    pub fn reduce_precise(&self, g: &DdElement) -> DdElement {
        let mut cur = *g;
        for _ in 0..REDUCTION_CAP {
            let rounded = cur.to_element();
            let cosh_cur = rounded.cosh_displacement();
            if cosh_cur <= self.cosh_inradius {
                break;
            }
            let Some(k) = self.descent_step(&rounded, cosh_cur) else { break };
            cur = self.precise[k].mul(&cur);
        }
        cur
    }

    /// Whether the base point of `g` lies in the closed Dirichlet domain.
    pub fn is_reduced(&self, g: &GroupElement, tol: f64) -> bool {
        let d = g.displacement();
        self.generators.iter().all(|gen| d <= (gen * g).displacement() + tol)
    }

    /// Whether a disk point lies in the closed octagon.
    pub fn contains(&self, z: &DiskPoint) -> bool {
        let c0 = cosh_dist(z, &DiskPoint::ORIGIN);
        self.generators.iter().all(|gen| c0 <= cosh_dist(z, &gen.basepoint()) * (1.0 + 1e-14))
    }

    /// All elements whose displacement of the origin is at most `radius`,
    /// each once, enumerated breadth-first over side-pairing words.
    pub fn ball(&self, radius: f64) -> Result<Vec<GroupElement>> {
        if !(radius <= MAX_BALL_RADIUS) {
            return Err(Error::BallRadius(radius));
        }
        // Tiles along the geodesic to γ·0 are reached through adjacent tiles
        // whose centres stay within one circumradius of that geodesic.
        let explore = radius + circumradius() + 1e-9;
        let cosh_explore = explore.cosh();
        let mut index = BallIndex::default();
        let mut all = vec![GroupElement::IDENTITY];
        index.insert(&GroupElement::IDENTITY, 0);
        let mut frontier = vec![0usize];
        while !frontier.is_empty() {
            let mut next = Vec::new();
            for &i in &frontier {
                let g = all[i];
                for s in &self.generators {
                    let h = (g * *s).canonical();
                    if h.cosh_displacement() > cosh_explore || index.find(&h, &all).is_some() {
                        continue;
                    }
                    if all.len() >= BALL_ELEMENT_CAP {
                        return Err(Error::BallTooLarge(BALL_ELEMENT_CAP));
                    }
                    index.insert(&h, all.len());
                    next.push(all.len());
                    all.push(h);
                }
            }
            frontier = next;
        }
        let cosh_r = radius.cosh();
        let mut out: Vec<GroupElement> = all
            .into_iter()
            .filter(|g| g.cosh_displacement() <= cosh_r || g.displacement() <= radius)
            .collect();
        out.sort_by(|a, b| a.cosh_displacement().total_cmp(&b.cosh_displacement()));
        Ok(out)
    }

    /// I.i.d. Haar points on `M`: base point by rejection in the octagon with
    /// area density `4/(1-|z|²)²`, frame angle uniform.
    pub fn sample_haar(&self, n: usize, seed: u64) -> Vec<SurfacePoint> {
        (0..n).into_par_iter().map(|i| self.haar_point(seed, i as u64)).collect()
    }

    /// Haar draws paired with an importance weight `density(rep)`.
    pub fn sample_weighted<F>(&self, n: usize, seed: u64, density: F) -> Vec<(SurfacePoint, f64)>
    where
        F: Fn(&GroupElement) -> f64 + Sync,
    {
        (0..n)
            .into_par_iter()
            .map(|i| {
                let x = self.haar_point(seed, i as u64);
                let w = density(&x.rep);
                (x, w)
            })
            .collect()
    }

    /// The `index`-th Haar sample of stream `seed`.
    pub fn haar_point(&self, seed: u64, index: u64) -> SurfacePoint {
        let mut rng = rng::stream(seed, index);
        let rho = (0.5 * circumradius()).tanh();
        let rho2 = rho * rho;
        loop {
            let r2 = rho2 * rng.random::<f64>();
            let phi = 2.0 * PI * rng.random::<f64>();
            let accept = ((1.0 - rho2) / (1.0 - r2)).powi(2);
            if rng.random::<f64>() >= accept {
                continue;
            }
            let r = r2.sqrt();
            let z = DiskPoint { re: r * phi.cos(), im: r * phi.sin() };
            if !self.contains(&z) {
                continue;
            }
            let theta = 2.0 * PI * rng.random::<f64>();
            let g = GroupElement::from_basepoint_frame(z, theta);
            return self.reduce(&g).expect("sampled point reduces");
        }
    }
}

/// Hash index for group elements keyed on quantized canonical entries.
#[derive(Default)]
struct BallIndex {
    map: HashMap<[i64; 4], Vec<usize>>,
}

const QUANTUM: f64 = 1e6;

impl BallIndex {
    fn key(g: &GroupElement) -> [i64; 4] {
        [g.a, g.b, g.c, g.d].map(|x| (x * QUANTUM).round() as i64)
    }

    fn insert(&mut self, g: &GroupElement, i: usize) {
        self.map.entry(Self::key(g)).or_default().push(i);
    }

    /// Looks up `g` (canonical), also probing neighbouring cells for entries
    /// that sit near a rounding boundary.
    fn find(&self, g: &GroupElement, all: &[GroupElement]) -> Option<usize> {
        let entries = [g.a, g.b, g.c, g.d];
        let mut options: Vec<[i64; 2]> = Vec::with_capacity(4);
        for x in entries {
            let s = x * QUANTUM;
            let k = s.round();
            let frac = s - k;
            let alt = if frac.abs() > 0.49 { k + frac.signum() } else { k };
            options.push([k as i64, alt as i64]);
        }
        for mask in 0..16u32 {
            let key: [i64; 4] = std::array::from_fn(|j| options[j][((mask >> j) & 1) as usize]);
            if mask != 0 && (0..4).any(|j| (mask >> j) & 1 == 1 && options[j][0] == options[j][1]) {
                continue;
            }
            if let Some(list) = self.map.get(&key) {
                for &i in list {
                    let h = &all[i];
                    let scale = 1.0 + h.a.abs().max(h.b.abs()).max(h.c.abs()).max(h.d.abs());
                    if h.approx_eq(g, 1e-9 * scale) {
                        return Some(i);
                    }
                }
            }
        }
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hyperbolic::{dist, exp_general, mobius, LieVector};
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    fn random_word(group: &FuchsianGroup, len: usize, rng: &mut impl Rng) -> GroupElement {
        (0..len).fold(GroupElement::IDENTITY, |acc, _| acc * group.generator(rng.random_range(0..8)))
    }

    #[test]
    fn generator_invariants() {
        let group = FuchsianGroup::bolza();
        for (k, g) in group.generators().iter().enumerate() {
            assert_abs_diff_eq!(g.det(), 1.0, epsilon = 1e-14);
            assert_abs_diff_eq!(g.trace().abs(), 2.0 * (1.0 + SQRT_2), epsilon = 1e-10);
            assert!((*g * group.generator(k + 4)).approx_eq(&GroupElement::IDENTITY, 1e-10));
            let d = dist(&DiskPoint::ORIGIN, &mobius(g, &DiskPoint::ORIGIN).unwrap());
            assert_abs_diff_eq!(d, systole(), epsilon = 1e-10);
        }
    }

    #[test]
    fn spectral_gap_params() {
        let b = SpectralGapParams::bolza();
        assert_eq!((b.nu0, b.eps0), (0.0, 0));
        let c = SpectralGapParams::from_mu0(0.21).unwrap();
        assert_abs_diff_eq!(c.nu0, (1.0f64 - 0.84).sqrt(), epsilon = 1e-15);
        assert_eq!(c.eps0, 0);
        let q = SpectralGapParams::from_mu0(0.25).unwrap();
        assert_eq!((q.nu0, q.eps0), (0.0, 1));
        assert!(SpectralGapParams::from_mu0(0.0).is_err());
    }

    #[test]
    fn reduced_point_is_fixed() {
        let group = FuchsianGroup::bolza();
        let g = GroupElement::from_basepoint_frame(DiskPoint::new(0.2, -0.1).unwrap(), 0.4);
        let p = group.reduce(&g).unwrap();
        assert_eq!(p.last_word_length, 0);
        assert!(p.rep.approx_eq(&g, 1e-15));
    }

    #[test]
    fn reduction_is_gamma_invariant_and_idempotent() {
        let group = FuchsianGroup::bolza();
        let mut rng = rng::stream(11, 0);
        for i in 0..1000u64 {
            let x = group.haar_point(5, i);
            let word = random_word(&group, 1 + (i as usize % 6), &mut rng);
            let moved = group.reduce(&(word * x.rep)).unwrap();
            // Rounding the product γ·x to f64 already perturbs x by about
            // ε·‖γ‖·‖γ⁻¹‖, which exceeds 1e-9 for the longest words.
            let conditioning = f64::EPSILON * 2.0 * word.cosh_displacement() * (1.0 + x.rep.cosh_displacement());
            let tol = 1e-9f64.max(conditioning);
            assert!(moved.rep.approx_eq(&x.rep, tol), "{i}: {:?} vs {:?}", moved.rep, x.rep);
            let again = group.reduce(&moved.rep).unwrap();
            assert!(again.rep.approx_eq(&moved.rep, 1e-12));
            assert!(group.is_reduced(&moved.rep, 1e-12));
        }
    }

    #[test]
    fn reduction_of_far_points() {
        let group = FuchsianGroup::bolza();
        let g = exp_general(&LieVector::new(0.3, 1.0, 2.0), 6.0);
        let p = group.reduce(&g).unwrap();
        assert!(p.last_word_length > 0);
        assert!(group.is_reduced(&p.rep, 1e-12));
        assert!(p.rep.displacement() <= circumradius() + 1e-9);
    }

    #[test]
    fn small_balls() {
        let group = FuchsianGroup::bolza();
        let b = group.ball(0.1).unwrap();
        assert_eq!(b.len(), 1);
        assert!(b[0].approx_eq(&GroupElement::IDENTITY, 0.0));
        let b = group.ball(systole() + 0.01).unwrap();
        assert_eq!(b.len(), 9);
        for g in group.generators() {
            assert!(b.iter().any(|h| h.approx_eq(g, 1e-9)));
        }
        assert!(group.ball(12.5).is_err());
    }

    /// Brute-force word enumeration to length 4: no nonidentity element moves
    /// the origin by less than the generator displacement.
    #[test]
    fn minimal_displacement_by_enumeration() {
        let group = FuchsianGroup::bolza();
        let mut words = vec![GroupElement::IDENTITY];
        let mut min_disp = f64::INFINITY;
        for _ in 0..4 {
            let mut next = Vec::new();
            for w in &words {
                for s in group.generators() {
                    let h = *w * *s;
                    if !h.approx_eq(&GroupElement::IDENTITY, 1e-9) {
                        min_disp = min_disp.min(h.displacement());
                    }
                    next.push(h);
                }
            }
            words = next;
        }
        assert_abs_diff_eq!(min_disp, systole(), epsilon = 1e-9);
    }

    #[test]
    fn ball_sizes_are_monotone_and_deduplicated() {
        let group = FuchsianGroup::bolza();
        let mut last = 0;
        for r in [1.0, 3.1, 4.0, 5.0, 6.0, 7.0] {
            let b = group.ball(r).unwrap();
            assert!(b.len() >= last);
            last = b.len();
            for (i, g) in b.iter().enumerate() {
                assert!(g.displacement() <= r + 1e-12);
                for h in &b[i + 1..] {
                    assert!(!g.approx_eq(h, 1e-6));
                }
            }
        }
        // orbit count matches area growth: |ball(r)| ≈ (cosh r - 1)/2
        let b = group.ball(9.0).unwrap();
        let expected = (9.0f64.cosh() - 1.0) / 2.0;
        assert!((b.len() as f64 / expected - 1.0).abs() < 0.15, "{} vs {}", b.len(), expected);
        // discreteness proxy
        assert!(b.iter().skip(1).all(|g| g.displacement() > 1e-6));
    }

    #[test]
    fn haar_sampling_is_deterministic_and_reduced() {
        let group = FuchsianGroup::bolza();
        let a = group.sample_haar(200, 42);
        let b = group.sample_haar(200, 42);
        assert_eq!(a, b);
        assert!(a.iter().all(|p| group.is_reduced(&p.rep, 1e-12)));
        let c = group.sample_haar(200, 43);
        assert_ne!(a, c);
    }

    /// Fraction of Haar mass within hyperbolic radius r of the origin equals
    /// 2π(cosh r − 1)/(4π) for r below the inradius.
    #[test]
    fn haar_radial_distribution() {
        let group = FuchsianGroup::bolza();
        let n = 40_000;
        let pts = group.sample_haar(n, 9);
        for r in [0.5, 1.0, 1.5] {
            let inside = pts.iter().filter(|p| p.rep.displacement() <= r).count() as f64 / n as f64;
            let p = (r.cosh() - 1.0) / 2.0;
            let sd = (p * (1.0 - p) / n as f64).sqrt();
            assert!((inside - p).abs() < 4.0 * sd, "r={r}: {inside} vs {p}");
        }
    }
}
