//! Chebyshev interpolation on `[0, 1]` with exact antiderivatives, used as the
//! panel rule for orbit and arc quadratures.

use std::f64::consts::PI;

/// Chebyshev points of the first kind mapped to `[0, 1]`, ascending, with the
/// cosine matrix turning samples into coefficients.
#[derive(Debug, Clone)]
pub struct ChebRule {
    nodes: Vec<f64>,
    transform: Vec<f64>,
}

impl ChebRule {
    pub fn new(n: usize) -> Self {
        assert!(n >= 2, "need at least two nodes");
        let angles: Vec<f64> = (0..n).map(|i| PI * (n as f64 - i as f64 - 0.5) / n as f64).collect();
        let nodes = angles.iter().map(|a| 0.5 * (1.0 + a.cos())).collect();
        let mut transform = vec![0.0; n * n];
        for k in 0..n {
            let scale = if k == 0 { 1.0 } else { 2.0 } / n as f64;
            for (i, a) in angles.iter().enumerate() {
                transform[k * n + i] = scale * (k as f64 * a).cos();
            }
        }
        ChebRule { nodes, transform }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nodes in `[0, 1]`, ascending.
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Interpolant through `values` sampled at the nodes.
    pub fn fit(&self, values: &[f64]) -> ChebPoly {
        let n = self.nodes.len();
        debug_assert_eq!(values.len(), n);
        let coeffs: Vec<f64> = (0..n)
            .map(|k| self.transform[k * n..(k + 1) * n].iter().zip(values).map(|(t, v)| t * v).sum())
            .collect();
        ChebPoly::new(coeffs)
    }
}

/// `p(u) = Σ a_k T_k(2u − 1)` together with its antiderivative vanishing at 0.
#[derive(Debug, Clone)]
pub struct ChebPoly {
    coeffs: Vec<f64>,
    anti: Vec<f64>,
}

fn clenshaw(c: &[f64], x: f64) -> f64 {
    let (mut b1, mut b2) = (0.0, 0.0);
    for &ck in c.iter().skip(1).rev() {
        (b1, b2) = (2.0 * x * b1 - b2 + ck, b1);
    }
    x * b1 - b2 + c[0]
}

impl ChebPoly {
    fn new(coeffs: Vec<f64>) -> Self {
        let n = coeffs.len();
        let a = |k: usize| if k < n { coeffs[k] } else { 0.0 };
        let mut anti = vec![0.0; n + 1];
        for (k, slot) in anti.iter_mut().enumerate().skip(1) {
            let prev = if k == 1 { 2.0 * a(0) } else { a(k - 1) };
            // the 1/2 maps dx on [-1, 1] to du on [0, 1]
            *slot = 0.5 * (prev - a(k + 1)) / (2.0 * k as f64);
        }
        anti[0] = -anti.iter().enumerate().skip(1).map(|(k, b)| if k % 2 == 0 { *b } else { -*b }).sum::<f64>();
        ChebPoly { coeffs, anti }
    }

    pub fn eval(&self, u: f64) -> f64 {
        clenshaw(&self.coeffs, 2.0 * u - 1.0)
    }

    /// `∫₀^u p`.
    pub fn integral_to(&self, u: f64) -> f64 {
        clenshaw(&self.anti, 2.0 * u - 1.0)
    }

    /// `∫₀¹ p`.
    pub fn total(&self) -> f64 {
        self.anti.iter().sum()
    }

    /// Size of the two highest coefficients, an estimate of the
    /// interpolation error.
    pub fn tail(&self) -> f64 {
        let n = self.coeffs.len();
        self.coeffs[n - 1].abs() + self.coeffs[n - 2].abs()
    }

    /// Solves `∫₀^u p = target` for `u ∈ [0, 1]`, assuming `p > 0`.
    pub fn invert_integral(&self, target: f64) -> f64 {
        let total = self.total();
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        let mut u = (target / total).clamp(0.0, 1.0);
        for _ in 0..100 {
            let r = self.integral_to(u) - target;
            if r > 0.0 {
                hi = u;
            } else {
                lo = u;
            }
            let d = self.eval(u);
            let mut next = if d > 0.0 { u - r / d } else { f64::NAN };
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            if (next - u).abs() <= 4.0 * f64::EPSILON || hi - lo <= 4.0 * f64::EPSILON {
                return next;
            }
            u = next;
        }
        u
    }
}

/// Piecewise Chebyshev interpolant on `[0, 1]`, refined by bisection until
/// the coefficient tail of every piece is below a tolerance.
#[derive(Debug, Clone)]
pub struct Piecewise {
    breaks: Vec<f64>,
    polys: Vec<ChebPoly>,
    cum: Vec<f64>,
}

impl ChebRule {
    /// Adaptive fits of `K` functions on `[0, 1]` sharing one set of pieces.
    /// A piece is split while any component has `tail > tol`, down to width
    /// `2^-max_depth`.
    pub fn fit_adaptive<const K: usize>(
        &self,
        mut f: impl FnMut(f64) -> [f64; K],
        tol: f64,
        max_depth: u32,
    ) -> [Piecewise; K] {
        let mut pieces: Vec<(f64, f64, [ChebPoly; K])> = Vec::new();
        let mut stack = vec![(0.0f64, 1.0f64, 0u32)];
        while let Some((a, b, depth)) = stack.pop() {
            let rows: Vec<[f64; K]> = self.nodes.iter().map(|u| f(a + u * (b - a))).collect();
            let polys: [ChebPoly; K] =
                std::array::from_fn(|k| self.fit(&rows.iter().map(|r| r[k]).collect::<Vec<_>>()));
            if depth < max_depth && polys.iter().any(|p| p.tail() > tol) {
                let m = 0.5 * (a + b);
                // right half first so that pieces come out in ascending order
                stack.push((m, b, depth + 1));
                stack.push((a, m, depth + 1));
            } else {
                pieces.push((a, b, polys));
            }
        }
        let mut breaks = vec![0.0];
        breaks.extend(pieces.iter().map(|p| p.1));
        let mut per_comp: [Vec<ChebPoly>; K] = std::array::from_fn(|_| Vec::with_capacity(pieces.len()));
        for (_, _, polys) in pieces {
            for (k, p) in polys.into_iter().enumerate() {
                per_comp[k].push(p);
            }
        }
        per_comp.map(|polys| Piecewise::new(breaks.clone(), polys))
    }
}

impl Piecewise {
    fn new(breaks: Vec<f64>, polys: Vec<ChebPoly>) -> Self {
        let mut cum = vec![0.0];
        for (w, p) in breaks.windows(2).zip(&polys) {
            cum.push(cum.last().expect("nonempty") + (w[1] - w[0]) * p.total());
        }
        Piecewise { breaks, polys, cum }
    }

    pub fn pieces(&self) -> usize {
        self.polys.len()
    }

    /// Piece boundaries, from 0 to 1.
    pub fn breaks(&self) -> &[f64] {
        &self.breaks
    }

    fn locate(&self, u: f64) -> (usize, f64) {
        let i = self.breaks[1..self.breaks.len() - 1].partition_point(|b| *b <= u);
        let (a, b) = (self.breaks[i], self.breaks[i + 1]);
        (i, ((u - a) / (b - a)).clamp(0.0, 1.0))
    }

    pub fn eval(&self, u: f64) -> f64 {
        let (i, r) = self.locate(u);
        self.polys[i].eval(r)
    }

    /// `∫₀^u p`.
    pub fn integral_to(&self, u: f64) -> f64 {
        if u <= 0.0 {
            return 0.0;
        }
        let (i, r) = self.locate(u);
        self.cum[i] + (self.breaks[i + 1] - self.breaks[i]) * self.polys[i].integral_to(r)
    }

    pub fn total(&self) -> f64 {
        *self.cum.last().expect("nonempty")
    }

    /// Solves `∫₀^u p = target` for `u ∈ [0, 1]`, assuming `p > 0`.
    pub fn invert_integral(&self, target: f64) -> f64 {
        if target <= 0.0 {
            return 0.0;
        }
        let i = self.cum[1..self.cum.len() - 1].partition_point(|c| *c <= target);
        let w = self.breaks[i + 1] - self.breaks[i];
        self.breaks[i] + w * self.polys[i].invert_integral((target - self.cum[i]) / w)
    }

    /// `max |∫₀^u p|` over `m` equispaced points per piece and the breaks.
    pub fn sup_abs_integral(&self, m: usize) -> f64 {
        let mut best = 0.0f64;
        for (i, p) in self.polys.iter().enumerate() {
            let w = self.breaks[i + 1] - self.breaks[i];
            for j in 0..=m {
                best = best.max((self.cum[i] + w * p.integral_to(j as f64 / m as f64)).abs());
            }
        }
        best
    }
}
