//! Closed-form Lorentzian test spacetimes and their curvature.
//!
//! Three families are provided, each in 1+1, 2+1 or 3+1 dimensions:
//!
//! * Minkowski, `g = diag(-1, 1, ..., 1)`;
//! * warped, `g = -dt² + Σ_i (1 + δ sin(kt) sin(k x^i))² (dx^i)²`;
//! * conformal, `g = (1 + δ exp(-|x|² - t²)) · diag(-1, 1, ..., 1)`.
//!
//! All metrics are diagonal in the global chart, so Christoffel symbols are
//! assembled from hand-written partial derivatives. Riemann and its covariant
//! derivative are analytic for Minkowski and for the 1+1 warped model; every
//! other case differentiates the analytic Christoffel symbols with a
//! fourth-order central stencil.
//!
//! Curvature convention: `R^a_{bcd} = ∂_c Γ^a_{bd} - ∂_d Γ^a_{bc} + Γ^a_{ce} Γ^e_{bd} - Γ^a_{de} Γ^e_{bc}`,
//! lowered on the first slot.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{Real, Smooth};

/// Step used by the finite-difference curvature path, in chart units.
pub const CURVATURE_FD_STEP: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Minkowski,
    Warped,
    Conformal,
}

impl ModelKind {
    pub fn parse(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "minkowski" | "m1" => Ok(ModelKind::Minkowski),
            "warped" | "m2" => Ok(ModelKind::Warped),
            "conformal" | "m3" => Ok(ModelKind::Conformal),
            other => Err(Error::Parameter(format!("unknown model `{other}`"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::Minkowski => "minkowski",
            ModelKind::Warped => "warped",
            ModelKind::Conformal => "conformal",
        }
    }
}

/// An immutable closed-form spacetime.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricModel {
    pub kind: ModelKind,
    /// Spacetime dimension `n + 1`.
    pub dim: usize,
    /// Perturbation amplitude δ.
    pub delta: f64,
    /// Frequency `k` of the warped family.
    pub k: f64,
    /// Half-width of the chart box `|x^α| ≤ chart_radius`.
    pub chart_radius: f64,
}

/// Dense tensor of arbitrary rank over a `dim`-dimensional index range.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    pub dim: usize,
    pub rank: usize,
    pub data: Vec<T>,
}

impl<T: Copy + num_traits::Zero> Tensor<T> {
    pub fn zeros(dim: usize, rank: usize) -> Self {
        Tensor {
            dim,
            rank,
            data: vec![T::zero(); dim.pow(rank as u32)],
        }
    }

    fn offset(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.rank);
        idx.iter().fold(0, |acc, &i| acc * self.dim + i)
    }

    pub fn get(&self, idx: &[usize]) -> T {
        self.data[self.offset(idx)]
    }

    pub fn set(&mut self, idx: &[usize], v: T) {
        let o = self.offset(idx);
        self.data[o] = v;
    }

    pub fn g3(&self, a: usize, b: usize, c: usize) -> T {
        self.data[(a * self.dim + b) * self.dim + c]
    }

    pub fn g4(&self, a: usize, b: usize, c: usize, d: usize) -> T {
        self.data[((a * self.dim + b) * self.dim + c) * self.dim + d]
    }

    pub fn g5(&self, a: usize, b: usize, c: usize, d: usize, e: usize) -> T {
        self.data[(((a * self.dim + b) * self.dim + c) * self.dim + d) * self.dim + e]
    }
}

impl<T: Real> Tensor<T> {
    pub fn max_abs(&self) -> f64 {
        self.data
            .iter()
            .map(|v| v.to_f64().unwrap_or(f64::NAN).abs())
            .fold(0.0, f64::max)
    }
}

impl Tensor<f64> {
    /// Components on a frame: `T'_{i…} = T_{α…} E_i^α …`, transforming every slot.
    pub fn frame_components(&self, vecs: &[&[f64]]) -> Tensor<f64> {
        let n = self.dim;
        let m = vecs.len();
        let mut cur = self.data.clone();
        // Slot k is transformed while slots before it already live in the frame index range.
        for slot in 0..self.rank {
            let pre = m.pow(slot as u32);
            let post = n.pow((self.rank - slot - 1) as u32);
            let mut next = vec![0.0; pre * m * post];
            for a in 0..pre {
                for (i, e) in vecs.iter().enumerate() {
                    for (al, ea) in e.iter().enumerate() {
                        if *ea == 0.0 {
                            continue;
                        }
                        let src = (a * n + al) * post;
                        let dst = (a * m + i) * post;
                        for b in 0..post {
                            next[dst + b] += ea * cur[src + b];
                        }
                    }
                }
            }
            cur = next;
        }
        Tensor {
            dim: m,
            rank: self.rank,
            data: cur,
        }
    }
}

fn lin<T: Real>(a: T, b: T, wa: f64, wb: f64) -> T {
    a * T::of(wa) + b * T::of(wb)
}

impl MetricModel {
    pub fn minkowski(dim: usize) -> Self {
        MetricModel {
            kind: ModelKind::Minkowski,
            dim,
            delta: 0.0,
            k: 1.0,
            chart_radius: 10.0,
        }
    }

    pub fn warped(dim: usize, delta: f64, k: f64) -> Self {
        MetricModel {
            kind: ModelKind::Warped,
            dim,
            delta,
            k,
            chart_radius: 10.0,
        }
    }

    pub fn conformal(dim: usize, delta: f64) -> Self {
        MetricModel {
            kind: ModelKind::Conformal,
            dim,
            delta,
            k: 1.0,
            chart_radius: 10.0,
        }
    }

    pub fn new(kind: ModelKind, dim: usize, delta: f64, k: f64) -> Result<Self> {
        if !(2..=4).contains(&dim) {
            return Err(Error::Parameter(format!("dimension {dim} not in 2..=4")));
        }
        if !(delta.is_finite() && delta >= 0.0) {
            return Err(Error::Parameter(format!(
                "delta must be finite and >= 0, got {delta}"
            )));
        }
        if !(k.is_finite() && k > 0.0) {
            return Err(Error::Parameter(format!("k must be positive, got {k}")));
        }
        Ok(match kind {
            ModelKind::Minkowski => Self::minkowski(dim),
            ModelKind::Warped => Self::warped(dim, delta, k),
            ModelKind::Conformal => Self::conformal(dim, delta),
        })
    }

    pub fn name(&self) -> String {
        match self.kind {
            ModelKind::Minkowski => format!("minkowski{}+1", self.dim - 1),
            ModelKind::Warped => format!(
                "warped{}+1(delta={},k={})",
                self.dim - 1,
                self.delta,
                self.k
            ),
            ModelKind::Conformal => format!("conformal{}+1(delta={})", self.dim - 1, self.delta),
        }
    }

    /// True when Riemann and ∇Riemann have closed forms in this crate.
    pub fn has_analytic_curvature(&self) -> bool {
        match self.kind {
            ModelKind::Minkowski => true,
            ModelKind::Warped => self.dim == 2 || self.delta == 0.0,
            ModelKind::Conformal => self.delta == 0.0,
        }
    }

    /// Diagonal metric components `g_{αα}(x)`, generic over any [`Smooth`] scalar.
    pub fn metric_diag<S: Smooth>(&self, x: &[S]) -> Vec<S> {
        let n = self.dim;
        let one = S::cst(1.0);
        match self.kind {
            ModelKind::Minkowski => (0..n).map(|a| if a == 0 { -one } else { one }).collect(),
            ModelKind::Warped => {
                let d = S::cst(self.delta);
                let k = S::cst(self.k);
                let st = (k * x[0]).sin();
                let mut out = Vec::with_capacity(n);
                out.push(-one);
                for xi in x.iter().take(n).skip(1) {
                    let w = one + d * st * (k * *xi).sin();
                    out.push(w * w);
                }
                out
            }
            ModelKind::Conformal => {
                let mut s2 = x[0] * x[0];
                for xi in x.iter().take(n).skip(1) {
                    s2 = s2 + *xi * *xi;
                }
                let omega = one + S::cst(self.delta) * (-s2).exp();
                (0..n)
                    .map(|a| if a == 0 { -omega } else { omega })
                    .collect()
            }
        }
    }

    /// Warp factor `1 + δ sin(kt) sin(k x^i)` of the warped family.
    pub fn warp_factor<S: Smooth>(&self, x: &[S], i: usize) -> S {
        let k = S::cst(self.k);
        S::cst(1.0) + S::cst(self.delta) * (k * x[0]).sin() * (k * x[i]).sin()
    }

    /// Chart-domain membership: inside the box and metric non-degenerate.
    pub fn in_chart(&self, x: &[f64]) -> bool {
        if x.len() != self.dim
            || x.iter()
                .any(|v| !v.is_finite() || v.abs() > self.chart_radius)
        {
            return false;
        }
        match self.kind {
            ModelKind::Minkowski | ModelKind::Conformal => true,
            ModelKind::Warped => (1..self.dim).all(|i| self.warp_factor(x, i) > 1e-6),
        }
    }

    fn check<T: Real>(&self, x: &[T]) -> Result<Vec<f64>> {
        let xf: Vec<f64> = x.iter().map(|v| v.to_f64().unwrap_or(f64::NAN)).collect();
        if !self.in_chart(&xf) {
            return Err(Error::Domain {
                model: self.name(),
                point: xf,
            });
        }
        Ok(xf)
    }

    /// `g_{αβ}(x)`.
    pub fn metric_at<T: Real + nalgebra::Scalar>(&self, x: &[T]) -> Result<DMatrix<T>> {
        self.check(x)?;
        let d = self.metric_diag(x);
        Ok(DMatrix::from_fn(self.dim, self.dim, |i, j| {
            if i == j {
                d[i]
            } else {
                T::zero()
            }
        }))
    }

    /// Analytic partials `∂_β g_{αα}` indexed as `[α][β]`.
    pub fn metric_diag_grad<T: Real>(&self, x: &[T]) -> Vec<Vec<T>> {
        let n = self.dim;
        let mut out = vec![vec![T::zero(); n]; n];
        match self.kind {
            ModelKind::Minkowski => {}
            ModelKind::Warped => {
                let d = T::of(self.delta);
                let k = T::of(self.k);
                let (st, ct) = (k * x[0]).sin_cos();
                for (i, row) in out.iter_mut().enumerate().skip(1) {
                    let (sx, cx) = (k * x[i]).sin_cos();
                    let w = T::one() + d * st * sx;
                    row[0] = T::of(2.0) * w * d * k * ct * sx;
                    row[i] = T::of(2.0) * w * d * k * st * cx;
                }
            }
            ModelKind::Conformal => {
                let s2 = x.iter().fold(T::zero(), |acc, v| acc + *v * *v);
                let e = T::of(self.delta) * num_traits::Float::exp(-s2);
                for (i, row) in out.iter_mut().enumerate() {
                    let sign = if i == 0 { -T::one() } else { T::one() };
                    for (b, entry) in row.iter_mut().enumerate() {
                        *entry = sign * T::of(-2.0) * x[b] * e;
                    }
                }
            }
        }
        out
    }

    fn christoffel_unchecked<T: Real>(&self, x: &[T]) -> Tensor<T> {
        let n = self.dim;
        let g = self.metric_diag(x);
        let dg = self.metric_diag_grad(x);
        let half = T::of(0.5);
        let mut gam = Tensor::zeros(n, 3);
        for l in 0..n {
            let ginv = T::one() / g[l];
            for a in 0..n {
                for b in 0..n {
                    let mut s = T::zero();
                    if l == b {
                        s = s + dg[l][a];
                    }
                    if l == a {
                        s = s + dg[l][b];
                    }
                    if a == b {
                        s = s - dg[a][l];
                    }
                    if s != T::zero() {
                        gam.set(&[l, a, b], half * ginv * s);
                    }
                }
            }
        }
        gam
    }

    /// `Γ^λ_{αβ}` stored as `[λ][α][β]`.
    pub fn christoffel_at<T: Real>(&self, x: &[T]) -> Result<Tensor<T>> {
        let xf = self.check(x)?;
        let g = self.metric_diag(x);
        let gmin = g
            .iter()
            .map(|v| v.to_f64().unwrap().abs())
            .fold(f64::INFINITY, f64::min);
        let gmax = g
            .iter()
            .map(|v| v.to_f64().unwrap().abs())
            .fold(0.0, f64::max);
        if gmin < 1e-12 {
            return Err(Error::SingularMetric {
                point: xf,
                condition: gmax / gmin.max(f64::MIN_POSITIVE),
            });
        }
        Ok(self.christoffel_unchecked(x))
    }

    fn riemann_from_gamma<T: Real>(
        &self,
        g: &[T],
        gam: &Tensor<T>,
        dgam: &[Tensor<T>],
    ) -> Tensor<T> {
        let n = self.dim;
        let mut r = Tensor::zeros(n, 4);
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    for d in 0..n {
                        if c == d {
                            continue;
                        }
                        let mut v = dgam[c].g3(a, b, d) - dgam[d].g3(a, b, c);
                        for e in 0..n {
                            v = v + gam.g3(a, c, e) * gam.g3(e, b, d)
                                - gam.g3(a, d, e) * gam.g3(e, b, c);
                        }
                        r.set(&[a, b, c, d], g[a] * v);
                    }
                }
            }
        }
        r
    }

    /// Riemann tensor by fourth-order central differences of the analytic Christoffel symbols.
    pub fn riemann_fd<T: Real>(&self, x: &[T]) -> Result<Tensor<T>> {
        self.check(x)?;
        let n = self.dim;
        let h = T::of(CURVATURE_FD_STEP);
        let gam = self.christoffel_unchecked(x);
        let mut dgam = Vec::with_capacity(n);
        for c in 0..n {
            let shifted = |s: f64| {
                let mut y = x.to_vec();
                y[c] = y[c] + h * T::of(s);
                self.christoffel_unchecked(&y)
            };
            let (p1, m1, p2, m2) = (shifted(1.0), shifted(-1.0), shifted(2.0), shifted(-2.0));
            let mut t = Tensor::zeros(n, 3);
            for i in 0..t.data.len() {
                let num = lin(p1.data[i], m1.data[i], 8.0, -8.0) - p2.data[i] + m2.data[i];
                t.data[i] = num / (T::of(12.0) * h);
            }
            dgam.push(t);
        }
        let g = self.metric_diag(x);
        Ok(self.riemann_from_gamma(&g, &gam, &dgam))
    }

    /// Gaussian curvature `K = a_tt / a` of the 1+1 warped model and its gradient.
    fn warped2_curvature<T: Real>(&self, x: &[T]) -> (T, [T; 2]) {
        let d = T::of(self.delta);
        let k = T::of(self.k);
        let (st, ct) = (k * x[0]).sin_cos();
        let (sx, cx) = (k * x[1]).sin_cos();
        let a = T::one() + d * st * sx;
        let a_t = d * k * ct * sx;
        let a_x = d * k * st * cx;
        let a_tt = -d * k * k * st * sx;
        let a_ttt = -d * k * k * k * ct * sx;
        let a_ttx = -d * k * k * k * st * cx;
        let kk = a_tt / a;
        let k_t = (a_ttt * a - a_tt * a_t) / (a * a);
        let k_x = (a_ttx * a - a_tt * a_x) / (a * a);
        (kk, [k_t, k_x])
    }

    fn constant_curvature_form<T: Real>(
        &self,
        g: &[T],
        a: usize,
        b: usize,
        c: usize,
        d: usize,
    ) -> T {
        let ga_c = if a == c { g[a] } else { T::zero() };
        let gb_d = if b == d { g[b] } else { T::zero() };
        let ga_d = if a == d { g[a] } else { T::zero() };
        let gb_c = if b == c { g[b] } else { T::zero() };
        ga_c * gb_d - ga_d * gb_c
    }

    /// `R_{αβγδ}` with all indices down.
    pub fn riemann_at<T: Real>(&self, x: &[T]) -> Result<Tensor<T>> {
        self.check(x)?;
        let n = self.dim;
        if self.delta == 0.0 || self.kind == ModelKind::Minkowski {
            return Ok(Tensor::zeros(n, 4));
        }
        if self.kind == ModelKind::Warped && n == 2 {
            let (kk, _) = self.warped2_curvature(x);
            let g = self.metric_diag(x);
            let mut r = Tensor::zeros(2, 4);
            for a in 0..2 {
                for b in 0..2 {
                    for c in 0..2 {
                        for d in 0..2 {
                            r.set(
                                &[a, b, c, d],
                                kk * self.constant_curvature_form(&g, a, b, c, d),
                            );
                        }
                    }
                }
            }
            return Ok(r);
        }
        self.riemann_fd(x)
    }

    /// `∇_μ R_{αβγδ}` stored as `[μ][α][β][γ][δ]`.
    pub fn nabla_riemann_at<T: Real>(&self, x: &[T]) -> Result<Tensor<T>> {
        self.check(x)?;
        let n = self.dim;
        if self.delta == 0.0 || self.kind == ModelKind::Minkowski {
            return Ok(Tensor::zeros(n, 5));
        }
        if self.kind == ModelKind::Warped && n == 2 {
            let (_, dk) = self.warped2_curvature(x);
            let g = self.metric_diag(x);
            let mut out = Tensor::zeros(2, 5);
            for m in 0..2 {
                for a in 0..2 {
                    for b in 0..2 {
                        for c in 0..2 {
                            for d in 0..2 {
                                out.set(
                                    &[m, a, b, c, d],
                                    dk[m] * self.constant_curvature_form(&g, a, b, c, d),
                                );
                            }
                        }
                    }
                }
            }
            return Ok(out);
        }
        self.nabla_riemann_fd(x)
    }

    /// Covariant derivative of Riemann from fourth-order differences of [`Self::riemann_at`].
    pub fn nabla_riemann_fd<T: Real>(&self, x: &[T]) -> Result<Tensor<T>> {
        self.check(x)?;
        let n = self.dim;
        let h = T::of(CURVATURE_FD_STEP);
        let r0 = self.riemann_at(x)?;
        let gam = self.christoffel_unchecked(x);
        let mut out = Tensor::zeros(n, 5);
        for m in 0..n {
            let shifted = |s: f64| -> Result<Tensor<T>> {
                let mut y = x.to_vec();
                y[m] = y[m] + h * T::of(s);
                self.riemann_at(&y)
            };
            let (p1, m1, p2, m2) = (shifted(1.0)?, shifted(-1.0)?, shifted(2.0)?, shifted(-2.0)?);
            for a in 0..n {
                for b in 0..n {
                    for c in 0..n {
                        for d in 0..n {
                            let i = ((a * n + b) * n + c) * n + d;
                            let num =
                                lin(p1.data[i], m1.data[i], 8.0, -8.0) - p2.data[i] + m2.data[i];
                            let mut v = num / (T::of(12.0) * h);
                            for l in 0..n {
                                v = v
                                    - gam.g3(l, m, a) * r0.g4(l, b, c, d)
                                    - gam.g3(l, m, b) * r0.g4(a, l, c, d)
                                    - gam.g3(l, m, c) * r0.g4(a, b, l, d)
                                    - gam.g3(l, m, d) * r0.g4(a, b, c, l);
                            }
                            out.set(&[m, a, b, c, d], v);
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    /// `sqrt(|det g|)`.
    pub fn volume_element(&self, x: &[f64]) -> f64 {
        self.metric_diag(x)
            .iter()
            .map(|v| v.abs())
            .product::<f64>()
            .sqrt()
    }
}

/// Frame curvature sups over a sampled region, scaled to the dimensionless budget.
///
/// `c0_est = n r₀² sup|R(E_ρ, X, Y, Z)|`, `c1_est = n r₀³ sup|∇_Z R(E_ρ, X, E_ρ, Y)|`,
/// and the budget holds when `c0_est < n ε₀ C†` and `c1_est < n C†`.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CurvatureBudget {
    /// Spatial dimension.
    pub n: usize,
    pub r0: f64,
    pub sup_riemann: f64,
    pub sup_nabla_riemann: f64,
    pub c0_est: f64,
    pub c1_est: f64,
    pub samples: usize,
    pub eps0: f64,
    pub c_dagger: f64,
    pub pass: bool,
}

impl CurvatureBudget {
    pub fn from_sups(
        n: usize,
        r0: f64,
        sup_riemann: f64,
        sup_nabla_riemann: f64,
        samples: usize,
        eps0: f64,
        c_dagger: f64,
    ) -> Self {
        let nf = n as f64;
        let c0_est = nf * r0 * r0 * sup_riemann;
        let c1_est = nf * r0.powi(3) * sup_nabla_riemann;
        CurvatureBudget {
            n,
            r0,
            sup_riemann,
            sup_nabla_riemann,
            c0_est,
            c1_est,
            samples,
            eps0,
            c_dagger,
            pass: c0_est < nf * eps0 * c_dagger && c1_est < nf * c_dagger,
        }
    }

    /// `c0_est` over its threshold `n ε₀ C†`.
    pub fn c0_ratio(&self) -> f64 {
        self.c0_est / (self.n as f64 * self.eps0 * self.c_dagger)
    }

    /// `c1_est` over its threshold `n C†`.
    pub fn c1_ratio(&self) -> f64 {
        self.c1_est / (self.n as f64 * self.c_dagger)
    }
}

/// Maximum violation of the algebraic Riemann symmetries.
pub fn riemann_symmetry_residual<T: Real>(r: &Tensor<T>) -> f64 {
    let n = r.dim;
    let mut worst = 0.0f64;
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                for d in 0..n {
                    let v = r.g4(a, b, c, d);
                    let e1 = (v + r.g4(b, a, c, d)).to_f64().unwrap().abs();
                    let e2 = (v + r.g4(a, b, d, c)).to_f64().unwrap().abs();
                    let e3 = (v - r.g4(c, d, a, b)).to_f64().unwrap().abs();
                    worst = worst.max(e1).max(e2).max(e3);
                }
            }
        }
    }
    worst
}

/// Maximum of `|R_{a[bcd]}|`.
pub fn bianchi1_residual<T: Real>(r: &Tensor<T>) -> f64 {
    let n = r.dim;
    let mut worst = 0.0f64;
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                for d in 0..n {
                    let v = r.g4(a, b, c, d) + r.g4(a, c, d, b) + r.g4(a, d, b, c);
                    worst = worst.max(v.to_f64().unwrap().abs());
                }
            }
        }
    }
    worst
}

/// Maximum of `|∇_μ R_{αβγδ} + ∇_γ R_{αβδμ} + ∇_δ R_{αβμγ}|`.
pub fn bianchi2_residual<T: Real>(dr: &Tensor<T>) -> f64 {
    let n = dr.dim;
    let mut worst = 0.0f64;
    for m in 0..n {
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    for d in 0..n {
                        let v = dr.g5(m, a, b, c, d) + dr.g5(c, a, b, d, m) + dr.g5(d, a, b, m, c);
                        worst = worst.max(v.to_f64().unwrap().abs());
                    }
                }
            }
        }
    }
    worst
}

/// Eigenvalue split `(negative, positive)` of a symmetric metric matrix.
pub fn signature(g: &DMatrix<f64>) -> (usize, usize) {
    let eig = g.clone().symmetric_eigen();
    let neg = eig.eigenvalues.iter().filter(|v| **v < 0.0).count();
    let pos = eig.eigenvalues.iter().filter(|v| **v > 0.0).count();
    (neg, pos)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minkowski_metric_is_constant() {
        let m = MetricModel::minkowski(4);
        let g = m.metric_at(&[0.3, -1.0, 2.0, 0.1]).unwrap();
        assert_eq!(
            g,
            DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![-1.0, 1.0, 1.0, 1.0]))
        );
    }

    #[test]
    fn warped_metric_direct_evaluation() {
        let m = MetricModel::warped(2, 0.05, 1.0);
        let g = m.metric_at(&[0.5, 1.0]).unwrap();
        let a = 1.0 + 0.05 * 0.5f64.sin() * 1.0f64.sin();
        assert_eq!(g[(0, 0)], -1.0);
        assert!((g[(1, 1)] - a * a).abs() < 1e-15);
        let flat = MetricModel::warped(2, 0.0, 1.0)
            .metric_at(&[0.5, 1.0])
            .unwrap();
        assert_eq!(flat[(1, 1)], 1.0);
    }

    #[test]
    fn warped_christoffel_matches_log_derivative() {
        let m = MetricModel::warped(2, 0.05, 1.0);
        let x = [0.4, 0.9];
        let gam = m.christoffel_at(&x).unwrap();
        let h = 1e-5;
        let a = |t: f64| m.warp_factor(&[t, 0.9], 1);
        let expect = (a(0.4 + h) - a(0.4 - h)) / (2.0 * h) / a(0.4);
        assert!((gam.g3(1, 0, 1) - expect).abs() < 1e-9);
        assert!((gam.g3(1, 1, 0) - gam.g3(1, 0, 1)).abs() == 0.0);
    }

    #[test]
    fn analytic_and_fd_riemann_agree_in_two_dimensions() {
        let m = MetricModel::warped(2, 0.05, 1.3);
        let x = [0.7f64, -0.4];
        let ra: Tensor<f64> = m.riemann_at(&x).unwrap();
        let rf: Tensor<f64> = m.riemann_fd(&x).unwrap();
        for i in 0..ra.data.len() {
            assert!((ra.data[i] - rf.data[i]).abs() < 1e-9, "{i}");
        }
        let a = m.warp_factor(&x, 1);
        let a_tt = -0.05 * 1.69 * (1.3f64 * 0.7).sin() * (1.3f64 * -0.4).sin();
        assert!((ra.g4(0, 1, 0, 1) + a * a_tt).abs() < 1e-14);
    }

    #[test]
    fn nabla_riemann_paths_agree_in_two_dimensions() {
        let m = MetricModel::warped(2, 0.05, 1.0);
        let x = [0.2f64, 1.1];
        let da: Tensor<f64> = m.nabla_riemann_at(&x).unwrap();
        let df: Tensor<f64> = m.nabla_riemann_fd(&x).unwrap();
        for i in 0..da.data.len() {
            assert!((da.data[i] - df.data[i]).abs() < 1e-8, "{i}");
        }
    }

    #[test]
    fn out_of_chart_is_a_domain_error() {
        let m = MetricModel::minkowski(2);
        assert!(matches!(
            m.metric_at(&[0.0, 50.0]),
            Err(Error::Domain { .. })
        ));
        let big = MetricModel::warped(2, 10.0, 1.0);
        assert!(big.christoffel_at(&[1.2, -1.2]).is_err());
    }

    #[test]
    fn single_precision_evaluation() {
        let m = MetricModel::conformal(3, 0.1);
        let g32 = m.metric_diag(&[0.1f32, 0.2, 0.3]);
        let g64 = m.metric_diag(&[0.1f64, 0.2, 0.3]);
        for (a, b) in g32.iter().zip(g64.iter()) {
            assert!((*a as f64 - b).abs() < 1e-6);
        }
        let gam = m.christoffel_at(&[0.1f32, 0.2, 0.3]).unwrap();
        let gam64 = m.christoffel_at(&[0.1f64, 0.2, 0.3]).unwrap();
        for (a, b) in gam.data.iter().zip(gam64.data.iter()) {
            assert!((*a as f64 - b).abs() < 1e-6);
        }
    }
}
