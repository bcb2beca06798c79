//! Carleman weight, conjugation quantities, the pointwise identity for the
//! conjugated wave operator and quadrature of the integrated estimate.
//!
//! Frame-algebra quantities come from [`PcPoint`] and work in any dimension.
//! The identity check, the integrated estimate and the boundary layer are
//! carried out in 1+1 dimensions, where every geometric field is evaluated as
//! an exact bivariate jet ([`Jet2`]) in the chart.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geodesic_engine::{log_map_from, radial_frame, GeoOptions, Omega, OrthoBasis};
use crate::hyperquadric::{
    f_of_coords, radial_transport, FdOracle, RadialState, Stencil, TransportOptions,
};
use crate::metric_models::{MetricModel, ModelKind};
use crate::pseudoconvexity::{PcParams, PcPoint};
use crate::scalar::{Jet2, Smooth};

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CarlemanParams {
    /// Spatial dimension `n` (the spacetime has dimension `n + 1`).
    pub n: usize,
    pub a: f64,
    pub b0: f64,
    pub eps0: f64,
    pub r0: f64,
}

impl CarlemanParams {
    pub fn new(n: usize, a: f64, b0: f64, eps0: f64, r0: f64) -> Result<Self> {
        let p = CarlemanParams { n, a, b0, eps0, r0 };
        p.validate()?;
        Ok(p)
    }

    /// Default weight parameters: `ε₀ = 0.05`, `b₀ = 0.2`, `a = 4n²`.
    pub fn defaults(n: usize, r0: f64) -> Self {
        CarlemanParams {
            n,
            a: 4.0 * (n * n) as f64,
            b0: 0.2,
            eps0: 0.05,
            r0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n2 = (self.n * self.n) as f64;
        if self.n == 0 {
            return Err(Error::Parameter(
                "spatial dimension must be at least 1".into(),
            ));
        }
        if !(self.a >= n2) {
            return Err(Error::Parameter(format!(
                "a = {} must be >= n^2 = {n2}",
                self.a
            )));
        }
        if !(self.eps0 > 0.0 && self.eps0 <= self.b0 / 4.0 && self.b0 / 4.0 <= 1.0 / 16.0) {
            return Err(Error::Parameter(format!(
                "need 0 < eps0 <= b0/4 <= 1/16, got eps0 = {}, b0 = {}",
                self.eps0, self.b0
            )));
        }
        if !(self.r0 > 0.0 && self.r0.is_finite()) {
            return Err(Error::Parameter(format!(
                "r0 = {} must be positive",
                self.r0
            )));
        }
        Ok(())
    }

    pub fn b(&self) -> f64 {
        self.b0 / (self.r0 * self.r0)
    }

    pub fn eps(&self) -> f64 {
        self.eps0 / (self.r0 * self.r0)
    }

    pub fn pc(&self) -> PcParams {
        PcParams {
            eps0: self.eps0,
            r0: self.r0,
        }
    }

    /// `c_n = (n - 1)/4`.
    pub fn c_n(&self) -> f64 {
        (self.n as f64 - 1.0) / 4.0
    }

    pub fn with_a(mut self, a: f64) -> Self {
        self.a = a;
        self
    }

    /// `F(f̄) = -a (ln f̄ + b f̄)`.
    pub fn big_f(&self, fbar: f64) -> f64 {
        -self.a * (fbar.ln() + self.b() * fbar)
    }

    /// `(F', F'', F''')` with respect to `f̄`.
    pub fn f_derivs(&self, fbar: f64) -> (f64, f64, f64) {
        let a = self.a;
        (
            -a / fbar - a * self.b(),
            a / (fbar * fbar),
            -2.0 * a / fbar.powi(3),
        )
    }

    /// `ζ = (f̄ e^{b f̄})^{2a}`.
    pub fn zeta(&self, fbar: f64) -> f64 {
        if fbar <= 0.0 {
            return 0.0;
        }
        (fbar * (self.b() * fbar).exp()).powf(2.0 * self.a)
    }
}

/// Weight and conjugation quantities at one point, in radial-frame components.
#[derive(Clone, Debug, PartialEq)]
pub struct ConjugationBundle {
    pub fbar: f64,
    pub big_f: f64,
    pub zeta: f64,
    pub fp: f64,
    pub fpp: f64,
    pub fppp: f64,
    /// `S = ∇^♯f̄`.
    pub s: Vec<f64>,
    pub box_fbar: f64,
    pub w: f64,
    pub grad_fbar_sq: f64,
    pub a_coef: f64,
    pub b_coef: f64,
    pub hbar: f64,
    pub c_n: f64,
    /// `Ē_ρ`, with `Ê_ρ ψ = Ē_ρ ψ + ehat_shift · ψ`.
    pub ebar_rho: Vec<f64>,
    pub ehat_shift: f64,
    /// `ℬ - ½a²b - ¼a² f̄⁻¹ ε r²`.
    pub b_margin: f64,
}

/// Conjugation quantities from the algebraic frame assembly at `pc`.
pub fn conjugation_bundle(params: &CarlemanParams, pc: &PcPoint) -> Result<ConjugationBundle> {
    if !(pc.fbar > 0.0) {
        return Err(Error::OutOfRegime(format!(
            "fbar = {} is not positive",
            pc.fbar
        )));
    }
    let d = pc.dim;
    let fbar = pc.fbar;
    let eps = params.eps();
    let (fp, fpp, fppp) = params.f_derivs(fbar);
    let s = pc.raise(&pc.dfbar);
    let box_fbar: f64 = (0..d).map(|i| pc.hfbar[i * d + i] / pc.gdiag[i]).sum();
    let hbar = pc.hbar;
    let w = 0.5 * box_fbar - hbar;
    let g2 = pc.grad_fbar_sq();
    let a_coef = (fp * fp + fpp) * g2 + 2.0 * hbar * fp;
    let dhbar: Vec<f64> = (0..d)
        .map(|i| {
            -0.5 * pc.deta[i] / (pc.eta * pc.eta)
                - 0.25 * eps * (4.0 * pc.df[i] + 2.0 * pc.t * pc.dt[i])
        })
        .collect();
    let b_coef = (fp * fp + fpp) * pc.bilinear(&pc.hfbar, &s, &s)
        + 0.5 * (2.0 * fp * fpp + fppp) * g2 * g2
        + hbar * fpp * g2
        + fp * PcPoint::apply(&dhbar, &s)
        + hbar * a_coef;
    let a = params.a;
    let b_margin = b_coef - 0.5 * a * a * params.b() - 0.25 * a * a * eps * pc.r * pc.r / fbar;
    let ebar_rho = pc.barred_frame().rho;
    let c_n = params.c_n();
    let ehat_shift = c_n / fbar * PcPoint::apply(&pc.dfbar, &ebar_rho);
    Ok(ConjugationBundle {
        fbar,
        big_f: params.big_f(fbar),
        zeta: params.zeta(fbar),
        fp,
        fpp,
        fppp,
        s,
        box_fbar,
        w,
        grad_fbar_sq: g2,
        a_coef,
        b_coef,
        hbar,
        c_n,
        ebar_rho,
        ehat_shift,
        b_margin,
    })
}

/// Exact vertex limit (`t = 0`, `r → 0`, Minkowski) of the `ℬ` margin:
/// `a²(½b - 2ε) - a(½b - ε)`.
pub fn vertex_b_margin(a: f64, b: f64, eps: f64) -> f64 {
    a * a * (0.5 * b - 2.0 * eps) - a * (0.5 * b - eps)
}

/// Outcome of the `ℬ` lower-bound sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct BSweep {
    pub a: f64,
    pub min_margin: f64,
    /// Minimum of `margin / (a² (b + f̄⁻¹ ε r²))`.
    pub min_normalized: f64,
    /// `(t, r)` at the minimizing sample.
    pub argmin: (f64, f64),
    pub points: usize,
}

/// `min (ℬ - ½a²b - ¼a² f̄⁻¹ ε r²)` over transported states.
pub fn b_lower_bound_check(params: &CarlemanParams, states: &[RadialState]) -> Result<BSweep> {
    let pcp = params.pc();
    let a = params.a;
    let mut out = BSweep {
        a,
        min_margin: f64::INFINITY,
        min_normalized: f64::INFINITY,
        argmin: (f64::NAN, f64::NAN),
        points: 0,
    };
    for st in states {
        if !st.point.in_d {
            continue;
        }
        let pc = PcPoint::new(&pcp, st)?;
        let cb = conjugation_bundle(params, &pc)?;
        let scale = a * a * (params.b() + params.eps() * pc.r * pc.r / pc.fbar);
        out.points += 1;
        out.min_normalized = out.min_normalized.min(cb.b_margin / scale);
        if cb.b_margin < out.min_margin {
            out.min_margin = cb.b_margin;
            out.argmin = (pc.t, pc.r);
        }
    }
    if out.points == 0 {
        return Err(Error::EmptySample("no sample points inside D".into()));
    }
    Ok(out)
}

/// Pairwise summation in fixed order.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 32 {
        return v.iter().sum();
    }
    let (l, r) = v.split_at(v.len() / 2);
    pairwise_sum(l) + pairwise_sum(r)
}

// ---------------------------------------------------------------------------
// 1+1 jet geometry

/// Diagonal 1+1 metric, its inverse, volume density and Christoffel symbols as jets.
#[derive(Clone, Copy, Debug)]
pub struct MetricJets {
    pub g: [Jet2; 2],
    pub ginv: [Jet2; 2],
    pub sqrt_g: Jet2,
    /// `gamma[λ][μ][ν] = Γ^λ_{μν}`.
    pub gamma: [[[Jet2; 2]; 2]; 2],
}

fn vars(y: [f64; 2]) -> [Jet2; 2] {
    [Jet2::var(y[0], 0), Jet2::var(y[1], 1)]
}

impl MetricJets {
    pub fn at(model: &MetricModel, y: [f64; 2]) -> Result<Self> {
        if model.dim != 2 {
            return Err(Error::Parameter(format!(
                "jet geometry needs a 1+1 model, got dimension {}",
                model.dim
            )));
        }
        if !model.in_chart(&y) {
            return Err(Error::Domain {
                model: model.name(),
                point: y.to_vec(),
            });
        }
        let gd = model.metric_diag(&vars(y));
        let g = [gd[0], gd[1]];
        let ginv = [g[0].recip(), g[1].recip()];
        let sqrt_g = Smooth::sqrt(-(g[0] * g[1]));
        let dg = [[g[0].d(0), g[0].d(1)], [g[1].d(0), g[1].d(1)]];
        let zero = Jet2::constant(0.0);
        let mut gamma = [[[zero; 2]; 2]; 2];
        for l in 0..2 {
            for m in 0..2 {
                for n in 0..2 {
                    let mut acc = zero;
                    if l == n {
                        acc += dg[l][m];
                    }
                    if l == m {
                        acc += dg[l][n];
                    }
                    if m == n {
                        acc -= dg[m][l];
                    }
                    gamma[l][m][n] = ginv[l] * acc * 0.5;
                }
            }
        }
        Ok(MetricJets {
            g,
            ginv,
            sqrt_g,
            gamma,
        })
    }

    pub fn box_op(&self, u: &Jet2) -> Jet2 {
        let du = [u.d(0), u.d(1)];
        let mut acc = Jet2::constant(0.0);
        for m in 0..2 {
            let mut term = du[m].d(m);
            for (l, dl) in du.iter().enumerate() {
                term -= self.gamma[l][m][m] * *dl;
            }
            acc += self.ginv[m] * term;
        }
        acc
    }

    /// Covariant Hessian `∂_μ∂_ν u - Γ^λ_{μν} ∂_λ u` at the expansion point.
    pub fn hessian_value(&self, u: &Jet2) -> [[f64; 2]; 2] {
        let mut h = [[0.0; 2]; 2];
        for (m, row) in h.iter_mut().enumerate() {
            for (n, v) in row.iter_mut().enumerate() {
                let mut dd = [0, 0];
                dd[m] += 1;
                dd[n] += 1;
                *v = u.partial(dd[0], dd[1])
                    - (0..2)
                        .map(|l| self.gamma[l][m][n].value() * u.grad()[l])
                        .sum::<f64>();
            }
        }
        h
    }

    pub fn dot(&self, u: &Jet2, v: &Jet2) -> Jet2 {
        self.ginv[0] * u.d(0) * v.d(0) + self.ginv[1] * u.d(1) * v.d(1)
    }

    pub fn ginv_value(&self) -> [f64; 2] {
        [self.ginv[0].value(), self.ginv[1].value()]
    }
}

/// Source of the hyperquadric `f` and of `t²` as chart functions near a point.
#[derive(Clone, Debug, PartialEq)]
pub enum WeightField {
    /// Exact flat weights about the centre `p`: `f = ¼((x-p¹)² - (t-p⁰)²)`, `t² = (t-p⁰)²`.
    Flat { p: [f64; 2] },
    /// Quadratic Taylor models of `f` and `t²` about `x0` (value, gradient, second partials).
    Quadratic {
        x0: [f64; 2],
        f: (f64, [f64; 2], [[f64; 2]; 2]),
        tau: (f64, [f64; 2], [[f64; 2]; 2]),
    },
}

impl WeightField {
    /// Quadratic model from finite differences of normal coordinates at `x0`.
    pub fn quadratic(
        model: &MetricModel,
        basis: &OrthoBasis,
        x0: [f64; 2],
        oracle: &FdOracle,
    ) -> Result<Self> {
        let st = Stencil::build(model, basis, &x0, oracle, true)?;
        let tau = |c: &[f64]| c[0] * c[0];
        let pack = |g: Vec<f64>, h: Vec<Vec<f64>>, v: f64| {
            (v, [g[0], g[1]], [[h[0][0], h[0][1]], [h[1][0], h[1][1]]])
        };
        let c0 = st.centre.clone();
        Ok(WeightField::Quadratic {
            x0,
            f: pack(st.grad(f_of_coords), st.hess(f_of_coords), f_of_coords(&c0)),
            tau: pack(st.grad(tau), st.hess(tau), tau(&c0)),
        })
    }

    /// `(f, t²)` as jets at `y`.
    pub fn eval(&self, y: [f64; 2]) -> (Jet2, Jet2) {
        let v = vars(y);
        match self {
            WeightField::Flat { p } => {
                let t = v[0] - p[0];
                let x = v[1] - p[1];
                ((x * x - t * t) * 0.25, t * t)
            }
            WeightField::Quadratic { x0, f, tau } => {
                let d = [v[0] - x0[0], v[1] - x0[1]];
                let quad = |q: &(f64, [f64; 2], [[f64; 2]; 2])| {
                    let mut acc = Jet2::constant(q.0) + d[0] * q.1[0] + d[1] * q.1[1];
                    for i in 0..2 {
                        for j in 0..2 {
                            acc += d[i] * d[j] * (0.5 * q.2[i][j]);
                        }
                    }
                    acc
                };
                (quad(f), quad(tau))
            }
        }
    }
}

/// Weight and conjugation fields as jets at one chart point.
#[derive(Clone, Copy, Debug)]
pub struct ConjugationJets {
    pub m: MetricJets,
    pub f: Jet2,
    pub tau: Jet2,
    pub eta: Jet2,
    pub fbar: Jet2,
    pub hbar: Jet2,
    pub fp: Jet2,
    pub fpp: Jet2,
    pub w: Jet2,
    pub a_coef: Jet2,
}

impl ConjugationJets {
    pub fn at(
        params: &CarlemanParams,
        model: &MetricModel,
        weight: &WeightField,
        y: [f64; 2],
    ) -> Result<Self> {
        let m = MetricJets::at(model, y)?;
        let (f, tau) = weight.eval(y);
        let eps = params.eps();
        let eta = Jet2::constant(1.0) - tau * eps;
        if eta.value() <= 0.0 {
            return Err(Error::OutOfRegime(format!(
                "eta = {} at {y:?}",
                eta.value()
            )));
        }
        let fbar = f / eta;
        if fbar.value() <= 0.0 {
            return Err(Error::OutOfRegime(format!(
                "fbar = {} at {y:?} is outside D",
                fbar.value()
            )));
        }
        let hbar = eta.recip() * 0.5 - (tau + f * 4.0) * (0.25 * eps);
        let a = params.a;
        let fp = fbar.recip() * (-a) - a * params.b();
        let fpp = fbar.powi(-2) * a;
        let w = m.box_op(&fbar) * 0.5 - hbar;
        let a_coef = (fp * fp + fpp) * m.dot(&fbar, &fbar) + hbar * fp * 2.0;
        Ok(ConjugationJets {
            m,
            f,
            tau,
            eta,
            fbar,
            hbar,
            fp,
            fpp,
            w,
            a_coef,
        })
    }

    /// `ℬ = ½ ∇f̄·∇𝒜 + h̄ 𝒜` at the expansion point.
    pub fn b_coef(&self) -> f64 {
        0.5 * self.m.dot(&self.fbar, &self.a_coef).value() + self.hbar.value() * self.a_coef.value()
    }

    /// `∇^♯f̄` chart components.
    pub fn s_vec(&self) -> [f64; 2] {
        let gi = self.m.ginv_value();
        let g = self.fbar.grad();
        [gi[0] * g[0], gi[1] * g[1]]
    }
}

/// Test functions on `U = (x_l, x_r) × (t₋, t₊)`, multiplied by the cutoff `(x - x_l)(x_r - x)`.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum TestKind {
    Zero,
    PolyBump,
    GaussBump,
    Oscillatory(f64),
    /// No cutoff: `1 + t - 2x + tx + ½x² - ¼t²`.
    Quadratic,
    /// No cutoff: `sin(1.3 t + 2.1 x)`.
    SineWave,
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TestFunction {
    pub kind: TestKind,
    pub xl: f64,
    pub xr: f64,
}

impl TestFunction {
    pub fn new(kind: TestKind, xl: f64, xr: f64) -> Self {
        TestFunction { kind, xl, xr }
    }

    /// `{0, polynomial bump, Gaussian bump, oscillatory bump × 3}`.
    pub fn suite(xl: f64, xr: f64) -> Vec<TestFunction> {
        [
            TestKind::Zero,
            TestKind::PolyBump,
            TestKind::GaussBump,
            TestKind::Oscillatory(4.0),
            TestKind::Oscillatory(8.0),
            TestKind::Oscillatory(16.0),
        ]
        .into_iter()
        .map(|k| Self::new(k, xl, xr))
        .collect()
    }

    pub fn name(&self) -> String {
        match self.kind {
            TestKind::Zero => "zero".into(),
            TestKind::PolyBump => "poly_bump".into(),
            TestKind::GaussBump => "gauss_bump".into(),
            TestKind::Oscillatory(k) => format!("osc_k{k}"),
            TestKind::Quadratic => "quadratic".into(),
            TestKind::SineWave => "sine_wave".into(),
        }
    }

    pub fn eval<S: Smooth>(&self, t: S, x: S) -> S {
        let c = |v: f64| S::cst(v);
        let mid = 0.5 * (self.xl + self.xr);
        let cutoff = (x - c(self.xl)) * (c(self.xr) - x);
        let xm = x - c(mid);
        match self.kind {
            TestKind::Zero => c(0.0),
            TestKind::PolyBump => cutoff * (c(1.0) + xm * c(0.5) - t * t * c(0.1)),
            TestKind::GaussBump => cutoff * (-(xm * xm * c(10.0)) - t * t * c(0.5)).exp(),
            TestKind::Oscillatory(k) => cutoff * (xm * c(k) + t).cos() * (-(t * t * c(0.5))).exp(),
            TestKind::Quadratic => {
                c(1.0) + t - x * c(2.0) + t * x + x * x * c(0.5) - t * t * c(0.25)
            }
            TestKind::SineWave => (t * c(1.3) + x * c(2.1)).sin(),
        }
    }

    pub fn jet(&self, y: [f64; 2]) -> Jet2 {
        let v = vars(y);
        self.eval(v[0], v[1])
    }

    pub fn value(&self, y: [f64; 2]) -> f64 {
        self.eval(y[0], y[1])
    }
}

// ---------------------------------------------------------------------------
// Pointwise identity

/// Both sides of the pointwise identity at one point and step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IdentityResidual {
    pub h: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
    /// Largest magnitude among the individual terms.
    pub scale: f64,
}

fn fd_grad(psi: &TestFunction, y: [f64; 2], h: f64) -> [f64; 2] {
    [
        (psi.value([y[0] + h, y[1]]) - psi.value([y[0] - h, y[1]])) / (2.0 * h),
        (psi.value([y[0], y[1] + h]) - psi.value([y[0], y[1] - h])) / (2.0 * h),
    ]
}

fn shift(y: [f64; 2], k: usize, s: f64) -> [f64; 2] {
    let mut z = y;
    z[k] += s;
    z
}

/// `P_β` at `y` with `∇ψ` from central differences of step `h`.
fn p_covector(
    params: &CarlemanParams,
    model: &MetricModel,
    weight: &WeightField,
    psi: &TestFunction,
    y: [f64; 2],
    h: f64,
) -> Result<[f64; 2]> {
    let cj = ConjugationJets::at(params, model, weight, y)?;
    let gi = cj.m.ginv_value();
    let df = cj.fbar.grad();
    let dw = cj.w.grad();
    let dpsi = fd_grad(psi, y, h);
    let v = psi.value(y);
    let s_w = gi[0] * df[0] * dpsi[0] + gi[1] * df[1] * dpsi[1] + cj.w.value() * v;
    let gpsi = gi[0] * dpsi[0] * dpsi[0] + gi[1] * dpsi[1] * dpsi[1];
    let a = cj.a_coef.value();
    Ok([0, 1].map(|b| s_w * dpsi[b] - 0.5 * df[b] * gpsi + 0.5 * (a * df[b] - dw[b]) * v * v))
}

/// `-𝓛ψ·S_wψ + ∇^βP_β` by finite differences against the exact right-hand side
/// `π(∇ψ,∇ψ) - 2F'|S_wψ|² + [½∇f̄·∇𝒜 + 𝒜h̄ - ½□w]ψ²`.
pub fn pointwise_identity_residual(
    params: &CarlemanParams,
    model: &MetricModel,
    weight: &WeightField,
    psi: &TestFunction,
    y: [f64; 2],
    h: f64,
) -> Result<IdentityResidual> {
    let cj = ConjugationJets::at(params, model, weight, y)?;
    let gi = cj.m.ginv_value();
    let g = [cj.m.g[0].value(), cj.m.g[1].value()];
    let df = cj.fbar.grad();
    let pj = psi.jet(y);
    let dpsi = pj.grad();
    let v = pj.value();
    let fp = cj.fp.value();

    // Exact side.
    let hf = cj.m.hessian_value(&cj.fbar);
    let hbar = cj.hbar.value();
    let up = [gi[0] * dpsi[0], gi[1] * dpsi[1]];
    let mut pi_term = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            let gij = if i == j { g[i] } else { 0.0 };
            pi_term += (hf[i][j] - hbar * gij) * up[i] * up[j];
        }
    }
    let s_w_exact = gi[0] * df[0] * dpsi[0] + gi[1] * df[1] * dpsi[1] + cj.w.value() * v;
    let zero_coef = 0.5 * cj.m.dot(&cj.fbar, &cj.a_coef).value() + cj.a_coef.value() * hbar
        - 0.5 * cj.m.box_op(&cj.w).value();
    let rhs = pi_term - 2.0 * fp * s_w_exact * s_w_exact + zero_coef * v * v;

    // Finite-difference side.
    let fval = |z: [f64; 2]| -> Result<f64> {
        let (f, tau) = weight.eval(z);
        let fbar = f.value() / (1.0 - params.eps() * tau.value());
        Ok(params.big_f(fbar))
    };
    let big_f0 = fval(y)?;
    let u = |z: [f64; 2]| -> Result<f64> { Ok((fval(z)? - big_f0).exp() * psi.value(z)) };
    let u0 = u(y)?;
    let mut box_u = 0.0;
    let mut du = [0.0; 2];
    let mut ddu = [0.0; 2];
    for k in 0..2 {
        let up = u(shift(y, k, h))?;
        let um = u(shift(y, k, -h))?;
        du[k] = (up - um) / (2.0 * h);
        ddu[k] = (up - 2.0 * u0 + um) / (h * h);
    }
    for m in 0..2 {
        let mut term = ddu[m];
        for (l, d) in du.iter().enumerate() {
            term -= cj.m.gamma[l][m][m].value() * d;
        }
        box_u += gi[m] * term;
    }
    let l_psi = box_u;
    let dpsi_fd = fd_grad(psi, y, h);
    let s_w_fd = gi[0] * df[0] * dpsi_fd[0] + gi[1] * df[1] * dpsi_fd[1] + cj.w.value() * v;
    let sg0 = cj.m.sqrt_g.value();
    let mut div = 0.0;
    for b in 0..2 {
        let flux = |z: [f64; 2]| -> Result<f64> {
            let mj = MetricJets::at(model, z)?;
            let p = p_covector(params, model, weight, psi, z, h)?;
            Ok(mj.sqrt_g.value() * mj.ginv[b].value() * p[b])
        };
        div += (flux(shift(y, b, h))? - flux(shift(y, b, -h))?) / (2.0 * h);
    }
    div /= sg0;
    let lhs = -l_psi * s_w_fd + div;
    let scale = [
        l_psi * s_w_fd,
        div,
        pi_term,
        2.0 * fp * s_w_exact * s_w_exact,
        zero_coef * v * v,
    ]
    .iter()
    .fold(0.0f64, |m, x| m.max(x.abs()));
    Ok(IdentityResidual {
        h,
        lhs,
        rhs,
        residual: (lhs - rhs).abs(),
        scale,
    })
}

/// Observed convergence orders between consecutive steps.
pub fn observed_orders(res: &[IdentityResidual]) -> Vec<f64> {
    res.windows(2)
        .map(|w| (w[0].residual / w[1].residual).ln() / (w[0].h / w[1].h).ln())
        .collect()
}

// ---------------------------------------------------------------------------
// Integrated estimate

/// Rectangle `U = (x_l, x_r) × (t₋, t₊)` in the chart with a midpoint grid.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CarlemanDomain {
    pub xl: f64,
    pub xr: f64,
    pub t_lo: f64,
    pub t_hi: f64,
    pub nx: usize,
    pub nt: usize,
}

impl CarlemanDomain {
    pub fn dx(&self) -> f64 {
        (self.xr - self.xl) / self.nx as f64
    }

    pub fn dt(&self) -> f64 {
        (self.t_hi - self.t_lo) / self.nt as f64
    }
}

/// Normal data at a chart point: polar quantities and the frame `E_ρ, E_θ` in chart components.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormalData {
    pub y: [f64; 2],
    pub t: f64,
    pub r: f64,
    pub f: f64,
    pub e_rho: [f64; 2],
    pub e_theta: [f64; 2],
    /// `∇_θ t`; only filled at boundary nodes.
    pub g_theta: f64,
}

impl NormalData {
    pub fn omega0(&self) -> f64 {
        self.t / self.r
    }

    pub fn kappa(&self) -> f64 {
        1.0 - self.omega0().powi(2)
    }

    /// `E_0 = (E_θ - ω⁰E_ρ)/κ`.
    pub fn e_0(&self) -> [f64; 2] {
        let (w, k) = (self.omega0(), self.kappa());
        [0, 1].map(|i| (self.e_theta[i] - w * self.e_rho[i]) / k)
    }
}

fn flat_normal_data(basis: &OrthoBasis, y: [f64; 2]) -> NormalData {
    let v = [y[0] - basis.p[0], y[1] - basis.p[1]];
    let c = [v[0] / basis.e[0][0], v[1] / basis.e[1][1]];
    let t = c[0];
    let r = c[1].abs();
    let dir = c[1].signum();
    let w = t / r;
    NormalData {
        y,
        t,
        r,
        f: 0.25 * (r * r - t * t),
        e_rho: [w * basis.e[0][0], dir * basis.e[1][1]],
        e_theta: [basis.e[0][0], w * dir * basis.e[1][1]],
        g_theta: 1.0,
    }
}

fn curved_normal_data(
    model: &MetricModel,
    basis: &OrthoBasis,
    y: [f64; 2],
    guess: &[f64],
    opts: &GeoOptions,
) -> Result<(NormalData, Vec<f64>)> {
    let v = log_map_from(model, &basis.p, &y, guess, 1e-12, opts)?;
    let c = basis.coords(model, &v);
    let r = c[1].abs();
    let f = f_of_coords(&c);
    if f <= 0.0 {
        let nd = NormalData {
            y,
            t: c[0],
            r,
            f,
            e_rho: [f64::NAN; 2],
            e_theta: [f64::NAN; 2],
            g_theta: f64::NAN,
        };
        return Ok((nd, v));
    }
    let om = Omega::new(c[0] / r, &[c[1].signum()])?;
    let fr = radial_frame(model, basis, &om, r, opts)?;
    Ok((
        NormalData {
            y,
            t: c[0],
            r,
            f,
            e_rho: [fr.e_rho[0], fr.e_rho[1]],
            e_theta: [fr.e_theta[0], fr.e_theta[1]],
            g_theta: f64::NAN,
        },
        v,
    ))
}

/// Bulk quadrature cell.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cell {
    pub nd: NormalData,
    /// `√|g| Δt Δx` times the fraction of the cell inside `D`.
    pub weight: f64,
}

/// Boundary node on `∂U ∩ D`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundaryNode {
    pub nd: NormalData,
    /// Outward unit normal `𝒩` in chart components.
    pub normal: [f64; 2],
    /// `√|g_tt| Δt`.
    pub weight: f64,
    /// `+1` on `x = x_r`, `-1` on `x = x_l`.
    pub side: i8,
}

/// Geometry of the quadrature, independent of the weight parameters.
#[derive(Clone, Debug)]
pub struct CarlemanGrid {
    pub model: MetricModel,
    pub p: Vec<f64>,
    pub domain: CarlemanDomain,
    pub cells: Vec<Cell>,
    pub boundary: Vec<BoundaryNode>,
    pub max_r: f64,
}

const SUBSAMPLES: usize = 4;

impl CarlemanGrid {
    pub fn build(
        model: &MetricModel,
        basis: &OrthoBasis,
        domain: CarlemanDomain,
        opts: &GeoOptions,
    ) -> Result<Self> {
        if model.dim != 2 {
            return Err(Error::Parameter(
                "the integrated estimate is implemented in 1+1 dimensions".into(),
            ));
        }
        if domain.nx < 4
            || domain.nt < 4
            || !(domain.xr > domain.xl)
            || !(domain.t_hi > domain.t_lo)
        {
            return Err(Error::Parameter(format!("degenerate domain {domain:?}")));
        }
        let flat = model.kind == ModelKind::Minkowski;
        let p = basis.p.clone();
        let (dx, dt) = (domain.dx(), domain.dt());
        let rows: Vec<Vec<Cell>> = (0..domain.nt)
            .into_par_iter()
            .map(|it| -> Result<Vec<Cell>> {
                let t = domain.t_lo + (it as f64 + 0.5) * dt;
                let mut guess: Option<Vec<f64>> = None;
                let mut row = Vec::new();
                for ix in 0..domain.nx {
                    let x = domain.xl + (ix as f64 + 0.5) * dx;
                    let y = [t, x];
                    let rough = 0.25 * ((x - p[1]).powi(2) - (t - p[0]).powi(2));
                    if rough < -0.1 * (dx + dt) - 0.05 * rough.abs() {
                        guess = None;
                        continue;
                    }
                    let nd = if flat {
                        flat_normal_data(basis, y)
                    } else {
                        let g0: Vec<f64> = guess
                            .clone()
                            .unwrap_or_else(|| vec![y[0] - p[0], y[1] - p[1]]);
                        let (nd, v) = curved_normal_data(model, basis, y, &g0, opts)?;
                        guess = Some(v);
                        nd
                    };
                    if nd.f <= 0.0 {
                        continue;
                    }
                    let g = model.metric_diag(&y);
                    let dfc = [0, 1].map(|i| g[i] * 0.5 * nd.r * nd.e_rho[i]);
                    let mut inside = 0usize;
                    for a in 0..SUBSAMPLES {
                        for b in 0..SUBSAMPLES {
                            let ot = ((a as f64 + 0.5) / SUBSAMPLES as f64 - 0.5) * dt;
                            let ox = ((b as f64 + 0.5) / SUBSAMPLES as f64 - 0.5) * dx;
                            if nd.f + dfc[0] * ot + dfc[1] * ox > 0.0 {
                                inside += 1;
                            }
                        }
                    }
                    let frac = inside as f64 / (SUBSAMPLES * SUBSAMPLES) as f64;
                    row.push(Cell {
                        nd,
                        weight: model.volume_element(&y) * dt * dx * frac,
                    });
                }
                Ok(row)
            })
            .collect::<Result<Vec<_>>>()?;
        let cells: Vec<Cell> = rows.into_iter().flatten().collect();
        if cells.is_empty() {
            return Err(Error::EmptySample(
                "U ∩ D contains no quadrature cells".into(),
            ));
        }
        let boundary = boundary_nodes(model, basis, domain, opts)?;
        let max_r = cells.iter().map(|c| c.nd.r).fold(0.0, f64::max);
        Ok(CarlemanGrid {
            model: model.clone(),
            p,
            domain,
            cells,
            boundary,
            max_r,
        })
    }

    /// Checks `U ∩ D ⊆ {r < r₀}`.
    pub fn check_radius(&self, r0: f64) -> Result<()> {
        if self.max_r >= r0 {
            return Err(Error::Config(format!(
                "U ∩ D reaches r = {:.4} >= r0 = {r0}; the region must lie in D_r0",
                self.max_r
            )));
        }
        Ok(())
    }
}

/// Nodes of `∂U ∩ D` at the time midpoints of `domain`, with outward normals.
pub fn boundary_nodes(
    model: &MetricModel,
    basis: &OrthoBasis,
    domain: CarlemanDomain,
    opts: &GeoOptions,
) -> Result<Vec<BoundaryNode>> {
    let flat = model.kind == ModelKind::Minkowski;
    let p = &basis.p;
    let dt = domain.dt();
    let topts = TransportOptions {
        geo: *opts,
        ..TransportOptions::default()
    };
    let nodes: Vec<(i8, f64, usize)> = [(-1i8, domain.xl), (1i8, domain.xr)]
        .into_iter()
        .flat_map(|(side, x)| (0..domain.nt).map(move |it| (side, x, it)))
        .collect();
    let boundary: Vec<Option<BoundaryNode>> = nodes
        .par_iter()
        .map(|&(side, x, it)| -> Result<Option<BoundaryNode>> {
            let t = domain.t_lo + (it as f64 + 0.5) * dt;
            let y = [t, x];
            let rough = 0.25 * ((x - p[1]).powi(2) - (t - p[0]).powi(2));
            if rough < -0.05 {
                return Ok(None);
            }
            let nd = if flat {
                flat_normal_data(basis, y)
            } else {
                let g0 = vec![y[0] - p[0], y[1] - p[1]];
                let (mut nd, _) = curved_normal_data(model, basis, y, &g0, opts)?;
                if nd.f > 0.0 {
                    let om = Omega::new(nd.omega0(), &[(nd.e_rho[1] * basis.e[1][1]).signum()])?;
                    let st = radial_transport(model, basis, &om, &[nd.r], &topts)
                        .pop()
                        .unwrap()?;
                    nd.g_theta = st.t.grad_t[1];
                }
                nd
            };
            if nd.f <= 0.0 {
                return Ok(None);
            }
            let g = model.metric_diag(&y);
            Ok(Some(BoundaryNode {
                nd,
                normal: [0.0, side as f64 / g[1].sqrt()],
                weight: g[0].abs().sqrt() * dt,
                side,
            }))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(boundary.into_iter().flatten().collect())
}

/// Boundary integrand sample `ζ 𝒩(f̄) |𝒩φ|²` with its measure.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundarySample {
    pub y: [f64; 2],
    pub side: i8,
    pub n_fbar: f64,
    pub n_phi: f64,
    pub integrand: f64,
    pub weight: f64,
}

/// `𝒩(f η⁻¹)` at a boundary node.
pub fn normal_fbar(params: &CarlemanParams, model: &MetricModel, node: &BoundaryNode) -> f64 {
    let nd = &node.nd;
    let g = model.metric_diag(&nd.y);
    let k = nd.kappa();
    let n = node.normal;
    let gdot = |v: &[f64; 2]| g[0] * v[0] * n[0] + g[1] * v[1] * n[1];
    let nf = 0.5 * nd.r * gdot(&nd.e_rho);
    let nt = nd.omega0() / k * gdot(&nd.e_rho) - nd.g_theta / k * gdot(&nd.e_theta);
    let eta = 1.0 - params.eps() * nd.t * nd.t;
    nf / eta + nd.f * 2.0 * params.eps() * nd.t * nt / (eta * eta)
}

pub fn boundary_term(
    params: &CarlemanParams,
    grid: &CarlemanGrid,
    phi: &TestFunction,
) -> Vec<BoundarySample> {
    grid.boundary
        .iter()
        .map(|node| {
            let nd = &node.nd;
            let eta = 1.0 - params.eps() * nd.t * nd.t;
            let zeta = params.zeta(nd.f / eta);
            let n_fbar = normal_fbar(params, &grid.model, node);
            let gphi = phi.jet(nd.y).grad();
            let n_phi = gphi[0] * node.normal[0] + gphi[1] * node.normal[1];
            BoundarySample {
                y: nd.y,
                side: node.side,
                n_fbar,
                n_phi,
                integrand: zeta * n_fbar * n_phi * n_phi,
                weight: node.weight,
            }
        })
        .collect()
}

/// Terms of the integrated Carleman estimate for one test function.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct CarlemanIntegrals {
    pub lhs_grad: f64,
    pub lhs_zero: f64,
    pub rhs_bulk: f64,
    pub rhs_boundary: f64,
    /// `RHS - LHS`.
    pub margin: f64,
    /// `ε ∫ ζ ρ² [(E_ρφ)² + (E_0φ)²]`.
    pub e0_grad: f64,
    /// Largest `C'` for which the `E_0` form of the estimate holds.
    pub c_prime: f64,
}

pub const TRACE_TOL: f64 = 1e-10;

pub fn integrated_carleman(
    params: &CarlemanParams,
    grid: &CarlemanGrid,
    phi: &TestFunction,
) -> Result<CarlemanIntegrals> {
    grid.check_radius(params.r0)?;
    let bulk_max = grid
        .cells
        .iter()
        .map(|c| phi.value(c.nd.y).abs())
        .fold(0.0, f64::max);
    let trace_max = grid
        .boundary
        .iter()
        .map(|b| phi.value(b.nd.y).abs())
        .fold(0.0, f64::max);
    if trace_max > TRACE_TOL * (1.0 + bulk_max) {
        return Err(Error::Contract(format!(
            "test function does not vanish on the boundary (|φ| = {trace_max:.3e})"
        )));
    }
    let eps = params.eps();
    let model = &grid.model;
    let per: Vec<[f64; 4]> = grid
        .cells
        .par_iter()
        .map(|cell| -> Result<[f64; 4]> {
            let nd = &cell.nd;
            let eta = 1.0 - eps * nd.t * nd.t;
            let zeta = params.zeta(nd.f / eta);
            if zeta == 0.0 || cell.weight == 0.0 {
                return Ok([0.0; 4]);
            }
            let pj = phi.jet(nd.y);
            let g = pj.grad();
            let along = |e: &[f64; 2]| g[0] * e[0] + g[1] * e[1];
            let (er, et, e0) = (along(&nd.e_rho), along(&nd.e_theta), along(&nd.e_0()));
            let rho2 = 4.0 * nd.f;
            let r2 = nd.r * nd.r;
            let box_phi = MetricJets::at(model, nd.y)?.box_op(&pj).value();
            let v = pj.value();
            let w = cell.weight * zeta;
            Ok([
                w * r2 * (r2 / rho2) * (er * er + et * et),
                w * v * v,
                w * nd.f * box_phi * box_phi,
                w * rho2 * (er * er + e0 * e0),
            ])
        })
        .collect::<Result<Vec<_>>>()?;
    let col = |k: usize| pairwise_sum(&per.iter().map(|p| p[k]).collect::<Vec<_>>());
    let a = params.a;
    let b = params.b();
    let lhs_grad = eps / 64.0 * col(0);
    let lhs_zero = 0.125 * a * a * b * col(1);
    let rhs_bulk = col(2) / (4.0 * a);
    let samples = boundary_term(params, grid, phi);
    let rhs_boundary = 0.5
        * pairwise_sum(
            &samples
                .iter()
                .map(|s| s.integrand * s.weight)
                .collect::<Vec<_>>(),
        );
    let rhs = rhs_bulk + rhs_boundary;
    let e0_grad = eps * col(3);
    let c_prime = if e0_grad > 0.0 {
        (rhs - lhs_zero) / e0_grad
    } else {
        f64::INFINITY
    };
    Ok(CarlemanIntegrals {
        lhs_grad,
        lhs_zero,
        rhs_bulk,
        rhs_boundary,
        margin: rhs - lhs_grad - lhs_zero,
        e0_grad,
        c_prime,
    })
}

// ---------------------------------------------------------------------------
// Boundary layer on H_δ = {f = δ}

/// Surface integrals over `U ∩ H_δ`.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct LayerIntegral {
    pub delta: f64,
    /// `δ⁻¹ ∫ r₀ eᵃ f^{2a} [(E_ρφ)² + (E_θφ)² + a² f⁻¹ φ²] dσ`.
    pub estimate: f64,
    /// `δ⁻¹ ∫ P*(∇^♯f) dσ`, available with flat weights.
    pub flux: Option<f64>,
}

/// `P*(∇^♯f)` at `y` from exact jets.
pub fn p_star_radial(
    params: &CarlemanParams,
    model: &MetricModel,
    weight: &WeightField,
    phi: &TestFunction,
    y: [f64; 2],
) -> Result<f64> {
    let cj = ConjugationJets::at(params, model, weight, y)?;
    let a = params.a;
    let emf = (cj.fbar.ln() + cj.fbar * params.b()).scale(a).exp();
    let psi = emf * phi.jet(y);
    let gi = cj.m.ginv_value();
    let dpsi = psi.grad();
    let df = cj.fbar.grad();
    let dw = cj.w.grad();
    let dfr = cj.f.grad();
    let v = psi.value();
    let s_psi = gi[0] * df[0] * dpsi[0] + gi[1] * df[1] * dpsi[1];
    let gpsi = gi[0] * dpsi[0] * dpsi[0] + gi[1] * dpsi[1] * dpsi[1];
    let av = cj.a_coef.value();
    let p = [0, 1].map(|b| {
        s_psi * dpsi[b] - 0.5 * df[b] * gpsi
            + cj.w.value() * v * dpsi[b]
            + 0.5 * (av * df[b] - dw[b]) * v * v
    });
    Ok(gi[0] * dfr[0] * p[0] + gi[1] * dfr[1] * p[1])
}

/// Evaluates the `H_δ` integrals on the branch `x > p¹`, parametrized by the normal radius.
pub fn boundary_layer(
    params: &CarlemanParams,
    model: &MetricModel,
    basis: &OrthoBasis,
    xl: f64,
    xr: f64,
    phi: &TestFunction,
    delta: f64,
    nodes: usize,
    opts: &GeoOptions,
) -> Result<LayerIntegral> {
    if model.dim != 2 {
        return Err(Error::Parameter(
            "the boundary layer is implemented in 1+1 dimensions".into(),
        ));
    }
    let flat = model.kind == ModelKind::Minkowski;
    let lo = ((xl - basis.p[1]) * 0.8).max(2.0 * delta.sqrt() * 1.01);
    let hi = (xr - basis.p[1]) * 1.2;
    let ds = (hi - lo) / nodes as f64;
    let a = params.a;
    let weight = WeightField::Flat {
        p: [basis.p[0], basis.p[1]],
    };
    let point = |s: f64, sign: f64| -> Result<([f64; 2], [f64; 2], [f64; 2])> {
        let t = sign * (s * s - 4.0 * delta).sqrt();
        if flat {
            let y = [
                basis.p[0] + t * basis.e[0][0],
                basis.p[1] + s * basis.e[1][1],
            ];
            let nd = flat_normal_data(basis, y);
            return Ok((y, nd.e_rho, nd.e_theta));
        }
        let fr = radial_frame(model, basis, &Omega::new(t / s, &[1.0])?, s, opts)?;
        Ok((
            [fr.x[0], fr.x[1]],
            [fr.e_rho[0], fr.e_rho[1]],
            [fr.e_theta[0], fr.e_theta[1]],
        ))
    };
    let terms: Vec<(f64, f64)> = (0..2 * nodes)
        .into_par_iter()
        .map(|k| -> Result<(f64, f64)> {
            let sign = if k < nodes { 1.0 } else { -1.0 };
            let s = lo + ((k % nodes) as f64 + 0.5) * ds;
            let (y, er, et) = point(s, sign)?;
            if !(y[1] > xl && y[1] < xr) {
                return Ok((0.0, 0.0));
            }
            let h = 1e-5 * s;
            let (yp, _, _) = point(s + h, sign)?;
            let (ym, _, _) = point(s - h, sign)?;
            let tang = [(yp[0] - ym[0]) / (2.0 * h), (yp[1] - ym[1]) / (2.0 * h)];
            let g = model.metric_diag(&y);
            let dsigma = (g[0] * tang[0] * tang[0] + g[1] * tang[1] * tang[1])
                .abs()
                .sqrt()
                * ds;
            let pj = phi.jet(y);
            let gp = pj.grad();
            let e1 = gp[0] * er[0] + gp[1] * er[1];
            let e2 = gp[0] * et[0] + gp[1] * et[1];
            let v = pj.value();
            let est = params.r0
                * a.exp()
                * delta.powf(2.0 * a)
                * (e1 * e1 + e2 * e2 + a * a / delta * v * v)
                * dsigma;
            let flux = if flat {
                p_star_radial(params, model, &weight, phi, y)? * dsigma
            } else {
                0.0
            };
            Ok((est, flux))
        })
        .collect::<Result<Vec<_>>>()?;
    let est = pairwise_sum(&terms.iter().map(|t| t.0).collect::<Vec<_>>()) / delta;
    let flux = pairwise_sum(&terms.iter().map(|t| t.1).collect::<Vec<_>>()) / delta;
    Ok(LayerIntegral {
        delta,
        estimate: est,
        flux: if flat { Some(flux) } else { None },
    })
}

/// `log(Q(δ₁)/Q(δ₂)) / log(δ₁/δ₂)`.
pub fn decay_exponent(q1: f64, d1: f64, q2: f64, d2: f64) -> f64 {
    (q1.abs() / q2.abs()).ln() / (d1 / d2).ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geodesic_engine::Omega;

    fn params(n: usize) -> CarlemanParams {
        CarlemanParams::defaults(n, 1.0)
    }

    fn minkowski_state(dim: usize, w0: f64, r: f64) -> RadialState {
        let m = MetricModel::minkowski(dim);
        let b = OrthoBasis::standard(&m, &vec![0.0; dim]).unwrap();
        let mut dir = vec![0.0; dim - 1];
        dir[0] = 1.0;
        radial_transport(
            &m,
            &b,
            &Omega::new(w0, &dir).unwrap(),
            &[r],
            &TransportOptions::default(),
        )
        .pop()
        .unwrap()
        .unwrap()
    }

    #[test]
    fn weight_examples() {
        let p = CarlemanParams {
            n: 1,
            a: 2.0,
            b0: 0.0,
            eps0: 0.0,
            r0: 1.0,
        };
        assert_eq!(p.big_f(1.0), 0.0);
        assert_eq!(p.zeta(1.0), 1.0);
        let p = CarlemanParams {
            n: 1,
            a: 2.0,
            b0: 1.0,
            eps0: 0.0,
            r0: 1.0,
        };
        assert!((p.big_f(1.0) + 2.0).abs() < 1e-15);
        assert!((p.zeta(1.0) - 4f64.exp()).abs() < 1e-12 * 4f64.exp());
    }

    #[test]
    fn validation() {
        assert!(CarlemanParams::new(2, 3.0, 0.2, 0.05, 1.0).is_err());
        assert!(CarlemanParams::new(2, 4.0, 0.2, 0.06, 1.0).is_err());
        assert!(CarlemanParams::new(2, 4.0, 0.3, 0.05, 1.0).is_err());
        assert!(CarlemanParams::new(2, 4.0, 0.2, 0.05, 1.0).is_ok());
    }

    #[test]
    fn w_matches_c_n_near_vertex() {
        for dim in [2usize, 3] {
            let pr = params(dim - 1);
            let pc = PcPoint::new(&pr.pc(), &minkowski_state(dim, 0.2, 0.05)).unwrap();
            let cb = conjugation_bundle(&pr, &pc).unwrap();
            assert!(
                (cb.w - pr.c_n()).abs() < 10.0 * pr.eps() * 0.05 * 0.05,
                "{} vs {}",
                cb.w,
                pr.c_n()
            );
        }
    }

    #[test]
    fn vertex_margin_matches_closed_form() {
        for a in [1.0, 4.0, 16.0] {
            let pr = params(1).with_a(a);
            let pc = PcPoint::new(&pr.pc(), &minkowski_state(2, 0.0, 1e-3)).unwrap();
            let cb = conjugation_bundle(&pr, &pc).unwrap();
            let oracle = vertex_b_margin(a, pr.b(), pr.eps());
            assert!(
                (cb.b_margin - oracle).abs() < 1e-4 * (1.0 + oracle.abs()),
                "a={a}: {} vs {oracle}",
                cb.b_margin
            );
        }
    }

    #[test]
    fn b_from_frames_matches_jets() {
        let pr = params(1);
        let st = minkowski_state(2, 0.35, 1.2);
        let pc = PcPoint::new(&pr.pc(), &st).unwrap();
        let cb = conjugation_bundle(&pr, &pc).unwrap();
        let m = MetricModel::minkowski(2);
        let y = [st.point.x[0], st.point.x[1]];
        let cj = ConjugationJets::at(&pr, &m, &WeightField::Flat { p: [0.0, 0.0] }, y).unwrap();
        assert!((cj.b_coef() - cb.b_coef).abs() < 1e-10 * cb.b_coef.abs().max(1.0));
        assert!((cj.w.value() - cb.w).abs() < 1e-12);
        assert!((cj.a_coef.value() - cb.a_coef).abs() < 1e-10 * cb.a_coef.abs());
    }

    #[test]
    fn warped_b_matches_quadratic_weight_jets() {
        let pr = params(1);
        let m = MetricModel::warped(2, 0.05, 1.0);
        let b = OrthoBasis::standard(&m, &[0.0, 0.0]).unwrap();
        let st = radial_transport(
            &m,
            &b,
            &Omega::new(0.3, &[1.0]).unwrap(),
            &[1.1],
            &TransportOptions::default(),
        )
        .pop()
        .unwrap()
        .unwrap();
        let pc = PcPoint::new(&pr.pc(), &st).unwrap();
        let cb = conjugation_bundle(&pr, &pc).unwrap();
        let y = [st.point.x[0], st.point.x[1]];
        let wf = WeightField::quadratic(&m, &b, y, &FdOracle::new(1.0)).unwrap();
        let cj = ConjugationJets::at(&pr, &m, &wf, y).unwrap();
        assert!(
            (cj.b_coef() - cb.b_coef).abs() < 1e-5 * cb.b_coef.abs(),
            "{} vs {}",
            cj.b_coef(),
            cb.b_coef
        );
    }

    #[test]
    fn identity_converges_in_flat_space() {
        let pr = CarlemanParams::defaults(1, 2.1).with_a(1.0);
        let m = MetricModel::minkowski(2);
        let wf = WeightField::Flat { p: [0.0, 0.0] };
        let psi = TestFunction::new(TestKind::Quadratic, 1.0, 2.0);
        let r: Vec<_> = [1e-2, 1e-3]
            .iter()
            .map(|&h| pointwise_identity_residual(&pr, &m, &wf, &psi, [0.2, 1.8], h).unwrap())
            .collect();
        assert!(r[1].residual < 1e-5, "{:?}", r);
        assert!(observed_orders(&r)[0] > 1.9);
        let zero = TestFunction::new(TestKind::Zero, 1.0, 2.0);
        assert_eq!(
            pointwise_identity_residual(&pr, &m, &wf, &zero, [0.3, 1.5], 1e-3)
                .unwrap()
                .residual,
            0.0
        );
    }

    #[test]
    fn flat_boundary_normal_signs() {
        let pr = CarlemanParams::defaults(1, 2.1);
        let m = MetricModel::minkowski(2);
        let b = OrthoBasis::standard(&m, &[0.0, 0.0]).unwrap();
        let dom = CarlemanDomain {
            xl: 1.0,
            xr: 2.0,
            t_lo: -2.0,
            t_hi: 2.0,
            nx: 16,
            nt: 32,
        };
        let grid = CarlemanGrid::build(&m, &b, dom, &GeoOptions::default()).unwrap();
        for node in &grid.boundary {
            let nf = normal_fbar(&pr, &m, node);
            let t = node.nd.t;
            let eta = 1.0 - pr.eps() * t * t;
            let x = node.nd.y[1];
            let expect = node.side as f64 * 0.5 * x / eta;
            assert!((nf - expect).abs() < 1e-12, "{nf} vs {expect}");
        }
        let zero = TestFunction::new(TestKind::Zero, 1.0, 2.0);
        let res = integrated_carleman(&pr, &grid, &zero).unwrap();
        assert_eq!(res.margin, 0.0);
        let bad = TestFunction::new(TestKind::SineWave, 1.0, 2.0);
        assert!(matches!(
            integrated_carleman(&pr, &grid, &bad),
            Err(Error::Contract(_))
        ));
    }
}
