//! The shifted hyperquadric `f̄ = f/η`, `η = 1 - εt²`, its tangency maps and
//! barred frames, and the pseudoconvexity inequality for its level sets.
//!
//! All quantities are assembled algebraically at a transported
//! [`RadialState`]. Vectors are stored by their components on the radial
//! frame `(E_ρ, E_θ, E_A…)`, whose metric is `diag(κ, -κ, 1, …)`.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::cli_report::report::CheckRow;
use crate::error::{Error, Result};
use crate::geodesic_engine::{Frame, OrthoBasis, Sampling};
use crate::hyperquadric::{
    f_of_coords, sample_states, FdOracle, FramePoint, RadialState, Stencil, TransportOptions,
};
use crate::metric_models::{CurvatureBudget, MetricModel};

/// Upper limit accepted for `ε₀`.
pub const EPS0_MAX: f64 = 0.1;
/// Tolerance on `X f = 0` for inputs of [`PcPoint::p_map`].
pub const TANGENCY_TOL: f64 = 1e-8;
/// Random `f̄`-tangent directions per point in the pseudoconvexity sweep.
pub const DIRECTIONS_PER_POINT: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PcParams {
    pub eps0: f64,
    pub r0: f64,
}

impl PcParams {
    pub fn new(eps0: f64, r0: f64) -> Result<Self> {
        if !(0.0..=EPS0_MAX).contains(&eps0) {
            return Err(Error::Parameter(format!(
                "eps0 = {eps0} outside [0, {EPS0_MAX}]"
            )));
        }
        if !(r0 > 0.0 && r0.is_finite()) {
            return Err(Error::Parameter(format!("r0 = {r0} must be positive")));
        }
        Ok(PcParams { eps0, r0 })
    }

    /// `ε = ε₀/r₀²`.
    pub fn eps(&self) -> f64 {
        self.eps0 / (self.r0 * self.r0)
    }
}

/// `(η, f̄, h̄)` at a frame point.
pub fn eta_fbar_hbar(params: &PcParams, fp: &FramePoint) -> Result<(f64, f64, f64)> {
    let eps = params.eps();
    let eta = 1.0 - eps * fp.t * fp.t;
    if eta <= 0.0 {
        return Err(Error::OutOfRegime(format!("eta = {eta} at t = {}", fp.t)));
    }
    Ok((eta, fp.f / eta, 0.5 / eta - 0.25 * eps * fp.r * fp.r))
}

/// Barred frame at a point, in radial-frame components.
#[derive(Clone, Debug, PartialEq)]
pub struct BarredFrame {
    /// `Ē_ρ = (2/r) ∇^♯f̄`.
    pub rho: Vec<f64>,
    /// `Ē_θ` followed by the `Ē_A`.
    pub tangential: Vec<Vec<f64>>,
}

/// `π = ∇²f̄ - h̄ g` on `(Ē_ρ, Ē_θ, Ē_A…)`.
#[derive(Clone, Debug, PartialEq)]
pub struct PiTensor {
    pub dim: usize,
    pub pi: Vec<f64>,
    pub hbar: f64,
}

impl PiTensor {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.pi[i * self.dim + j]
    }
}

/// First and second derivatives of `t², η, f, f̄` at one point, in the radial frame.
#[derive(Clone, Debug)]
pub struct PcPoint {
    pub params: PcParams,
    pub dim: usize,
    pub r: f64,
    pub t: f64,
    pub f: f64,
    pub kappa: f64,
    pub eta: f64,
    pub fbar: f64,
    pub hbar: f64,
    /// Frame metric `diag(κ, -κ, 1, …)`.
    pub gdiag: Vec<f64>,
    pub dt: Vec<f64>,
    pub deta: Vec<f64>,
    pub heta: Vec<f64>,
    pub df: Vec<f64>,
    pub hf: Vec<f64>,
    pub dfbar: Vec<f64>,
    pub hfbar: Vec<f64>,
    /// Tangential block of `q`.
    pub q: Vec<f64>,
}

fn outer(u: &[f64], w: &[f64]) -> Vec<f64> {
    u.iter()
        .flat_map(|a| w.iter().map(move |b| a * b))
        .collect()
}

impl PcPoint {
    pub fn new(params: &PcParams, st: &RadialState) -> Result<Self> {
        let fp = &st.point;
        let (eta, fbar, hbar) = eta_fbar_hbar(params, fp)?;
        let eps = params.eps();
        let d = st.t.dim;
        let nt = d - 1;
        let kappa = fp.kappa();
        let mut gdiag = vec![1.0; d];
        gdiag[0] = kappa;
        gdiag[1] = -kappa;
        let dt = st.t.grad_t.clone();
        let deta: Vec<f64> = dt.iter().map(|v| -2.0 * eps * fp.t * v).collect();
        let heta: Vec<f64> = st.t.hess_t2.iter().map(|v| -eps * v).collect();
        let mut df = vec![0.0; d];
        df[0] = 0.5 * fp.r * kappa;
        let mut hf = vec![0.0; d * d];
        for i in 0..d {
            hf[i * d + i] = 0.5 * gdiag[i];
        }
        for a in 0..nt {
            for b in 0..nt {
                hf[(a + 1) * d + b + 1] += st.q.get(a, b);
            }
        }
        let f = fp.f;
        let dfbar: Vec<f64> = (0..d)
            .map(|i| df[i] / eta - f * deta[i] / (eta * eta))
            .collect();
        let fde = outer(&df, &deta);
        let ede = outer(&deta, &deta);
        let hfbar: Vec<f64> = (0..d * d)
            .map(|k| {
                let (i, j) = (k / d, k % d);
                hf[k] / eta - (fde[k] + fde[j * d + i]) / (eta * eta)
                    + 2.0 * f * ede[k] / eta.powi(3)
                    - f * heta[k] / (eta * eta)
            })
            .collect();
        Ok(PcPoint {
            params: *params,
            dim: d,
            r: fp.r,
            t: fp.t,
            f,
            kappa,
            eta,
            fbar,
            hbar,
            gdiag,
            dt,
            deta,
            heta,
            df,
            hf,
            dfbar,
            hfbar,
            q: st.q.q.clone(),
        })
    }

    pub fn inner(&self, u: &[f64], w: &[f64]) -> f64 {
        (0..self.dim).map(|i| self.gdiag[i] * u[i] * w[i]).sum()
    }

    pub fn apply(cov: &[f64], v: &[f64]) -> f64 {
        cov.iter().zip(v).map(|(a, b)| a * b).sum()
    }

    pub fn bilinear(&self, m: &[f64], u: &[f64], w: &[f64]) -> f64 {
        let d = self.dim;
        let mut acc = 0.0;
        for i in 0..d {
            for j in 0..d {
                acc += m[i * d + j] * u[i] * w[j];
            }
        }
        acc
    }

    pub fn raise(&self, cov: &[f64]) -> Vec<f64> {
        cov.iter().zip(&self.gdiag).map(|(c, g)| c / g).collect()
    }

    /// `∇^♯f = (r/2) E_ρ`.
    pub fn grad_f_sharp(&self) -> Vec<f64> {
        self.raise(&self.df)
    }

    /// `η - ∇^α f ∇_α η`, identically 1.
    pub fn p_normalizer(&self) -> f64 {
        self.eta - Self::apply(&self.deta, &self.grad_f_sharp())
    }

    /// `P X = X + (η - ∇f·∇η)^{-1} (Xη) ∇^♯f` for an `f`-tangent `X`.
    pub fn p_map(&self, x: &[f64]) -> Result<Vec<f64>> {
        let xf = Self::apply(&self.df, x);
        let scale = 1.0 + x.iter().map(|v| v.abs()).fold(0.0, f64::max);
        if xf.abs() > TANGENCY_TOL * scale * self.r.max(1e-300) {
            return Err(Error::Contract(format!(
                "vector is not f-tangent: X f = {xf:.3e}"
            )));
        }
        let c = Self::apply(&self.deta, x) / self.p_normalizer();
        let s = self.grad_f_sharp();
        Ok(x.iter().zip(&s).map(|(a, b)| a + c * b).collect())
    }

    /// `P̄ X̄ = X̄ - η^{-1} (X̄η) ∇^♯f` for an `f̄`-tangent `X̄`.
    pub fn pbar_map(&self, xb: &[f64]) -> Result<Vec<f64>> {
        let xf = Self::apply(&self.dfbar, xb);
        let scale = 1.0 + xb.iter().map(|v| v.abs()).fold(0.0, f64::max);
        if xf.abs() > TANGENCY_TOL * scale * self.r.max(1e-300) {
            return Err(Error::Contract(format!(
                "vector is not fbar-tangent: X fbar = {xf:.3e}"
            )));
        }
        let c = Self::apply(&self.deta, xb) / self.eta;
        let s = self.grad_f_sharp();
        Ok(xb.iter().zip(&s).map(|(a, b)| a - c * b).collect())
    }

    fn unit(&self, i: usize) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        v[i] = 1.0;
        v
    }

    pub fn barred_frame(&self) -> BarredFrame {
        let d = self.dim;
        let tangential = (1..d)
            .map(|i| {
                let mut v = self.unit(i);
                v[0] += 0.5 * self.r * self.deta[i];
                v
            })
            .collect();
        let sharp = self.raise(&self.dfbar);
        BarredFrame {
            rho: sharp.iter().map(|v| 2.0 * v / self.r).collect(),
            tangential,
        }
    }

    /// Barred frame vectors in the order `Ē_ρ, Ē_θ, Ē_A…`.
    pub fn barred_vectors(&self) -> Vec<Vec<f64>> {
        let bf = self.barred_frame();
        let mut v = vec![bf.rho];
        v.extend(bf.tangential);
        v
    }

    pub fn pi_tensor(&self) -> PiTensor {
        let vecs = self.barred_vectors();
        let d = self.dim;
        let mut pi = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                pi[i * d + j] = self.bilinear(&self.hfbar, &vecs[i], &vecs[j])
                    - self.hbar * self.inner(&vecs[i], &vecs[j]);
            }
        }
        PiTensor {
            dim: d,
            pi,
            hbar: self.hbar,
        }
    }

    /// `ḡ₊` on the tangential barred frame: `diag(κ, 1, …)`.
    pub fn gbar_plus_diag(&self) -> Vec<f64> {
        let mut v = vec![1.0; self.dim - 1];
        v[0] = self.kappa;
        v
    }

    /// `ḡ₊(X̄, Ȳ)` evaluated from its definition `g₊(P̄X̄, P̄Ȳ)`.
    pub fn gbar_plus(&self, xb: &[f64], yb: &[f64]) -> Result<f64> {
        let x = self.pbar_map(xb)?;
        let y = self.pbar_map(yb)?;
        // g₊ = g + (2r²/ρ²) E_θ♭ ⊗ E_θ♭, with g(E_θ, ·) = -κ (·)^θ.
        let k = self.kappa;
        Ok(self.inner(&x, &y) + (2.0 / k) * (k * x[1]) * (k * y[1]))
    }

    /// The tangential block `M = π - (ε₀/8)(r²/r₀²) ḡ₊` in barred-frame coefficients.
    pub fn margin_matrix(&self) -> DMatrix<f64> {
        let pi = self.pi_tensor();
        let nt = self.dim - 1;
        let c = self.margin_weight();
        let gp = self.gbar_plus_diag();
        DMatrix::from_fn(nt, nt, |a, b| {
            pi.get(a + 1, b + 1) - if a == b { c * gp[a] } else { 0.0 }
        })
    }

    /// `(ε₀/8) r²/r₀²`.
    pub fn margin_weight(&self) -> f64 {
        self.params.eps0 / 8.0 * self.r * self.r / (self.params.r0 * self.params.r0)
    }

    /// Margin for barred-frame coefficients `c` (normalized internally to `ḡ₊ = 1`).
    pub fn margin(&self, coeffs: &[f64]) -> f64 {
        let gp = self.gbar_plus_diag();
        let norm2: f64 = coeffs.iter().zip(&gp).map(|(c, g)| c * c * g).sum();
        let m = self.margin_matrix();
        let nt = self.dim - 1;
        let mut acc = 0.0;
        for a in 0..nt {
            for b in 0..nt {
                acc += m[(a, b)] * coeffs[a] * coeffs[b];
            }
        }
        acc / norm2
    }

    /// Exact minimum of [`Self::margin`] over all tangent directions.
    pub fn min_margin_exact(&self) -> f64 {
        let m = self.margin_matrix();
        let s: Vec<f64> = self
            .gbar_plus_diag()
            .iter()
            .map(|g| 1.0 / g.sqrt())
            .collect();
        let nt = s.len();
        let w = DMatrix::from_fn(nt, nt, |a, b| m[(a, b)] * s[a] * s[b]);
        SymmetricEigen::new(w)
            .eigenvalues
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min)
    }

    /// Minimum of [`Self::margin`] over `n` random directions drawn from `seed`.
    pub fn min_margin_sampled(&self, n: usize, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let nt = self.dim - 1;
        (0..n)
            .map(|_| {
                let c: Vec<f64> = (0..nt).map(|_| rng.gen_range(-1.0..1.0)).collect();
                self.margin(&c)
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// `∇^α f̄ ∇_α f̄`.
    pub fn grad_fbar_sq(&self) -> f64 {
        Self::apply(&self.dfbar, &self.raise(&self.dfbar))
    }

    /// Shifted Gauss lemma residuals `(ℰ₁, ℰ₂)`.
    pub fn shifted_gauss(&self) -> (f64, f64) {
        let eps = self.params.eps();
        let et2 = eps * self.t * self.t;
        let e1 = self.eta.powi(2) * self.grad_fbar_sq() / self.fbar - 1.0 - et2;
        let s = self.raise(&self.dfbar);
        let e2 = 2.0 * self.eta.powi(4) * self.bilinear(&self.hfbar, &s, &s) / self.fbar
            - 1.0
            - 5.0 * et2
            - 2.0 * et2 * et2;
        (e1, e2)
    }

    /// `∇η(E_ρ) + 2εt²/r` and `∇²η(E_ρ, E_ρ) + 2εt²/r²`.
    pub fn radial_eta_identities(&self) -> (f64, f64) {
        let eps = self.params.eps();
        let t2 = self.t * self.t;
        (
            self.deta[0] + 2.0 * eps * t2 / self.r,
            self.heta[0] + 2.0 * eps * t2 / (self.r * self.r),
        )
    }
}

/// Chart components of a radial-frame vector.
pub fn to_chart(frame: &Frame, v: &[f64]) -> Vec<f64> {
    let mut out: Vec<f64> = frame.e_rho.iter().map(|e| v[0] * e).collect();
    for (k, e) in frame.tangential().iter().enumerate() {
        for (o, c) in out.iter_mut().zip(e.iter()) {
            *o += v[k + 1] * c;
        }
    }
    out
}

/// `f̄` as a function of normal coordinates.
pub fn fbar_of_coords(eps: f64) -> impl Fn(&[f64]) -> f64 {
    move |c: &[f64]| f_of_coords(c) / (1.0 - eps * c[0] * c[0])
}

/// Chart finite-difference covariant Hessian of `f̄` on the radial frame.
pub fn fbar_hessian_fd(
    model: &MetricModel,
    basis: &OrthoBasis,
    pc: &PcPoint,
    frame: &Frame,
    oracle: &FdOracle,
) -> Result<Vec<f64>> {
    let st = Stencil::build(model, basis, &frame.x, oracle, true)?;
    let phi = fbar_of_coords(pc.params.eps());
    let grad = st.grad(&phi);
    let hess = st.hess(&phi);
    let cov = crate::hyperquadric::covariant_hessian(model, &frame.x, &grad, &hess)?;
    let d = pc.dim;
    let basis_vecs: Vec<Vec<f64>> = (0..d).map(|i| to_chart(frame, &pc.unit(i))).collect();
    let mut out = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..d {
            let mut acc = 0.0;
            for (a, row) in cov.iter().enumerate() {
                for (b, v) in row.iter().enumerate() {
                    acc += v * basis_vecs[i][a] * basis_vecs[j][b];
                }
            }
            out[i * d + j] = acc;
        }
    }
    Ok(out)
}

/// Residuals of the algebraic properties of the barred frame and the tangency maps.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct AlgebraResiduals {
    /// `max |P̄PX - X|, |PP̄X̄ - X̄|`.
    pub inverse: f64,
    /// `max |(PX) f̄|, |(P̄X̄) f|`.
    pub tangency: f64,
    /// `max |g(Ē_ρ, Ē_a)|`.
    pub orthogonality: f64,
    /// `max |ḡ₊(X̄,Ȳ) - frame formula|`.
    pub gplus: f64,
    /// Hessian relation between `∇²f̄` and `q`, with `∇²f̄` from the algebraic assembly.
    pub hessian_relation: f64,
}

/// Checks the tangency-map identities on `n` random tangent pairs.
pub fn algebra_residuals(pc: &PcPoint, n: usize, seed: u64) -> Result<AlgebraResiduals> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = pc.dim;
    let bf = pc.barred_frame();
    let mut res = AlgebraResiduals::default();
    for e in &bf.tangential {
        res.orthogonality = res.orthogonality.max(pc.inner(&bf.rho, e).abs());
    }
    let gp = pc.gbar_plus_diag();
    for _ in 0..n {
        let cx: Vec<f64> = (0..d - 1).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let cy: Vec<f64> = (0..d - 1).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let combine = |c: &[f64], vecs: &[Vec<f64>]| -> Vec<f64> {
            let mut out = vec![0.0; d];
            for (ci, v) in c.iter().zip(vecs) {
                for (o, x) in out.iter_mut().zip(v) {
                    *o += ci * x;
                }
            }
            out
        };
        let f_tangent: Vec<Vec<f64>> = (1..d).map(|i| pc.unit(i)).collect();
        let x = combine(&cx, &f_tangent);
        let xb = combine(&cx, &bf.tangential);
        let yb = combine(&cy, &bf.tangential);
        let px = pc.p_map(&x)?;
        let back = pc.pbar_map(&px)?;
        let pbx = pc.pbar_map(&xb)?;
        let fwd = pc.p_map(&pbx)?;
        let diff = |u: &[f64], w: &[f64]| {
            u.iter()
                .zip(w)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
        };
        res.inverse = res.inverse.max(diff(&back, &x)).max(diff(&fwd, &xb));
        res.tangency = res
            .tangency
            .max(PcPoint::apply(&pc.dfbar, &px).abs())
            .max(PcPoint::apply(&pc.df, &pbx).abs());
        let formula: f64 = (0..d - 1).map(|a| gp[a] * cx[a] * cy[a]).sum();
        res.gplus = res.gplus.max((pc.gbar_plus(&xb, &yb)? - formula).abs());
        let pby = pc.pbar_map(&yb)?;
        let lhs = pc.bilinear(&pc.hfbar, &xb, &yb) - 0.5 / pc.eta * pc.inner(&xb, &yb)
            + pc.fbar / pc.eta * pc.bilinear(&pc.heta, &xb, &yb);
        let qfull = full_q(pc);
        let rhs = pc.bilinear(&qfull, &pbx, &pby) / pc.eta;
        res.hessian_relation = res.hessian_relation.max((lhs - rhs).abs());
    }
    Ok(res)
}

/// `q` extended by zero to the full radial frame.
pub fn full_q(pc: &PcPoint) -> Vec<f64> {
    let d = pc.dim;
    let nt = d - 1;
    let mut out = vec![0.0; d * d];
    for a in 0..nt {
        for b in 0..nt {
            out[(a + 1) * d + b + 1] = pc.q[a * nt + b];
        }
    }
    out
}

/// Result of a pseudoconvexity sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct PcSweep {
    /// Minimum over points and sampled directions.
    pub min_margin: f64,
    /// Minimum over points of the exact minimum over directions.
    pub min_margin_exact: f64,
    /// Minimum over points of `margin / (ε r²)`, which removes the vertex scaling.
    pub min_normalized: f64,
    pub points: usize,
    pub dropped: usize,
}

/// Pseudoconvexity margin over a sampling of `D_{r₀}`.
pub fn pseudoconvexity_check(
    params: &PcParams,
    model: &MetricModel,
    basis: &OrthoBasis,
    sampling: &Sampling,
    opts: &TransportOptions,
) -> Result<PcSweep> {
    let (states, dropped) = sample_states(model, basis, sampling, params.r0, opts)?;
    pseudoconvexity_on(params, &states, dropped)
}

/// Pseudoconvexity margin over transported states.
pub fn pseudoconvexity_on(
    params: &PcParams,
    states: &[RadialState],
    dropped: usize,
) -> Result<PcSweep> {
    if states.is_empty() {
        return Err(Error::EmptySample(
            "no sample points for the pseudoconvexity sweep".into(),
        ));
    }
    let per: Vec<(f64, f64, f64)> = states
        .par_iter()
        .enumerate()
        .map(|(i, st)| -> Result<(f64, f64, f64)> {
            let pc = PcPoint::new(params, st)?;
            let sampled = pc.min_margin_sampled(DIRECTIONS_PER_POINT, 0x9c00 + i as u64);
            let exact = pc.min_margin_exact();
            let scale = params.eps() * pc.r * pc.r;
            let normalized = if scale > 0.0 { exact / scale } else { exact };
            Ok((sampled, exact, normalized))
        })
        .collect::<Result<Vec<_>>>()?;
    let min = |k: usize| {
        per.iter()
            .map(|v| match k {
                0 => v.0,
                1 => v.1,
                _ => v.2,
            })
            .fold(f64::INFINITY, f64::min)
    };
    Ok(PcSweep {
        min_margin: min(0),
        min_margin_exact: min(1),
        min_normalized: min(2),
        points: per.len(),
        dropped,
    })
}

/// First swept `δ` at which the exact margin turns negative, with the margins seen.
pub fn margin_sign_flip(
    params: &PcParams,
    build: impl Fn(f64) -> MetricModel + Sync,
    p: &[f64],
    deltas: &[f64],
    sampling: &Sampling,
    opts: &TransportOptions,
) -> Result<(Option<f64>, Vec<(f64, f64)>)> {
    let mut seen = Vec::new();
    for &d in deltas {
        let model = build(d);
        let basis = OrthoBasis::standard(&model, p)?;
        let sweep = pseudoconvexity_check(params, &model, &basis, sampling, opts)?;
        seen.push((d, sweep.min_normalized));
        if sweep.min_margin_exact < 0.0 {
            return Ok((Some(d), seen));
        }
    }
    Ok((None, seen))
}

fn fit(lhs: f64, env: f64) -> f64 {
    if env > 0.0 {
        lhs / env
    } else if lhs < 1e-12 {
        0.0
    } else {
        f64::INFINITY
    }
}

/// Fitted constants of the `η` derivative estimates in both frames, plus the exact radial identities.
pub fn eta_derivative_fits(
    params: &PcParams,
    states: &[RadialState],
    budget: &CurvatureBudget,
) -> Result<Vec<(String, f64, f64)>> {
    let c0 = budget.c0_est;
    let c1 = budget.c1_est;
    let n = budget.n as f64;
    let eps = params.eps();
    let r0 = params.r0;
    let mut acc: Vec<(String, f64, f64)> = Vec::new();
    let mut push = |id: &str, lhs: f64, env: f64| {
        let f = fit(lhs, env);
        match acc.iter_mut().find(|e| e.0 == id) {
            Some(e) => {
                e.1 = e.1.max(lhs);
                e.2 = e.2.max(f);
            }
            None => acc.push((id.to_string(), lhs, f)),
        }
    };
    for st in states {
        let pc = PcPoint::new(params, st)?;
        let d = pc.dim;
        let r = pc.r;
        let t = pc.t.abs();
        let k = pc.kappa;
        let rr = r * r / (r0 * r0);
        let (id1, id2) = pc.radial_eta_identities();
        push("eta_rho_identity", id1.abs(), 0.0);
        push("eta_rhorho_identity", id2.abs(), 0.0);
        let h = |i: usize, j: usize| pc.heta[i * d + j];
        let mut ea = 0.0f64;
        let mut eab = 0.0f64;
        let mut eta_ = 0.0f64;
        let mut era = 0.0f64;
        for a in 2..d {
            ea = ea.max(pc.deta[a].abs());
            eta_ = eta_.max(h(1, a).abs());
            era = era.max(h(0, a).abs());
            for b in 2..d {
                eab = eab.max(h(a, b).abs());
            }
        }
        push("eta_A", ea, c0 / n * rr * eps * t);
        push(
            "eta_theta",
            (pc.deta[1] + 2.0 * eps * pc.t).abs(),
            c0 / n * k * rr * eps * t,
        );
        push("eta_AB", eab, (c0 + c1) / n / k * rr * eps);
        push("eta_thetaA", eta_, (c0 + c1) / n * rr * eps);
        push(
            "eta_thetatheta",
            (h(1, 1) + 2.0 * eps).abs(),
            (c0 + c1) / n * k * rr * eps,
        );
        push("eta_rhoA", era, c0 / n * t / r * rr * eps);
        push(
            "eta_rhotheta",
            (h(0, 1) + 2.0 * eps * pc.t / r).abs(),
            c0 / n * t / r * k * rr * eps,
        );
        let bv = pc.barred_vectors();
        let dbar = |i: usize| PcPoint::apply(&pc.deta, &bv[i]);
        let hbar = |i: usize, j: usize| pc.bilinear(&pc.heta, &bv[i], &bv[j]);
        let mut bea = 0.0f64;
        let mut beab = 0.0f64;
        let mut beta = 0.0f64;
        for a in 2..d {
            bea = bea.max(dbar(a).abs());
            beta = beta.max(hbar(1, a).abs());
            for b in 2..d {
                beab = beab.max(hbar(a, b).abs());
            }
        }
        push("etabar_A", bea, c0 / n * rr * eps * t);
        push(
            "etabar_theta",
            (dbar(1) + pc.eta * 2.0 * eps * pc.t).abs(),
            c0 / n * k * rr * eps * t,
        );
        push("etabar_AB", beab, (c0 + c1) / n / k * rr * eps);
        push("etabar_thetaA", beta, (c0 + c1) / n * rr * eps);
        push(
            "etabar_thetatheta",
            (hbar(1, 1) + pc.eta * pc.eta * 2.0 * eps).abs(),
            (c0 + c1) / n * k * rr * eps,
        );
    }
    Ok(acc)
}

/// Report rows for the `η` estimates.
pub fn eta_derivative_report(
    params: &PcParams,
    states: &[RadialState],
    budget: &CurvatureBudget,
) -> Result<Vec<CheckRow>> {
    Ok(eta_derivative_fits(params, states, budget)?
        .into_iter()
        .map(|(id, lhs, f)| {
            if id.ends_with("identity") {
                CheckRow::upper(&format!("eta_{id}"), "exact radial eta identity", lhs, 1e-9)
            } else {
                CheckRow::fitted(
                    &format!("envelope_{id}"),
                    "eta derivative estimates",
                    lhs,
                    f,
                    crate::hyperquadric::FITTED_CONSTANT_CAP,
                )
            }
        })
        .collect())
}

/// Sup of `|ℰ_i| / (ε² t² f)` over the states.
pub fn shifted_gauss_fit(params: &PcParams, states: &[RadialState]) -> Result<(f64, f64)> {
    let eps = params.eps();
    let mut c = (0.0f64, 0.0f64);
    for st in states {
        let pc = PcPoint::new(params, st)?;
        let (e1, e2) = pc.shifted_gauss();
        let env = eps * eps * pc.t * pc.t * pc.f;
        c.0 = c.0.max(fit(e1.abs(), env));
        c.1 = c.1.max(fit(e2.abs(), env));
    }
    Ok(c)
}
