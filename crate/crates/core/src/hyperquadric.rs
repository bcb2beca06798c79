//! The hyperquadric `f = (r² - t²)/4` of a centre `p`, its deviation tensor
//! `q = ∇²f - ½g`, and derivatives of the normal time `t`.
//!
//! The primary path integrates transport equations along each radial geodesic
//! `γ_ω` in the parallel frame `{E_ρ, E_θ, E_A}`. With `s = r`, `κ = 1 - (ω⁰)²`
//! and tangential frame metric `G = diag(-κ, 1, …, 1)`, the unknowns are
//!
//! * `Q_ab = r q_ab`, from the Riccati equation sourced by `R(E_ρ, E_a, E_ρ, E_b)`;
//! * `G_a = ∇_a t`, with `G_θ(0) = 1`, `G_A(0) = 0`;
//! * `X_cab = r² ∇³f(E_c, E_a, E_b)`, sourced by `R` and `∇R`;
//! * `T_ab = ∇²t²(E_a, E_b) - 2 G_a G_b`, vanishing at `p`.
//!
//! An independent finite-difference oracle evaluates the same quantities from
//! `f ∘ exp_p^{-1}` and `t ∘ exp_p^{-1}` in chart coordinates.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::cli_report::report::CheckRow;
use crate::error::{Error, Result};
use crate::geodesic_engine::{
    exp_jacobian, initial_frame, inner, log_map, log_map_with, radial_sweep, transport_rhs, Frame,
    GeoOptions, Omega, OrthoBasis, Sampling,
};
use crate::metric_models::{CurvatureBudget, MetricModel, Tensor};
use crate::ode::integrate;

/// `f = (r² - t²)/4`.
pub fn hyperquadric_f(t: f64, r: f64) -> f64 {
    0.25 * (r * r - t * t)
}

/// A point of the chart together with its normal-polar description and frame.
#[derive(Clone, Debug)]
pub struct FramePoint {
    pub x: Vec<f64>,
    pub t: f64,
    pub r: f64,
    pub omega: Omega,
    pub f: f64,
    /// `ρ = 2√f`, present inside `D`.
    pub rho: Option<f64>,
    pub in_d: bool,
    pub frame: Frame,
}

impl FramePoint {
    pub fn from_frame(frame: Frame) -> Self {
        let r = frame.s;
        let t = frame.t();
        let f = hyperquadric_f(t, r);
        FramePoint {
            x: frame.x.clone(),
            t,
            r,
            omega: frame.omega.clone(),
            f,
            rho: if f > 0.0 { Some(2.0 * f.sqrt()) } else { None },
            in_d: f > 0.0,
            frame,
        }
    }

    pub fn kappa(&self) -> f64 {
        self.omega.kappa()
    }
}

/// Normal coordinates `c = E^{-1} exp_p^{-1}(x)`.
pub fn normal_coords(
    model: &MetricModel,
    basis: &OrthoBasis,
    x: &[f64],
    tol: f64,
    opts: &GeoOptions,
) -> Result<Vec<f64>> {
    let v = log_map(model, &basis.p, x, tol, opts)?;
    Ok(basis.coords(model, &v))
}

/// Builds the frame point of a chart point `q`.
///
/// Points on or inside the null cone (`|t| ≥ r`) carry no radial frame of the
/// exterior family; they are rejected with a parameter error.
pub fn frame_point(
    model: &MetricModel,
    basis: &OrthoBasis,
    q: &[f64],
    opts: &GeoOptions,
) -> Result<FramePoint> {
    let c = normal_coords(model, basis, q, 1e-13, opts)?;
    let t = c[0];
    let r = c[1..].iter().map(|v| v * v).sum::<f64>().sqrt();
    if r == 0.0 {
        return Err(Error::Parameter("point lies on the time axis of p".into()));
    }
    let dir: Vec<f64> = c[1..].iter().map(|v| v / r).collect();
    let omega = Omega::new(t / r, &dir)?;
    let frame = crate::geodesic_engine::radial_frame(model, basis, &omega, r, opts)?;
    let mut fp = FramePoint::from_frame(frame);
    fp.t = t;
    fp.f = hyperquadric_f(t, r);
    Ok(fp)
}

/// Which computation produced a set of components.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Source {
    Transport,
    FdOracle,
}

/// Tangential frame components of `q`; index 0 is `θ`, `1..` are the `A`.
#[derive(Clone, Debug, PartialEq)]
pub struct QComponents {
    pub nt: usize,
    pub q: Vec<f64>,
    pub source: Source,
}

impl QComponents {
    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.q[a * self.nt + b]
    }
    pub fn theta_theta(&self) -> f64 {
        self.get(0, 0)
    }
    pub fn theta_a(&self, a: usize) -> f64 {
        self.get(0, 1 + a)
    }
    pub fn ab(&self, a: usize, b: usize) -> f64 {
        self.get(1 + a, 1 + b)
    }
    pub fn max_abs_diff(&self, other: &QComponents) -> f64 {
        self.q
            .iter()
            .zip(&other.q)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Frame components of `∇t` (order `ρ, θ, A…`) and of `∇²t²` (`dim × dim`, same order).
#[derive(Clone, Debug, PartialEq)]
pub struct TDerivatives {
    pub dim: usize,
    pub grad_t: Vec<f64>,
    pub hess_t2: Vec<f64>,
    pub source: Source,
}

impl TDerivatives {
    pub fn hess(&self, i: usize, j: usize) -> f64 {
        self.hess_t2[i * self.dim + j]
    }
    /// `T = ∇²t² - 2∇t ⊗ ∇t` on tangential indices.
    pub fn t_tensor(&self, a: usize, b: usize) -> f64 {
        self.hess(a + 1, b + 1) - 2.0 * self.grad_t[a + 1] * self.grad_t[b + 1]
    }
}

/// All transported quantities at one radius of one radial geodesic.
#[derive(Clone, Debug)]
pub struct RadialState {
    pub point: FramePoint,
    pub q: QComponents,
    pub t: TDerivatives,
    /// `∇³f(E_c, E_a, E_b)` on tangential indices, `nt³` entries in `[c][a][b]` order.
    pub d3f: Vec<f64>,
}

/// Options of the transport integration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TransportOptions {
    pub geo: GeoOptions,
    /// `|q|` beyond this value is reported as divergence.
    pub q_cap: f64,
}

impl Default for TransportOptions {
    fn default() -> Self {
        TransportOptions {
            geo: GeoOptions::default(),
            q_cap: 1e4,
        }
    }
}

struct Layout {
    dim: usize,
    nt: usize,
    geo: usize,
    q: usize,
    g: usize,
    t: usize,
    x: usize,
    len: usize,
}

impl Layout {
    fn new(dim: usize) -> Self {
        let nt = dim - 1;
        let geo = dim * (dim + 2);
        let q = geo;
        let g = q + nt * nt;
        let t = g + nt;
        let x = t + nt * nt;
        Layout {
            dim,
            nt,
            geo,
            q,
            g,
            t,
            x,
            len: x + nt * nt * nt,
        }
    }

    fn frame_vecs<'a>(&self, y: &'a [f64]) -> Vec<&'a [f64]> {
        let d = self.dim;
        let mut out: Vec<&[f64]> = vec![&y[d..2 * d], &y[2 * d..3 * d]];
        for k in 0..self.nt - 1 {
            out.push(&y[(4 + k) * d..(5 + k) * d]);
        }
        out
    }
}

#[allow(clippy::too_many_arguments)]
fn transport_system(
    model: &MetricModel,
    lay: &Layout,
    omega0: f64,
    cap: f64,
    s: f64,
    y: &[f64],
    dy: &mut [f64],
) -> Result<()> {
    let nvec = lay.dim;
    transport_rhs(model, &y[..lay.geo], &mut dy[..lay.geo], nvec)?;
    let nt = lay.nt;
    for v in dy[lay.geo..].iter_mut() {
        *v = 0.0;
    }
    if s <= 0.0 {
        return Ok(());
    }
    let kappa = 1.0 - omega0 * omega0;
    let ginv: Vec<f64> = (0..nt)
        .map(|a| if a == 0 { -1.0 / kappa } else { 1.0 })
        .collect();
    let x = &y[..lay.dim];
    let vecs = lay.frame_vecs(y);
    let rf = model.riemann_at(x)?.frame_components(&vecs);
    let drf = model.nabla_riemann_at(x)?.frame_components(&vecs);
    let q = &y[lay.q..lay.q + nt * nt];
    let gt = &y[lay.g..lay.g + nt];
    let tt = &y[lay.t..lay.t + nt * nt];
    let xx = &y[lay.x..lay.x + nt * nt * nt];
    if q.iter().any(|v| !v.is_finite() || (v / s).abs() > cap) {
        return Err(Error::Divergence { s });
    }
    let qq = |a: usize, b: usize| q[a * nt + b];
    let xi = |c: usize, a: usize, b: usize| xx[(c * nt + a) * nt + b];
    let r4 = |a: usize, b: usize, c: usize, d: usize| rf.g4(a, b, c, d);
    // Frame index of tangential index a is a + 1; the radial slot is 0.
    let s2 = s * s;
    for a in 0..nt {
        for b in 0..nt {
            let mut quad = 0.0;
            for c in 0..nt {
                quad += ginv[c] * qq(a, c) * qq(b, c);
            }
            dy[lay.q + a * nt + b] = -2.0 * quad / s2 - 0.5 * s2 * r4(0, a + 1, 0, b + 1);
        }
    }
    for a in 0..nt {
        let mut acc = 0.0;
        for c in 0..nt {
            acc += qq(a, c) * ginv[c] * gt[c];
        }
        dy[lay.g + a] = -2.0 * acc / s2;
    }
    for l in 0..nt {
        for a in 0..nt {
            for b in 0..nt {
                let mut v = 0.0;
                for c in 0..nt {
                    v -= 2.0 / s2
                        * ginv[c]
                        * (qq(l, c) * xi(c, a, b)
                            + qq(b, c) * xi(l, a, c)
                            + qq(a, c) * xi(l, b, c));
                    v += s
                        * ginv[c]
                        * (r4(c + 1, a + 1, l + 1, 0) * qq(c, b)
                            + r4(c + 1, b + 1, l + 1, 0) * qq(a, c));
                    v -= s
                        * ginv[c]
                        * (r4(c + 1, a + 1, 0, b + 1) + r4(0, a + 1, c + 1, b + 1))
                        * qq(l, c);
                }
                v -= 0.5 * s2 * s * drf.g5(l + 1, 0, a + 1, 0, b + 1);
                v -= 0.5 * s2 * (r4(l + 1, a + 1, 0, b + 1) + r4(0, a + 1, l + 1, b + 1));
                dy[lay.x + (l * nt + a) * nt + b] = v;
            }
        }
    }
    let t = omega0 * s;
    let gh_rho = 2.0 * t * t / (kappa * s);
    let gh: Vec<f64> = (0..nt).map(|c| ginv[c] * 2.0 * t * gt[c]).collect();
    for a in 0..nt {
        for b in 0..nt {
            let mut v = 0.0;
            let mut qaqb = 0.0;
            for c in 0..nt {
                v -= 2.0 / s2 * ginv[c] * (qq(a, c) * tt[b * nt + c] + qq(b, c) * tt[a * nt + c]);
                qaqb += ginv[c] * qq(a, c) * qq(b, c);
            }
            let d_rho = (-qq(a, b) / s - 2.0 * qaqb / s2) / s;
            let mut contr = d_rho * gh_rho;
            for c in 0..nt {
                contr += xi(b, a, c) / s2 * gh[c];
            }
            v -= 2.0 / s * contr;
            v += r4(0, a + 1, b + 1, 0) * gh_rho;
            for c in 0..nt {
                v += r4(c + 1, a + 1, b + 1, 0) * gh[c];
            }
            dy[lay.t + a * nt + b] = v;
        }
    }
    Ok(())
}

fn unpack_state(lay: &Layout, omega: &Omega, s: f64, y: &[f64], vertex: bool) -> RadialState {
    let d = lay.dim;
    let nt = lay.nt;
    let frame = Frame {
        x: y[..d].to_vec(),
        s,
        omega: omega.clone(),
        e_rho: y[d..2 * d].to_vec(),
        e_theta: y[2 * d..3 * d].to_vec(),
        e_0: y[3 * d..4 * d].to_vec(),
        e_a: (0..nt - 1)
            .map(|k| y[(4 + k) * d..(5 + k) * d].to_vec())
            .collect(),
    };
    let kappa = omega.kappa();
    let ginv: Vec<f64> = (0..nt)
        .map(|a| if a == 0 { -1.0 / kappa } else { 1.0 })
        .collect();
    let q: Vec<f64> = if vertex {
        vec![0.0; nt * nt]
    } else {
        y[lay.q..lay.q + nt * nt].iter().map(|v| v / s).collect()
    };
    let d3f: Vec<f64> = if vertex {
        vec![0.0; nt * nt * nt]
    } else {
        y[lay.x..lay.x + nt * nt * nt]
            .iter()
            .map(|v| v / (s * s))
            .collect()
    };
    let gt = &y[lay.g..lay.g + nt];
    let w0 = omega.omega0;
    let mut grad_t = vec![w0];
    grad_t.extend_from_slice(gt);
    let mut hess = vec![0.0; d * d];
    hess[0] = 2.0 * w0 * w0;
    for a in 0..nt {
        let mut qg = 0.0;
        for c in 0..nt {
            qg += q[a * nt + c] * ginv[c] * gt[c];
        }
        let v = 2.0 * w0 * gt[a] - 4.0 * w0 * qg;
        hess[a + 1] = v;
        hess[(a + 1) * d] = v;
        for b in 0..nt {
            hess[(a + 1) * d + b + 1] = y[lay.t + a * nt + b] + 2.0 * gt[a] * gt[b];
        }
    }
    RadialState {
        point: FramePoint::from_frame(frame),
        q: QComponents {
            nt,
            q,
            source: Source::Transport,
        },
        t: TDerivatives {
            dim: d,
            grad_t,
            hess_t2: hess,
            source: Source::Transport,
        },
        d3f,
    }
}

/// Integrates the frame and all transport equations along `γ_ω` and samples them at `radii`.
pub fn radial_transport(
    model: &MetricModel,
    basis: &OrthoBasis,
    omega: &Omega,
    radii: &[f64],
    opts: &TransportOptions,
) -> Vec<Result<RadialState>> {
    let lay = Layout::new(model.dim);
    let (e_rho, e_theta, e_0, e_a) = initial_frame(basis, omega);
    let mut y0 = basis.p.clone();
    y0.extend(&e_rho);
    y0.extend(&e_theta);
    y0.extend(&e_0);
    for v in &e_a {
        y0.extend(v);
    }
    y0.resize(lay.len, 0.0);
    y0[lay.g] = 1.0;
    let mut order: Vec<usize> = (0..radii.len()).collect();
    order.sort_by(|&a, &b| radii[a].partial_cmp(&radii[b]).unwrap());
    let sorted: Vec<f64> = order.iter().map(|&i| radii[i].max(0.0)).collect();
    let w0 = omega.omega0;
    let out = integrate(
        |s, y, dy| transport_system(model, &lay, w0, opts.q_cap, s, y, dy),
        &y0,
        0.0,
        &sorted,
        opts.geo.integrator,
        false,
    );
    let cut = opts.geo.vertex_cutoff();
    let mut res: Vec<Option<Result<RadialState>>> = (0..radii.len()).map(|_| None).collect();
    for (k, &i) in order.iter().enumerate() {
        let s = sorted[k];
        res[i] = Some(if s <= cut {
            Ok(unpack_state(&lay, omega, s, &y0, true))
        } else if let Some(y) = out.stops.get(k) {
            Ok(unpack_state(&lay, omega, s, y, false))
        } else {
            Err(out.failure.clone().unwrap_or(Error::Truncated { s }))
        });
    }
    res.into_iter().map(|r| r.unwrap()).collect()
}

/// `q` along `γ_ω` from the Riccati transport.
pub fn q_transport(
    model: &MetricModel,
    basis: &OrthoBasis,
    omega: &Omega,
    radii: &[f64],
    opts: &TransportOptions,
) -> Vec<Result<QComponents>> {
    radial_transport(model, basis, omega, radii, opts)
        .into_iter()
        .map(|r| r.map(|s| s.q))
        .collect()
}

/// `∇t` and `∇²t²` along `γ_ω` from their transport equations.
pub fn t_transport(
    model: &MetricModel,
    basis: &OrthoBasis,
    omega: &Omega,
    radii: &[f64],
    opts: &TransportOptions,
) -> Vec<Result<TDerivatives>> {
    radial_transport(model, basis, omega, radii, opts)
        .into_iter()
        .map(|r| r.map(|s| s.t))
        .collect()
}

/// Transported states over a whole [`Sampling`], in deterministic order.
///
/// Samples whose geodesic left the chart are dropped and counted.
pub fn sample_states(
    model: &MetricModel,
    basis: &OrthoBasis,
    sampling: &Sampling,
    r0: f64,
    opts: &TransportOptions,
) -> Result<(Vec<RadialState>, usize)> {
    let radii = sampling.radii(r0);
    let per: Vec<Vec<Result<RadialState>>> = sampling
        .omegas(model.dim)
        .par_iter()
        .map(|om| radial_transport(model, basis, om, &radii, opts))
        .collect();
    let mut out = Vec::new();
    let mut dropped = 0;
    for row in per {
        for st in row {
            match st {
                Ok(s) => out.push(s),
                Err(Error::Truncated { .. }) => dropped += 1,
                Err(e) => return Err(e),
            }
        }
    }
    if out.is_empty() {
        return Err(Error::EmptySample(format!(
            "all {dropped} radial samples left the chart"
        )));
    }
    Ok((out, dropped))
}

/// Chart finite differences of functions of the normal coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FdOracle {
    /// Outer stencil step; one Richardson level uses `h` and `h/2`.
    pub h: f64,
    /// Fixed-step integrator, so that `exp_p` is a smooth function of its argument.
    pub geo: GeoOptions,
}

impl FdOracle {
    pub fn new(r0: f64) -> Self {
        FdOracle {
            h: 1e-4 * r0,
            geo: GeoOptions::fixed(1e-2 * r0, r0),
        }
    }

    /// Smallest radius at which oracle values are trusted.
    pub fn min_radius(&self) -> f64 {
        100.0 * self.h
    }
}

/// Normal coordinates on a central-difference stencil around a point.
pub struct Stencil {
    dim: usize,
    pub centre: Vec<f64>,
    /// Per level `k ∈ {h, h/2}`: `(k, plus[i], minus[i], pp/pm/mp/mm[i][j])`.
    levels: Vec<StencilLevel>,
}

struct StencilLevel {
    k: f64,
    plus: Vec<Vec<f64>>,
    minus: Vec<Vec<f64>>,
    pp: Vec<Vec<Vec<f64>>>,
    pm: Vec<Vec<Vec<f64>>>,
    mp: Vec<Vec<Vec<f64>>>,
    mm: Vec<Vec<Vec<f64>>>,
}

impl Stencil {
    /// Evaluates normal coordinates at the stencil around `x`; `hessian` adds the mixed points.
    pub fn build(
        model: &MetricModel,
        basis: &OrthoBasis,
        x: &[f64],
        oracle: &FdOracle,
        hessian: bool,
    ) -> Result<Self> {
        let n = model.dim;
        let p = &basis.p;
        let guess: Vec<f64> = x.iter().zip(p).map(|(a, b)| a - b).collect();
        let vc = log_map_with(model, p, x, &guess, 0.0, &oracle.geo, None)?;
        let jac = exp_jacobian(model, p, &vc, &oracle.geo)?;
        let jinv = jac.clone().try_inverse().ok_or(Error::Convergence {
            iterations: 0,
            residual: f64::NAN,
        })?;
        let eval = |dx: &[f64]| -> Result<Vec<f64>> {
            let q: Vec<f64> = x.iter().zip(dx).map(|(a, b)| a + b).collect();
            let d = nalgebra::DVector::from_column_slice(dx);
            let pred = &jinv * d;
            let g: Vec<f64> = vc.iter().zip(pred.iter()).map(|(a, b)| a + b).collect();
            let v = log_map_with(model, p, &q, &g, 0.0, &oracle.geo, Some(&jac))?;
            Ok(basis.coords(model, &v))
        };
        let unit = |i: usize, s: f64| {
            let mut v = vec![0.0; n];
            v[i] = s;
            v
        };
        let mut levels = Vec::new();
        for k in [oracle.h, 0.5 * oracle.h] {
            let plus = (0..n)
                .map(|i| eval(&unit(i, k)))
                .collect::<Result<Vec<_>>>()?;
            let minus = (0..n)
                .map(|i| eval(&unit(i, -k)))
                .collect::<Result<Vec<_>>>()?;
            let empty = || vec![vec![Vec::new(); n]; n];
            let (mut pp, mut pm, mut mp, mut mm) = (empty(), empty(), empty(), empty());
            if hessian {
                for i in 0..n {
                    for j in (i + 1)..n {
                        let two = |si: f64, sj: f64| {
                            let mut v = vec![0.0; n];
                            v[i] = si * k;
                            v[j] = sj * k;
                            eval(&v)
                        };
                        pp[i][j] = two(1.0, 1.0)?;
                        pm[i][j] = two(1.0, -1.0)?;
                        mp[i][j] = two(-1.0, 1.0)?;
                        mm[i][j] = two(-1.0, -1.0)?;
                    }
                }
            }
            levels.push(StencilLevel {
                k,
                plus,
                minus,
                pp,
                pm,
                mp,
                mm,
            });
        }
        Ok(Stencil {
            dim: n,
            centre: basis.coords(model, &vc),
            levels,
        })
    }

    /// Chart gradient `∂_μ φ` of `φ(c)`, Richardson-extrapolated.
    pub fn grad(&self, phi: impl Fn(&[f64]) -> f64) -> Vec<f64> {
        let per: Vec<Vec<f64>> = self
            .levels
            .iter()
            .map(|l| {
                (0..self.dim)
                    .map(|i| (phi(&l.plus[i]) - phi(&l.minus[i])) / (2.0 * l.k))
                    .collect()
            })
            .collect();
        (0..self.dim)
            .map(|i| (4.0 * per[1][i] - per[0][i]) / 3.0)
            .collect()
    }

    /// Chart second partials `∂_μ∂_ν φ`, Richardson-extrapolated.
    pub fn hess(&self, phi: impl Fn(&[f64]) -> f64) -> Vec<Vec<f64>> {
        let n = self.dim;
        let f0 = phi(&self.centre);
        let per: Vec<Vec<Vec<f64>>> = self
            .levels
            .iter()
            .map(|l| {
                let mut h = vec![vec![0.0; n]; n];
                for i in 0..n {
                    h[i][i] = (phi(&l.plus[i]) - 2.0 * f0 + phi(&l.minus[i])) / (l.k * l.k);
                    for j in (i + 1)..n {
                        let v = (phi(&l.pp[i][j]) - phi(&l.pm[i][j]) - phi(&l.mp[i][j])
                            + phi(&l.mm[i][j]))
                            / (4.0 * l.k * l.k);
                        h[i][j] = v;
                        h[j][i] = v;
                    }
                }
                h
            })
            .collect();
        (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| (4.0 * per[1][i][j] - per[0][i][j]) / 3.0)
                    .collect()
            })
            .collect()
    }
}

/// `f` as a function of normal coordinates.
pub fn f_of_coords(c: &[f64]) -> f64 {
    0.25 * (c[1..].iter().map(|v| v * v).sum::<f64>() - c[0] * c[0])
}

/// Covariant Hessian `∂²φ - Γ^λ ∂_λ φ` from chart partials.
pub fn covariant_hessian(
    model: &MetricModel,
    x: &[f64],
    grad: &[f64],
    hess: &[Vec<f64>],
) -> Result<Vec<Vec<f64>>> {
    let gam = model.christoffel_at(x)?;
    let n = model.dim;
    Ok((0..n)
        .map(|a| {
            (0..n)
                .map(|b| hess[a][b] - (0..n).map(|l| gam.g3(l, a, b) * grad[l]).sum::<f64>())
                .collect()
        })
        .collect())
}

fn bilinear(m: &[Vec<f64>], u: &[f64], w: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (i, row) in m.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            acc += v * u[i] * w[j];
        }
    }
    acc
}

fn full_frame(fr: &Frame) -> Vec<&[f64]> {
    let mut v: Vec<&[f64]> = vec![&fr.e_rho];
    v.extend(fr.tangential());
    v
}

fn check_oracle_radius(fp: &FramePoint, oracle: &FdOracle) -> Result<()> {
    if fp.r < oracle.min_radius() {
        return Err(Error::OutOfRegime(format!(
            "r = {:.3e} below the oracle floor {:.3e}",
            fp.r,
            oracle.min_radius()
        )));
    }
    Ok(())
}

/// `q` from a chart finite-difference Hessian of `f ∘ exp_p^{-1}`.
pub fn q_fd_oracle(
    model: &MetricModel,
    basis: &OrthoBasis,
    fp: &FramePoint,
    oracle: &FdOracle,
) -> Result<QComponents> {
    check_oracle_radius(fp, oracle)?;
    let st = Stencil::build(model, basis, &fp.x, oracle, true)?;
    q_from_stencil(model, fp, &st)
}

fn q_from_stencil(model: &MetricModel, fp: &FramePoint, st: &Stencil) -> Result<QComponents> {
    let grad = st.grad(f_of_coords);
    let hess = st.hess(f_of_coords);
    let cov = covariant_hessian(model, &fp.x, &grad, &hess)?;
    let g = model.metric_diag(&fp.x);
    let tan = fp.frame.tangential();
    let nt = tan.len();
    let mut q = vec![0.0; nt * nt];
    for a in 0..nt {
        for b in 0..nt {
            q[a * nt + b] = bilinear(&cov, tan[a], tan[b]) - 0.5 * inner(&g, tan[a], tan[b]);
        }
    }
    Ok(QComponents {
        nt,
        q,
        source: Source::FdOracle,
    })
}

/// `∇t` and `∇²t²` from chart finite differences of the normal time coordinate.
pub fn t_fd_oracle(
    model: &MetricModel,
    basis: &OrthoBasis,
    fp: &FramePoint,
    oracle: &FdOracle,
) -> Result<TDerivatives> {
    check_oracle_radius(fp, oracle)?;
    let st = Stencil::build(model, basis, &fp.x, oracle, true)?;
    t_from_stencil(model, fp, &st)
}

fn t_from_stencil(model: &MetricModel, fp: &FramePoint, st: &Stencil) -> Result<TDerivatives> {
    let gt = st.grad(|c| c[0]);
    let g2 = st.grad(|c| c[0] * c[0]);
    let h2 = st.hess(|c| c[0] * c[0]);
    let cov = covariant_hessian(model, &fp.x, &g2, &h2)?;
    let vecs = full_frame(&fp.frame);
    let d = vecs.len();
    let grad_t = vecs
        .iter()
        .map(|e| e.iter().zip(&gt).map(|(a, b)| a * b).sum())
        .collect();
    let mut hess_t2 = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..d {
            hess_t2[i * d + j] = bilinear(&cov, vecs[i], vecs[j]);
        }
    }
    Ok(TDerivatives {
        dim: d,
        grad_t,
        hess_t2,
        source: Source::FdOracle,
    })
}

/// Both oracles from a single stencil.
pub fn fd_oracles(
    model: &MetricModel,
    basis: &OrthoBasis,
    fp: &FramePoint,
    oracle: &FdOracle,
) -> Result<(QComponents, TDerivatives)> {
    check_oracle_radius(fp, oracle)?;
    let st = Stencil::build(model, basis, &fp.x, oracle, true)?;
    Ok((
        q_from_stencil(model, fp, &st)?,
        t_from_stencil(model, fp, &st)?,
    ))
}

/// Residuals of the Gauss-lemma identities for `f`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradFResidual {
    /// `|∇^♯f - (r/2) E_ρ|` in chart components (`(r/2)E_ρ = ½(t∂_t + r∂_r)`).
    pub sharp: f64,
    /// `|g(∇f, ∇f) - f|`.
    pub eikonal: f64,
}

pub fn grad_f_check(
    model: &MetricModel,
    basis: &OrthoBasis,
    fp: &FramePoint,
    oracle: &FdOracle,
) -> Result<GradFResidual> {
    if !fp.in_d {
        return Err(Error::Parameter("frame point is not in D".into()));
    }
    check_oracle_radius(fp, oracle)?;
    let st = Stencil::build(model, basis, &fp.x, oracle, false)?;
    let grad = st.grad(f_of_coords);
    let g = model.metric_diag(&fp.x);
    let sharp: Vec<f64> = grad.iter().zip(&g).map(|(d, gi)| d / gi).collect();
    let half_r = 0.5 * fp.r;
    let diff = sharp
        .iter()
        .zip(&fp.frame.e_rho)
        .map(|(a, e)| (a - half_r * e).powi(2))
        .sum::<f64>()
        .sqrt();
    let norm2: f64 = grad.iter().zip(&g).map(|(d, gi)| d * d / gi).sum();
    let f = f_of_coords(&st.centre);
    Ok(GradFResidual {
        sharp: diff,
        eikonal: (norm2 - f).abs(),
    })
}

/// Frame curvature contractions entering the curvature budget at one frame.
fn budget_contractions(model: &MetricModel, fr: &Frame) -> Result<(f64, f64)> {
    let mut vecs: Vec<&[f64]> = vec![&fr.e_rho, &fr.e_0];
    vecs.extend(fr.e_a.iter().map(|v| v.as_slice()));
    let r = model.riemann_at(&fr.x)?.frame_components(&vecs);
    let d = vecs.len();
    let mut c0 = 0.0f64;
    for x in 0..d {
        for y in 0..d {
            for z in 0..d {
                c0 = c0.max(r.g4(0, x, y, z).abs());
            }
        }
    }
    let dr = model.nabla_riemann_at(&fr.x)?.frame_components(&vecs);
    let mut c1 = 0.0f64;
    for z in 0..d {
        for x in 0..d {
            for y in 0..d {
                c1 = c1.max(dr.g5(z, 0, x, 0, y).abs());
            }
        }
    }
    Ok((c0, c1))
}

/// Sup of the frame curvature contractions over a sampling of `D_{r₀}`.
pub fn curvature_budget(
    model: &MetricModel,
    basis: &OrthoBasis,
    sampling: &Sampling,
    r0: f64,
    eps0: f64,
    c_dagger: f64,
    geo: &GeoOptions,
) -> Result<CurvatureBudget> {
    let radii = sampling.radii(r0);
    let per: Vec<Result<Vec<(f64, f64)>>> = sampling
        .omegas(model.dim)
        .par_iter()
        .map(|om| {
            radial_sweep(model, basis, om, &radii, geo)
                .into_iter()
                .filter_map(|fr| match fr {
                    Ok(f) => Some(budget_contractions(model, &f)),
                    Err(Error::Truncated { .. }) => None,
                    Err(e) => Some(Err(e)),
                })
                .collect()
        })
        .collect();
    let mut sup_r = 0.0f64;
    let mut sup_dr = 0.0f64;
    let mut count = 0;
    for row in per {
        for (a, b) in row? {
            sup_r = sup_r.max(a);
            sup_dr = sup_dr.max(b);
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::EmptySample(
            "no curvature samples inside the chart".into(),
        ));
    }
    Ok(CurvatureBudget::from_sups(
        model.dim - 1,
        r0,
        sup_r,
        sup_dr,
        count,
        eps0,
        c_dagger,
    ))
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

/// Sups and fitted constants of the q-, t- and third-derivative envelopes.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EnvelopeFits {
    /// `(id, sup of LHS, fitted constant, explicit)`; explicit rows must fit with constant ≤ 1.
    pub entries: Vec<(String, f64, f64, bool)>,
}

impl EnvelopeFits {
    pub fn get(&self, id: &str) -> Option<(f64, f64)> {
        self.entries.iter().find(|e| e.0 == id).map(|e| (e.1, e.2))
    }
}

/// Evaluates every envelope of the derivative estimates on transported samples.
pub fn envelope_fits(states: &[RadialState], budget: &CurvatureBudget, r0: f64) -> EnvelopeFits {
    let c0 = budget.c0_est;
    let c1 = budget.c1_est;
    let n = budget.n as f64;
    let mut acc: Vec<(String, f64, f64, bool)> = Vec::new();
    let mut push = |id: &str, lhs: f64, env: f64, explicit: bool| {
        let f = fit(lhs, env);
        match acc.iter_mut().find(|e| e.0 == id) {
            Some(e) => {
                e.1 = e.1.max(lhs);
                e.2 = e.2.max(f);
            }
            None => acc.push((id.to_string(), lhs, f, explicit)),
        }
    };
    for st in states {
        let fp = &st.point;
        let r = fp.r;
        let t = fp.t.abs();
        let k = fp.kappa();
        let nt = st.q.nt;
        let rr = r * r / (r0 * r0);
        let q_env = c0 / (3.0 * n) * rr;
        let mut qab = 0.0f64;
        let mut qta = 0.0f64;
        let mut gta = 0.0f64;
        let mut hab = 0.0f64;
        let mut hta = 0.0f64;
        for a in 1..nt {
            qta = qta.max(st.q.get(0, a).abs());
            gta = gta.max(st.t.grad_t[a + 1].abs());
            hta = hta.max(st.t.hess(1, a + 1).abs());
            for b in 1..nt {
                qab = qab.max(st.q.get(a, b).abs());
                hab = hab.max(st.t.hess(a + 1, b + 1).abs());
            }
        }
        push("q_AB", qab, q_env, true);
        push("q_thetaA", qta, k * q_env, true);
        push(
            "q_thetatheta",
            st.q.theta_theta().abs(),
            k * k * q_env,
            true,
        );
        let t_env = c0 / n * rr;
        push("grad_t_A", gta, t_env, false);
        push(
            "grad_t_theta",
            (st.t.grad_t[1] - 1.0).abs(),
            k * t_env,
            false,
        );
        push("grad_t2_A", 2.0 * fp.t.abs() * gta, t_env * t, false);
        push(
            "grad_t2_theta",
            (2.0 * fp.t * st.t.grad_t[1] - 2.0 * fp.t).abs(),
            k * t_env * t,
            false,
        );
        let td0 = c0 / n * rr;
        let td1 = c1 / n * rr * t / r0;
        push("hess_t2_AB", hab, (td0 + td1) / k, false);
        push("hess_t2_thetaA", hta, td0 + td1, false);
        push(
            "hess_t2_thetatheta",
            (st.t.hess(1, 1) - 2.0).abs(),
            k * (td0 + td1),
            false,
        );
        let d3_env = (c0 * r / (r0 * r0) + c1 * r * r / (r0 * r0 * r0)) / n;
        let x = |c: usize, a: usize, b: usize| st.d3f[(c * nt + a) * nt + b].abs();
        let (mut abc, mut tab, mut atb, mut tta, mut att) =
            (0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64);
        for a in 1..nt {
            tta = tta.max(x(0, 0, a));
            att = att.max(x(a, 0, 0));
            for b in 1..nt {
                tab = tab.max(x(0, a, b));
                atb = atb.max(x(a, 0, b));
                for c in 1..nt {
                    abc = abc.max(x(a, b, c));
                }
            }
        }
        push("d3f_ABC", abc, d3_env, false);
        push("d3f_thetaAB", tab, d3_env, false);
        push("d3f_AthetaB", atb, d3_env, false);
        push("d3f_thetathetaA", tta, k * d3_env, false);
        push("d3f_Athetatheta", att, k * d3_env, false);
        push("d3f_thetathetatheta", x(0, 0, 0), k * k * d3_env, false);
    }
    EnvelopeFits { entries: acc }
}

/// Cap on fitted universal constants.
pub const FITTED_CONSTANT_CAP: f64 = 100.0;

/// Rows for every derivative estimate of the hyperquadric on a sampling of `D_{r₀}`.
pub fn section2_bounds_report(
    model: &MetricModel,
    basis: &OrthoBasis,
    sampling: &Sampling,
    r0: f64,
    budget: &CurvatureBudget,
    opts: &TransportOptions,
) -> Result<Vec<CheckRow>> {
    let start = std::time::Instant::now();
    let (states, _) = sample_states(model, basis, sampling, r0, opts)?;
    let fits = envelope_fits(&states, budget, r0);
    Ok(envelope_rows(&fits, start.elapsed().as_secs_f64()))
}

/// One fitted row per envelope: explicit ones are capped at 1, the rest at
/// [`FITTED_CONSTANT_CAP`]; third-derivative rows are advisory.
pub fn envelope_rows(fits: &EnvelopeFits, secs: f64) -> Vec<CheckRow> {
    fits.entries
        .iter()
        .map(|(id, lhs, f, explicit)| {
            let refn = if id.starts_with('q') {
                "q estimates"
            } else if id.starts_with("grad_t2") {
                "t^2 gradient estimates"
            } else if id.starts_with("grad_t") {
                "t gradient estimates"
            } else if id.starts_with("hess") {
                "t^2 Hessian estimates"
            } else {
                "third-derivative estimates of f"
            };
            let cap = if *explicit { 1.0 } else { FITTED_CONSTANT_CAP };
            let row =
                CheckRow::fitted(&format!("envelope_{id}"), refn, *lhs, *f, cap).with_runtime(secs);
            if id.starts_with("d3f") {
                row.advisory()
            } else {
                row
            }
        })
        .collect()
}

/// Frame components of the covariant Hessian of `f` at nearby points, for third-derivative checks.
pub fn hessian_matrix(
    model: &MetricModel,
    basis: &OrthoBasis,
    x: &[f64],
    oracle: &FdOracle,
) -> Result<DMatrix<f64>> {
    let st = Stencil::build(model, basis, x, oracle, true)?;
    let grad = st.grad(f_of_coords);
    let hess = st.hess(f_of_coords);
    let cov = covariant_hessian(model, x, &grad, &hess)?;
    let n = model.dim;
    Ok(DMatrix::from_fn(n, n, |i, j| cov[i][j]))
}

/// Convenience: frame of `Tensor` contractions is exposed for reports.
pub fn riemann_frame(model: &MetricModel, fr: &Frame) -> Result<Tensor<f64>> {
    Ok(model.riemann_at(&fr.x)?.frame_components(&full_frame(fr)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geodesic_engine::radial_frame;

    fn basis(model: &MetricModel, p: &[f64]) -> OrthoBasis {
        OrthoBasis::standard(model, p).unwrap()
    }

    #[test]
    fn minkowski_frame_point() {
        let m = MetricModel::minkowski(4);
        let b = basis(&m, &[0.0; 4]);
        let fp = frame_point(&m, &b, &[1.0, 2.0, 0.0, 0.0], &GeoOptions::default()).unwrap();
        assert!((fp.t - 1.0).abs() < 1e-14 && (fp.r - 2.0).abs() < 1e-14);
        assert!((fp.f - 0.75).abs() < 1e-14 && fp.in_d);
        assert!((fp.rho.unwrap().powi(2) - 3.0).abs() < 1e-13);
        let cone = frame_point(&m, &b, &[1.0, 1.0, 0.0, 0.0], &GeoOptions::default());
        assert!(cone.is_err() || !cone.unwrap().in_d);
    }

    #[test]
    fn minkowski_transport_is_trivial() {
        let m = MetricModel::minkowski(3);
        let b = basis(&m, &[0.0; 3]);
        let om = Omega::new(0.3, &[0.6, 0.8]).unwrap();
        for st in radial_transport(&m, &b, &om, &[0.2, 0.9], &TransportOptions::default()) {
            let st = st.unwrap();
            assert!(st.q.q.iter().all(|v| v.abs() < 1e-14));
            assert!((st.t.grad_t[1] - 1.0).abs() < 1e-14 && st.t.grad_t[2].abs() < 1e-14);
            assert!((st.t.hess(1, 1) - 2.0).abs() < 1e-13);
            assert!(st.t.hess(2, 2).abs() < 1e-13 && st.t.hess(1, 2).abs() < 1e-13);
        }
    }

    #[test]
    fn minkowski_gauss_lemma_is_exact() {
        let m = MetricModel::minkowski(3);
        let b = basis(&m, &[0.0; 3]);
        let om = Omega::new(0.5, &[1.0, 1.0]).unwrap();
        let fp = FramePoint::from_frame(
            radial_frame(&m, &b, &om, 2.0 / 1.25f64.sqrt(), &GeoOptions::default()).unwrap(),
        );
        let res = grad_f_check(&m, &b, &fp, &FdOracle::new(1.0)).unwrap();
        assert!(res.sharp < 1e-9 && res.eikonal < 1e-9, "{res:?}");
    }

    #[test]
    fn warped_transport_matches_fd_oracle() {
        let m = MetricModel::warped(3, 0.05, 1.0);
        let p = [0.5, 1.0, 1.0];
        let b = basis(&m, &p);
        let om = Omega::new(-0.35, &[0.3, 0.9]).unwrap();
        let st = radial_transport(&m, &b, &om, &[0.7], &TransportOptions::default())
            .pop()
            .unwrap()
            .unwrap();
        let (qo, to) = fd_oracles(&m, &b, &st.point, &FdOracle::new(1.0)).unwrap();
        let gap = st.q.max_abs_diff(&qo);
        assert!(gap < 1e-6, "q gap {gap}");
        assert!(st.q.q.iter().any(|v| v.abs() > 1e-4));
        for i in 0..3 {
            assert!((st.t.grad_t[i] - to.grad_t[i]).abs() < 1e-6, "grad t {i}");
            for j in 0..3 {
                assert!(
                    (st.t.hess(i, j) - to.hess(i, j)).abs() < 1e-5,
                    "hess t2 {i}{j}: {} vs {}",
                    st.t.hess(i, j),
                    to.hess(i, j)
                );
            }
        }
    }

    #[test]
    fn third_derivative_matches_nested_differences() {
        let m = MetricModel::warped(3, 0.05, 1.0);
        let p = [0.5, 1.0, 1.0];
        let b = basis(&m, &p);
        let om = Omega::new(0.2, &[0.8, -0.6]).unwrap();
        let st = radial_transport(&m, &b, &om, &[0.8], &TransportOptions::default())
            .pop()
            .unwrap()
            .unwrap();
        let fr = &st.point.frame;
        let oracle = FdOracle {
            h: 1e-3,
            geo: GeoOptions::fixed(1e-2, 1.0),
        };
        let k = 2e-3;
        let n = m.dim;
        let gam = m.christoffel_at(&fr.x).unwrap();
        let hc = hessian_matrix(&m, &b, &fr.x, &oracle).unwrap();
        let mut d3 = vec![vec![vec![0.0; n]; n]; n];
        for l in 0..n {
            let mut xp = fr.x.clone();
            let mut xm = fr.x.clone();
            xp[l] += k;
            xm[l] -= k;
            let hp = hessian_matrix(&m, &b, &xp, &oracle).unwrap();
            let hm = hessian_matrix(&m, &b, &xm, &oracle).unwrap();
            for a in 0..n {
                for c in 0..n {
                    let mut v = (hp[(a, c)] - hm[(a, c)]) / (2.0 * k);
                    for s in 0..n {
                        v -= gam.g3(s, l, a) * hc[(s, c)] + gam.g3(s, l, c) * hc[(a, s)];
                    }
                    d3[l][a][c] = v;
                }
            }
        }
        let tan = fr.tangential();
        let nt = tan.len();
        let mut worst = 0.0f64;
        for c in 0..nt {
            for a in 0..nt {
                for bb in 0..nt {
                    let mut v = 0.0;
                    for l in 0..n {
                        for i in 0..n {
                            for j in 0..n {
                                v += d3[l][i][j] * tan[c][l] * tan[a][i] * tan[bb][j];
                            }
                        }
                    }
                    worst = worst.max((v - st.d3f[(c * nt + a) * nt + bb]).abs());
                }
            }
        }
        assert!(worst < 1e-4, "third derivative gap {worst}");
    }

    #[test]
    fn vertex_limit_of_q() {
        let m = MetricModel::warped(3, 0.05, 1.0);
        let p = [0.5, 1.0, 1.0];
        let b = basis(&m, &p);
        let om = Omega::new(0.1, &[0.6, 0.8]).unwrap();
        let opts = TransportOptions {
            geo: GeoOptions::fixed(1e-5, 1.0),
            ..Default::default()
        };
        let r = 1e-3;
        let st = radial_transport(&m, &b, &om, &[r], &opts)
            .pop()
            .unwrap()
            .unwrap();
        let (e_rho, _, _, e_a) = initial_frame(&b, &om);
        let rp = m
            .riemann_at(&p)
            .unwrap()
            .frame_components(&[&e_rho, &e_a[0]]);
        let expect = -rp.g4(0, 1, 0, 1) / 6.0;
        let got = st.q.ab(0, 0) / (r * r);
        assert!(((got - expect) / expect).abs() < 0.05, "{got} vs {expect}");
    }
}
