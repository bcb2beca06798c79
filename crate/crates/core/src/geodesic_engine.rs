//! Geodesics, exponential and logarithm maps, parallel transport and the
//! radial frames `{E_ρ, E_θ, E_A, E_0}` attached to a centre `p`.
//!
//! Frames are parametrized by `ω = (ω⁰, ω_sp)` with `|ω⁰| < 1` and `ω_sp` a unit
//! vector of `R^n`. With an orthonormal basis `e_0, …, e_n` at `p` we set
//! `e_r = Σ ω_sp^i e_i`, `e_ρ = e_r + ω⁰ e_0` and `e_θ = e_0 + ω⁰ e_r`. The radial
//! geodesic `γ_ω(s) = exp_p(s e_ρ)` reaches normal coordinates `(t, r) = (ω⁰ s, s)`,
//! so the affine parameter coincides with `r`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::metric_models::MetricModel;
use crate::ode::{integrate, Integrator};

/// Integration settings shared by every geodesic computation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GeoOptions {
    pub integrator: Integrator,
    /// Length scale of the working region; sets the near-vertex cutoff.
    pub r0: f64,
}

impl Default for GeoOptions {
    fn default() -> Self {
        GeoOptions {
            integrator: Integrator::default(),
            r0: 1.0,
        }
    }
}

impl GeoOptions {
    pub fn fixed(h: f64, r0: f64) -> Self {
        GeoOptions {
            integrator: Integrator::Fixed { h },
            r0,
        }
    }

    pub fn vertex_cutoff(&self) -> f64 {
        1e-6 * self.r0
    }
}

/// `g(u, w)` for the diagonal catalog metrics.
pub fn inner(gdiag: &[f64], u: &[f64], w: &[f64]) -> f64 {
    gdiag
        .iter()
        .zip(u)
        .zip(w)
        .map(|((g, a), b)| g * a * b)
        .sum()
}

/// Geodesic equation coupled to `nvec` parallel-transported vectors.
///
/// State layout: `[x, v, w_1, …, w_nvec]`, each block of length `dim`.
pub fn transport_rhs(model: &MetricModel, y: &[f64], dy: &mut [f64], nvec: usize) -> Result<()> {
    let n = model.dim;
    let x = &y[..n];
    let gam = model.christoffel_at(x)?;
    let v = &y[n..2 * n];
    dy[..n].copy_from_slice(v);
    for blk in 0..=nvec {
        let w = &y[(1 + blk) * n..(2 + blk) * n];
        for l in 0..n {
            let mut acc = 0.0;
            for a in 0..n {
                if v[a] == 0.0 {
                    continue;
                }
                for b in 0..n {
                    acc += gam.g3(l, a, b) * v[a] * w[b];
                }
            }
            dy[(1 + blk) * n + l] = -acc;
        }
    }
    Ok(())
}

/// Sampled solution of the geodesic equation.
#[derive(Clone, Debug)]
pub struct GeodesicPath {
    pub s: Vec<f64>,
    pub x: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    /// Formal order of the integrator that produced the samples.
    pub order: usize,
    /// The path left the chart before `s_end`.
    pub truncated: bool,
}

impl GeodesicPath {
    pub fn end(&self) -> (&[f64], &[f64]) {
        (self.x.last().unwrap(), self.v.last().unwrap())
    }
}

/// Integrates `ẍ + Γ(ẋ, ẋ) = 0` on `[0, s_end]`, recording every accepted step.
pub fn integrate_geodesic(
    model: &MetricModel,
    x0: &[f64],
    v0: &[f64],
    s_end: f64,
    opts: &GeoOptions,
) -> Result<GeodesicPath> {
    let n = model.dim;
    if x0.len() != n || v0.len() != n {
        return Err(Error::Parameter("initial data has wrong dimension".into()));
    }
    if !model.in_chart(x0) {
        return Err(Error::Domain {
            model: model.name(),
            point: x0.to_vec(),
        });
    }
    let y0: Vec<f64> = x0.iter().chain(v0).copied().collect();
    let out = integrate(
        |_, y, dy| transport_rhs(model, y, dy, 0),
        &y0,
        0.0,
        &[s_end],
        opts.integrator,
        true,
    );
    let truncated = match out.failure {
        None => false,
        Some(Error::Truncated { .. })
        | Some(Error::Domain { .. })
        | Some(Error::SingularMetric { .. }) => true,
        Some(e) => return Err(e),
    };
    let mut path = GeodesicPath {
        s: Vec::with_capacity(out.trace.len()),
        x: Vec::with_capacity(out.trace.len()),
        v: Vec::with_capacity(out.trace.len()),
        order: 5,
        truncated,
    };
    for (s, y) in out.trace {
        path.s.push(s);
        path.x.push(y[..n].to_vec());
        path.v.push(y[n..].to_vec());
    }
    Ok(path)
}

/// `exp_p(v) = γ_v(1)`.
pub fn exp_map(model: &MetricModel, p: &[f64], v: &[f64], opts: &GeoOptions) -> Result<Vec<f64>> {
    let n = model.dim;
    if v.iter().all(|c| *c == 0.0) {
        return Ok(p.to_vec());
    }
    let y0: Vec<f64> = p.iter().chain(v).copied().collect();
    let out = integrate(
        |_, y, dy| transport_rhs(model, y, dy, 0),
        &y0,
        0.0,
        &[1.0],
        opts.integrator,
        false,
    );
    match out.failure {
        None => Ok(out.stops[0][..n].to_vec()),
        Some(Error::Truncated { s }) => Err(Error::Truncated { s }),
        Some(e) => Err(e),
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// Largest Newton iteration count accepted by [`log_map`].
pub const LOG_MAP_MAX_ITER: usize = 50;

/// `exp_p^{-1}(q)` by damped Newton shooting, starting from `q - p`.
pub fn log_map(
    model: &MetricModel,
    p: &[f64],
    q: &[f64],
    tol: f64,
    opts: &GeoOptions,
) -> Result<Vec<f64>> {
    let guess: Vec<f64> = q.iter().zip(p).map(|(a, b)| a - b).collect();
    log_map_from(model, p, q, &guess, tol, opts)
}

/// [`log_map`] with an explicit initial guess, e.g. the solution at a neighbouring point.
pub fn log_map_from(
    model: &MetricModel,
    p: &[f64],
    q: &[f64],
    guess: &[f64],
    tol: f64,
    opts: &GeoOptions,
) -> Result<Vec<f64>> {
    log_map_with(model, p, q, guess, tol, opts, None)
}

/// Forward-difference Jacobian of `v ↦ exp_p(v)`.
pub fn exp_jacobian(
    model: &MetricModel,
    p: &[f64],
    v: &[f64],
    opts: &GeoOptions,
) -> Result<nalgebra::DMatrix<f64>> {
    let n = model.dim;
    let base = exp_map(model, p, v, opts)?;
    let mut jac = nalgebra::DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut vp = v.to_vec();
        let step = 1e-6 * (1.0 + v[j].abs());
        vp[j] += step;
        let xp = exp_map(model, p, &vp, opts)?;
        for i in 0..n {
            jac[(i, j)] = (xp[i] - base[i]) / step;
        }
    }
    Ok(jac)
}

/// Newton shooting for `exp_p(v) = q`.
///
/// With `frozen = Some(J)` the Jacobian is held fixed (chord iteration), which is
/// cheap and accurate when `q` is close to the point where `J` was evaluated.
/// Iteration stops once the residual is below `tol` or stalls at the
/// floating-point floor of the endpoint map.
pub fn log_map_with(
    model: &MetricModel,
    p: &[f64],
    q: &[f64],
    guess: &[f64],
    tol: f64,
    opts: &GeoOptions,
    frozen: Option<&nalgebra::DMatrix<f64>>,
) -> Result<Vec<f64>> {
    let n = model.dim;
    if q.iter().zip(p).all(|(a, b)| a == b) {
        return Ok(vec![0.0; n]);
    }
    let resid = |v: &[f64]| -> Result<Vec<f64>> {
        let x = exp_map(model, p, v, opts)?;
        Ok(x.iter().zip(q).map(|(a, b)| a - b).collect())
    };
    let floor = 1e-12 * (1.0 + norm(q));
    let mut v = guess.to_vec();
    let mut r = resid(&v)?;
    let mut rn = norm(&r);
    let mut lu_frozen = frozen.map(|j| j.clone().lu());
    for _ in 0..LOG_MAP_MAX_ITER {
        if rn <= tol {
            return Ok(v);
        }
        let rhs = nalgebra::DVector::from_iterator(n, r.iter().map(|a| -a));
        let dv = match &lu_frozen {
            Some(lu) => lu.solve(&rhs),
            None => exp_jacobian(model, p, &v, opts)?.lu().solve(&rhs),
        };
        let dv = match dv {
            Some(d) => d,
            None => {
                return Err(Error::Convergence {
                    iterations: 0,
                    residual: rn,
                })
            }
        };
        let mut lambda = 1.0;
        let mut accepted = false;
        for attempt in 0..30 {
            let trial: Vec<f64> = v
                .iter()
                .zip(dv.iter())
                .map(|(a, d)| a + lambda * d)
                .collect();
            if let Ok(rt) = resid(&trial) {
                let rtn = norm(&rt);
                if rtn < rn {
                    v = trial;
                    r = rt;
                    rn = rtn;
                    accepted = true;
                    break;
                }
            }
            if attempt == 0 && rn <= floor {
                return Ok(v);
            }
            lambda *= 0.5;
        }
        if !accepted {
            if lu_frozen.is_some() {
                lu_frozen = None;
                continue;
            }
            if rn <= tol.max(floor) {
                return Ok(v);
            }
            return Err(Error::Convergence {
                iterations: LOG_MAP_MAX_ITER,
                residual: rn,
            });
        }
    }
    if rn <= tol.max(floor) {
        Ok(v)
    } else {
        Err(Error::Convergence {
            iterations: LOG_MAP_MAX_ITER,
            residual: rn,
        })
    }
}

/// Parallel transport of `w0` along `path`, sampled at the path's parameters.
pub fn parallel_transport(
    model: &MetricModel,
    path: &GeodesicPath,
    w0: &[f64],
    opts: &GeoOptions,
) -> Result<Vec<Vec<f64>>> {
    let n = model.dim;
    let y0: Vec<f64> = path.x[0]
        .iter()
        .chain(&path.v[0])
        .chain(w0)
        .copied()
        .collect();
    let stops: Vec<f64> = path.s.iter().copied().skip(1).collect();
    let out = integrate(
        |_, y, dy| transport_rhs(model, y, dy, 1),
        &y0,
        path.s[0],
        &stops,
        opts.integrator,
        false,
    );
    if let Some(e) = out.failure {
        return Err(e);
    }
    let mut ws = vec![w0.to_vec()];
    ws.extend(out.stops.iter().map(|y| y[2 * n..3 * n].to_vec()));
    Ok(ws)
}

/// A `g`-orthonormal basis at the centre `p`, with `e_0` future timelike.
#[derive(Clone, Debug, PartialEq)]
pub struct OrthoBasis {
    pub p: Vec<f64>,
    /// `e[α]` is the chart-component vector of `e_α`.
    pub e: Vec<Vec<f64>>,
}

impl OrthoBasis {
    /// Normalized coordinate vectors (exact Gram–Schmidt for diagonal metrics).
    pub fn standard(model: &MetricModel, p: &[f64]) -> Result<Self> {
        let g = model.metric_at(p)?;
        let n = model.dim;
        let e = (0..n)
            .map(|a| {
                let mut v = vec![0.0; n];
                v[a] = 1.0 / g[(a, a)].abs().sqrt();
                v
            })
            .collect();
        Ok(OrthoBasis { p: p.to_vec(), e })
    }

    /// Standard basis with its spatial part rotated by a seeded random orthogonal matrix.
    pub fn seeded(model: &MetricModel, p: &[f64], seed: u64) -> Result<Self> {
        let base = Self::standard(model, p)?;
        let n = model.dim;
        let m = n - 1;
        if m < 2 {
            return Ok(base);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = nalgebra::DMatrix::<f64>::from_fn(m, m, |_, _| rng.gen_range(-1.0..1.0));
        let qr = a.qr();
        let q = qr.q();
        let mut e = vec![base.e[0].clone()];
        for i in 0..m {
            let mut v = vec![0.0; n];
            for j in 0..m {
                for (c, vc) in v.iter_mut().enumerate() {
                    *vc += q[(j, i)] * base.e[1 + j][c];
                }
            }
            e.push(v);
        }
        Ok(OrthoBasis { p: p.to_vec(), e })
    }

    /// Chart vector `Σ c^α e_α`.
    pub fn combine(&self, c: &[f64]) -> Vec<f64> {
        let n = self.e.len();
        let mut out = vec![0.0; n];
        for (ca, ea) in c.iter().zip(&self.e) {
            for i in 0..n {
                out[i] += ca * ea[i];
            }
        }
        out
    }

    /// Components `c^α` of a chart vector `v` at `p` (inverse of [`Self::combine`]).
    pub fn coords(&self, model: &MetricModel, v: &[f64]) -> Vec<f64> {
        let g = model.metric_diag(&self.p);
        self.e
            .iter()
            .enumerate()
            .map(|(a, ea)| {
                let s = if a == 0 { -1.0 } else { 1.0 };
                s * inner(&g, v, ea)
            })
            .collect()
    }
}

/// Direction label `ω = (ω⁰, ω_sp)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Omega {
    pub omega0: f64,
    /// Unit vector in `R^n`, expressed in the spatial basis `e_1, …, e_n`.
    pub dir: Vec<f64>,
}

impl Omega {
    pub fn new(omega0: f64, dir: &[f64]) -> Result<Self> {
        if !(omega0.abs() < 1.0) {
            return Err(Error::Parameter(format!(
                "|omega0| = {} must be < 1",
                omega0.abs()
            )));
        }
        let nd = norm(dir);
        if nd == 0.0 || !nd.is_finite() {
            return Err(Error::Parameter("spatial direction must be nonzero".into()));
        }
        Ok(Omega {
            omega0,
            dir: dir.iter().map(|d| d / nd).collect(),
        })
    }

    /// `ρ²/r² = 1 - (ω⁰)²`.
    pub fn kappa(&self) -> f64 {
        1.0 - self.omega0 * self.omega0
    }
}

/// Orthonormal basis of `H_ω`: unit spatial vectors orthogonal to `e_r`, as
/// coefficient vectors in `R^n` over `e_1, …, e_n`.
pub fn h_omega_basis(dir: &[f64]) -> Vec<Vec<f64>> {
    let m = dir.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| {
        dir[a]
            .abs()
            .partial_cmp(&dir[b].abs())
            .unwrap()
            .then(a.cmp(&b))
    });
    let mut kept: Vec<Vec<f64>> = vec![dir.to_vec()];
    let mut out = Vec::with_capacity(m.saturating_sub(1));
    for i in order {
        if out.len() + 1 == m {
            break;
        }
        let mut v = vec![0.0; m];
        v[i] = 1.0;
        for u in &kept {
            let d: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
            for (vc, uc) in v.iter_mut().zip(u) {
                *vc -= d * uc;
            }
        }
        let nv = norm(&v);
        if nv < 1e-8 {
            continue;
        }
        v.iter_mut().for_each(|c| *c /= nv);
        kept.push(v.clone());
        out.push(v);
    }
    out
}

/// Initial frame vectors at `p` for direction `ω`: `(e_ρ, e_θ, e_0, [e_A])` in chart components.
pub fn initial_frame(
    basis: &OrthoBasis,
    omega: &Omega,
) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<Vec<f64>>) {
    let n = basis.e.len();
    let mut cr = vec![0.0; n];
    cr[1..].copy_from_slice(&omega.dir);
    let e_r = basis.combine(&cr);
    let e_0 = basis.e[0].clone();
    let e_rho: Vec<f64> = e_r
        .iter()
        .zip(&e_0)
        .map(|(a, b)| a + omega.omega0 * b)
        .collect();
    let e_theta: Vec<f64> = e_0
        .iter()
        .zip(&e_r)
        .map(|(a, b)| a + omega.omega0 * b)
        .collect();
    let e_a = h_omega_basis(&omega.dir)
        .into_iter()
        .map(|h| {
            let mut c = vec![0.0; n];
            c[1..].copy_from_slice(&h);
            basis.combine(&c)
        })
        .collect();
    (e_rho, e_theta, e_0, e_a)
}

/// Parallel frame along a radial geodesic at parameter `s` (equal to `r`).
#[derive(Clone, Debug)]
pub struct Frame {
    pub x: Vec<f64>,
    pub s: f64,
    pub omega: Omega,
    pub e_rho: Vec<f64>,
    pub e_theta: Vec<f64>,
    pub e_0: Vec<f64>,
    pub e_a: Vec<Vec<f64>>,
}

impl Frame {
    /// Normal time coordinate `t = ω⁰ r`.
    pub fn t(&self) -> f64 {
        self.omega.omega0 * self.s
    }

    /// Tangential vectors in the order `E_θ, E_A…`.
    pub fn tangential(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = vec![&self.e_theta];
        out.extend(self.e_a.iter().map(|v| v.as_slice()));
        out
    }
}

/// Frames along `γ_ω` at every requested radius (one integration for all radii).
///
/// Radii at or below the vertex cutoff return the initial frame at `p`. A radius
/// beyond the chart yields [`Error::Truncated`] for that entry and all later ones.
pub fn radial_sweep(
    model: &MetricModel,
    basis: &OrthoBasis,
    omega: &Omega,
    radii: &[f64],
    opts: &GeoOptions,
) -> Vec<Result<Frame>> {
    let n = model.dim;
    let (e_rho, e_theta, e_0, e_a) = initial_frame(basis, omega);
    let nvec = 2 + e_a.len();
    let mut y0 = basis.p.clone();
    y0.extend(&e_rho);
    y0.extend(&e_theta);
    y0.extend(&e_0);
    for v in &e_a {
        y0.extend(v);
    }
    let cut = opts.vertex_cutoff();
    let stops: Vec<f64> = radii.iter().map(|r| r.max(0.0)).collect();
    let mut order: Vec<usize> = (0..radii.len()).collect();
    order.sort_by(|&a, &b| stops[a].partial_cmp(&stops[b]).unwrap());
    let sorted: Vec<f64> = order.iter().map(|&i| stops[i]).collect();
    let out = integrate(
        |_, y, dy| transport_rhs(model, y, dy, nvec),
        &y0,
        0.0,
        &sorted,
        opts.integrator,
        false,
    );
    let unpack = |y: &[f64], s: f64| Frame {
        x: y[..n].to_vec(),
        s,
        omega: omega.clone(),
        e_rho: y[n..2 * n].to_vec(),
        e_theta: y[2 * n..3 * n].to_vec(),
        e_0: y[3 * n..4 * n].to_vec(),
        e_a: (0..e_a.len())
            .map(|k| y[(4 + k) * n..(5 + k) * n].to_vec())
            .collect(),
    };
    let mut res: Vec<Option<Result<Frame>>> = (0..radii.len()).map(|_| None).collect();
    for (k, &i) in order.iter().enumerate() {
        let s = sorted[k];
        let entry = if s <= cut {
            Ok(unpack(&y0, s))
        } else if let Some(y) = out.stops.get(k) {
            Ok(unpack(y, s))
        } else {
            Err(match &out.failure {
                Some(Error::Truncated { s }) => Error::Truncated { s: *s },
                Some(e) => e.clone(),
                None => Error::Truncated { s },
            })
        };
        res[i] = Some(entry);
    }
    res.into_iter().map(|r| r.unwrap()).collect()
}

/// Single frame at parameter `s` along `γ_ω`.
pub fn radial_frame(
    model: &MetricModel,
    basis: &OrthoBasis,
    omega: &Omega,
    s: f64,
    opts: &GeoOptions,
) -> Result<Frame> {
    radial_sweep(model, basis, omega, &[s], opts).pop().unwrap()
}

/// Deviations of a frame from its defining inner products.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct FrameResiduals {
    /// Max error over the six inner-product identities.
    pub inner_products: f64,
    /// `|E_θ - (t/r) E_ρ - (ρ²/r²) E_0|` in chart components.
    pub theta_decomposition: f64,
}

pub fn frame_residuals(model: &MetricModel, fr: &Frame) -> FrameResiduals {
    let g = model.metric_diag(&fr.x);
    let kappa = fr.omega.kappa();
    let mut worst = 0.0f64;
    let mut upd = |v: f64| worst = worst.max(v.abs());
    upd(inner(&g, &fr.e_rho, &fr.e_rho) - kappa);
    upd(inner(&g, &fr.e_theta, &fr.e_theta) + kappa);
    upd(inner(&g, &fr.e_rho, &fr.e_theta));
    for (i, ea) in fr.e_a.iter().enumerate() {
        upd(inner(&g, &fr.e_rho, ea));
        upd(inner(&g, &fr.e_theta, ea));
        for (j, eb) in fr.e_a.iter().enumerate() {
            upd(inner(&g, ea, eb) - if i == j { 1.0 } else { 0.0 });
        }
    }
    let w0 = fr.omega.omega0;
    let dec = fr
        .e_theta
        .iter()
        .zip(&fr.e_rho)
        .zip(&fr.e_0)
        .map(|((th, rh), e0)| (th - w0 * rh - kappa * e0).abs())
        .fold(0.0, f64::max);
    FrameResiduals {
        inner_products: worst,
        theta_decomposition: dec,
    }
}

/// Deterministic `ω` grid: `n0` values of `ω⁰` in `(-0.9, 0.9)` times `ndir` spatial directions.
pub fn omega_grid(dim: usize, n0: usize, ndir: usize, seed: u64) -> Vec<Omega> {
    let m = dim - 1;
    let w0s: Vec<f64> = (0..n0)
        .map(|i| {
            if n0 == 1 {
                0.0
            } else {
                -0.9 + 1.8 * (i as f64 + 0.5) / n0 as f64
            }
        })
        .collect();
    let dirs: Vec<Vec<f64>> = match m {
        1 => (0..ndir)
            .map(|i| vec![if i % 2 == 0 { 1.0 } else { -1.0 }])
            .collect(),
        2 => (0..ndir)
            .map(|i| {
                let a = 2.0 * std::f64::consts::PI * (i as f64 + 0.25) / ndir as f64;
                vec![a.cos(), a.sin()]
            })
            .collect(),
        _ => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..ndir)
                .map(|_| loop {
                    let v: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
                    let nv = norm(&v);
                    if nv > 0.1 && nv <= 1.0 {
                        break v.iter().map(|c| c / nv).collect();
                    }
                })
                .collect()
        }
    };
    let mut out = Vec::with_capacity(n0 * ndir);
    for &w0 in &w0s {
        for d in &dirs {
            out.push(Omega::new(w0, d).expect("grid values are admissible"));
        }
    }
    out
}

/// Sampling of `D_{r₀}` by radial geodesics: an `ω` grid times a list of radii.
#[derive(Clone, Debug, PartialEq)]
pub struct Sampling {
    pub n_omega0: usize,
    pub n_dir: usize,
    /// Radii as fractions of `r₀`, each in `(0, 1)`.
    pub radius_fractions: Vec<f64>,
    pub seed: u64,
}

impl Sampling {
    /// 16 values of `ω⁰` × 32 directions × `n_radii` radii.
    pub fn standard(n_radii: usize) -> Self {
        Sampling {
            n_omega0: 16,
            n_dir: 32,
            radius_fractions: Self::uniform_radii(n_radii),
            seed: 0x5eed,
        }
    }

    pub fn new(n_omega0: usize, n_dir: usize, n_radii: usize) -> Self {
        Sampling {
            n_omega0,
            n_dir,
            radius_fractions: Self::uniform_radii(n_radii),
            seed: 0x5eed,
        }
    }

    fn uniform_radii(n: usize) -> Vec<f64> {
        (0..n)
            .map(|i| 0.05 + 0.9 * (i as f64 + 0.5) / n as f64)
            .collect()
    }

    pub fn omegas(&self, dim: usize) -> Vec<Omega> {
        // Only two spatial directions exist in 1+1.
        let ndir = if dim == 2 {
            self.n_dir.min(2)
        } else {
            self.n_dir
        };
        omega_grid(dim, self.n_omega0, ndir, self.seed)
    }

    pub fn radii(&self, r0: f64) -> Vec<f64> {
        self.radius_fractions.iter().map(|f| f * r0).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minkowski_geodesic_is_straight() {
        let m = MetricModel::minkowski(4);
        let path = integrate_geodesic(
            &m,
            &[0.0; 4],
            &[0.0, 1.0, 0.0, 0.0],
            2.0,
            &GeoOptions::default(),
        )
        .unwrap();
        let (x, v) = path.end();
        assert!((x[1] - 2.0).abs() < 1e-14 && x[0].abs() < 1e-14);
        assert_eq!(v, &[0.0, 1.0, 0.0, 0.0]);
        assert!(!path.truncated);
    }

    #[test]
    fn null_geodesic_stays_null() {
        let m = MetricModel::minkowski(2);
        let path =
            integrate_geodesic(&m, &[0.0, 0.0], &[1.0, 1.0], 3.0, &GeoOptions::default()).unwrap();
        for v in &path.v {
            assert_eq!(-v[0] * v[0] + v[1] * v[1], 0.0);
        }
    }

    #[test]
    fn leaving_the_chart_truncates() {
        let m = MetricModel::minkowski(2);
        let path =
            integrate_geodesic(&m, &[0.0, 9.0], &[0.0, 1.0], 5.0, &GeoOptions::default()).unwrap();
        assert!(path.truncated);
        assert!(*path.s.last().unwrap() < 1.01);
        assert!(exp_map(&m, &[0.0, 9.0], &[0.0, 5.0], &GeoOptions::default()).is_err());
    }

    #[test]
    fn minkowski_exp_and_log_are_translations() {
        let m = MetricModel::minkowski(3);
        let o = GeoOptions::default();
        let x = exp_map(&m, &[0.1, 0.2, 0.3], &[0.5, -1.0, 0.25], &o).unwrap();
        assert!((x[0] - 0.6).abs() < 1e-14 && (x[1] + 0.8).abs() < 1e-14);
        let v = log_map(&m, &[0.0, 0.0, 0.0], &[1.0, 2.0, -0.5], 1e-12, &o).unwrap();
        assert!((v[1] - 2.0).abs() < 1e-12);
        assert_eq!(
            log_map(&m, &[1.0, 1.0, 1.0], &[1.0, 1.0, 1.0], 1e-12, &o).unwrap(),
            vec![0.0; 3]
        );
    }

    #[test]
    fn warped_norm_drift_and_round_trip() {
        let m = MetricModel::warped(3, 0.05, 1.0);
        let o = GeoOptions::default();
        let p = [0.1, 0.3, -0.2];
        let v0 = [0.2, 0.9, 0.3];
        let path = integrate_geodesic(&m, &p, &v0, 2.0, &o).unwrap();
        let n0 = inner(&m.metric_diag(&p), &v0, &v0);
        for (x, v) in path.x.iter().zip(&path.v) {
            let drift = (inner(&m.metric_diag(x), v, v) - n0).abs();
            assert!(drift < 1e-9, "drift {drift}");
        }
        let q = [0.35, 0.6, 0.1];
        let v = log_map(&m, &p, &q, 1e-12, &o).unwrap();
        let back = exp_map(&m, &p, &v, &o).unwrap();
        let err = norm(&back.iter().zip(&q).map(|(a, b)| a - b).collect::<Vec<_>>());
        assert!(err < 1e-9, "round trip {err}");
    }

    #[test]
    fn exp_map_matches_refined_integration() {
        let m = MetricModel::warped(2, 0.05, 1.0);
        let v = [0.0, 0.3];
        let a = exp_map(&m, &[0.2, 0.4], &v, &GeoOptions::default()).unwrap();
        let b = exp_map(&m, &[0.2, 0.4], &v, &GeoOptions::fixed(1e-3, 1.0)).unwrap();
        assert!((a[0] - b[0]).abs() < 1e-11 && (a[1] - b[1]).abs() < 1e-11);
    }

    #[test]
    fn velocity_is_self_parallel() {
        let m = MetricModel::warped(2, 0.05, 1.0);
        let o = GeoOptions::default();
        let path = integrate_geodesic(&m, &[0.0, 0.5], &[0.3, 1.0], 1.5, &o).unwrap();
        let w = parallel_transport(&m, &path, &[0.3, 1.0], &o).unwrap();
        for (wi, vi) in w.iter().zip(&path.v) {
            assert!((wi[0] - vi[0]).abs() < 1e-12 && (wi[1] - vi[1]).abs() < 1e-12);
        }
        let u = parallel_transport(&m, &path, &[1.0, 0.2], &o).unwrap();
        let g0 = inner(&m.metric_diag(&path.x[0]), &u[0], &u[0]);
        for (x, ui) in path.x.iter().zip(&u) {
            assert!((inner(&m.metric_diag(x), ui, ui) - g0).abs() < 1e-9);
        }
    }

    #[test]
    fn minkowski_frames() {
        let m = MetricModel::minkowski(2);
        let b = OrthoBasis::standard(&m, &[0.0, 0.0]).unwrap();
        let fr = radial_frame(
            &m,
            &b,
            &Omega::new(0.0, &[1.0]).unwrap(),
            1.3,
            &GeoOptions::default(),
        )
        .unwrap();
        assert_eq!(fr.e_rho, vec![0.0, 1.0]);
        assert_eq!(fr.e_theta, vec![1.0, 0.0]);
        let fr = radial_frame(
            &m,
            &b,
            &Omega::new(0.5, &[1.0]).unwrap(),
            1.0,
            &GeoOptions::default(),
        )
        .unwrap();
        let g = m.metric_diag(&fr.x);
        assert!((inner(&g, &fr.e_rho, &fr.e_rho) - 0.75).abs() < 1e-15);
        assert!(radial_frame(
            &m,
            &b,
            &Omega {
                omega0: 1.0,
                dir: vec![1.0]
            },
            1.0,
            &GeoOptions::default()
        )
        .is_ok());
        assert!(Omega::new(1.0, &[1.0]).is_err());
    }

    #[test]
    fn warped_frames_satisfy_inner_products() {
        let m = MetricModel::warped(4, 0.05, 1.0);
        let b = OrthoBasis::seeded(&m, &[0.1, 0.2, 0.0, -0.1], 7).unwrap();
        let om = Omega::new(-0.4, &[0.3, -0.5, 0.8]).unwrap();
        for fr in radial_sweep(&m, &b, &om, &[0.0, 0.2, 0.7, 1.0], &GeoOptions::default()) {
            let r = frame_residuals(&m, &fr.unwrap());
            assert!(
                r.inner_products < 1e-8 && r.theta_decomposition < 1e-8,
                "{r:?}"
            );
        }
    }

    #[test]
    fn h_omega_basis_is_orthonormal_complement() {
        let d = [0.6, 0.0, 0.8];
        let h = h_omega_basis(&d);
        assert_eq!(h.len(), 2);
        for u in &h {
            assert!(u.iter().zip(&d).map(|(a, b)| a * b).sum::<f64>().abs() < 1e-15);
            assert!((norm(u) - 1.0).abs() < 1e-15);
        }
    }
}
