//! Boundary control of `□_g y + 𝒳·∇y + q y = 0` on a 1+1 cylinder `(x_l, x_r) × (τ₋, τ₊)`.
//!
//! The solver is a divergence-form leapfrog scheme for the diagonal catalog metrics
//! `g = diag(-α, β)`. Every step is an explicit linear stencil whose coefficients are
//! precomputed, so the control-to-terminal-state map has an exact transpose, and the
//! HUM Gramian assembled from the two is symmetric positive semidefinite to roundoff.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::carleman_core::{
    boundary_nodes, normal_fbar, CarlemanDomain, CarlemanGrid, CarlemanParams,
};
use crate::error::{Error, Result};
use crate::geodesic_engine::{GeoOptions, OrthoBasis};
use crate::metric_models::MetricModel;
use crate::scalar::Jet2;

/// Largest admissible `Δt · max(wave speed) / Δx`.
pub const CFL_LIMIT: f64 = 0.5;

/// Constant chart components of the drift `𝒳` and the potential `q`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LowerOrder {
    pub x_t: f64,
    pub x_x: f64,
    pub q: f64,
}

impl LowerOrder {
    /// `∇_α 𝒳^α = 𝒳^α ∂_α ln √|g|` for constant chart components.
    pub fn divergence(&self, model: &MetricModel, y: [f64; 2]) -> f64 {
        if self.x_t == 0.0 && self.x_x == 0.0 {
            return 0.0;
        }
        let g = model.metric_diag(&[Jet2::var(y[0], 0), Jet2::var(y[1], 1)]);
        let s = -(g[0] * g[1]);
        let ds = s.grad();
        0.5 * (self.x_t * ds[0] + self.x_x * ds[1]) / s.value()
    }
}

/// Cylinder, time span and resolution. `nx` cells span `(x_l, x_r)`; `nt` is the number of
/// time steps per unit time, rounded up so that the span is covered exactly.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WaveGrid {
    pub xl: f64,
    pub xr: f64,
    pub tau_lo: f64,
    pub tau_hi: f64,
    pub nx: usize,
    pub nt: usize,
}

impl WaveGrid {
    pub fn steps(&self) -> usize {
        (((self.tau_hi - self.tau_lo) * self.nt as f64) - 1e-9)
            .ceil()
            .max(2.0) as usize
    }

    pub fn dx(&self) -> f64 {
        (self.xr - self.xl) / self.nx as f64
    }

    pub fn dt(&self) -> f64 {
        (self.tau_hi - self.tau_lo) / self.steps() as f64
    }

    fn validate(&self) -> Result<()> {
        if self.nx < 4 || self.nt < 1 || !(self.xr > self.xl) || !(self.tau_hi > self.tau_lo) {
            return Err(Error::Parameter(format!("degenerate wave grid {self:?}")));
        }
        Ok(())
    }
}

/// Cauchy data `(y, ∂_t y)` at the nodes `x_0 … x_{N}`; the end values are ignored.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CauchyData {
    pub y0: Vec<f64>,
    pub y1: Vec<f64>,
}

impl CauchyData {
    pub fn zero(nodes: usize) -> Self {
        CauchyData {
            y0: vec![0.0; nodes],
            y1: vec![0.0; nodes],
        }
    }

    pub fn from_fns(x: &[f64], y0: impl Fn(f64) -> f64, y1: impl Fn(f64) -> f64) -> Self {
        CauchyData {
            y0: x.iter().map(|&v| y0(v)).collect(),
            y1: x.iter().map(|&v| y1(v)).collect(),
        }
    }
}

/// Per-step stencil `y^{n+1}_j = a y^n_j + l y^n_{j-1} + r y^n_{j+1} + m y^{n-1}_j`.
#[derive(Clone, Debug)]
struct Stencil {
    a: Vec<f64>,
    l: Vec<f64>,
    r: Vec<f64>,
    m: Vec<f64>,
}

/// `(A, B, √|g|)` with `A = √|g|/α` and `B = √|g|/β`.
fn ab(model: &MetricModel, t: f64, x: f64) -> (f64, f64, f64) {
    let g = model.metric_diag(&[t, x]);
    let s = (-g[0] * g[1]).sqrt();
    (s / -g[0], s / g[1], s)
}

/// Solution on all time levels, with staggered energies and outward normal traces.
#[derive(Clone, Debug, Serialize)]
pub struct StateTrajectory {
    pub t: Vec<f64>,
    pub x: Vec<f64>,
    /// `y[n][j]`.
    pub y: Vec<Vec<f64>>,
    /// Energy between levels `n` and `n + 1`.
    pub energy: Vec<f64>,
    /// `𝒩y` at `x_l` and `x_r` on each level, by one-sided second-order differences.
    pub trace: [Vec<f64>; 2],
}

impl StateTrajectory {
    /// Centred `∂_t y` on an interior level.
    pub fn velocity(&self, n: usize) -> Vec<f64> {
        let k = self.t.len() - 1;
        let (lo, hi) = (n.saturating_sub(1), (n + 1).min(k));
        let h = self.t[hi] - self.t[lo];
        self.y[hi]
            .iter()
            .zip(&self.y[lo])
            .map(|(a, b)| (a - b) / h)
            .collect()
    }
}

/// Explicit wave solver for one model, grid and set of lower-order coefficients.
#[derive(Clone, Debug)]
pub struct WaveSolver {
    pub model: MetricModel,
    pub grid: WaveGrid,
    pub lower: LowerOrder,
    pub dx: f64,
    pub dt: f64,
    pub steps: usize,
    pub t: Vec<f64>,
    pub x: Vec<f64>,
    pub cfl_ratio: f64,
    fwd: Stencil,
    adj: Stencil,
}

impl WaveSolver {
    pub fn new(model: &MetricModel, grid: WaveGrid, lower: LowerOrder) -> Result<Self> {
        if model.dim != 2 {
            return Err(Error::Parameter(format!(
                "the wave solver is implemented in 1+1 dimensions, got dimension {}",
                model.dim
            )));
        }
        grid.validate()?;
        let (dx, dt, k) = (grid.dx(), grid.dt(), grid.steps());
        let t: Vec<f64> = (0..=k).map(|n| grid.tau_lo + n as f64 * dt).collect();
        let x: Vec<f64> = (0..=grid.nx).map(|j| grid.xl + j as f64 * dx).collect();
        for &tn in [t[0], t[k]].iter() {
            for &xj in [x[0], x[grid.nx]].iter() {
                if !model.in_chart(&[tn, xj]) {
                    return Err(Error::Domain {
                        model: model.name(),
                        point: vec![tn, xj],
                    });
                }
            }
        }
        let mut speed: f64 = 0.0;
        for &tn in &t {
            for &xj in &x {
                let g = model.metric_diag(&[tn, xj]);
                speed = speed.max((-g[0] / g[1]).sqrt());
            }
        }
        let cfl_ratio = dt * speed / dx;
        if !(cfl_ratio <= CFL_LIMIT + 1e-12) {
            return Err(Error::Cfl {
                ratio: cfl_ratio,
                limit: CFL_LIMIT,
            });
        }
        let adj_lower = LowerOrder {
            x_t: -lower.x_t,
            x_x: -lower.x_x,
            q: lower.q,
        };
        let fwd = Self::stencil(model, &t, &x, dt, dx, lower, None);
        let adj = Self::stencil(model, &t, &x, dt, dx, adj_lower, Some(lower));
        Ok(WaveSolver {
            model: model.clone(),
            grid,
            lower,
            dx,
            dt,
            steps: k,
            t,
            x,
            cfl_ratio,
            fwd,
            adj,
        })
    }

    fn stencil(
        model: &MetricModel,
        t: &[f64],
        x: &[f64],
        dt: f64,
        dx: f64,
        lo: LowerOrder,
        drift: Option<LowerOrder>,
    ) -> Stencil {
        let k = t.len() - 1;
        let nodes = x.len();
        let lam2 = (dt / dx).powi(2);
        let size = k * nodes;
        let mut st = Stencil {
            a: vec![0.0; size],
            l: vec![0.0; size],
            r: vec![0.0; size],
            m: vec![0.0; size],
        };
        for n in 0..k {
            for j in 1..nodes - 1 {
                let (tn, xj) = (t[n], x[j]);
                let (ap, _, _) = ab(model, tn + 0.5 * dt, xj);
                let (am, _, _) = ab(model, tn - 0.5 * dt, xj);
                let (_, bp, _) = ab(model, tn, xj + 0.5 * dx);
                let (_, bm, _) = ab(model, tn, xj - 0.5 * dx);
                let (_, _, s) = ab(model, tn, xj);
                let q = lo.q - drift.map_or(0.0, |d| d.divergence(model, [tn, xj]));
                let half = 0.5 * dt * s * lo.x_t;
                let adv = dt * dt * s * lo.x_x / (2.0 * dx);
                let cp = ap - half;
                let i = n * nodes + j;
                st.a[i] = (ap + am - lam2 * (bp + bm) + dt * dt * s * q) / cp;
                st.l[i] = (lam2 * bm - adv) / cp;
                st.r[i] = (lam2 * bp + adv) / cp;
                st.m[i] = (-am - half) / cp;
            }
        }
        st
    }

    pub fn nodes(&self) -> usize {
        self.x.len()
    }

    fn first_level(&self, st: &Stencil, y0: &[f64], y1: &[f64], ends: (f64, f64)) -> Vec<f64> {
        let nodes = self.nodes();
        let mut out = vec![0.0; nodes];
        for j in 1..nodes - 1 {
            let (a, l, r, m) = (st.a[j], st.l[j], st.r[j], st.m[j]);
            out[j] =
                (a * y0[j] + l * y0[j - 1] + r * y0[j + 1] - 2.0 * self.dt * m * y1[j]) / (1.0 - m);
        }
        out[0] = ends.0;
        out[nodes - 1] = ends.1;
        out
    }

    fn step(st: &Stencil, n: usize, prev: &[f64], cur: &[f64], next: &mut [f64]) {
        let nodes = cur.len();
        let base = n * nodes;
        for j in 1..nodes - 1 {
            let i = base + j;
            next[j] =
                st.a[i] * cur[j] + st.l[i] * cur[j - 1] + st.r[i] * cur[j + 1] + st.m[i] * prev[j];
        }
    }

    /// Outward normal derivative `𝒩y = ±β^{-1/2} ∂_x y` at both ends.
    fn normal_trace(&self, tn: f64, y: &[f64]) -> [f64; 2] {
        let nodes = y.len();
        let h = 2.0 * self.dx;
        let bl = self.model.metric_diag(&[tn, self.x[0]])[1].sqrt();
        let br = self.model.metric_diag(&[tn, self.x[nodes - 1]])[1].sqrt();
        let dl = (-3.0 * y[0] + 4.0 * y[1] - y[2]) / h;
        let dr = (3.0 * y[nodes - 1] - 4.0 * y[nodes - 2] + y[nodes - 3]) / h;
        [-dl / bl, dr / br]
    }

    fn energy(&self, n: usize, cur: &[f64], next: &[f64]) -> f64 {
        let th = self.t[n] + 0.5 * self.dt;
        let nodes = cur.len();
        let mut kin = 0.0;
        for j in 1..nodes - 1 {
            let v = (next[j] - cur[j]) / self.dt;
            kin += ab(&self.model, th, self.x[j]).0 * v * v;
        }
        let mut pot = 0.0;
        for j in 0..nodes - 1 {
            let b = ab(&self.model, th, self.x[j] + 0.5 * self.dx).1;
            pot += b * (cur[j + 1] - cur[j]) * (next[j + 1] - next[j]) / (self.dx * self.dx);
        }
        0.5 * self.dx * (kin + pot)
    }

    fn evolve(
        &self,
        st: &Stencil,
        boundary: &[Vec<f64>; 2],
        init: &CauchyData,
    ) -> Result<StateTrajectory> {
        let nodes = self.nodes();
        let k = self.steps;
        if init.y0.len() != nodes
            || init.y1.len() != nodes
            || boundary.iter().any(|b| b.len() != k + 1)
        {
            return Err(Error::Parameter(
                "Cauchy or boundary data do not match the grid".into(),
            ));
        }
        let mut y = Vec::with_capacity(k + 1);
        let mut y0 = init.y0.clone();
        y0[0] = boundary[0][0];
        y0[nodes - 1] = boundary[1][0];
        let y1 = self.first_level(st, &y0, &init.y1, (boundary[0][1], boundary[1][1]));
        y.push(y0);
        y.push(y1);
        for n in 1..k {
            let mut next = vec![0.0; nodes];
            Self::step(st, n, &y[n - 1], &y[n], &mut next);
            next[0] = boundary[0][n + 1];
            next[nodes - 1] = boundary[1][n + 1];
            if next.iter().any(|v| !v.is_finite()) {
                return Err(Error::Instability { step: n + 1 });
            }
            y.push(next);
        }
        let energy = (0..k).map(|n| self.energy(n, &y[n], &y[n + 1])).collect();
        let traces: Vec<[f64; 2]> = (0..=k)
            .map(|n| self.normal_trace(self.t[n], &y[n]))
            .collect();
        Ok(StateTrajectory {
            t: self.t.clone(),
            x: self.x.clone(),
            y,
            energy,
            trace: [
                traces.iter().map(|v| v[0]).collect(),
                traces.iter().map(|v| v[1]).collect(),
            ],
        })
    }

    /// Dirichlet problem for `□y + 𝒳·∇y + qy = 0` with boundary values `boundary[side][n]`.
    pub fn forward(&self, boundary: &[Vec<f64>; 2], init: &CauchyData) -> Result<StateTrajectory> {
        self.evolve(&self.fwd, boundary, init)
    }

    /// Homogeneous Dirichlet problem for the formal adjoint `□φ - 𝒳·∇φ + (q - ∇·𝒳)φ = 0`.
    pub fn adjoint(&self, init: &CauchyData) -> Result<StateTrajectory> {
        let zero = [vec![0.0; self.steps + 1], vec![0.0; self.steps + 1]];
        self.evolve(&self.adj, &zero, init)
    }

    /// Terminal interior levels `(y^{K-1}, y^K)` from boundary data and zero Cauchy data.
    fn terminal_from_boundary(&self, boundary: &[Vec<f64>; 2]) -> Vec<f64> {
        let nodes = self.nodes();
        let k = self.steps;
        let mut prev = vec![0.0; nodes];
        prev[0] = boundary[0][0];
        prev[nodes - 1] = boundary[1][0];
        let mut cur = vec![0.0; nodes];
        cur[0] = boundary[0][1];
        cur[nodes - 1] = boundary[1][1];
        let mut next = vec![0.0; nodes];
        for n in 1..k {
            Self::step(&self.fwd, n, &prev, &cur, &mut next);
            next[0] = boundary[0][n + 1];
            next[nodes - 1] = boundary[1][n + 1];
            std::mem::swap(&mut prev, &mut cur);
            std::mem::swap(&mut cur, &mut next);
        }
        let mut out = prev[1..nodes - 1].to_vec();
        out.extend_from_slice(&cur[1..nodes - 1]);
        out
    }

    /// Transpose of [`Self::terminal_from_boundary`] restricted to levels `n ≥ 2`.
    fn boundary_from_terminal(&self, v: &[f64]) -> [Vec<f64>; 2] {
        let nodes = self.nodes();
        let inner = nodes - 2;
        let k = self.steps;
        let mut out = [vec![0.0; k + 1], vec![0.0; k + 1]];
        let mut nxt = vec![0.0; nodes];
        let mut cur = vec![0.0; nodes];
        let mut prv = vec![0.0; nodes];
        nxt[1..nodes - 1].copy_from_slice(&v[inner..]);
        cur[1..nodes - 1].copy_from_slice(&v[..inner]);
        let st = &self.fwd;
        for n in (1..k).rev() {
            if n + 1 >= 2 {
                out[0][n + 1] = nxt[0];
                out[1][n + 1] = nxt[nodes - 1];
            }
            let base = n * nodes;
            for j in 1..nodes - 1 {
                let g = nxt[j];
                if g == 0.0 {
                    continue;
                }
                let i = base + j;
                cur[j] += st.a[i] * g;
                cur[j - 1] += st.l[i] * g;
                cur[j + 1] += st.r[i] * g;
                prv[j] += st.m[i] * g;
            }
            std::mem::swap(&mut nxt, &mut cur);
            std::mem::swap(&mut cur, &mut prv);
            prv.iter_mut().for_each(|v| *v = 0.0);
        }
        out
    }

    /// Energy constant `C̃ = max_n max(E_n/E_0, E_0/E_n)` of the uncontrolled evolution.
    pub fn energy_constant(&self, init: &CauchyData) -> Result<f64> {
        let zero = [vec![0.0; self.steps + 1], vec![0.0; self.steps + 1]];
        let traj = self.forward(&zero, init)?;
        let e0 = traj.energy[0];
        if !(e0 > 0.0) {
            return Err(Error::Parameter("initial energy must be positive".into()));
        }
        Ok(traj
            .energy
            .iter()
            .map(|&e| (e / e0).max(e0 / e))
            .fold(1.0, f64::max))
    }
}

/// Placement of the weight centre relative to the cylinder.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Centre {
    /// `p ∉ Ū`.
    Exterior { p: [f64; 2] },
    /// `p ∈ U`, observed through the pair `p ± (0, offset)`.
    Interior { p: [f64; 2], offset: f64 },
}

impl Centre {
    pub fn centres(&self) -> Vec<[f64; 2]> {
        match *self {
            Centre::Exterior { p } => vec![p],
            Centre::Interior { p, offset } => vec![[p[0], p[1] - offset], [p[0], p[1] + offset]],
        }
    }
}

/// Everything needed to pose the control problem besides the model and weight parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlSetup {
    pub grid: WaveGrid,
    pub lower: LowerOrder,
    pub centre: Centre,
    /// Time margin by which `Γ₊` is enlarged to the open control region `Γ`.
    pub gamma_margin: f64,
}

impl ControlSetup {
    /// Minkowski-style exterior problem on `U = (1, 2)`, `p = 0`, `τ± = ±2.2`.
    pub fn exterior_default(nx: usize, nt: usize) -> Self {
        ControlSetup {
            grid: WaveGrid {
                xl: 1.0,
                xr: 2.0,
                tau_lo: -2.2,
                tau_hi: 2.2,
                nx,
                nt,
            },
            lower: LowerOrder::default(),
            centre: Centre::Exterior { p: [0.0, 0.0] },
            gamma_margin: 0.1,
        }
    }

    /// Interior problem with `p = (0, 1.5)` and centres `x = 1.45, 1.55`.
    pub fn interior_default(nx: usize, nt: usize) -> Self {
        ControlSetup {
            centre: Centre::Interior {
                p: [0.0, 1.5],
                offset: 0.05,
            },
            ..Self::exterior_default(nx, nt)
        }
    }
}

/// Posed control problem: solver, observation region `Γ₊` and control region `Γ ⊇ Γ̄₊`.
#[derive(Clone, Debug)]
pub struct ControlProblem {
    pub solver: WaveSolver,
    pub params: CarlemanParams,
    pub setup: ControlSetup,
    /// `gamma_plus[side][n]`, side 0 at `x_l`, side 1 at `x_r`.
    pub gamma_plus: [Vec<bool>; 2],
    pub gamma: [Vec<bool>; 2],
    /// Control degrees of freedom `(side, n)`: nodes of `Γ` on levels `n ≥ 2`.
    pub controls: Vec<(usize, usize)>,
    /// Largest normal radius over `U ∩ D`, per centre.
    pub max_r: Vec<f64>,
}

const CHECK_NX: usize = 32;
const CHECK_NT: usize = 64;
const CHECK_PAD: f64 = 1.0;

/// Checks the geometric assumptions and assembles `Γ₊` and `Γ`.
pub fn build_problem(
    model: &MetricModel,
    params: &CarlemanParams,
    setup: &ControlSetup,
    opts: &GeoOptions,
) -> Result<ControlProblem> {
    params.validate()?;
    let g = setup.grid;
    if let Centre::Exterior { p } = setup.centre {
        if p[1] >= g.xl && p[1] <= g.xr {
            return Err(Error::Config(format!(
                "exterior configuration requires p outside the closed cylinder, but x_p = {} lies in [{}, {}]",
                p[1], g.xl, g.xr
            )));
        }
    }
    if let Centre::Interior { p, offset } = setup.centre {
        if !(offset > 0.0) || p[1] - offset <= g.xl || p[1] + offset >= g.xr {
            return Err(Error::Config(format!(
                "interior centres {p:?} ± {offset} must lie inside U"
            )));
        }
    }
    if !(setup.gamma_margin >= 0.0) {
        return Err(Error::Config("gamma_margin must be nonnegative".into()));
    }
    let solver = WaveSolver::new(model, g, setup.lower)?;
    let k = solver.steps;
    let mut gamma_plus = [vec![false; k + 1], vec![false; k + 1]];
    let mut max_r = Vec::new();
    for c in setup.centre.centres() {
        let basis = OrthoBasis::standard(model, &c)?;
        let check = CarlemanDomain {
            xl: g.xl,
            xr: g.xr,
            t_lo: g.tau_lo - CHECK_PAD,
            t_hi: g.tau_hi + CHECK_PAD,
            nx: CHECK_NX,
            nt: CHECK_NT,
        };
        let coarse = CarlemanGrid::build(model, &basis, check, opts)?;
        coarse.check_radius(params.r0).map_err(|_| {
            Error::Config(format!(
                "U ∩ D(p = {c:?}) reaches r = {:.4}, outside the ball r < r0 = {}",
                coarse.max_r, params.r0
            ))
        })?;
        let slack = 0.5 * check.dt();
        let (tmin, tmax) = coarse
            .cells
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), cell| {
                (lo.min(cell.nd.y[0]), hi.max(cell.nd.y[0]))
            });
        if tmin - slack < g.tau_lo || tmax + slack > g.tau_hi {
            return Err(Error::Config(format!(
                "V± at t = {} and {} do not enclose U ∩ D(p = {c:?}), which spans t ∈ [{:.3}, {:.3}]",
                g.tau_lo,
                g.tau_hi,
                tmin - slack,
                tmax + slack
            )));
        }
        max_r.push(coarse.max_r);
        let dom = CarlemanDomain {
            xl: g.xl,
            xr: g.xr,
            t_lo: g.tau_lo - 0.5 * solver.dt,
            t_hi: g.tau_hi + 0.5 * solver.dt,
            nx: g.nx,
            nt: k + 1,
        };
        for node in boundary_nodes(model, &basis, dom, opts)? {
            if normal_fbar(params, model, &node) > 0.0 {
                let n = ((node.nd.y[0] - g.tau_lo) / solver.dt).round() as usize;
                let side = usize::from(node.side > 0);
                gamma_plus[side][n.min(k)] = true;
            }
        }
    }
    let mut problem = ControlProblem {
        solver,
        params: *params,
        setup: *setup,
        gamma_plus: [vec![], vec![]],
        gamma: [vec![], vec![]],
        controls: vec![],
        max_r,
    };
    problem.set_observation(gamma_plus);
    Ok(problem)
}

impl ControlProblem {
    /// Replaces `Γ₊` and rebuilds `Γ` as its open enlargement by `gamma_margin`.
    pub fn set_observation(&mut self, gamma_plus: [Vec<bool>; 2]) {
        let k = self.solver.steps;
        let reach = (((self.setup.gamma_margin / self.solver.dt) - 1e-9).ceil() as usize)
            .saturating_sub(1)
            .max(1);
        let mut gamma = [vec![false; k + 1], vec![false; k + 1]];
        for side in 0..2 {
            for n in 0..=k {
                if gamma_plus[side][n] {
                    for m in n.saturating_sub(reach)..=(n + reach).min(k) {
                        gamma[side][m] = true;
                    }
                }
            }
        }
        self.controls = (0..2)
            .flat_map(|s| (2..=k).map(move |n| (s, n)))
            .filter(|&(s, n)| gamma[s][n])
            .collect();
        self.gamma_plus = gamma_plus;
        self.gamma = gamma;
    }

    /// `Γ` contains every node of `Γ₊` together with its neighbours on the same side.
    pub fn gamma_contains_closure(&self) -> bool {
        let k = self.solver.steps;
        (0..2).all(|s| {
            (0..=k).all(|n| {
                !self.gamma_plus[s][n]
                    || (n.saturating_sub(1)..=(n + 1).min(k)).all(|m| self.gamma[s][m])
            })
        })
    }

    pub fn gamma_plus_len(&self) -> usize {
        self.gamma_plus
            .iter()
            .map(|v| v.iter().filter(|&&b| b).count())
            .sum()
    }

    /// Expands a control vector over [`Self::controls`] into dense boundary data.
    pub fn boundary_data(&self, control: &[f64]) -> [Vec<f64>; 2] {
        let k = self.solver.steps;
        let mut b = [vec![0.0; k + 1], vec![0.0; k + 1]];
        for (&(s, n), &v) in self.controls.iter().zip(control) {
            b[s][n] = v;
        }
        b
    }

    pub fn forward_solve(&self, control: &[f64], init: &CauchyData) -> Result<StateTrajectory> {
        if control.len() != self.controls.len() {
            return Err(Error::Parameter(format!(
                "control has {} entries, Γ has {} nodes",
                control.len(),
                self.controls.len()
            )));
        }
        self.solver.forward(&self.boundary_data(control), init)
    }

    /// Adjoint trajectory from data at `τ₋` and its normal trace on `Γ₊` as `(side, n, 𝒩φ)`.
    pub fn adjoint_solve(
        &self,
        data: &CauchyData,
    ) -> Result<(StateTrajectory, Vec<(usize, usize, f64)>)> {
        let traj = self.solver.adjoint(data)?;
        let trace = (0..2)
            .flat_map(|s| (0..=self.solver.steps).map(move |n| (s, n)))
            .filter(|&(s, n)| self.gamma_plus[s][n])
            .map(|(s, n)| (s, n, traj.trace[s][n]))
            .collect();
        Ok((traj, trace))
    }

    /// Control-to-terminal map `L`: control on `Γ` to interior levels `(y^{K-1}, y^K)`.
    pub fn control_map(&self, control: &[f64]) -> Vec<f64> {
        self.solver
            .terminal_from_boundary(&self.boundary_data(control))
    }

    /// `L*` for the inner products `Δx Σ` on states and `Δt Σ` on controls.
    pub fn control_map_adjoint(&self, v: &[f64]) -> Vec<f64> {
        let b = self.solver.boundary_from_terminal(v);
        let scale = self.solver.dx / self.solver.dt;
        self.controls
            .iter()
            .map(|&(s, n)| scale * b[s][n])
            .collect()
    }

    /// `Λ = L L*`.
    pub fn gramian_apply(&self, v: &[f64]) -> Vec<f64> {
        self.control_map(&self.control_map_adjoint(v))
    }

    pub fn state_dot(&self, u: &[f64], v: &[f64]) -> f64 {
        self.solver.dx * u.iter().zip(v).map(|(a, b)| a * b).sum::<f64>()
    }

    pub fn control_dot(&self, u: &[f64], v: &[f64]) -> f64 {
        self.solver.dt * u.iter().zip(v).map(|(a, b)| a * b).sum::<f64>()
    }

    pub fn state_len(&self) -> usize {
        2 * (self.solver.nodes() - 2)
    }

    /// Terminal interior levels of the uncontrolled evolution.
    pub fn free_terminal(&self, init: &CauchyData) -> Result<Vec<f64>> {
        let traj = self
            .solver
            .forward(&self.boundary_data(&vec![0.0; self.controls.len()]), init)?;
        Ok(self.terminal_levels(&traj))
    }

    fn terminal_levels(&self, traj: &StateTrajectory) -> Vec<f64> {
        let nodes = self.solver.nodes();
        let k = self.solver.steps;
        let mut out = traj.y[k - 1][1..nodes - 1].to_vec();
        out.extend_from_slice(&traj.y[k][1..nodes - 1]);
        out
    }

    /// Target state `(y, ∂_t y)` at `τ₊` written as interior levels `(y - Δt ∂_t y, y)`.
    pub fn target_levels(&self, target: &CauchyData) -> Vec<f64> {
        let nodes = self.solver.nodes();
        let mut out: Vec<f64> = (1..nodes - 1)
            .map(|j| target.y0[j] - self.solver.dt * target.y1[j])
            .collect();
        out.extend_from_slice(&target.y0[1..nodes - 1]);
        out
    }
}

/// Discrete Green identity and Gramian diagnostics on random vectors.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DualityReport {
    /// `|⟨LF, v⟩ - ⟨F, L*v⟩| / (‖LF‖ ‖v‖)`.
    pub pairing: f64,
    /// `|⟨Λu, v⟩ - ⟨u, Λv⟩| / (‖Λu‖ ‖v‖)`.
    pub symmetry: f64,
    /// Smallest `⟨Λu, u⟩ / ⟨u, u⟩` over the samples.
    pub min_rayleigh: f64,
}

pub fn duality_check(problem: &ControlProblem, samples: usize, seed: u64) -> DualityReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gauss = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect() };
    let norm = |p: &ControlProblem, v: &[f64]| p.state_dot(v, v).sqrt();
    let mut rep = DualityReport {
        pairing: 0.0,
        symmetry: 0.0,
        min_rayleigh: f64::INFINITY,
    };
    for _ in 0..samples.max(1) {
        let f = gauss(problem.controls.len());
        let u = gauss(problem.state_len());
        let v = gauss(problem.state_len());
        let lf = problem.control_map(&f);
        let lsv = problem.control_map_adjoint(&v);
        let pair = (problem.state_dot(&lf, &v) - problem.control_dot(&f, &lsv)).abs()
            / (norm(problem, &lf) * norm(problem, &v));
        let gu = problem.gramian_apply(&u);
        let gv = problem.gramian_apply(&v);
        let sym = (problem.state_dot(&gu, &v) - problem.state_dot(&u, &gv)).abs()
            / (norm(problem, &gu) * norm(problem, &v));
        let ray = problem.state_dot(&gu, &u) / problem.state_dot(&u, &u);
        rep.pairing = rep.pairing.max(pair);
        rep.symmetry = rep.symmetry.max(sym);
        rep.min_rayleigh = rep.min_rayleigh.min(ray);
    }
    rep
}

/// Empirical observability quotients `‖𝒩φ‖²_{L²(Γ₊)} / ‖(φ₀, φ₁)‖²_{H¹₀ × L²}`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ObservabilityReport {
    /// Smallest quotient over the random samples.
    pub sampled_min: f64,
    /// Smallest quotient over all data in the filtered class.
    pub refined_min: f64,
    /// `1 / refined_min`, the empirical observability constant (infinite when not observable).
    pub constant: f64,
    pub samples: usize,
    pub skipped: usize,
    /// Set when `Γ₊` is empty in the observation window.
    pub no_observability: bool,
    pub window: f64,
    /// Data are combinations of the sine modes `k ≤ modes`, a quarter of the interior nodes.
    pub modes: usize,
}

fn data_energy(problem: &ControlProblem, d: &CauchyData) -> f64 {
    let dx = problem.solver.dx;
    let nodes = problem.solver.nodes();
    let mut grad = 0.0;
    for j in 0..nodes - 1 {
        let a = if j == 0 { 0.0 } else { d.y0[j] };
        let b = if j + 1 == nodes - 1 { 0.0 } else { d.y0[j + 1] };
        grad += ((b - a) / dx).powi(2);
    }
    let vel: f64 = d.y1[1..nodes - 1].iter().map(|v| v * v).sum();
    dx * (grad + vel)
}

fn observed(problem: &ControlProblem, window_end: f64) -> Vec<(usize, usize)> {
    (0..2)
        .flat_map(|s| (0..=problem.solver.steps).map(move |n| (s, n)))
        .filter(|&(s, n)| problem.gamma_plus[s][n] && problem.solver.t[n] <= window_end + 1e-12)
        .collect()
}

fn trace_norm(problem: &ControlProblem, d: &CauchyData, nodes: &[(usize, usize)]) -> Result<f64> {
    let traj = problem.solver.adjoint(d)?;
    Ok(problem.solver.dt
        * nodes
            .iter()
            .map(|&(s, n)| traj.trace[s][n].powi(2))
            .sum::<f64>())
}

/// Probes the observability inequality with `n_samples` random data drawn from decaying sine
/// series, observing `Γ₊` up to `τ₋ + window` (the whole span when `window` is `None`).
pub fn observability_probe(
    problem: &ControlProblem,
    n_samples: usize,
    seed: u64,
    window: Option<f64>,
) -> Result<ObservabilityReport> {
    let sv = &problem.solver;
    let span = sv.t[sv.steps] - sv.t[0];
    let window = window.unwrap_or(span).min(span);
    let nodes_obs = observed(problem, sv.t[0] + window);
    let inner = sv.nodes() - 2;
    if nodes_obs.is_empty() {
        return Ok(ObservabilityReport {
            sampled_min: 0.0,
            refined_min: 0.0,
            constant: f64::INFINITY,
            samples: 0,
            skipped: n_samples,
            no_observability: true,
            window,
            modes: 0,
        });
    }
    let length = sv.grid.xr - sv.grid.xl;
    let modes = (inner / 4).max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draws: Vec<(Vec<f64>, Vec<f64>)> = (0..n_samples)
        .map(|_| {
            let c0: Vec<f64> = (1..=modes)
                .map(|k| rng.gen_range(-1.0..1.0) / k as f64)
                .collect();
            let c1: Vec<f64> = (1..=modes).map(|_| rng.gen_range(-1.0..1.0)).collect();
            (c0, c1)
        })
        .collect();
    let quotients: Vec<Option<f64>> = draws
        .par_iter()
        .map(|(c0, c1)| -> Result<Option<f64>> {
            let series = |c: &[f64], x: f64| -> f64 {
                c.iter()
                    .enumerate()
                    .map(|(i, a)| {
                        a * ((i + 1) as f64 * std::f64::consts::PI * (x - sv.grid.xl) / length)
                            .sin()
                    })
                    .sum()
            };
            let d = CauchyData::from_fns(&sv.x, |x| series(c0, x), |x| series(c1, x));
            let e = data_energy(problem, &d);
            if !(e > 1e-300) {
                return Ok(None);
            }
            Ok(Some(trace_norm(problem, &d, &nodes_obs)? / e))
        })
        .collect::<Result<Vec<_>>>()?;
    let used: Vec<f64> = quotients.iter().flatten().copied().collect();
    let sampled_min = used.iter().copied().fold(f64::INFINITY, f64::min);
    let refined_min = refined_quotient(problem, &nodes_obs, modes)?;
    Ok(ObservabilityReport {
        sampled_min,
        refined_min,
        constant: if refined_min > 0.0 {
            1.0 / refined_min
        } else {
            f64::INFINITY
        },
        samples: used.len(),
        skipped: n_samples - used.len(),
        no_observability: false,
        window,
        modes,
    })
}

/// Discrete sine mode `k` on the nodes, vanishing at both ends.
fn sine_mode(x: &[f64], k: usize) -> Vec<f64> {
    let (xl, len) = (x[0], x[x.len() - 1] - x[0]);
    x.iter()
        .map(|&v| (k as f64 * std::f64::consts::PI * (v - xl) / len).sin())
        .collect()
}

/// Smallest generalized eigenvalue of `(OᵀWO, M)` over data built from the first `modes`
/// sine modes, with `O` the data-to-trace map, `W` the `Δt` trace weights and `M` the
/// discrete `H¹₀ × L²` Gram matrix.
fn refined_quotient(
    problem: &ControlProblem,
    nodes_obs: &[(usize, usize)],
    modes: usize,
) -> Result<f64> {
    let sv = &problem.solver;
    let nodes = sv.nodes();
    let dim = 2 * modes;
    let data: Vec<CauchyData> = (0..dim)
        .map(|c| {
            let mut d = CauchyData::zero(nodes);
            if c < modes {
                d.y0 = sine_mode(&sv.x, c + 1);
            } else {
                d.y1 = sine_mode(&sv.x, c - modes + 1);
            }
            d
        })
        .collect();
    let cols: Vec<Vec<f64>> = data
        .par_iter()
        .map(|d| -> Result<Vec<f64>> {
            let traj = sv.adjoint(d)?;
            Ok(nodes_obs
                .iter()
                .map(|&(s, n)| sv.dt.sqrt() * traj.trace[s][n])
                .collect())
        })
        .collect::<Result<Vec<_>>>()?;
    let o = DMatrix::from_fn(nodes_obs.len(), dim, |i, j| cols[j][i]);
    let gram = o.transpose() * &o;
    let m = DMatrix::from_fn(dim, dim, |i, j| {
        let sum = CauchyData {
            y0: data[i]
                .y0
                .iter()
                .zip(&data[j].y0)
                .map(|(a, b)| a + b)
                .collect(),
            y1: data[i]
                .y1
                .iter()
                .zip(&data[j].y1)
                .map(|(a, b)| a + b)
                .collect(),
        };
        let diff = CauchyData {
            y0: data[i]
                .y0
                .iter()
                .zip(&data[j].y0)
                .map(|(a, b)| a - b)
                .collect(),
            y1: data[i]
                .y1
                .iter()
                .zip(&data[j].y1)
                .map(|(a, b)| a - b)
                .collect(),
        };
        0.25 * (data_energy(problem, &sum) - data_energy(problem, &diff))
    });
    let chol = m
        .cholesky()
        .ok_or_else(|| Error::Contract("data Gram matrix is not positive definite".into()))?;
    let linv = chol
        .l()
        .try_inverse()
        .ok_or_else(|| Error::Contract("singular Cholesky factor".into()))?;
    let q = &linv * gram * linv.transpose();
    let q = 0.5 * (&q + q.transpose());
    Ok(q.symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min))
}

/// Outcome of the HUM conjugate-gradient loop.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HumResult {
    pub control: Vec<f64>,
    /// `‖y(τ₊) - target‖ / ‖target‖` from a fresh forward solve with the returned control;
    /// a zero target is measured against the free evolution instead.
    pub terminal_error: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Relative CG residual after each iteration.
    pub history: Vec<f64>,
    /// `‖F‖_{L²(Γ)}`.
    pub control_norm: f64,
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    y.iter_mut().zip(x).for_each(|(yi, xi)| *yi += a * xi);
}

/// Minimal-norm control steering `init` at `τ₋` to `target` at `τ₊` by CG on `Λ λ = b`,
/// `b = target - free evolution`, with control `F = L*λ`.
pub fn hum_control(
    problem: &ControlProblem,
    init: &CauchyData,
    target: &CauchyData,
    tol: f64,
    max_iter: usize,
) -> Result<HumResult> {
    if problem.controls.is_empty() {
        return Err(Error::Config("the control region Γ is empty".into()));
    }
    let nodes = problem.solver.nodes();
    if target.y0.len() != nodes || target.y1.len() != nodes {
        return Err(Error::Parameter("target does not match the grid".into()));
    }
    let tgt = problem.target_levels(target);
    let free = problem.free_terminal(init)?;
    // Steering to rest is measured against the uncontrolled endpoint instead.
    let tnorm = match problem.state_dot(&tgt, &tgt).sqrt() {
        t if t > 0.0 => t,
        _ => problem.state_dot(&free, &free).sqrt(),
    };
    if !(tnorm > 0.0) {
        return Err(Error::Parameter(
            "target and free evolution both vanish".into(),
        ));
    }
    let b: Vec<f64> = tgt.iter().zip(&free).map(|(t, f)| t - f).collect();
    let mut lam = vec![0.0; b.len()];
    let mut r = b.clone();
    let mut p = r.clone();
    let mut rr = problem.state_dot(&r, &r);
    let mut history = vec![rr.sqrt() / tnorm];
    let mut converged = history[0] <= tol;
    let mut iterations = 0;
    while !converged && iterations < max_iter {
        let ap = problem.gramian_apply(&p);
        let pap = problem.state_dot(&p, &ap);
        if !(pap > 0.0) || !pap.is_finite() {
            break;
        }
        let alpha = rr / pap;
        axpy(&mut lam, alpha, &p);
        axpy(&mut r, -alpha, &ap);
        let rr_new = problem.state_dot(&r, &r);
        iterations += 1;
        history.push(rr_new.sqrt() / tnorm);
        if history[iterations] <= tol {
            converged = true;
            break;
        }
        let beta = rr_new / rr;
        p.iter_mut()
            .zip(&r)
            .for_each(|(pi, ri)| *pi = ri + beta * *pi);
        rr = rr_new;
    }
    let control = problem.control_map_adjoint(&lam);
    let reached = problem.control_map(&control);
    let miss: Vec<f64> = reached
        .iter()
        .zip(&free)
        .zip(&tgt)
        .map(|((y, f), t)| y + f - t)
        .collect();
    let terminal_error = problem.state_dot(&miss, &miss).sqrt() / tnorm;
    let control_norm = problem.control_dot(&control, &control).sqrt();
    Ok(HumResult {
        control,
        terminal_error,
        iterations,
        converged,
        history,
        control_norm,
    })
}

/// Smooth bump `exp(-((x - c)/w)²)` at rest, used as a terminal target.
pub fn bump_target(x: &[f64], centre: f64, width: f64) -> CauchyData {
    CauchyData::from_fns(x, |v| (-((v - centre) / width).powi(2)).exp(), |_| 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn mink() -> MetricModel {
        MetricModel::minkowski(2)
    }

    fn params() -> CarlemanParams {
        CarlemanParams::defaults(1, 2.1)
    }

    fn zero_bc(sv: &WaveSolver) -> [Vec<f64>; 2] {
        [vec![0.0; sv.steps + 1], vec![0.0; sv.steps + 1]]
    }

    #[test]
    fn cfl_violation_is_refused() {
        let g = WaveGrid {
            xl: 1.0,
            xr: 2.0,
            tau_lo: -2.2,
            tau_hi: 2.2,
            nx: 128,
            nt: 128,
        };
        assert!(matches!(
            WaveSolver::new(&mink(), g, LowerOrder::default()),
            Err(Error::Cfl { .. })
        ));
        let warped = MetricModel::warped(2, 0.05, 1.0);
        let g = WaveGrid { nt: 256, ..g };
        assert!(matches!(
            WaveSolver::new(&warped, g, LowerOrder::default()),
            Err(Error::Cfl { .. })
        ));
        assert!(WaveSolver::new(&warped, WaveGrid { nt: 288, ..g }, LowerOrder::default()).is_ok());
    }

    #[test]
    fn zero_data_gives_zero_state() {
        let sv = WaveSolver::new(
            &mink(),
            WaveGrid {
                xl: 1.0,
                xr: 2.0,
                tau_lo: 0.0,
                tau_hi: 1.0,
                nx: 32,
                nt: 64,
            },
            LowerOrder::default(),
        )
        .unwrap();
        let tr = sv
            .forward(&zero_bc(&sv), &CauchyData::zero(sv.nodes()))
            .unwrap();
        assert!(tr.y.iter().flatten().all(|&v| v == 0.0));
        assert!(tr.trace.iter().flatten().all(|&v| v == 0.0));
    }

    fn travelling_error(nx: usize) -> f64 {
        let g = WaveGrid {
            xl: 0.0,
            xr: 4.0,
            tau_lo: 0.0,
            tau_hi: 1.0,
            nx,
            nt: nx / 2,
        };
        let sv = WaveSolver::new(&mink(), g, LowerOrder::default()).unwrap();
        let prof = |s: f64| (-((s - 1.5) / 0.2).powi(2)).exp();
        let dprof = |s: f64| -2.0 * (s - 1.5) / 0.04 * prof(s);
        let init = CauchyData::from_fns(&sv.x, prof, |x| -dprof(x));
        let tr = sv.forward(&zero_bc(&sv), &init).unwrap();
        let k = sv.steps;
        let tk = sv.t[k];
        sv.x.iter()
            .zip(&tr.y[k])
            .map(|(&x, &y)| (y - prof(x - tk)).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn travelling_wave_converges_at_second_order() {
        let (e1, e2) = (travelling_error(200), travelling_error(400));
        assert!(e2 < 5e-3, "{e2}");
        let order = (e1 / e2).log2();
        assert!((order - 2.0).abs() < 0.2, "order {order} ({e1}, {e2})");
    }

    fn eigenmode_trace_error(nx: usize) -> f64 {
        let g = WaveGrid {
            xl: 1.0,
            xr: 2.0,
            tau_lo: 0.0,
            tau_hi: 1.5,
            nx,
            nt: 2 * nx,
        };
        let sv = WaveSolver::new(&mink(), g, LowerOrder::default()).unwrap();
        let init = CauchyData::from_fns(&sv.x, |x| (PI * (x - 1.0)).sin(), |_| 0.0);
        let tr = sv.adjoint(&init).unwrap();
        (0..=sv.steps)
            .map(|n| {
                let exact = -PI * (PI * sv.t[n]).cos();
                let left = PI * (PI * sv.t[n]).cos();
                (tr.trace[1][n] - exact)
                    .abs()
                    .max((tr.trace[0][n] + left).abs())
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn eigenmode_trace_matches_separated_solution() {
        let (e1, e2) = (eigenmode_trace_error(64), eigenmode_trace_error(128));
        assert!(e2 < 1e-3, "{e2}");
        assert!((e1 / e2).log2() > 1.8, "{e1} {e2}");
    }

    #[test]
    fn minkowski_energy_is_conserved() {
        let g = WaveGrid {
            xl: 1.0,
            xr: 2.0,
            tau_lo: 0.0,
            tau_hi: 2.0,
            nx: 128,
            nt: 256,
        };
        let sv = WaveSolver::new(&mink(), g, LowerOrder::default()).unwrap();
        let init = CauchyData::from_fns(
            &sv.x,
            |x| (PI * (x - 1.0)).sin().powi(3),
            |x| (2.0 * PI * (x - 1.0)).sin(),
        );
        let tr = sv.forward(&zero_bc(&sv), &init).unwrap();
        let e0 = tr.energy[0];
        let drift = tr.energy.iter().map(|e| (e - e0).abs()).fold(0.0, f64::max) / e0;
        assert!(drift / 2.0 < 1e-6, "{drift}");
    }

    #[test]
    fn warped_energy_constant_is_moderate() {
        let g = WaveGrid {
            xl: 1.0,
            xr: 2.0,
            tau_lo: -2.2,
            tau_hi: 2.2,
            nx: 128,
            nt: 288,
        };
        let m = MetricModel::warped(2, 0.05, 1.0);
        let sv = WaveSolver::new(&m, g, LowerOrder::default()).unwrap();
        let init = CauchyData::from_fns(
            &sv.x,
            |x| (PI * (x - 1.0)).sin(),
            |x| (3.0 * PI * (x - 1.0)).sin(),
        );
        let c1 = sv.energy_constant(&init).unwrap();
        assert!(c1 < 3.0, "{c1}");
        let sv2 = WaveSolver::new(
            &m,
            WaveGrid {
                nx: 256,
                nt: 576,
                ..g
            },
            LowerOrder::default(),
        )
        .unwrap();
        let init2 = CauchyData::from_fns(
            &sv2.x,
            |x| (PI * (x - 1.0)).sin(),
            |x| (3.0 * PI * (x - 1.0)).sin(),
        );
        let c2 = sv2.energy_constant(&init2).unwrap();
        assert!((c2 - c1).abs() / c1 < 0.2, "{c1} {c2}");
    }

    #[test]
    fn transpose_matches_pairing_with_lower_order_terms() {
        let setup = ControlSetup {
            lower: LowerOrder {
                x_t: 0.3,
                x_x: -0.2,
                q: 0.5,
            },
            ..ControlSetup::exterior_default(32, 64)
        };
        let pb = build_problem(&mink(), &params(), &setup, &GeoOptions::default()).unwrap();
        let rep = duality_check(&pb, 3, 7);
        assert!(rep.pairing < 1e-12, "{rep:?}");
        assert!(rep.symmetry < 1e-12, "{rep:?}");
        assert!(rep.min_rayleigh > 0.0);
    }

    #[test]
    fn minkowski_gamma_plus_is_outer_boundary_inside_d() {
        let pb = build_problem(
            &mink(),
            &params(),
            &ControlSetup::exterior_default(32, 64),
            &GeoOptions::default(),
        )
        .unwrap();
        assert!(pb.gamma_plus[0].iter().all(|&b| !b));
        for (n, &on) in pb.gamma_plus[1].iter().enumerate() {
            let t = pb.solver.t[n];
            if t.abs() < 2.0 - 1e-9 {
                assert!(on, "t = {t}");
            } else if t.abs() > 2.0 + 1e-9 {
                assert!(!on, "t = {t}");
            }
        }
        assert!(pb.gamma_contains_closure());
        assert!(pb
            .controls
            .iter()
            .all(|&(s, n)| s == 1 && pb.solver.t[n].abs() < 2.1 + 1e-9));
    }

    #[test]
    fn assumption_violations_are_config_errors() {
        let small = CarlemanParams::defaults(1, 1.5);
        let e = build_problem(
            &mink(),
            &small,
            &ControlSetup::exterior_default(32, 64),
            &GeoOptions::default(),
        )
        .unwrap_err();
        assert!(
            matches!(e, Error::Config(ref s) if s.contains("r0")),
            "{e:?}"
        );
        let inside = ControlSetup {
            centre: Centre::Exterior { p: [0.0, 1.5] },
            ..ControlSetup::exterior_default(32, 64)
        };
        assert!(matches!(
            build_problem(&mink(), &params(), &inside, &GeoOptions::default()),
            Err(Error::Config(_))
        ));
        let short = ControlSetup {
            grid: WaveGrid {
                tau_lo: -1.0,
                tau_hi: 1.0,
                ..ControlSetup::exterior_default(32, 64).grid
            },
            ..ControlSetup::exterior_default(32, 64)
        };
        assert!(
            matches!(build_problem(&mink(), &params(), &short, &GeoOptions::default()), Err(Error::Config(ref s)) if s.contains("V±"))
        );
    }

    #[test]
    fn free_endpoint_target_needs_no_control() {
        let pb = build_problem(
            &mink(),
            &params(),
            &ControlSetup::exterior_default(32, 64),
            &GeoOptions::default(),
        )
        .unwrap();
        let x = pb.solver.x.clone();
        let init = CauchyData::from_fns(&x, |v| (PI * (v - 1.0)).sin(), |_| 0.0);
        let free = pb
            .solver
            .forward(&pb.boundary_data(&vec![0.0; pb.controls.len()]), &init)
            .unwrap();
        let k = pb.solver.steps;
        let mut target = CauchyData {
            y0: free.y[k].clone(),
            y1: vec![0.0; x.len()],
        };
        for j in 0..x.len() {
            target.y1[j] = (free.y[k][j] - free.y[k - 1][j]) / pb.solver.dt;
        }
        let res = hum_control(&pb, &init, &target, 1e-8, 50).unwrap();
        assert_eq!(res.iterations, 0);
        assert!(res.control.iter().all(|&c| c == 0.0));
        assert!(res.terminal_error < 1e-12);
    }

    #[test]
    fn empty_gamma_flags_no_observability() {
        let mut pb = build_problem(
            &mink(),
            &params(),
            &ControlSetup::exterior_default(16, 32),
            &GeoOptions::default(),
        )
        .unwrap();
        let k = pb.solver.steps;
        pb.set_observation([vec![false; k + 1], vec![false; k + 1]]);
        let rep = observability_probe(&pb, 4, 1, None).unwrap();
        assert!(rep.no_observability);
        assert_eq!(rep.sampled_min, 0.0);
    }

    #[test]
    fn sampled_quotient_bounds_refined_from_above() {
        let pb = build_problem(
            &mink(),
            &params(),
            &ControlSetup::exterior_default(32, 64),
            &GeoOptions::default(),
        )
        .unwrap();
        let rep = observability_probe(&pb, 16, 3, None).unwrap();
        assert!(rep.refined_min > 0.0);
        assert!(rep.sampled_min >= rep.refined_min * (1.0 - 1e-9), "{rep:?}");
    }
}
