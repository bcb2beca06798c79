//! Command-line front end and verification reports.

pub mod checks;
pub mod config;
pub mod report;

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::carleman_core::{CarlemanDomain, CarlemanGrid, TestFunction, TestKind};
use crate::error::{Error, Result};
use crate::geodesic_engine::{OrthoBasis, Sampling};
use crate::hyperquadric::{sample_states, TransportOptions};
use crate::metric_models::{MetricModel, ModelKind};
use crate::pseudoconvexity::PcParams;
use crate::wave_control::{
    build_problem, bump_target, CauchyData, Centre, ControlProblem, HumResult,
};

use checks::*;
use config::{Config, OUT_DIR_ENV};
use report::{write_report, CheckRow, Format, VerificationReport};

#[derive(Parser, Debug)]
#[command(
    name = "lorentz-carleman",
    version,
    about = "Verifies the hyperquadric geometry, pseudoconvexity, Carleman estimates and boundary control of wave equations on Lorentzian test spacetimes"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    over: Overrides,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Gauss lemma, frame algebra, transport oracles, vertex limits and envelopes.
    VerifyGeometry,
    /// P/P̄ algebra, the pseudoconvexity margin, its sign flip and the η estimates.
    VerifyPseudoconvexity,
    /// ℬ lower bound, pointwise identity, integrated estimate and boundary layer.
    VerifyCarleman,
    /// Empirical observability constant and the shrinking-window sweep (1+1).
    Observability,
    /// Duality checks and the HUM control (1+1).
    Control,
    /// Every check above.
    All,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::VerifyGeometry => "verify-geometry",
            Command::VerifyPseudoconvexity => "verify-pseudoconvexity",
            Command::VerifyCarleman => "verify-carleman",
            Command::Observability => "observability",
            Command::Control => "control",
            Command::All => "all",
        }
    }
}

#[derive(Args, Debug, Default)]
struct Overrides {
    /// JSON configuration file; omitted keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// minkowski | warped | conformal (or m1 | m2 | m3).
    #[arg(long, global = true)]
    model: Option<String>,
    /// Spacetime dimension n + 1.
    #[arg(long, global = true)]
    dim: Option<usize>,
    /// Warp or conformal amplitude δ.
    #[arg(long, global = true)]
    delta: Option<f64>,
    /// Warp wavenumber.
    #[arg(long, global = true)]
    k: Option<f64>,
    /// Dimensionless ε₀ in η = 1 - ε₀t²/r₀².
    #[arg(long, global = true)]
    eps0: Option<f64>,
    /// Dimensionless b₀ of the Carleman weight.
    #[arg(long, global = true)]
    b0: Option<f64>,
    /// Carleman exponent (default 4n²).
    #[arg(long, global = true)]
    a: Option<f64>,
    /// Carleman length scale r₀.
    #[arg(long, global = true)]
    r0: Option<f64>,
    /// Control grid as NXxNT, e.g. 128x256.
    #[arg(long, global = true)]
    grid: Option<String>,
    /// Control time span as LO,HI.
    #[arg(long, global = true, allow_hyphen_values = true)]
    time_span: Option<String>,
    /// Centre p as comma-separated chart coordinates (time first).
    #[arg(long, global = true, allow_hyphen_values = true)]
    centre: Option<String>,
    /// Seed for the basis and random samples.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Report format.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Control target: bump | rest.
    #[arg(long, global = true)]
    target: Option<String>,
}

fn parse_list(key: &str, s: &str, sep: char) -> Result<Vec<f64>> {
    s.split(sep)
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|e| Error::Config(format!("{key}: `{v}`: {e}")))
        })
        .collect()
}

impl Overrides {
    fn apply(&self, cfg: &mut Config) -> Result<()> {
        if let Some(v) = &self.model {
            cfg.model.name = v.clone();
        }
        if let Some(v) = self.dim {
            cfg.model.dim = v;
        }
        if let Some(v) = self.delta {
            cfg.model.delta = v;
        }
        if let Some(v) = self.k {
            cfg.model.k = v;
        }
        if let Some(v) = self.eps0 {
            cfg.carleman.eps0 = v;
        }
        if let Some(v) = self.b0 {
            cfg.carleman.b0 = v;
        }
        if self.a.is_some() {
            cfg.carleman.a = self.a;
        }
        if let Some(v) = self.r0 {
            cfg.carleman.r0 = v;
        }
        if let Some(g) = &self.grid {
            let v: Vec<usize> = g
                .split(['x', 'X'])
                .map(|s| s.trim().parse::<usize>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Config(format!("--grid `{g}`: {e}")))?;
            if v.len() != 2 {
                return Err(Error::Config(format!("--grid `{g}`: expected NXxNT")));
            }
            cfg.control.grid = [v[0], v[1]];
        }
        if let Some(s) = &self.time_span {
            let v = parse_list("--time-span", s, ',')?;
            if v.len() != 2 {
                return Err(Error::Config(format!("--time-span `{s}`: expected LO,HI")));
            }
            cfg.control.time_span = [v[0], v[1]];
        }
        if let Some(s) = &self.centre {
            cfg.centre = Some(parse_list("--centre", s, ',')?);
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = &self.out {
            cfg.output.dir = v.clone();
        }
        if let Some(v) = self.format {
            cfg.output.format = v;
        }
        if let Some(v) = &self.target {
            cfg.control.target = v.clone();
        }
        Ok(())
    }
}

/// Builds the effective configuration: file (or defaults), then flags, then the
/// output-directory environment override.
fn effective_config(over: &Overrides) -> Result<Config> {
    let mut cfg = match &over.config {
        Some(path) => config::load_config(path)?,
        None => Config::default(),
    };
    over.apply(&mut cfg)?;
    if over.out.is_none() {
        if let Ok(dir) = std::env::var(OUT_DIR_ENV) {
            cfg.output.dir = PathBuf::from(dir);
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

/// A finished pipeline: its rows plus auxiliary files to write.
struct Outcome {
    rows: Vec<CheckRow>,
    files: Vec<(String, String)>,
}

impl Outcome {
    fn new() -> Self {
        Outcome {
            rows: Vec::new(),
            files: Vec::new(),
        }
    }

    fn merge(&mut self, other: Outcome) {
        self.rows.extend(other.rows);
        self.files.extend(other.files);
    }
}

fn csv_string(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)
        .map_err(|e| Error::Io(e.to_string()))?;
    for r in rows {
        w.write_record(&r).map_err(|e| Error::Io(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn basis_for(cfg: &Config, model: &MetricModel) -> Result<OrthoBasis> {
    OrthoBasis::seeded(model, &cfg.centre(), cfg.seed)
}

fn geometry(cfg: &Config) -> Result<Outcome> {
    let model = cfg.metric_model()?;
    let basis = basis_for(cfg, &model)?;
    let s = &cfg.sampling;
    let r0 = s.geometry_r0;
    let topts = TransportOptions::default();
    let points = Sampling::new(s.n_omega0, s.n_dir, s.n_radii);
    let oracle_points = Sampling::new(
        (s.n_omega0 / 2).max(1),
        (s.n_dir / 2).max(1),
        (s.n_radii / 2).max(1),
    );
    let mut out = Outcome::new();
    out.rows
        .extend(gauss_lemma_rows(&model, &basis, &points, r0, &topts)?);
    out.rows.extend(frame_algebra_rows(
        &model,
        &basis,
        &Sampling::standard(s.frame_radii),
        r0,
        &topts.geo,
    )?);
    out.rows.extend(transport_oracle_rows(
        &model,
        &basis,
        &oracle_points,
        r0,
        &topts,
    )?);
    out.rows.extend(vertex_limit_rows(&model, &basis, 1e-3)?);
    let kind = model.kind;
    let (dim, k) = (cfg.model.dim, cfg.model.k);
    let deltas: Vec<f64> = if kind == ModelKind::Minkowski {
        vec![0.0]
    } else {
        s.deltas.clone()
    };
    let (rows, sups) = envelope_rows_over(
        |d| MetricModel::new(kind, dim, d, k).expect("validated model"),
        &cfg.centre(),
        &deltas,
        &points,
        r0,
        cfg.carleman.eps0,
        C_DAGGER,
        &topts,
    )?;
    out.rows.extend(rows);
    out.files.push((
        "envelope_sups.csv".into(),
        csv_string(
            &["id", "delta", "sup"],
            sups.iter()
                .map(|(id, d, v)| vec![id.clone(), report::fmt_f64(*d), report::fmt_f64(*v)]),
        )?,
    ));
    Ok(out)
}

fn pseudoconvexity(cfg: &Config) -> Result<Outcome> {
    let model = cfg.metric_model()?;
    let basis = basis_for(cfg, &model)?;
    let s = &cfg.sampling;
    let topts = TransportOptions::default();
    let pp = PcParams::new(cfg.carleman.eps0, s.geometry_r0)?;
    let mut out = Outcome::new();
    let (few, _) = sample_states(&model, &basis, &Sampling::new(4, 5, 1), pp.r0, &topts)?;
    out.rows
        .extend(pc_algebra_rows(&pp, &few, s.tangent_samples, cfg.seed)?);
    let sweep = Sampling::standard(s.frame_radii);
    let (states, dropped) = sample_states(&model, &basis, &sweep, pp.r0, &topts)?;
    out.rows.extend(pc_margin_rows(&pp, &states, dropped)?);
    out.rows.extend(eta_rows(
        &pp, &model, &basis, &sweep, &states, C_DAGGER, &topts.geo,
    )?);
    if model.kind != ModelKind::Minkowski {
        let kind = model.kind;
        let (dim, k) = (cfg.model.dim, cfg.model.k);
        let (rows, seen) = pc_flip_rows(
            &pp,
            |d| MetricModel::new(kind, dim, d, k).expect("validated model"),
            &cfg.centre(),
            &s.flip_deltas,
            &Sampling::standard(8),
            &topts,
        )?;
        out.rows.extend(rows);
        out.files.push((
            "pc_margin_vs_delta.csv".into(),
            csv_string(
                &["delta", "min_normalized_margin"],
                seen.iter()
                    .map(|(d, m)| vec![report::fmt_f64(*d), report::fmt_f64(*m)]),
            )?,
        ));
    }
    Ok(out)
}

fn a_list(cfg: &Config) -> Vec<f64> {
    let n2 = (cfg.n() * cfg.n()) as f64;
    match cfg.carleman.a {
        Some(a) => vec![a],
        None => vec![4.0 * n2, 16.0 * n2],
    }
}

fn carleman(cfg: &Config) -> Result<Outcome> {
    let model = cfg.metric_model()?;
    let basis = basis_for(cfg, &model)?;
    let params = cfg.carleman_params()?;
    let s = &cfg.sampling;
    let topts = TransportOptions::default();
    let n2 = (cfg.n() * cfg.n()) as f64;
    let mut out = Outcome::new();
    let (states, _) = sample_states(
        &model,
        &basis,
        &Sampling::new(s.n_omega0, s.n_dir, s.n_radii),
        params.r0,
        &topts,
    )?;
    let (rows, _) = b_bound_rows(&params, &states, &[n2, 4.0 * n2, 16.0 * n2])?;
    out.rows.extend(rows);
    if cfg.model.dim != 2 {
        return Ok(out);
    }
    let p = cfg.centre();
    let points: Vec<[f64; 2]> = IDENTITY_POINTS
        .iter()
        .copied()
        .filter(|y| (y[1] - p[1]).powi(2) > (y[0] - p[0]).powi(2))
        .collect();
    let kinds = [
        TestKind::PolyBump,
        TestKind::GaussBump,
        TestKind::Quadratic,
        TestKind::SineWave,
    ];
    let (rows, series) = identity_rows(
        &params,
        &model,
        &basis,
        &points,
        &kinds,
        &[1e-2, 1e-3, 1e-4],
    )?;
    out.rows.extend(rows);
    out.files.push((
        "identity_residual_vs_h.csv".into(),
        csv_string(
            &["point", "test", "h", "residual"],
            series.iter().map(|(i, t, h, r)| {
                vec![
                    i.to_string(),
                    t.clone(),
                    report::fmt_f64(*h),
                    report::fmt_f64(*r),
                ]
            }),
        )?,
    ));
    let c = &cfg.control;
    let domain = CarlemanDomain {
        xl: c.xl,
        xr: c.xr,
        t_lo: c.time_span[0],
        t_hi: c.time_span[1],
        nx: s.carleman_grid[0],
        nt: s.carleman_grid[1],
    };
    let grid = CarlemanGrid::build(&model, &basis, domain, &topts.geo)?;
    let tag = format!("{}x{}", domain.nx, domain.nt);
    out.rows.extend(integrated_rows(
        &params,
        &grid,
        &a_list(cfg),
        &TestFunction::suite(c.xl, c.xr),
        &tag,
    )?);
    out.rows.extend(layer_rows(
        &params,
        &model,
        &basis,
        [1e-2, 1e-3],
        4000,
        &topts.geo,
    )?);
    Ok(out)
}

fn problem(cfg: &Config) -> Result<ControlProblem> {
    let model = cfg.metric_model()?;
    let params = cfg.carleman_params()?;
    build_problem(
        &model,
        &params,
        &cfg.control_setup()?,
        &TransportOptions::default().geo,
    )
}

fn observability(cfg: &Config) -> Result<Outcome> {
    let pb = problem(cfg)?;
    let mut out = Outcome::new();
    let (rows, sweep) =
        observability_rows(&pb, cfg.control.samples, cfg.seed, &cfg.control.windows)?;
    out.rows.extend(rows);
    out.files.push((
        "observability_sweep.csv".into(),
        csv_string(
            &[
                "window",
                "sampled_min",
                "refined_min",
                "constant",
                "no_observability",
            ],
            sweep.iter().map(|r| {
                vec![
                    report::fmt_f64(r.window),
                    report::fmt_f64(r.sampled_min),
                    report::fmt_f64(r.refined_min),
                    report::fmt_f64(r.constant),
                    r.no_observability.to_string(),
                ]
            }),
        )?,
    ));
    Ok(out)
}

fn control(cfg: &Config) -> Result<Outcome> {
    let pb = problem(cfg)?;
    let c = &cfg.control;
    let mut out = Outcome::new();
    out.rows.extend(duality_rows(&pb, 3, cfg.seed));
    let interior = matches!(pb.setup.centre, Centre::Interior { .. });
    if interior {
        out.rows.push(CheckRow::lower(
            "gamma_contains_closure",
            "two-centre observation region",
            if pb.gamma_contains_closure() {
                1.0
            } else {
                0.0
            },
            1.0,
        ));
    }
    let x = &pb.solver.x;
    let bump = bump_target(x, c.target_centre, c.target_width);
    let rest = CauchyData::zero(pb.solver.nodes());
    let (init, target) = if c.target == "rest" {
        (bump, rest)
    } else {
        (rest, bump)
    };
    let bound = if interior { 2e-2 } else { 1e-2 };
    let (rows, res) = hum_rows(&pb, &init, &target, c.tol, c.max_iter, bound, &c.target)?;
    out.rows.extend(rows);
    out.files.push((
        "cg_history.csv".into(),
        csv_string(
            &["iteration", "relative_residual"],
            res.history
                .iter()
                .enumerate()
                .map(|(i, r)| vec![(i + 1).to_string(), report::fmt_f64(*r)]),
        )?,
    ));
    out.files
        .push(("control_terminal.json".into(), terminal_json(&pb, &res)?));
    out.files
        .push(("control_snapshots.csv".into(), snapshots(&pb, &res, &init)?));
    Ok(out)
}

fn terminal_json(pb: &ControlProblem, res: &HumResult) -> Result<String> {
    let control: Vec<serde_json::Value> = pb
        .controls
        .iter()
        .zip(&res.control)
        .map(|(&(side, n), v)| serde_json::json!({ "side": if side == 0 { "left" } else { "right" }, "t": pb.solver.t[n], "value": v }))
        .collect();
    let v = serde_json::json!({
        "terminal_error": res.terminal_error,
        "iterations": res.iterations,
        "converged": res.converged,
        "control_norm": res.control_norm,
        "control": control,
    });
    Ok(serde_json::to_string_pretty(&v).expect("json value serializes"))
}

fn snapshots(pb: &ControlProblem, res: &HumResult, init: &CauchyData) -> Result<String> {
    let traj = pb.forward_solve(&res.control, init)?;
    let steps = pb.solver.steps;
    let every = (steps / 8).max(1);
    let mut levels: Vec<usize> = (0..=steps).step_by(every).collect();
    if *levels.last().expect("nonempty") != steps {
        levels.push(steps);
    }
    let rows = levels.iter().flat_map(|&n| {
        let traj = &traj;
        traj.x.iter().enumerate().map(move |(j, x)| {
            vec![
                report::fmt_f64(traj.t[n]),
                report::fmt_f64(*x),
                report::fmt_f64(traj.y[n][j]),
            ]
        })
    });
    csv_string(&["t", "x", "y"], rows)
}

fn pipeline(cmd: Command, cfg: &Config) -> Result<Outcome> {
    match cmd {
        Command::VerifyGeometry => geometry(cfg),
        Command::VerifyPseudoconvexity => pseudoconvexity(cfg),
        Command::VerifyCarleman => carleman(cfg),
        Command::Observability => observability(cfg),
        Command::Control => control(cfg),
        Command::All => {
            let mut out = geometry(cfg)?;
            out.merge(pseudoconvexity(cfg)?);
            out.merge(carleman(cfg)?);
            if cfg.model.dim == 2 {
                out.merge(observability(cfg)?);
                out.merge(control(cfg)?);
            }
            Ok(out)
        }
    }
}

fn write_outputs(
    cmd: Command,
    cfg: &Config,
    report: &VerificationReport,
    files: &[(String, String)],
) -> Result<PathBuf> {
    let dir = &cfg.output.dir;
    std::fs::create_dir_all(dir)?;
    let ext = match cfg.output.format {
        Format::Json => "json",
        Format::Csv => "csv",
    };
    let path = dir.join(format!("{}.{ext}", cmd.name()));
    write_report(report, &path, cfg.output.format)?;
    for (name, body) in files {
        std::fs::write(dir.join(name), body)?;
    }
    Ok(path)
}

fn print_summary(report: &VerificationReport, path: &Path) {
    let mut so = std::io::stdout().lock();
    for r in &report.rows {
        let status = match (r.pass, r.advisory) {
            (true, _) => "PASS",
            (false, true) => "note",
            (false, false) => "FAIL",
        };
        let _ = writeln!(
            so,
            "{status:4}  {:<56} measured {:>12.4e}  bound {:>12.4e}",
            r.id, r.measured, r.bound
        );
    }
    let failing = report.failing().len();
    let _ = writeln!(
        so,
        "{} rows, {failing} failing; report written to {}",
        report.rows.len(),
        path.display()
    );
}

/// Entry point of the command-line tool; returns the process exit code
/// (0 all checks pass, 1 a check failed or a run aborted, 2 usage or configuration error).
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let cfg = match effective_config(&cli.over) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    let outcome = match pipeline(cli.command, &cfg) {
        Ok(o) => o,
        Err(e @ Error::Config(_)) => {
            eprintln!("error: {e}");
            return 2;
        }
        Err(e) => {
            eprintln!("error: {e}");
            return 1;
        }
    };
    let header = serde_json::json!({
        "command": cli.command.name(),
        "version": env!("CARGO_PKG_VERSION"),
        "config": cfg,
    });
    let mut report = VerificationReport::new(header);
    report.extend(outcome.rows);
    let path = match write_outputs(cli.command, &cfg, &report, &outcome.files) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return 1;
        }
    };
    print_summary(&report, &path);
    if report.all_pass() {
        0
    } else {
        for r in report.failing() {
            eprintln!(
                "failed: {} (measured {:e}, bound {:e})",
                r.id, r.measured, r.bound
            );
        }
        1
    }
}
