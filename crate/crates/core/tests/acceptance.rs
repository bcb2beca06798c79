//! Acceptance suite: runs every criterion at its stated tolerance and runtime budget
//! and prints one line per criterion.
//!
//! The `ℬ` lower bound fails at the default weight parameters. Its line reads FAIL and
//! the run asserts that the failure matches the closed-form vertex analysis.

use std::process::ExitCode;
use std::time::Instant;

use lorentz_carleman::carleman_core::{
    vertex_b_margin, CarlemanDomain, CarlemanGrid, CarlemanParams, TestFunction, TestKind,
};
use lorentz_carleman::cli_report::checks::*;
use lorentz_carleman::cli_report::report::CheckRow;
use lorentz_carleman::geodesic_engine::{GeoOptions, OrthoBasis, Sampling};
use lorentz_carleman::hyperquadric::{sample_states, TransportOptions};
use lorentz_carleman::pseudoconvexity::PcParams;
use lorentz_carleman::wave_control::{
    build_problem, bump_target, CauchyData, ControlProblem, ControlSetup,
};
use lorentz_carleman::{MetricModel, Result};

struct Verdict {
    pass: bool,
    detail: String,
}

fn relative_margin(r: &CheckRow) -> f64 {
    let scale = r.bound.abs().max(r.measured.abs()).max(1e-300);
    if r.pass {
        r.margin / scale
    } else {
        -1.0 - r.margin.abs() / scale
    }
}

/// All non-advisory rows must pass; the detail names the tightest one.
fn verdict(rows: &[CheckRow]) -> Verdict {
    let hard: Vec<&CheckRow> = rows.iter().filter(|r| !r.advisory).collect();
    let worst = hard
        .iter()
        .min_by(|a, b| relative_margin(a).total_cmp(&relative_margin(b)));
    let detail = match worst {
        Some(r) => format!(
            "{} rows, tightest {} = {:.4e} vs {:.4e}",
            hard.len(),
            r.id,
            r.fitted.unwrap_or(r.measured),
            r.bound
        ),
        None => "no rows".into(),
    };
    Verdict {
        pass: !hard.is_empty() && hard.iter().all(|r| r.pass),
        detail,
    }
}

fn geo_models() -> Vec<(MetricModel, Vec<f64>)> {
    vec![
        (MetricModel::minkowski(3), vec![0.0; 3]),
        (MetricModel::warped(3, 0.05, 1.0), vec![0.5, 1.0, 1.0]),
        (MetricModel::conformal(3, 0.05), vec![0.0; 3]),
    ]
}

const WARPED_P: [f64; 3] = [0.5, 1.0, 1.0];

fn c1_gauss() -> Result<Verdict> {
    let mut rows = Vec::new();
    for (m, p) in geo_models() {
        let b = OrthoBasis::standard(&m, &p)?;
        let mut r = gauss_lemma_rows(
            &m,
            &b,
            &Sampling::new(8, 8, 8),
            1.0,
            &TransportOptions::default(),
        )?;
        for row in r
            .iter_mut()
            .filter(|r| r.id.starts_with("gauss_lemma_points"))
        {
            row.advisory = false;
        }
        rows.extend(r);
    }
    Ok(verdict(&rows))
}

fn c2_frames() -> Result<Verdict> {
    let mut rows = Vec::new();
    for (m, p) in geo_models() {
        let b = OrthoBasis::standard(&m, &p)?;
        rows.extend(frame_algebra_rows(
            &m,
            &b,
            &Sampling::standard(20),
            1.0,
            &GeoOptions::default(),
        )?);
    }
    Ok(verdict(&rows))
}

fn c3_transport() -> Result<Verdict> {
    let m = MetricModel::warped(3, 0.05, 1.0);
    let b = OrthoBasis::standard(&m, &WARPED_P)?;
    let rows = transport_oracle_rows(
        &m,
        &b,
        &Sampling::new(4, 4, 4),
        1.0,
        &TransportOptions::default(),
    )?;
    Ok(verdict(&rows))
}

fn c4_vertex() -> Result<Verdict> {
    let m = MetricModel::warped(3, 0.05, 1.0);
    let b = OrthoBasis::standard(&m, &WARPED_P)?;
    Ok(verdict(&vertex_limit_rows(&m, &b, 1e-3)?))
}

fn c5_envelopes() -> Result<Verdict> {
    let (rows, _) = envelope_rows_over(
        |d| MetricModel::warped(3, d, 1.0),
        &WARPED_P,
        &[0.01, 0.02, 0.05],
        &Sampling::standard(8),
        1.0,
        0.05,
        C_DAGGER,
        &TransportOptions::default(),
    )?;
    Ok(verdict(&rows))
}

fn c6_pc_algebra() -> Result<Verdict> {
    let m = MetricModel::warped(3, 0.01, 1.0);
    let b = OrthoBasis::standard(&m, &WARPED_P)?;
    let pp = PcParams::new(0.05, 1.0)?;
    let (states, _) = sample_states(
        &m,
        &b,
        &Sampling::new(4, 5, 1),
        1.0,
        &TransportOptions::default(),
    )?;
    let mut rows = pc_algebra_rows(&pp, &states, 50, 0)?;
    for r in rows.iter_mut().filter(|r| r.id == "pc_samples") {
        *r = CheckRow::lower("pc_samples", "plumbing", r.measured, 1000.0);
    }
    Ok(verdict(&rows))
}

fn c7_pseudoconvexity() -> Result<Verdict> {
    let m = MetricModel::warped(3, 0.01, 1.0);
    let b = OrthoBasis::standard(&m, &WARPED_P)?;
    let pp = PcParams::new(0.05, 1.0)?;
    let topts = TransportOptions::default();
    let (states, dropped) = sample_states(&m, &b, &Sampling::standard(20), 1.0, &topts)?;
    let mut rows = pc_margin_rows(&pp, &states, dropped)?;
    let (flip, seen) = pc_flip_rows(
        &pp,
        |d| MetricModel::warped(3, d, 1.0),
        &WARPED_P,
        &[0.01, 0.02, 0.05, 0.1, 0.2, 0.4],
        &Sampling::standard(8),
        &topts,
    )?;
    let flip_delta = flip[0].measured;
    rows.extend(flip);
    let mut v = verdict(&rows);
    let trail: Vec<String> = seen.iter().map(|(d, m)| format!("{d}:{m:.3}")).collect();
    v.detail = format!(
        "{}; flip at delta = {flip_delta} (normalized margins {})",
        v.detail,
        trail.join(", ")
    );
    Ok(v)
}

/// The criterion itself, then the analysis the failure must match.
fn c8_b_bound() -> Result<Verdict> {
    let m = MetricModel::minkowski(3);
    let b = OrthoBasis::standard(&m, &[0.0; 3])?;
    let params = CarlemanParams::defaults(2, 2.1);
    let (states, _) = sample_states(
        &m,
        &b,
        &Sampling::new(8, 8, 8),
        params.r0,
        &TransportOptions::default(),
    )?;
    let a_list = [4.0, 16.0, 64.0];
    let (rows, sweeps) = b_bound_rows(&params, &states, &a_list)?;
    let mut v = verdict(&rows);

    let mut notes = Vec::new();
    for sw in &sweeps {
        let pa = params.with_a(sw.a);
        let vertex = vertex_b_margin(sw.a, pa.b(), pa.eps());
        // At b = 4ε the vertex value reduces to -aε.
        assert!(
            ((vertex + sw.a * pa.eps()) / vertex).abs() < 1e-12,
            "vertex margin {vertex}"
        );
        assert!(
            sw.min_margin < 0.0,
            "a = {}: expected a negative margin",
            sw.a
        );
        assert!(
            sw.min_margin >= vertex - 1e-12 && sw.min_margin <= 0.5 * vertex,
            "a = {}: sampled minimum {} is not governed by the vertex value {vertex}",
            sw.a,
            sw.min_margin
        );
        notes.push(format!(
            "a={}: min {:.4e}, vertex {:.4e}",
            sw.a, sw.min_margin, vertex
        ));
    }
    let strict = CarlemanParams::new(2, 4.0, 0.2, 0.02, 2.1)?;
    let (strict_rows, _) = b_bound_rows(&strict, &states, &a_list)?;
    let sv = verdict(&strict_rows);
    assert!(
        sv.pass,
        "eps0 = 0.02 should satisfy the bound: {}",
        sv.detail
    );
    v.detail = format!(
        "{}; {}; matches the vertex limit a²(b/2 - 2ε) - a(b/2 - ε) = -aε < 0 at eps0 = b0/4; \
         with eps0 = 0.02 the bound holds ({})",
        v.detail,
        notes.join(", "),
        sv.detail
    );
    Ok(v)
}

fn c9_identity() -> Result<Verdict> {
    let mut rows = Vec::new();
    let params = CarlemanParams::defaults(1, 2.1);
    let kinds = [
        TestKind::PolyBump,
        TestKind::GaussBump,
        TestKind::Quadratic,
        TestKind::SineWave,
    ];
    for m in [MetricModel::minkowski(2), MetricModel::warped(2, 0.05, 1.0)] {
        let b = OrthoBasis::standard(&m, &[0.0, 0.0])?;
        let (r, _) = identity_rows(
            &params,
            &m,
            &b,
            &IDENTITY_POINTS,
            &kinds,
            &[1e-2, 1e-3, 1e-4],
        )?;
        rows.extend(r);
    }
    Ok(verdict(&rows))
}

fn c10_integrated() -> Result<Verdict> {
    let mut rows = Vec::new();
    let params = CarlemanParams::defaults(1, 2.1);
    let suite = TestFunction::suite(1.0, 2.0);
    for m in [MetricModel::minkowski(2), MetricModel::warped(2, 0.01, 1.0)] {
        let b = OrthoBasis::standard(&m, &[0.0, 0.0])?;
        for (nx, nt) in [(64, 128), (128, 256)] {
            let dom = CarlemanDomain {
                xl: 1.0,
                xr: 2.0,
                t_lo: -2.0,
                t_hi: 2.0,
                nx,
                nt,
            };
            let grid = CarlemanGrid::build(&m, &b, dom, &GeoOptions::default())?;
            let tag = format!("{}_{nx}x{nt}", m.name());
            rows.extend(integrated_rows(&params, &grid, &[4.0, 16.0], &suite, &tag)?);
        }
    }
    Ok(verdict(&rows))
}

fn c11_layer() -> Result<Verdict> {
    let m = MetricModel::minkowski(2);
    let b = OrthoBasis::standard(&m, &[0.0, 0.0])?;
    let rows = layer_rows(
        &CarlemanParams::defaults(1, 2.1),
        &m,
        &b,
        [1e-2, 1e-3],
        4000,
        &GeoOptions::default(),
    )?;
    Ok(verdict(&rows))
}

fn exterior(nx: usize, nt: usize) -> Result<ControlProblem> {
    build_problem(
        &MetricModel::minkowski(2),
        &CarlemanParams::defaults(1, 2.1),
        &ControlSetup::exterior_default(nx, nt),
        &GeoOptions::default(),
    )
}

fn c12_duality() -> Result<Verdict> {
    Ok(verdict(&duality_rows(&exterior(128, 256)?, 3, 1)))
}

fn hum_case(pb: &ControlProblem, bound: f64, tag: &str) -> Result<(Vec<CheckRow>, f64)> {
    let init = CauchyData::zero(pb.solver.nodes());
    let target = bump_target(&pb.solver.x, 1.5, 0.15);
    let (mut rows, res) = hum_rows(pb, &init, &target, 1e-2, 200, bound, tag)?;
    rows.push(CheckRow::lower(
        &format!("hum_converged_{tag}"),
        "exterior control",
        if res.converged { 1.0 } else { 0.0 },
        1.0,
    ));
    Ok((rows, res.terminal_error))
}

fn c13_hum() -> Result<Verdict> {
    let (mut rows, coarse) = hum_case(&exterior(128, 256)?, 1e-2, "128x256")?;
    let (fine_rows, fine) = hum_case(&exterior(256, 512)?, 1e-2, "256x512")?;
    rows.extend(fine_rows);
    rows.push(CheckRow::upper(
        "hum_refinement",
        "exterior control",
        fine,
        coarse,
    ));
    let mut v = verdict(&rows);
    v.detail = format!("{}; terminal error {coarse:.3e} -> {fine:.3e}", v.detail);
    Ok(v)
}

fn c14_interior() -> Result<Verdict> {
    let pb = build_problem(
        &MetricModel::minkowski(2),
        &CarlemanParams::defaults(1, 2.1),
        &ControlSetup::interior_default(128, 256),
        &GeoOptions::default(),
    )?;
    let mut rows = vec![CheckRow::lower(
        "gamma_contains_closure",
        "two-centre observation region",
        if pb.gamma_contains_closure() {
            1.0
        } else {
            0.0
        },
        1.0,
    )];
    let (hum, _) = hum_case(&pb, 2e-2, "interior")?;
    rows.extend(hum);
    Ok(verdict(&rows))
}

fn c15_observability() -> Result<Verdict> {
    let (rows, sweep) = observability_rows(&exterior(128, 256)?, 64, 5, &[2.4, 1.6, 0.8])?;
    let mut v = verdict(&rows);
    let q: Vec<String> = sweep[1..]
        .iter()
        .map(|r| format!("{}:{:.3e}", r.window, r.sampled_min))
        .collect();
    v.detail = format!("{}; sampled quotient by window {}", v.detail, q.join(", "));
    Ok(v)
}

type Criterion = (usize, &'static str, f64, fn() -> Result<Verdict>);

fn main() -> ExitCode {
    let criteria: [Criterion; 15] = [
        (1, "Gauss lemma", 120.0, c1_gauss),
        (2, "frame algebra", 120.0, c2_frames),
        (3, "transport vs finite differences", 300.0, c3_transport),
        (4, "vertex limit of q", 60.0, c4_vertex),
        (5, "derivative envelopes", 600.0, c5_envelopes),
        (6, "P/Pbar algebra", 120.0, c6_pc_algebra),
        (7, "pseudoconvexity", 300.0, c7_pseudoconvexity),
        (8, "B lower bound", 120.0, c8_b_bound),
        (9, "pointwise Carleman identity", 180.0, c9_identity),
        (10, "integrated Carleman estimate", 600.0, c10_integrated),
        (11, "boundary-layer decay", 120.0, c11_layer),
        (12, "discrete duality and Gramian", 120.0, c12_duality),
        (13, "HUM controllability", 600.0, c13_hum),
        (14, "interior-centre control", 600.0, c14_interior),
        (15, "observability degradation", 300.0, c15_observability),
    ];
    // Criterion 8 fails at the default parameters; its analysis is asserted inside.
    let known_failures = [8];
    let mut unexpected = 0;
    for (id, title, budget, run) in criteria {
        let start = Instant::now();
        let outcome = run();
        let secs = start.elapsed().as_secs_f64();
        let (pass, detail) = match outcome {
            Ok(v) => (v.pass && secs < budget, v.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        let status = if pass { "PASS" } else { "FAIL" };
        let expected = !pass && known_failures.contains(&id);
        let tag = if expected {
            " (known failure, analysis verified)"
        } else {
            ""
        };
        println!("criterion {id:2}: {status} {title}{tag} [{secs:.1} s of {budget:.0} s] {detail}");
        if !pass && !expected {
            unexpected += 1;
        }
        if pass && known_failures.contains(&id) {
            println!(
                "criterion {id:2}: passed although a failure was expected; update the analysis"
            );
            unexpected += 1;
        }
    }
    if unexpected == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{unexpected} criteria failed unexpectedly");
        ExitCode::FAILURE
    }
}
