//! Property tests for the invariants of each module.

use std::collections::HashSet;

use proptest::prelude::*;

use lorentz_carleman::carleman_core::CarlemanParams;
use lorentz_carleman::cli_report::config::{Config, ModelConfig};
use lorentz_carleman::cli_report::report::{
    parse_csv, parse_json, render, CheckRow, Format, VerificationReport,
};
use lorentz_carleman::cli_report::run;
use lorentz_carleman::geodesic_engine::{exp_map, log_map, GeoOptions, Omega, OrthoBasis};
use lorentz_carleman::hyperquadric::{radial_transport, TransportOptions};
use lorentz_carleman::metric_models::{bianchi1_residual, riemann_symmetry_residual};
use lorentz_carleman::pseudoconvexity::{algebra_residuals, PcParams, PcPoint};
use lorentz_carleman::wave_control::LowerOrder;
use lorentz_carleman::MetricModel;

fn models() -> Vec<MetricModel> {
    vec![
        MetricModel::minkowski(3),
        MetricModel::warped(3, 0.05, 1.0),
        MetricModel::conformal(3, 0.05),
    ]
}

fn omega(w0: f64, theta: f64) -> Omega {
    Omega::new(w0, &[theta.cos(), theta.sin()]).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn metric_has_lorentzian_signature_and_curvature_symmetries(
        x in prop::array::uniform3(-1.0f64..1.0),
    ) {
        for m in models() {
            let g = m.metric_at(&x).unwrap();
            prop_assert!((&g - g.transpose()).amax() < 1e-12);
            prop_assert!(g[(0, 0)] < 0.0);
            prop_assert!((1..3).all(|i| g[(i, i)] > 0.0));
            let r = m.riemann_at(&x).unwrap();
            prop_assert!(riemann_symmetry_residual(&r) < 1e-7);
            prop_assert!(bianchi1_residual(&r) < 1e-7);
        }
    }

    #[test]
    fn warped_curvature_vanishes_at_least_linearly_in_delta(x in prop::array::uniform3(-1.0f64..1.0)) {
        let size = |d: f64| {
            let r = MetricModel::warped(3, d, 1.0).riemann_at(&x).unwrap();
            let mut s = 0.0f64;
            for a in 0..3 {
                for b in 0..3 {
                    for c in 0..3 {
                        for e in 0..3 {
                            s = s.max(r.g4(a, b, c, e).abs());
                        }
                    }
                }
            }
            s
        };
        let slopes: Vec<f64> = [4e-4, 2e-4, 1e-4].iter().map(|&d| size(d) / d).collect();
        prop_assert!(slopes[0] < 100.0, "slope {}", slopes[0]);
        prop_assert!(slopes[1] <= slopes[0] * (1.0 + 1e-3) + 1e-12, "{slopes:?}");
        prop_assert!(slopes[2] <= slopes[1] * (1.0 + 1e-3) + 1e-12, "{slopes:?}");
    }

    #[test]
    fn weight_identity_and_monotone_exponent(
        a in 1.0f64..64.0,
        b0 in 0.04f64..0.25,
        frac in 0.01f64..1.0,
        r0 in 0.5f64..3.0,
        fbar in 0.05f64..2.0,
    ) {
        let p = CarlemanParams::new(1, a, b0, frac * b0 / 4.0, r0).unwrap();
        let z = p.zeta(fbar);
        let e = (-2.0 * p.big_f(fbar)).exp();
        prop_assert!(((e - z) / z).abs() < 1e-12, "{e} vs {z}");
        prop_assert!(p.f_derivs(fbar).0 < 0.0);
        prop_assert!(p.zeta(1e-12) < 1e-20);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn exp_inverts_log_inside_d(
        p in prop::array::uniform3(-0.3f64..0.3),
        w0 in -0.8f64..0.8,
        theta in 0.0f64..std::f64::consts::TAU,
        r in 0.1f64..0.8,
    ) {
        let m = MetricModel::warped(3, 0.05, 1.0);
        let o = GeoOptions::default();
        let q = [
            p[0] + r * w0,
            p[1] + r * theta.cos(),
            p[2] + r * theta.sin(),
        ];
        let v = log_map(&m, &p, &q, 1e-12, &o).unwrap();
        let back = exp_map(&m, &p, &v, &o).unwrap();
        let err = back.iter().zip(&q).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        prop_assert!(err < 1e-8, "round trip {err}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn transported_states_respect_hyperquadric_invariants(
        w0 in -0.8f64..0.8,
        theta in 0.0f64..std::f64::consts::TAU,
        frac in 0.1f64..0.95,
    ) {
        let opts = TransportOptions::default();
        for m in models() {
            let p = [0.0; 3];
            let b = OrthoBasis::standard(&m, &p).unwrap();
            let st = radial_transport(&m, &b, &omega(w0, theta), &[frac], &opts)
                .pop()
                .unwrap()
                .unwrap();
            let fp = &st.point;
            prop_assert!((fp.f - 0.25 * (fp.r * fp.r - fp.t * fp.t)).abs() < 1e-15);
            prop_assert_eq!(fp.in_d, fp.f > 0.0);
            prop_assert!((st.t.grad_t[0] - fp.t / fp.r).abs() < 1e-9);
            let nt = st.q.nt;
            for i in 0..nt {
                for j in 0..nt {
                    prop_assert!((st.q.get(i, j) - st.q.get(j, i)).abs() < 1e-12);
                    if m.kind == lorentz_carleman::ModelKind::Minkowski {
                        prop_assert!(st.q.get(i, j).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn barred_maps_are_inverse_and_gplus_is_positive(
        w0 in -0.8f64..0.8,
        theta in 0.0f64..std::f64::consts::TAU,
        frac in 0.1f64..0.95,
        seed in any::<u64>(),
    ) {
        let m = MetricModel::warped(3, 0.05, 1.0);
        let b = OrthoBasis::standard(&m, &[0.5, 1.0, 1.0]).unwrap();
        let st = radial_transport(&m, &b, &omega(w0, theta), &[frac], &TransportOptions::default())
            .pop()
            .unwrap()
            .unwrap();
        let pc = PcPoint::new(&PcParams::new(0.05, 1.0).unwrap(), &st).unwrap();
        prop_assert!(pc.gbar_plus_diag().iter().all(|g| *g > 0.0));
        let r = algebra_residuals(&pc, 8, seed).unwrap();
        prop_assert!(r.inverse < 1e-8 && r.gplus < 1e-8, "{r:?}");
        prop_assert!(r.hessian_relation < 1e-6, "{r:?}");
    }
}

fn arb_model() -> impl Strategy<Value = ModelConfig> {
    (
        prop::sample::select(vec!["minkowski", "warped", "conformal"]),
        2usize..=4,
        0.0f64..0.2,
        0.5f64..3.0,
    )
        .prop_map(|(name, dim, delta, k)| ModelConfig {
            name: name.into(),
            dim,
            delta,
            k,
        })
}

fn arb_config() -> impl Strategy<Value = Config> {
    (
        arb_model(),
        any::<u64>(),
        0.04f64..0.25,
        0.01f64..1.0,
        prop::option::of(1.0f64..100.0),
        prop::array::uniform3(-1.0f64..1.0),
        (16usize..512, 16usize..1024),
        any::<bool>(),
    )
        .prop_map(|(model, seed, b0, frac, a, lower, grid, csv)| {
            let mut c = Config::default();
            let dim = model.dim;
            let n2 = ((dim - 1) * (dim - 1)) as f64;
            c.model = model;
            c.seed = seed;
            c.carleman.b0 = b0;
            c.carleman.eps0 = frac * b0 / 4.0;
            c.carleman.a = a.map(|v| v.max(n2));
            c.centre = Some((0..dim).map(|i| 0.1 * i as f64).collect());
            c.control.lower = LowerOrder {
                x_t: lower[0],
                x_x: lower[1],
                q: lower[2],
            };
            c.control.grid = [grid.0, grid.1];
            c.output.format = if csv { Format::Csv } else { Format::Json };
            c
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn config_round_trips(cfg in arb_config()) {
        prop_assert!(cfg.validate().is_ok());
        prop_assert_eq!(Config::parse(&cfg.to_json()).unwrap(), cfg);
    }

    #[test]
    fn single_rows_round_trip(
        measured in prop::num::f64::NORMAL | prop::num::f64::ZERO | prop::num::f64::SUBNORMAL,
        bound in prop::num::f64::NORMAL,
        fitted in prop::option::of(prop::num::f64::NORMAL),
        advisory in any::<bool>(),
        id in "[a-z_0-9(),.=+]{1,40}",
    ) {
        let mut row = CheckRow::upper(&id, "plumbing", measured, bound);
        row.fitted = fitted;
        row.advisory = advisory;
        let report = VerificationReport { header: serde_json::json!({}), rows: vec![row] };
        let csv = parse_csv(&render(&report, Format::Csv).unwrap()).unwrap();
        prop_assert_eq!(&csv, &report.rows);
        let json = parse_json(&render(&report, Format::Json).unwrap()).unwrap();
        prop_assert_eq!(&json.rows, &report.rows);
    }
}

#[test]
fn ten_thousand_rows_round_trip() {
    let rows: Vec<CheckRow> = (0..10_000)
        .map(|i| {
            let x = (i as f64 * 0.7371).sin() * 10f64.powi(i % 40 - 20);
            let mut r = if i % 2 == 0 {
                CheckRow::upper(&format!("row_{i}"), "plumbing", x, 1.0 / (i as f64 + 1.0))
            } else {
                CheckRow::lower(&format!("row,{i}"), "quoted, reference", x, -x / 3.0)
            };
            if i % 3 == 0 {
                r.fitted = Some(x * std::f64::consts::PI);
            }
            r.advisory = i % 5 == 0;
            r.with_runtime(i as f64 * 1e-3)
        })
        .collect();
    let report = VerificationReport {
        header: serde_json::json!({"command": "test"}),
        rows,
    };
    let dir = std::env::temp_dir().join(format!("lc_rows_{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    for (fmt, name) in [(Format::Csv, "r.csv"), (Format::Json, "r.json")] {
        let path = dir.join(name);
        lorentz_carleman::cli_report::report::write_report(&report, &path, fmt).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let back = match fmt {
            Format::Csv => parse_csv(&text).unwrap(),
            Format::Json => parse_json(&text).unwrap().rows,
        };
        assert_eq!(back, report.rows);
    }
    std::fs::remove_dir_all(&dir).ok();
}

fn scratch(tag: &str) -> std::path::PathBuf {
    let d = std::env::temp_dir().join(format!("lc_cli_{tag}_{}", std::process::id()));
    std::fs::remove_dir_all(&d).ok();
    d
}

fn strip_runtime(text: &str) -> serde_json::Value {
    let mut v: serde_json::Value = serde_json::from_str(text).unwrap();
    for r in v["rows"].as_array_mut().unwrap() {
        r["runtime_s"] = serde_json::json!(0.0);
    }
    v["header"]["config"]["output"] = serde_json::Value::Null;
    v
}

#[test]
fn cli_reports_are_deterministic() {
    for cmd in ["control", "verify-carleman"] {
        let (a, b) = (scratch("a"), scratch("b"));
        let ca = run([
            "lorentz-carleman",
            cmd,
            "--seed",
            "7",
            "--out",
            a.to_str().unwrap(),
        ]);
        let cb = run([
            "lorentz-carleman",
            cmd,
            "--seed",
            "7",
            "--out",
            b.to_str().unwrap(),
        ]);
        assert_eq!(ca, cb);
        let ra = std::fs::read_to_string(a.join(format!("{cmd}.json"))).unwrap();
        let rb = std::fs::read_to_string(b.join(format!("{cmd}.json"))).unwrap();
        assert_eq!(strip_runtime(&ra), strip_runtime(&rb), "{cmd}");
        for f in std::fs::read_dir(&a).unwrap() {
            let name = f.unwrap().file_name();
            if name.to_string_lossy().ends_with(".csv") {
                assert_eq!(
                    std::fs::read(a.join(&name)).unwrap(),
                    std::fs::read(b.join(&name)).unwrap(),
                    "{name:?}"
                );
            }
        }
        std::fs::remove_dir_all(&a).ok();
        std::fs::remove_dir_all(&b).ok();
    }
}

#[test]
fn every_check_appears_once() {
    let d = scratch("all");
    run(["lorentz-carleman", "all", "--out", d.to_str().unwrap()]);
    let text = std::fs::read_to_string(d.join("all.json")).unwrap();
    let report = parse_json(&text).unwrap();
    let mut seen = HashSet::new();
    for r in &report.rows {
        assert!(seen.insert(r.id.clone()), "duplicate row {}", r.id);
        assert!(!r.reference.is_empty(), "{} has no reference", r.id);
        match r.fitted {
            Some(f) if r.reference != "boundary-layer decay" => {
                assert_eq!(r.pass, f <= r.bound, "{}", r.id)
            }
            _ => assert!(!r.pass || r.margin >= 0.0, "{}", r.id),
        }
    }
    for family in [
        "gauss_lemma",
        "frame_inner_products",
        "pc_margin",
        "b_lower_bound",
        "identity_residual",
        "carleman_margin",
        "boundary_layer_exponent",
        "observability_refined_min",
        "duality_pairing",
        "hum_terminal_error",
    ] {
        assert!(
            report.rows.iter().any(|r| r.id.starts_with(family)),
            "missing {family}"
        );
    }
    std::fs::remove_dir_all(&d).ok();
}

#[test]
fn exit_codes() {
    assert_eq!(run(["lorentz-carleman", "no-such-command"]), 2);
    assert_eq!(run(["lorentz-carleman", "control", "--eps0", "0.3"]), 2);
    assert_eq!(run(["lorentz-carleman", "control", "--grid", "8x256"]), 2);
    assert_eq!(
        run([
            "lorentz-carleman",
            "control",
            "--dim",
            "3",
            "--centre",
            "0,0,0"
        ]),
        2
    );
    let d = scratch("codes");
    let out = d.to_str().unwrap();
    assert_eq!(run(["lorentz-carleman", "control", "--out", out]), 0);
    // The B lower bound does not hold at the default weight parameters.
    assert_eq!(
        run(["lorentz-carleman", "verify-carleman", "--out", out]),
        1
    );
    std::fs::remove_dir_all(&d).ok();
}
