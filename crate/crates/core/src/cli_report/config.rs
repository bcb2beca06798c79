//! Run configuration: a JSON document whose omitted keys take their defaults.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::report::Format;
use crate::carleman_core::CarlemanParams;
use crate::error::{Error, Result};
use crate::metric_models::{MetricModel, ModelKind};
use crate::wave_control::{Centre, ControlSetup, LowerOrder, WaveGrid};

/// Environment variable overriding `output.dir`.
pub const OUT_DIR_ENV: &str = "LORENTZ_CARLEMAN_OUT";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub name: String,
    /// Spacetime dimension `n + 1`.
    pub dim: usize,
    pub delta: f64,
    pub k: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            name: "minkowski".into(),
            dim: 2,
            delta: 0.0,
            k: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CarlemanConfig {
    /// Weight exponent; `4n²` when omitted.
    pub a: Option<f64>,
    pub b0: f64,
    pub eps0: f64,
    pub r0: f64,
}

impl Default for CarlemanConfig {
    fn default() -> Self {
        CarlemanConfig {
            a: None,
            b0: 0.2,
            eps0: 0.05,
            r0: 2.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingConfig {
    pub n_omega0: usize,
    pub n_dir: usize,
    pub n_radii: usize,
    /// Radii per direction of the frame-algebra sweep.
    pub frame_radii: usize,
    /// Outer radius of the geometry and pseudoconvexity sweeps.
    pub geometry_r0: f64,
    /// Random tangent vectors per point for the `P`/`P̄` checks.
    pub tangent_samples: usize,
    /// Perturbation amplitudes of the envelope-linearity sweep.
    pub deltas: Vec<f64>,
    /// Amplitudes scanned for the pseudoconvexity sign flip.
    pub flip_deltas: Vec<f64>,
    /// Quadrature grid `[nx, nt]` of the integrated Carleman estimate.
    pub carleman_grid: [usize; 2],
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig {
            n_omega0: 8,
            n_dir: 8,
            n_radii: 8,
            frame_radii: 20,
            geometry_r0: 1.0,
            tangent_samples: 50,
            deltas: vec![0.01, 0.02, 0.05],
            flip_deltas: vec![0.01, 0.02, 0.05, 0.1, 0.2, 0.4],
            carleman_grid: [128, 256],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControlConfig {
    pub xl: f64,
    pub xr: f64,
    pub time_span: [f64; 2],
    /// `[N_x, N_t]`: cells across `U` and time steps per unit time.
    pub grid: [usize; 2],
    pub lower: LowerOrder,
    /// Half-distance of the two centres used when `p` lies inside `U`.
    pub interior_offset: f64,
    pub gamma_margin: f64,
    /// `bump` steers rest to a smooth bump; `rest` steers the bump back to rest.
    pub target: String,
    pub target_centre: f64,
    pub target_width: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub samples: usize,
    /// Observation windows of the observability sweep, measured from `τ₋`.
    pub windows: Vec<f64>,
}

impl Default for ControlConfig {
    fn default() -> Self {
        ControlConfig {
            xl: 1.0,
            xr: 2.0,
            time_span: [-2.2, 2.2],
            grid: [128, 256],
            lower: LowerOrder::default(),
            interior_offset: 0.05,
            gamma_margin: 0.1,
            target: "bump".into(),
            target_centre: 1.5,
            target_width: 0.15,
            tol: 1e-2,
            max_iter: 200,
            samples: 64,
            windows: vec![2.4, 1.6, 0.8],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub format: Format,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: PathBuf::from("out"),
            format: Format::Json,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub model: ModelConfig,
    /// Centre `p` in chart coordinates; the origin when omitted.
    pub centre: Option<Vec<f64>>,
    /// Seed of the orthonormal basis at `p` and of every random sample.
    pub seed: u64,
    pub carleman: CarlemanConfig,
    pub sampling: SamplingConfig,
    pub control: ControlConfig,
    pub output: OutputConfig,
}

impl Config {
    pub fn n(&self) -> usize {
        self.model.dim.saturating_sub(1)
    }

    pub fn a(&self) -> f64 {
        self.carleman
            .a
            .unwrap_or(4.0 * (self.n() * self.n()) as f64)
    }

    pub fn centre(&self) -> Vec<f64> {
        self.centre
            .clone()
            .unwrap_or_else(|| vec![0.0; self.model.dim])
    }

    pub fn metric_model(&self) -> Result<MetricModel> {
        let kind = ModelKind::parse(&self.model.name)
            .map_err(|e| Error::Config(format!("model.name: {e}")))?;
        MetricModel::new(kind, self.model.dim, self.model.delta, self.model.k)
    }

    pub fn carleman_params(&self) -> Result<CarlemanParams> {
        CarlemanParams::new(
            self.n(),
            self.a(),
            self.carleman.b0,
            self.carleman.eps0,
            self.carleman.r0,
        )
    }

    /// Wave-control setup in 1+1; `p ∈ U` selects the two-centre construction.
    pub fn control_setup(&self) -> Result<ControlSetup> {
        if self.model.dim != 2 {
            return Err(Error::Config(format!(
                "model.dim = {}: boundary control runs in 1+1 dimensions (dim = 2)",
                self.model.dim
            )));
        }
        let c = &self.control;
        let p = self.centre();
        let p = [p[0], p[1]];
        let centre = if p[1] > c.xl && p[1] < c.xr {
            Centre::Interior {
                p,
                offset: c.interior_offset,
            }
        } else {
            Centre::Exterior { p }
        };
        Ok(ControlSetup {
            grid: WaveGrid {
                xl: c.xl,
                xr: c.xr,
                tau_lo: c.time_span[0],
                tau_hi: c.time_span[1],
                nx: c.grid[0],
                nt: c.grid[1],
            },
            lower: c.lower,
            centre,
            gamma_margin: c.gamma_margin,
        })
    }

    /// Range checks; the message names the offending key.
    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, why: String| Err(Error::Config(format!("{key}: {why}")));
        ModelKind::parse(&self.model.name)
            .map_err(|e| Error::Config(format!("model.name: {e}")))?;
        if !(2..=4).contains(&self.model.dim) {
            return bad("model.dim", format!("{} is not in 2..=4", self.model.dim));
        }
        if !(self.model.delta >= 0.0) {
            return bad("model.delta", format!("{} must be >= 0", self.model.delta));
        }
        if !(self.model.k > 0.0) {
            return bad("model.k", format!("{} must be > 0", self.model.k));
        }
        if let Some(p) = &self.centre {
            if p.len() != self.model.dim {
                return bad(
                    "centre",
                    format!(
                        "has {} components, model.dim is {}",
                        p.len(),
                        self.model.dim
                    ),
                );
            }
        }
        let cc = &self.carleman;
        if !(cc.eps0 > 0.0) {
            return bad("carleman.eps0", format!("{} must be > 0", cc.eps0));
        }
        if cc.eps0 > 0.25 * cc.b0 {
            return bad(
                "carleman.eps0",
                format!("{} exceeds carleman.b0 / 4 = {}", cc.eps0, 0.25 * cc.b0),
            );
        }
        if cc.b0 > 0.25 {
            return bad("carleman.b0", format!("{} exceeds 1/4", cc.b0));
        }
        if !(cc.r0 > 0.0) {
            return bad("carleman.r0", format!("{} must be > 0", cc.r0));
        }
        let n2 = (self.n() * self.n()) as f64;
        if !(self.a() >= n2) {
            return bad("carleman.a", format!("{} is below n² = {n2}", self.a()));
        }
        let s = &self.sampling;
        if s.n_omega0 == 0
            || s.n_dir == 0
            || s.n_radii == 0
            || s.frame_radii == 0
            || s.tangent_samples == 0
        {
            return bad("sampling", "sample counts must be positive".into());
        }
        if !(s.geometry_r0 > 0.0) {
            return bad(
                "sampling.geometry_r0",
                format!("{} must be > 0", s.geometry_r0),
            );
        }
        if s.deltas.iter().chain(&s.flip_deltas).any(|d| !(*d >= 0.0)) {
            return bad("sampling.deltas", "amplitudes must be >= 0".into());
        }
        if s.carleman_grid.iter().any(|&g| g < 16) {
            return bad(
                "sampling.carleman_grid",
                format!("{:?} has a size below 16", s.carleman_grid),
            );
        }
        let c = &self.control;
        if !(c.xr > c.xl) {
            return bad(
                "control.xl",
                format!("interval ({}, {}) is empty", c.xl, c.xr),
            );
        }
        if !(c.time_span[1] > c.time_span[0]) {
            return bad("control.time_span", format!("{:?} is empty", c.time_span));
        }
        if c.grid.iter().any(|&g| g < 16) {
            return bad("control.grid", format!("{:?} has a size below 16", c.grid));
        }
        if !(c.interior_offset > 0.0) || !(c.gamma_margin >= 0.0) || !(c.target_width > 0.0) {
            return bad(
                "control",
                "interior_offset and target_width must be > 0, gamma_margin >= 0".into(),
            );
        }
        if !matches!(c.target.as_str(), "bump" | "rest") {
            return bad(
                "control.target",
                format!("`{}` is not one of bump, rest", c.target),
            );
        }
        if !(c.tol > 0.0) || c.max_iter == 0 || c.samples == 0 {
            return bad(
                "control",
                "tol, max_iter and samples must be positive".into(),
            );
        }
        if c.windows.iter().any(|w| !(*w > 0.0)) {
            return bad("control.windows", "windows must be positive".into());
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Config = if text.trim().is_empty() {
            Config::default()
        } else {
            serde_json::from_str(text).map_err(|e| {
                Error::Config(format!("line {}, column {}: {e}", e.line(), e.column()))
            })?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("configuration serializes")
    }
}

/// Reads, parses and validates a configuration file, then applies the output override.
pub fn load_config(path: &Path) -> Result<Config> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let mut cfg = Config::parse(&text)?;
    if let Ok(dir) = std::env::var(OUT_DIR_ENV) {
        cfg.output.dir = PathBuf::from(dir);
    }
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = Config::parse("").unwrap();
        assert_eq!(cfg, Config::default());
        assert_eq!(cfg.model.name, "minkowski");
        assert_eq!(
            (cfg.carleman.eps0, cfg.carleman.b0, cfg.a()),
            (0.05, 0.2, 4.0)
        );
        assert_eq!(Config::parse("{}").unwrap(), cfg);
    }

    #[test]
    fn eps0_above_b0_is_rejected() {
        let e = Config::parse(r#"{"carleman": {"eps0": 0.3, "b0": 0.2}}"#).unwrap_err();
        assert!(
            matches!(e, Error::Config(ref s) if s.starts_with("carleman.eps0")),
            "{e:?}"
        );
    }

    #[test]
    fn other_ranges_are_checked() {
        for (text, key) in [
            (r#"{"carleman": {"a": 0.5}}"#, "carleman.a"),
            (r#"{"model": {"delta": -0.1}}"#, "model.delta"),
            (r#"{"control": {"grid": [8, 256]}}"#, "control.grid"),
            (r#"{"model": {"name": "kerr"}}"#, "model.name"),
            (r#"{"centre": [0.0]}"#, "centre"),
        ] {
            let e = Config::parse(text).unwrap_err();
            assert!(
                matches!(e, Error::Config(ref s) if s.starts_with(key)),
                "{text}: {e:?}"
            );
        }
    }

    #[test]
    fn parse_errors_carry_position() {
        let e = Config::parse("{\n  \"seed\": [\n}").unwrap_err();
        assert!(
            matches!(e, Error::Config(ref s) if s.starts_with("line ")),
            "{e:?}"
        );
        let e = Config::parse(r#"{"sede": 3}"#).unwrap_err();
        assert!(
            matches!(e, Error::Config(ref s) if s.contains("sede")),
            "{e:?}"
        );
    }

    #[test]
    fn round_trip() {
        let mut cfg = Config::default();
        cfg.model = ModelConfig {
            name: "warped".into(),
            dim: 3,
            delta: 0.05,
            k: 1.5,
        };
        cfg.centre = Some(vec![0.5, 1.0, 1.0]);
        cfg.carleman.a = Some(16.0);
        cfg.control.lower = LowerOrder {
            x_t: 0.1,
            x_x: -0.2,
            q: 0.3,
        };
        cfg.output.format = Format::Csv;
        assert_eq!(Config::parse(&cfg.to_json()).unwrap(), cfg);
    }
}
