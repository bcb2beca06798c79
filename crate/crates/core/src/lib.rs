//! Geometry, pseudoconvexity, Carleman and boundary-control verification toolkit
//! for wave equations on Lorentzian test spacetimes.

pub mod carleman_core;
pub mod cli_report;
pub mod error;
pub mod geodesic_engine;
pub mod hyperquadric;
pub mod metric_models;
pub mod ode;
pub mod pseudoconvexity;
pub mod scalar;
pub mod wave_control;

pub use error::{Error, Result};
pub use metric_models::{CurvatureBudget, MetricModel, ModelKind, Tensor};
pub use scalar::{Jet2, Real, Smooth};

/// Double-precision curvature tensor.
pub type Tensor64 = Tensor<f64>;
/// Single-precision curvature tensor.
pub type Tensor32 = Tensor<f32>;
