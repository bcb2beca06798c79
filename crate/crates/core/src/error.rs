use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("point {point:?} lies outside the chart domain of model `{model}`")]
    Domain { model: String, point: Vec<f64> },

    #[error("metric is singular or degenerate at {point:?} (condition estimate {condition:.3e})")]
    SingularMetric { point: Vec<f64>, condition: f64 },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("geodesic left the chart at affine parameter {s:.6}")]
    Truncated { s: f64 },

    #[error("integrator step size underflow at s = {s:.6e}")]
    StepUnderflow { s: f64 },

    #[error("log map did not converge after {iterations} iterations (residual {residual:.3e})")]
    Convergence { iterations: usize, residual: f64 },

    #[error("transport ODE diverged at s = {s:.6} (|q| exceeded cap)")]
    Divergence { s: f64 },

    #[error("sampling produced no usable points: {0}")]
    EmptySample(String),

    #[error("out of regime: {0}")]
    OutOfRegime(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("CFL condition violated: dt/dx = {ratio:.4} exceeds {limit:.4}")]
    Cfl { ratio: f64, limit: f64 },

    #[error("numerical instability (non-finite state) at time step {step}")]
    Instability { step: usize },

    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
