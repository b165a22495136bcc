use thiserror::Error;

/// Errors raised by the rate, Bloch and oracle machinery.
///
/// Scalars are carried as `f64` regardless of the working precision so the
/// error type does not depend on the scalar parameter.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("unphysical model: {0}")]
    UnphysicalModel(String),

    #[error("invalid field protocol: {0}")]
    Protocol(String),

    #[error("pole at {pole} lies within tolerance of the endpoint {endpoint}")]
    PoleAtEndpoint { pole: f64, endpoint: f64 },

    #[error("quadrature did not converge on [{a}, {b}]: estimate {value}, error {error} after {intervals} subintervals")]
    Quadrature {
        a: f64,
        b: f64,
        value: f64,
        error: f64,
        intervals: usize,
    },

    #[error("kernel integral methods disagree: finite difference {finite_difference}, finite part {finite_part}")]
    MethodDisagreement {
        finite_difference: f64,
        finite_part: f64,
    },

    #[error("state dimension {dimension} exceeds the limit {limit}")]
    DimensionGuard { dimension: usize, limit: usize },

    #[error("step size {dt} exceeds the stability limit {limit}")]
    StepSize { dt: f64, limit: f64 },

    #[error("integrator failure: {0}")]
    Integrator(String),

    #[error("mismatched configuration: {0}")]
    Mismatch(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
