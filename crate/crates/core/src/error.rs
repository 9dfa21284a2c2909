use thiserror::Error;

/// Errors raised by the LQR and meta-learning routines.
///
/// Numeric payloads are stored as `f64` so the error type is independent of
/// the scalar type used for the computation.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("uncertain parameter {name}[{index}] = {value} outside [{lo}, {hi}]")]
    Bounds {
        name: &'static str,
        index: usize,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("policy is not stabilizing (spectral radius {spectral_radius})")]
    Unstable { spectral_radius: f64 },

    #[error("numerical failure: {message} (residual {residual})")]
    Numerical { message: String, residual: f64 },

    #[error("Riccati iteration did not converge after {iterations} iterations; (A, B) may not be stabilizable")]
    NotStabilizable { iterations: usize },

    #[error("proximal solve stalled after {iterations} iterations (residual {residual})")]
    ProxStall {
        iterations: usize,
        residual: f64,
        /// Last inner iterate, row-major.
        last_iterate: Vec<f64>,
    },

    #[error("policy does not stabilize client {client} (spectral radius {spectral_radius})")]
    UnstableClient { client: usize, spectral_radius: f64 },

    #[error("step size underflow after {iterations} iterations (step {step})")]
    Stall { iterations: usize, step: f64 },

    #[error("zeroth-order estimator rejected {rejected} perturbations (cap {cap})")]
    TooManyRejections { rejected: usize, cap: usize },

    #[error("initial policy does not stabilize realization {client} (spectral radius {spectral_radius})")]
    Initialization { client: usize, spectral_radius: f64 },

    #[error("stability violation at outer iteration {iteration}: client {client} (spectral radius {spectral_radius})")]
    StabilityViolation {
        iteration: usize,
        client: usize,
        spectral_radius: f64,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
