use thiserror::Error;

/// Errors produced by the constructions, solvers and checks in this crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{name} = {value} is outside the valid interval {interval}")]
    Domain {
        name: &'static str,
        value: f64,
        interval: &'static str,
    },

    #[error("resource cap exceeded: {0}")]
    Resource(String),

    #[error("quadrature did not converge on [{a}, {b}]: estimated error {err:e}")]
    Quadrature { a: f64, b: f64, err: f64 },

    /// The integrator hit `max_steps` before reaching the end time. `partial`
    /// holds the particle coordinates reached so far, flattened per particle.
    #[error("integration exceeded {max_steps} steps, stopped at t = {t}")]
    StepOverflow {
        max_steps: usize,
        t: f64,
        partial: Vec<Vec<f64>>,
    },

    #[error("invariant violated at step {step} (t = {t}): {what}")]
    Invariant { step: usize, t: f64, what: String },

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error("missing data: {0}")]
    Missing(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
