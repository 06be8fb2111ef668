//! Crate-wide error type with the diagnostics the CLI surfaces.

use thiserror::Error;

/// Everything that can go wrong across the simulation and analysis layers.
#[derive(Debug, Error)]
pub enum Error {
    /// Bad user input: unknown keys, unparsable values, inconsistent settings.
    #[error("config error: {0}")]
    Config(String),

    /// Malformed input file (CSV or key-value), with a 1-based line number.
    #[error("parse error in {path} line {line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    /// Integration produced a non-finite component.
    #[error("numerical failure at t = {t_us} us: {msg} (last valid state: {last_state:?})")]
    NonFinite {
        t_us: f64,
        msg: String,
        last_state: Vec<f64>,
    },

    /// The adaptive integrator ran out of its step budget.
    #[error("step budget of {budget} exhausted at t = {t_us} us (target {t_end_us} us); {hint}")]
    StepBudget {
        budget: u64,
        t_us: f64,
        t_end_us: f64,
        hint: String,
    },

    /// The quasi-steady 2x2 field/polarization solve was singular.
    #[error("singular quasi-steady system (determinant ~ 0) for N_g = {n_g}, N_e = {n_e}")]
    SingularSteadyState { n_g: f64, n_e: f64 },

    /// A trace required for alignment or fitting never crosses a threshold.
    #[error("no transition in trace '{label}': the {threshold}-photon threshold is never crossed")]
    NoTransition { label: String, threshold: f64 },

    /// The 1-D fit interval does not bracket an interior minimum.
    #[error("no interior minimum bracketed in [{lo}, {hi}]; residual profile: {profile:?}")]
    NotBracketed {
        lo: f64,
        hi: f64,
        profile: Vec<(f64, f64)>,
    },

    /// Degenerate data handed to a fit (too few points, non-positive values, ...).
    #[error("fit rejected: {0}")]
    BadFitInput(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Exit code contract: 1 = usage/config/input error, 2 = numerical failure.
    #[must_use]
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Parse { .. } | Error::Io(_) => 1,
            Error::NonFinite { .. }
            | Error::StepBudget { .. }
            | Error::SingularSteadyState { .. }
            | Error::NoTransition { .. }
            | Error::NotBracketed { .. }
            | Error::BadFitInput(_) => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
