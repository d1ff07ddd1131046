use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the numerical routines in this crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{field}` for {context}: {reason}")]
    InvalidParameter {
        context: String,
        field: String,
        reason: String,
    },

    #[error("cannot parse `{input}` at column {column}: {message}")]
    SpecParse {
        input: String,
        column: usize,
        message: String,
    },

    #[error("quadrature did not converge: estimate {estimate:e}, residual {abs_error:e}")]
    Quadrature { estimate: f64, abs_error: f64 },

    #[error("error estimate {error:e} exceeds cap {cap:e} (estimate {estimate})")]
    BudgetExhausted { estimate: f64, error: f64, cap: f64 },

    #[error("threshold t={t} is too deep in the tail: log tail = {log_tail}")]
    ThresholdTooDeep { t: f64, log_tail: f64 },

    #[error("exponential tilt normalizer diverges at rate s={s}: {detail}")]
    DivergentNormalizer { s: f64, detail: String },

    #[error("conditioning denominator underflows at t={t}")]
    DenominatorUnderflow { t: f64 },

    #[error("instance too large: about {estimated} trajectories exceeds limit {limit}")]
    SizeBound { estimated: u128, limit: u128 },

    #[error("no trajectory has mean return above t={t}")]
    EmptyUpperTail { t: f64 },

    #[error("invalid MDP: {0}")]
    InvalidMdp(String),

    #[error("support mismatch: {0}")]
    SupportMismatch(String),

    #[error("insufficient positive tail for k={k}: threshold order statistic is {threshold}")]
    InsufficientPositiveTail { k: usize, threshold: f64 },

    #[error("{path}: row {row}, column {column}: {message}")]
    SampleParse {
        path: String,
        row: usize,
        column: usize,
        message: String,
    },

    #[error("no samples in {0}")]
    EmptySamples(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(
        context: impl Into<String>,
        field: impl Into<String>,
        reason: impl Into<String>,
    ) -> Self {
        Error::InvalidParameter {
            context: context.into(),
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// True for errors caused by bad user input rather than numerical failure.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidParameter { .. }
                | Error::SpecParse { .. }
                | Error::InvalidMdp(_)
                | Error::SupportMismatch(_)
                | Error::SampleParse { .. }
                | Error::EmptySamples(_)
                | Error::EmptyUpperTail { .. }
                | Error::SizeBound { .. }
                | Error::Io { .. }
                | Error::Json(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
