use thiserror::Error;

/// Errors surfaced by the library. The CLI maps them onto exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("lattice mismatch between operands")]
    LatticeMismatch,
    #[error("shell n={0} is not present in the lattice")]
    UnknownShell(u64),
    #[error("config error: {0}")]
    Config(String),
    #[error("CFL guard violated: dt={dt} exceeds limit {limit}")]
    Cfl { dt: f64, limit: f64 },
    #[error("non-finite value at step {step}")]
    NonFinite { step: usize },
    #[error("negative superaction S={value} on shell n={n} at step {step}")]
    NegativeS { n: u64, value: f64, step: usize },
    #[error("fixed-point iteration did not converge after {iterations} iterations (last update {update:e})")]
    NoConvergence { iterations: usize, update: f64 },
    #[error("root find for phi(y) failed at y={y}")]
    RootFind { y: f64 },
    #[error("stage {stage}: {source}")]
    Stage { stage: &'static str, source: Box<Error> },
    #[error("certification failed: {0}")]
    Certification(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn at_stage(self, stage: &'static str) -> Error {
        Error::Stage { stage, source: Box::new(self) }
    }

    /// True for failures of the numerics (as opposed to bad input).
    pub fn is_numeric(&self) -> bool {
        match self {
            Error::Cfl { .. }
            | Error::NonFinite { .. }
            | Error::NegativeS { .. }
            | Error::NoConvergence { .. }
            | Error::RootFind { .. } => true,
            Error::Stage { source, .. } => source.is_numeric(),
            _ => false,
        }
    }

    /// Process exit code: 3 certification failure, 4 numeric abort,
    /// 2 for everything else (bad config or input).
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Certification(_) => 3,
            Error::Stage { source, .. } if matches!(**source, Error::Certification(_)) => 3,
            e if e.is_numeric() => 4,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
