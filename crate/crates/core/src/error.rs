use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Input outside the domain where a closed-form expression is defined.
    #[error("domain error in {op}: {reason}")]
    Domain { op: &'static str, reason: String },

    #[error("no bracket: {0}")]
    NoBracket(String),

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    #[error("step-size violation: norm grew from {before:e} to {after:e} (dt = {dt:e} s)")]
    StepSize { before: f64, after: f64, dt: f64 },

    #[error("step ceiling of {0} steps reached without a switching event")]
    StepCeiling(u64),

    #[error("integration tolerance failure: {0}")]
    Tolerance(String),

    #[error("histogram and distribution supports are disjoint")]
    DisjointSupport,

    #[error("switching currents are unimodal: {0}")]
    Unimodal(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("config parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid config value for `{key}`: {message}")]
    Config { key: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn domain(op: &'static str, reason: impl Into<String>) -> Self {
        Error::Domain { op, reason: reason.into() }
    }

    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config { key: key.into(), message: message.into() }
    }

    /// Process exit status used by the command-line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse { .. } | Error::Config { .. } => 2,
            Error::Domain { .. } | Error::NoBracket(_) => 3,
            Error::Quadrature(_)
            | Error::StepSize { .. }
            | Error::StepCeiling(_)
            | Error::Tolerance(_) => 4,
            Error::DisjointSupport | Error::Unimodal(_) | Error::EmptyInput(_) => 5,
            Error::Io(_) => 1,
        }
    }

    /// Short machine-readable tag.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Domain { .. } => "domain",
            Error::NoBracket(_) => "no_bracket",
            Error::Quadrature(_) => "quadrature",
            Error::StepSize { .. } => "step_size",
            Error::StepCeiling(_) => "step_ceiling",
            Error::Tolerance(_) => "tolerance",
            Error::DisjointSupport => "disjoint_support",
            Error::Unimodal(_) => "unimodal",
            Error::EmptyInput(_) => "empty_input",
            Error::Parse { .. } => "parse",
            Error::Config { .. } => "config",
            Error::Io(_) => "io",
        }
    }
}
