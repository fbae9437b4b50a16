use std::path::PathBuf;

/// Errors surfaced by panel construction, weight building, fitting, simulation
/// and file ingestion. Variants carry enough context to name the offending
/// unit, parameter, or input line.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Invalid argument or inconsistent construction input.
    #[error("invalid input: {0}")]
    Invalid(String),

    /// A coupling row has no outgoing weight mass.
    #[error("isolated unit {unit}: row has zero total weight and cannot be normalized")]
    IsolatedUnit { unit: String },

    /// Daily panel does not cover a single complete calendar month.
    #[error("insufficient span: panel covers no complete calendar month")]
    InsufficientSpan,

    /// Power-law distance decay evaluated at distance zero.
    #[error("power decay undefined at zero distance")]
    PowerDecayAtZero,

    /// A structured input file violates its schema.
    #[error("{}{}: {message}", file.display(), line.map(|l| format!(":{l}")).unwrap_or_default())]
    Schema {
        file: PathBuf,
        line: Option<u64>,
        message: String,
    },

    /// A natural parameter value violates its domain or identifiability constraint.
    #[error("parameter {name}: {message}")]
    Constraint { name: String, message: String },

    /// Simulated mean exceeded the explosion guard.
    #[error("non-stationary parameters: mean exceeded 1e9 at unit {unit}, t={time}")]
    NonStationary { unit: String, time: usize },

    /// Null model likelihood is degenerate (all-zero panel), so scaled R2 is undefined.
    #[error("degenerate null model: pseudo-R2 undefined")]
    DegenerateNull,

    /// Objective was non-finite at the starting point.
    #[error("objective not finite at initial point: {0}")]
    NonFiniteObjective(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub fn schema(file: impl Into<PathBuf>, line: Option<u64>, msg: impl Into<String>) -> Self {
        Error::Schema {
            file: file.into(),
            line,
            message: msg.into(),
        }
    }

    pub fn constraint(name: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Constraint {
            name: name.into(),
            message: msg.into(),
        }
    }
}
