use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid dimensions: {0}")]
    InvalidDims(String),

    #[error("invalid image: {0}")]
    InvalidImage(String),

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("invalid ray system: {0}")]
    InvalidRays(String),

    #[error("infeasible projection: ray {ray} has P = {projection} > N = {len}")]
    InfeasibleProjection {
        ray: usize,
        projection: u32,
        len: usize,
    },

    #[error("inconsistent data: {0}")]
    Inconsistent(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("step overflow at node {node}: |drift| * dt = {displacement} >= 2")]
    StepOverflow { node: usize, displacement: f64 },

    #[error("brute force limited to {limit} spins, instance has {nodes}")]
    TooLarge { nodes: usize, limit: usize },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// Short machine-readable category, printed by the CLI on stderr.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Parse { .. } => "parse",
            Error::InfeasibleProjection { .. } | Error::Inconsistent(_) => "infeasible",
            Error::InvalidRays(_) => "rays",
            Error::StepOverflow { .. } => "step-overflow",
            Error::Io(_) => "io",
            _ => "invalid",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
