use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid regularity {regularity} for degree {degree} (need 0 <= r < degree)")]
    InvalidRegularity { degree: usize, regularity: i64 },

    #[error("invalid knot vector: {0}")]
    InvalidKnots(String),

    #[error("point {x} outside [{lo}, {hi}]")]
    OutOfDomain { x: f64, lo: f64, hi: f64 },

    #[error("test space requires a zero-left trial space")]
    InvalidTestSpace,

    #[error("unsupported Gauss rule with {0} points (supported: 1..=64)")]
    UnsupportedRule(usize),

    #[error("integrand is not finite at node {node}")]
    Integration { node: f64 },

    #[error("trial and test spaces live on different meshes")]
    DomainMismatch,

    #[error("coefficient is not finite at node {node}")]
    Assembly { node: f64 },

    #[error("invalid space: {0}")]
    InvalidSpace(String),

    #[error("singular system: {0}")]
    SingularSystem(String),

    #[error("factorization failed: {0}")]
    Factorization(String),

    #[error("problem has no exact solution")]
    MissingExact,

    #[error("Gram matrix is not positive definite: {0}")]
    IndefiniteGram(String),

    #[error("expression error: {0}")]
    Expr(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("malformed solution dump: {0}")]
    Dump(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code: 2 for bad input, 3 for anything that fails later.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Expr(_) => 2,
            _ => 3,
        }
    }
}
