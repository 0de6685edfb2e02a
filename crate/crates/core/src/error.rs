use thiserror::Error;

/// Failures raised by a model's transition or measurement map.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("non-finite value in state component {component}")]
    NonFinite { component: usize },
    #[error("{what} out of domain: {detail}")]
    Domain { what: &'static str, detail: String },
    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("simulation produced a non-finite state at step {step}: {source}")]
    Simulation { step: usize, source: ModelError },
    #[error("covariance is not positive definite ({context})")]
    Degenerate { context: &'static str },
    #[error("particle weights collapsed at step {step}")]
    FilterCollapse { step: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("degenerate simplex: {0}")]
    DegenerateSimplex(String),
    #[error("infeasible search space: all {0} initial evaluations returned -inf")]
    InfeasibleSpace(usize),
    #[error("dataset error: {0}")]
    Dataset(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
