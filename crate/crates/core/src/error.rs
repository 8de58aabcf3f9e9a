use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid model spec: {0}")]
    InvalidSpec(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("non-finite value in chain {chain} at step {step}")]
    NonFinite { chain: usize, step: usize },
    #[error("batch is empty")]
    EmptyBatch,
    #[error("operation requires a Metropolis-Hastings kernel")]
    NotMetropolized,
    #[error("proposal graph is not connected")]
    DisconnectedGraph,
    #[error("enumeration needs {needed} chains, budget is {budget}")]
    BudgetExceeded { needed: u128, budget: u128 },
    #[error("quadrature scoring needs a 2-dimensional model, got {0}")]
    QuadratureDim(usize),
    #[error("held-out set is empty")]
    EmptyHeldout,
    #[error("grid bounds enclose zero area")]
    DegenerateBounds,
    #[error("training diverged at step {step} (gradient norm {grad_norm})")]
    Diverged { step: usize, grad_norm: f64 },
}
