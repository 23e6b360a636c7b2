use thiserror::Error;

/// Errors produced by the solvers and model constructors.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum SolverError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("linear program failed: {0}")]
    LpNumericalFailure(String),

    #[error("linear program is infeasible")]
    LpInfeasible,

    #[error("linear program is unbounded")]
    LpUnbounded,

    #[error("no convergence after {iterations} iterations (last residual {residual:e})")]
    MaxItersExceeded { iterations: usize, residual: f64 },

    #[error("no convergence after {steps} steps (last residual {residual:e})")]
    MaxSteps { steps: usize, residual: f64 },

    #[error("every sampled pair had zero distance")]
    DegeneratePair,

    #[error("invalid scaling parameter beta = {beta}: need beta > 1 and beta * modulus < 1 (modulus {modulus})")]
    InvalidBeta { beta: f64, modulus: f64 },

    #[error("not contractive: modulus bound {modulus} is not below 1")]
    NonContractive { modulus: f64 },

    #[error("contraction violated: observed ratio {ratio} exceeds modulus {modulus}")]
    ContractionViolation { ratio: f64, modulus: f64 },

    #[error("fixed points under different policy pairs differ by {gap:e}")]
    PolicyDependentFixedPoint { gap: f64 },

    #[error("missing aggregation row for state {state} of space {space}")]
    MissingAggregationRow { space: usize, state: usize },

    #[error("no cycling instance found in the search grid")]
    SearchFailed,
}

pub type Result<T, E = SolverError> = std::result::Result<T, E>;
