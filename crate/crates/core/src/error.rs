use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("objective value vanishes at the evaluation point; gradient and rho are undefined")]
    ZeroDenominator,
    #[error("no sampled direction satisfied the determinant guard")]
    BudgetExhausted,
    #[error("no feasible convex combination found (best residual {residual:e})")]
    NoFeasiblePoint { residual: f64 },
    #[error("tube offset has norm {norm} which exceeds epsilon {epsilon}")]
    OutOfTube { norm: f64, epsilon: f64 },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;
