//! Crate-wide error type.

use thiserror::Error;

#[derive(Error, Debug)]
pub enum RisError {
    /// Invalid configuration value or combination.
    #[error("config error: {0}")]
    Config(String),

    /// Mismatched vector/matrix dimensions.
    #[error("dimension error: {0}")]
    Dimension(String),

    /// A numerical routine broke down (non-finite value, failed factorization, ...).
    #[error("numerical error: {0}")]
    Numerical(String),

    /// A constrained subproblem has no feasible point.
    #[error("infeasible: {0}")]
    Infeasible(String),

    /// The design problem itself is infeasible (or no feasible start was
    /// found); carries the constraint slacks at the last examined state.
    #[error("infeasible design: {context}")]
    InfeasibleDesign { context: String, report: Box<crate::model::ConstraintReport> },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl RisError {
    pub fn is_infeasible(&self) -> bool {
        matches!(self, RisError::Infeasible(_) | RisError::InfeasibleDesign { .. })
    }
}

pub type Result<T> = std::result::Result<T, RisError>;
