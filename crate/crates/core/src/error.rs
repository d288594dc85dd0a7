use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum BehcError {
    #[error("battery constraint violated: input x={x} with state s={s}")]
    BatteryConstraint { x: u8, s: u8 },

    #[error("u={u} is not in the auxiliary set of node q={q}")]
    AuxSet { u: usize, q: usize },

    #[error("harvesting probability {0} must lie strictly inside (0, 1) here")]
    DegenerateEta(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("policy has entries on the boundary {{0,1}}: {0:?}")]
    BoundaryPolicy(Vec<(usize, usize)>),

    #[error("policy shape does not match the program (N={expected}, got N={got})")]
    PolicyShape { expected: usize, got: usize },

    #[error("stationary distribution not found after {iterations} iterations (residual {residual:e}); chain may be reducible")]
    Stationary { iterations: usize, residual: f64 },

    #[error("gradient unbounded; tighten barrier stage (group q={q}, x={x} has zero mass)")]
    GradientUnbounded { q: usize, x: u8 },

    #[error("infeasible start: residual {0:e}")]
    InfeasibleStart(f64),

    #[error("KKT factorization failed: {0}")]
    Factorization(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for BehcError {
    fn from(e: std::io::Error) -> Self {
        BehcError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, BehcError>;
