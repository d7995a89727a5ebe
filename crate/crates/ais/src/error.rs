use thiserror::Error;

/// Errors produced by the samplers, the quadrature oracle and the harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("unknown builtin target `{0}`")]
    UnknownTarget(String),

    #[error("quadrature did not converge after {max_depth} refinement levels (last estimate {estimate:.6e}, error bound {bound:.3e})")]
    OracleNonConvergence {
        max_depth: u32,
        estimate: f64,
        bound: f64,
    },

    #[error("partition does not cover the domain or has overlapping cells: {0}")]
    BadPartition(String),

    #[error("non-finite localized weight {y} on arm {arm} at iteration {t}")]
    NonFiniteWeight { arm: usize, t: u64, y: f64 },

    #[error("target evaluated to a non-finite value at {x:?}")]
    NonFiniteTarget { x: Vec<f64> },

    #[error("target value {value} exceeds declared supremum {sup} at {x:?}")]
    SupBoundViolated { value: f64, sup: f64, x: Vec<f64> },

    #[error("degenerate proposal: all numerators are zero; use a nonzero optimism boost")]
    DegenerateProposal,

    #[error("arm {0} has no pulls; initialize before use")]
    UninitializedArm(usize),

    #[error("importance-sampling estimator undefined: all weights are zero")]
    EstimatorUndefined,

    #[error("tree structure error: {0}")]
    Tree(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
