use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoreError {
    #[error("tree depth {0} is outside the supported range 1..={max}", max = crate::tree::MAX_DEPTH)]
    InvalidDepth(u64),
    #[error("node (level {level}, pos {pos}) does not exist in a tree of depth {depth}")]
    NodeOutOfShape { level: u64, pos: u64, depth: u32 },
    #[error("invalid node: level {level}, pos {pos}")]
    InvalidNode { level: u64, pos: u64 },
    #[error("mass or value {0} is negative or not finite")]
    InvalidMass(f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("shapes differ: depth {0} vs depth {1}")]
    ShapeMismatch(u32, u32),
    #[error("hypothesis violated: {0}")]
    Hypothesis(String),
    #[error("no convergence after {iterations} iterations (last estimate {last})")]
    NotConverged { iterations: usize, last: f64 },
    #[error("depth {depth} too large for a dense field (limit {limit})")]
    DenseLimit { depth: u32, limit: u32 },
    #[error("linear algebra failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, CoreError>;
