use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: left operand has dim {left}, right operand has dim {right}")]
    DimMismatch { left: usize, right: usize },

    #[error("shape mismatch: expected (dim {expected_dim}, level {expected_level}), got (dim {dim}, level {level})")]
    ShapeMismatch {
        expected_dim: usize,
        expected_level: usize,
        dim: usize,
        level: usize,
    },

    #[error("tensor size d={dim}, level={level} exceeds the dense storage limit (d <= {max_dim}, level <= {max_level}); pass an explicit override to allow it")]
    TooLarge {
        dim: usize,
        level: usize,
        max_dim: usize,
        max_level: usize,
    },

    #[error("index {index} out of range for bound {bound}")]
    IndexOutOfRange { index: usize, bound: usize },

    #[error("invalid path: {0}")]
    InvalidPath(String),

    #[error("sequence has {available} samples but {required} are needed")]
    InsufficientSamples { required: usize, available: usize },

    #[error("sample {index} violates the bound |xi|_inf <= 1 (norm {norm})")]
    BoundViolation { index: usize, norm: f64 },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("operation requires an i.i.d. step law, got {0}")]
    NotIid(String),

    #[error("infeasible target: {0}")]
    Infeasible(String),

    #[error("enumeration too large: {0}")]
    EnumerationTooLarge(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("solver input not converged: {0}")]
    NotConverged(String),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
