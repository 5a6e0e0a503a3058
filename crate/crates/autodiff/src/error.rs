use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AutodiffError {
    /// Operand shapes or layer hyper-parameters are inconsistent.
    #[error("shape error in {op}: {msg}")]
    Shape { op: &'static str, msg: String },
    /// A forward value or gradient contains NaN or infinity.
    #[error("non-finite value produced by {0}")]
    NonFinite(String),
    /// `backward` was called on a non-scalar node.
    #[error("backward requires a scalar output, got shape {0:?}")]
    NotScalar(Vec<usize>),
}

pub type Result<T, E = AutodiffError> = std::result::Result<T, E>;

pub(crate) fn shape_err<T>(op: &'static str, msg: impl Into<String>) -> Result<T> {
    Err(AutodiffError::Shape {
        op,
        msg: msg.into(),
    })
}
