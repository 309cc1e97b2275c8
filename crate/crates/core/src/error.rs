use alloc::string::String;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid schema: {0}")]
    Schema(String),
    #[error("empty dataset")]
    EmptyDataset,
    #[error("invalid dataset: {0}")]
    Dataset(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("rule references variable {var} but only {var_count} variables exist")]
    VariableOutOfRange { var: usize, var_count: usize },
    #[error("rule parse error at position {pos}: {msg}")]
    RuleParse { pos: usize, msg: String },
    #[error("bit index {index} out of range for width {width}")]
    BitOutOfRange { index: usize, width: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite gradient in {0}")]
    NonFiniteGradient(&'static str),
    #[error("enumeration over {0} variables exceeds the limit of 20")]
    TooManyVariables(usize),
}
