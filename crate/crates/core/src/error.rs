use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("dataset size: {0}")]
    Size(String),
    #[error("non-finite value in layer {layer}")]
    NonFinite { layer: usize },
    #[error("empty dataset or batch")]
    Empty,
}
