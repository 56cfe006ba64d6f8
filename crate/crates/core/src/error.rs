use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Error {
    #[error("no inverse of zero")]
    NoInverse,
    #[error("matrix not invertible")]
    Singular,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid code parameters: {0}")]
    InvalidParams(String),
    #[error("invalid chunk index set: {0}")]
    InvalidIndices(String),
    #[error("insufficient source nodes: need {need}, have {have}")]
    InsufficientSources { need: usize, have: usize },
    #[error("unrecoverable: {have} survivors for k = {k}")]
    Unrecoverable { k: usize, have: usize },
    #[error("no starter candidate available")]
    NoStarterCandidate,
    #[error("unknown strategy `{0}`")]
    UnknownStrategy(String),
    #[error("missing chunk {0}")]
    MissingChunk(usize),
    #[error("malformed graph: {0}")]
    Graph(String),
    #[error("no profile for node {0}")]
    MissingProfile(u32),
}

pub type Result<T> = std::result::Result<T, Error>;
