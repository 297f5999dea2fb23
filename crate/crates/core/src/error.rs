use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("decode error: {0}")]
    Decode(String),
    #[error("encode error: {0}")]
    Encode(String),
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("bounds error: {0}")]
    Bounds(String),
    #[error("channel error: {0}")]
    Channel(String),
    #[error("size error: {0}")]
    Size(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("validation error: {0}")]
    Validation(String),
    #[error("range error: {0}")]
    Range(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("placement error: {0}")]
    Placement(String),
    #[error("structure error: {0}")]
    Structure(String),
    #[error("coverage error: no accepted ratings for contents {0:?}")]
    Coverage(Vec<String>),
    #[error("metric error: {0}")]
    Metric(String),
    #[error("split error: {0}")]
    Split(String),
    #[error("solver error: {0}")]
    Solver(String),
    #[error("corpus error: {0}")]
    Corpus(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("capability error: {0}")]
    Capability(String),
    #[error("version error: {0}")]
    Version(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
